"""Offline model builder and model persistence.

Two artifacts come out of a training store: the request model (every
recorded request as a (reqresid, sessionFlag, role) row, id-ordered) and
the navigation model (per role: page transition graph + entry pages,
derived from adjacent page pairs within each recorded trail).

Persisted forms: `requests.csv` with the exact header
`sno,convid,reqresid,sessionFlag,role`, and one `<role>.xml` per role
whose root is `<Pages entry="...">` with one child element per page that
has successors; the element text is the comma-separated successor list.
"""

from __future__ import annotations

import csv
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from .profile_store import ProfileStore, derive_request_id, page_of, parse_header_block

MODEL1_HEADER = ["sno", "convid", "reqresid", "sessionFlag", "role"]

# Recorded but never treated as navigation steps: fetching these between
# page views must not break trained sequences.
ASSET_EXTENSIONS = frozenset({
    ".js", ".css", ".png", ".jpg", ".jpeg", ".gif", ".ico", ".svg",
    ".woff", ".woff2", ".ttf", ".map",
})


def is_asset(page: str) -> bool:
    dot = page.rfind(".")
    return dot >= 0 and page[dot:].lower() in ASSET_EXTENSIONS


@dataclass(frozen=True)
class ModelRow:
    sno: int
    convid: int
    reqresid: str
    session_flag: int
    role: str


@dataclass
class RequestModel:
    rows: list[ModelRow] = field(default_factory=list)

    def triples(self) -> list[tuple[str, int, str]]:
        """Deduplicated (reqresid, sessionFlag, role) relation, first
        occurrence order.  This is the relation the verifier consumes."""
        seen: dict[tuple[str, int, str], None] = {}
        for row in self.rows:
            seen.setdefault((row.reqresid, row.session_flag, row.role), None)
        return list(seen)

    def triple_set(self) -> frozenset[tuple[str, int, str]]:
        return frozenset(self.triples())


@dataclass
class NavigationModel:
    """Per-role page graphs.  graphs[role] maps page -> ordered successor
    list and only contains pages with at least one successor (the canonical
    form, so persist/load round-trips exactly).  entries[role] is the
    ordered set of pages a role's walk may start at."""

    graphs: dict[str, dict[str, list[str]]] = field(default_factory=dict)
    entries: dict[str, list[str]] = field(default_factory=dict)

    def nodes(self, role: str) -> set[str]:
        nodes: set[str] = set(self.entries.get(role, ()))
        for page, nexts in self.graphs.get(role, {}).items():
            nodes.add(page)
            nodes.update(nexts)
        return nodes

    def has_edge(self, role: str, current: str, target: str) -> bool:
        return target in self.graphs.get(role, {}).get(current, ())

    def is_entry(self, role: str, page: str) -> bool:
        return page in self.entries.get(role, ())

    def has_role(self, role: str) -> bool:
        return role in self.entries or role in self.graphs


def build_model(store: ProfileStore) -> tuple[RequestModel, NavigationModel]:
    """Deterministic given the store.  Empty store is an error; so is a
    request file with no session-flag twin (reported by id)."""
    ids = store.recorded_ids()
    if not ids:
        raise ValueError(f"store {store.directory}: no recorded exchanges")
    rows: list[ModelRow] = []
    for sno, cid in enumerate(ids, start=1):
        raw, flag = store.read_exchange(cid)
        head = parse_header_block(raw)
        rows.append(ModelRow(
            sno=sno,
            convid=cid,
            reqresid=derive_request_id(head.method, head.target),
            session_flag=flag,
            role=store.role_of(cid),
        ))
    model1 = RequestModel(rows=rows)

    nav = NavigationModel()
    for trail in store.trails:
        if trail.first_id is None:
            continue
        nav.graphs.setdefault(trail.role, {})
        nav.entries.setdefault(trail.role, [])
        pages = [p for p in trail.pages if not is_asset(p)]
        if not pages:
            continue
        entries = nav.entries[trail.role]
        if pages[0] not in entries:
            entries.append(pages[0])
        graph = nav.graphs[trail.role]
        for prev, nxt in zip(pages, pages[1:]):
            nexts = graph.setdefault(prev, [])
            if nxt not in nexts:
                nexts.append(nxt)
    # canonical form: drop pages that picked up no successors
    for role in list(nav.graphs):
        nav.graphs[role] = {p: n for p, n in nav.graphs[role].items() if n}
    return model1, nav


# -- XML element naming ----------------------------------------------------
# Page names become element names.  Names that are not valid XML names are
# encoded: marker prefix `esc-`, then each unsafe byte as `-XX` hex.  `-`
# itself is always encoded inside the escaped form, so decoding is
# unambiguous.  Ordinary page names (letters, digits, ., _, -) pass through
# untouched, keeping the files human-readable.

_PLAIN_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9._-]*$")


def _encode_page_name(page: str) -> str:
    if _PLAIN_NAME_RE.match(page) and not page.startswith("esc-"):
        return page
    out = ["esc-"]
    for b in page.encode("utf-8"):
        ch = chr(b)
        if ch.isascii() and (ch.isalnum() or ch in "._"):
            out.append(ch)
        else:
            out.append("-%02X" % b)
    return "".join(out)


def _decode_page_name(name: str) -> str:
    if not name.startswith("esc-"):
        return name
    body = name[4:]
    raw = bytearray()
    i = 0
    while i < len(body):
        if body[i] == "-":
            raw.append(int(body[i + 1:i + 3], 16))
            i += 3
        else:
            raw.append(ord(body[i]))
            i += 1
    return raw.decode("utf-8")


def persist_model(model1: RequestModel, model2: NavigationModel, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "requests.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MODEL1_HEADER)
        for row in model1.rows:
            writer.writerow([row.sno, row.convid, row.reqresid, row.session_flag, row.role])
    roles = list(model2.entries)
    for role in model2.graphs:
        if role not in roles:
            roles.append(role)
    for role in roles:
        root = ET.Element("Pages", attrib={"entry": ", ".join(model2.entries.get(role, []))})
        for page, nexts in model2.graphs.get(role, {}).items():
            el = ET.SubElement(root, _encode_page_name(page))
            el.text = ", ".join(nexts)
        tree = ET.ElementTree(root)
        ET.indent(tree, space="  ")
        tree.write(out / f"{role}.xml", encoding="unicode")
        with open(out / f"{role}.xml", "a") as fh:
            fh.write("\n")


def load_model(model_dir: str | Path) -> tuple[RequestModel, NavigationModel]:
    """Inverse of persist_model.  Malformed files raise ValueError naming
    the file (and line where the format gives one)."""
    src = Path(model_dir)
    table = src / "requests.csv"
    if not table.exists():
        raise ValueError(f"{table}: missing model table")
    rows: list[ModelRow] = []
    with open(table, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MODEL1_HEADER:
            raise ValueError(f"{table}: line 1: bad header {header!r}")
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != 5:
                raise ValueError(f"{table}: line {lineno}: expected 5 columns")
            try:
                rows.append(ModelRow(
                    sno=int(record[0]),
                    convid=int(record[1]),
                    reqresid=record[2],
                    session_flag=int(record[3]),
                    role=record[4],
                ))
            except ValueError as exc:
                raise ValueError(f"{table}: line {lineno}: {exc}") from None
    model1 = RequestModel(rows=rows)

    nav = NavigationModel()
    for role_file in sorted(src.glob("*.xml")):
        role = role_file.stem
        try:
            root = ET.parse(role_file).getroot()
        except ET.ParseError as exc:
            raise ValueError(f"{role_file}: {exc}") from None
        if root.tag != "Pages":
            raise ValueError(f"{role_file}: expected <Pages> root, got <{root.tag}>")
        entry_attr = root.get("entry", "")
        nav.entries[role] = [p for p in entry_attr.split(", ") if p]
        graph: dict[str, list[str]] = {}
        for el in root:
            graph[_decode_page_name(el.tag)] = [p for p in (el.text or "").split(", ") if p]
        nav.graphs[role] = {p: n for p, n in graph.items() if n}
    return model1, nav
