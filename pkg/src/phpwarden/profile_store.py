"""Training-phase capture store.

One directory per training corpus.  Every recorded exchange produces two
files, `<id>_request` (the raw request header block) and `<id>_Srequest`
(the session flag).  Page order is kept per role in `<role>.xml` as a list
of trails: each trail is one root-to-leaf walk of the crawl, so adjacent
pages within a trail are real observed transitions.  A `trails` index file
maps each trail to its role and communication-id range, which is what lets
the model builder attribute ids to roles and a replay harness walk the
exact training traffic again.

Communication ids are unique positive integers, strictly increasing across
the life of the store (reopening continues the counter).
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape as xml_escape


@dataclass(frozen=True)
class RequestHead:
    """Parsed request header block: request line plus ordered header fields."""

    method: str
    target: str
    version: str
    headers: tuple[tuple[str, str], ...]

    def get(self, name: str) -> str | None:
        lname = name.lower()
        for k, v in self.headers:
            if k.lower() == lname:
                return v
        return None

    def get_all(self, name: str) -> list[str]:
        lname = name.lower()
        return [v for k, v in self.headers if k.lower() == lname]


def parse_header_block(text: str) -> RequestHead:
    """Parse a raw request head (request line + header lines).

    Raises ValueError on a malformed request line or header line; callers
    on the enforcement path map that to a block verdict rather than a crash.
    """
    lines = text.replace("\r\n", "\n").split("\n")
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise ValueError("empty request")
    parts = lines[0].split()
    if len(parts) != 3:
        raise ValueError(f"malformed request line: {lines[0]!r}")
    method, target, version = parts
    if not version.startswith("HTTP/"):
        raise ValueError(f"malformed request line: {lines[0]!r}")
    headers: list[tuple[str, str]] = []
    for line in lines[1:]:
        if not line.strip():
            break
        if ":" not in line:
            raise ValueError(f"malformed header line: {line!r}")
        name, _, value = line.partition(":")
        headers.append((name.strip(), value.strip()))
    return RequestHead(method=method, target=target, version=version, headers=tuple(headers))


def extract_session_flag(head: RequestHead, session_cookie_name: str = "PHPSESSID") -> int:
    """1 iff some Cookie header carries a non-empty pair named
    session_cookie_name, else 0."""
    for cookie_header in head.get_all("Cookie"):
        for pair in cookie_header.split(";"):
            name, _, value = pair.partition("=")
            if name.strip() == session_cookie_name and value.strip():
                return 1
    return 0


def session_cookie_value(head: RequestHead, session_cookie_name: str = "PHPSESSID") -> str | None:
    for cookie_header in head.get_all("Cookie"):
        for pair in cookie_header.split(";"):
            name, _, value = pair.partition("=")
            if name.strip() == session_cookie_name and value.strip():
                return value.strip()
    return None


def derive_request_id(method: str, url_path: str, index_page: str = "index.php") -> str:
    """`METHOD_page`: uppercased method, final path segment with the query
    string dropped.  The bare root path maps to index_page."""
    if not method:
        raise ValueError("empty method")
    path = url_path.split("?", 1)[0].split("#", 1)[0]
    page = path.rsplit("/", 1)[-1]
    if not page:
        page = index_page
    return f"{method.upper()}_{page}"


def page_of(url_path: str, index_page: str = "index.php") -> str:
    """Final path segment with query dropped; root maps to index_page."""
    path = url_path.split("?", 1)[0].split("#", 1)[0]
    page = path.rsplit("/", 1)[-1]
    return page or index_page


@dataclass
class Trail:
    role: str
    first_id: int | None = None
    last_id: int | None = None
    pages: list[str] | None = None

    def __post_init__(self):
        if self.pages is None:
            self.pages = []


_REQUEST_FILE_RE = re.compile(r"^(\d+)_request$")


class ProfileStore:
    """Single-writer capture store over one directory.  All state is
    rebuilt from the files on open, so a store can be extended across runs.
    Page names must not contain ", " (the sequence separator)."""

    def __init__(self, directory: str | Path, session_cookie_name: str = "PHPSESSID"):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.session_cookie_name = session_cookie_name
        self.trails: list[Trail] = []
        self._next_id = 1
        self._load()

    def _load(self) -> None:
        for entry in self.directory.iterdir():
            m = _REQUEST_FILE_RE.match(entry.name)
            if m:
                self._next_id = max(self._next_id, int(m.group(1)) + 1)
        index = self.directory / "trails"
        if not index.exists():
            return
        sequences: dict[str, list[list[str]]] = {}
        for role_file in sorted(self.directory.glob("*.xml")):
            root = ET.parse(role_file).getroot()
            role = root.get("role", role_file.stem)
            sequences[role] = [
                [p for p in (el.text or "").split(", ") if p] for el in root
            ]
        consumed: dict[str, int] = {}
        for lineno, line in enumerate(index.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValueError(f"{index}: line {lineno}: expected role, first, last")
            role, first, last = fields
            seq_index = consumed.get(role, 0)
            consumed[role] = seq_index + 1
            role_seqs = sequences.get(role, [])
            pages = role_seqs[seq_index] if seq_index < len(role_seqs) else []
            self.trails.append(Trail(role=role, first_id=int(first), last_id=int(last), pages=pages))

    # -- recording ---------------------------------------------------------

    def begin_trail(self, role: str) -> None:
        """Start a new page sequence for role; subsequent exchanges recorded
        under that role extend it."""
        self.trails.append(Trail(role=role))

    def _current_trail(self, role: str) -> Trail:
        for trail in reversed(self.trails):
            if trail.role == role:
                return trail
        trail = Trail(role=role)
        self.trails.append(trail)
        return trail

    def record_exchange(self, request_headers: str, role: str) -> int:
        """Persist one captured request under the next communication id and
        append its page to the role's current trail.  Write failures
        propagate and abort the run."""
        head = parse_header_block(request_headers)
        flag = extract_session_flag(head, self.session_cookie_name)
        cid = self._next_id
        self._next_id += 1
        (self.directory / f"{cid}_request").write_text(request_headers)
        (self.directory / f"{cid}_Srequest").write_text(str(flag))
        trail = self._current_trail(role)
        if trail.first_id is None:
            trail.first_id = cid
        trail.last_id = cid
        trail.pages.append(page_of(head.target))
        self._flush(role)
        return cid

    def _flush(self, role: str) -> None:
        lines = []
        for trail in self.trails:
            if trail.first_id is None:
                continue
            lines.append(f"{trail.role}\t{trail.first_id}\t{trail.last_id}")
        (self.directory / "trails").write_text("\n".join(lines) + "\n" if lines else "")
        self._write_role_xml(role)

    def _write_role_xml(self, role: str) -> None:
        parts = [f'<Sequences role="{xml_escape(role, {chr(34): "&quot;"})}">']
        for trail in self.trails:
            if trail.role == role and trail.pages:
                parts.append(f"  <Trail>{xml_escape(', '.join(trail.pages))}</Trail>")
        parts.append("</Sequences>")
        (self.directory / f"{role}.xml").write_text("\n".join(parts) + "\n")

    # -- reading -----------------------------------------------------------

    def roles(self) -> list[str]:
        seen: list[str] = []
        for trail in self.trails:
            if trail.role not in seen:
                seen.append(trail.role)
        return seen

    def read_exchange(self, cid: int) -> tuple[str, int]:
        """(raw request text, session flag) for one communication id.
        A missing flag file is a corrupt store and is reported by id."""
        request_file = self.directory / f"{cid}_request"
        flag_file = self.directory / f"{cid}_Srequest"
        if not flag_file.exists():
            raise ValueError(f"store {self.directory}: {cid}_request has no matching {cid}_Srequest")
        return request_file.read_text(), int(flag_file.read_text().strip())

    def recorded_ids(self) -> list[int]:
        ids = []
        for entry in self.directory.iterdir():
            m = _REQUEST_FILE_RE.match(entry.name)
            if m:
                ids.append(int(m.group(1)))
        return sorted(ids)

    def role_of(self, cid: int) -> str:
        for trail in self.trails:
            if trail.first_id is not None and trail.first_id <= cid <= trail.last_id:
                return trail.role
        raise ValueError(f"store {self.directory}: communication id {cid} not covered by any trail")

    def trail_records(self) -> list[tuple[str, list[tuple[int, str, int]]]]:
        """Per trail, in recording order: (role, [(cid, raw request, flag)]).
        This is the replay view of the store."""
        out = []
        for trail in self.trails:
            if trail.first_id is None:
                continue
            records = [(cid, *self.read_exchange(cid)) for cid in range(trail.first_id, trail.last_id + 1)]
            out.append((trail.role, records))
        return out
