"""Training-phase crawler.

Breadth-first href crawl that records every training exchange into a
ProfileStore.  Discovery is trail-oriented: the first visit to a page
creates a new trail, parent's pages plus the new page, and each trail is
then walked in full from its root so every recorded adjacent pair is a
transition the target app really offered.  Pages already discovered are
recorded again on later walks (the revisit is genuine traffic) but their
links are not expanded a second time.

Session management around an authenticated crawl — the login POST that
obtains the cookie and the final logout — is deliberately not recorded:
it is scaffolding for the crawl, not evidence of the role's browsing
surface.  The exception is the unauthenticated probe of the login form
(empty credentials), which IS recorded: submitting the form without
signing in is part of the public surface.
"""

from __future__ import annotations

import http.client
import re
from collections import deque
from urllib.parse import urlencode, urlsplit

from .profile_store import ProfileStore, page_of

_HREF_RE = re.compile(r'href="([^"#]+)"')

_PAGE_BUDGET = 10_000


class CrawlError(Exception):
    pass


def extract_links(html: str) -> list[str]:
    """Page names of same-site href targets, document order, deduplicated."""
    out: list[str] = []
    for target in _HREF_RE.findall(html):
        if target.startswith(("http://", "https://", "mailto:", "javascript:")):
            continue
        page = page_of(target)
        if page and page not in out:
            out.append(page)
    return out


class _Client:
    """Single-session HTTP client that keeps the exact header block it
    sends, so the store captures the request verbatim."""

    def __init__(self, host: str, port: int, user_agent: str, cookie_name: str):
        self.host = host
        self.port = port
        self.user_agent = user_agent
        self.cookie_name = cookie_name
        self.cookie: str | None = None

    def fetch(self, method: str, path: str, form: dict | None = None):
        body = urlencode(form).encode() if form is not None else None
        headers: list[tuple[str, str]] = [
            ("Host", f"{self.host}:{self.port}"),
            ("User-Agent", self.user_agent),
        ]
        if self.cookie:
            headers.append(("Cookie", f"{self.cookie_name}={self.cookie}"))
        if body is not None:
            headers.append(("Content-Type", "application/x-www-form-urlencoded"))
            headers.append(("Content-Length", str(len(body))))
        raw_head = f"{method} {path} HTTP/1.1\r\n"
        raw_head += "".join(f"{k}: {v}\r\n" for k, v in headers)
        raw_head += "\r\n"
        try:
            conn = http.client.HTTPConnection(self.host, self.port, timeout=10)
            conn.putrequest(method, path, skip_host=True, skip_accept_encoding=True)
            for k, v in headers:
                conn.putheader(k, v)
            conn.endheaders(body)
            resp = conn.getresponse()
            data = resp.read()
            resp_headers = resp.getheaders()
            conn.close()
        except OSError as exc:
            raise CrawlError(f"cannot reach http://{self.host}:{self.port}{path}: {exc}") from None
        return resp.status, resp_headers, data.decode("latin-1"), raw_head

    def set_cookie_from(self, resp_headers) -> bool:
        for name, value in resp_headers:
            if name.lower() == "set-cookie":
                pair = value.split(";", 1)[0]
                cname, _, cvalue = pair.partition("=")
                if cname.strip() == self.cookie_name and cvalue.strip():
                    self.cookie = cvalue.strip()
                    return True
        return False


def crawl(
    base_url: str,
    role: str,
    credentials: tuple[str, str] | None,
    store: ProfileStore,
    *,
    user_agent: str = "phpwarden-trainer/0.1",
    login_page: str = "Login.php",
    logout_page: str = "Logout.php",
) -> list[str]:
    """Crawl base_url as role, recording into store.  Role "0" starts at
    the landing page with no login; any other role logs in with
    credentials first and starts where the login redirect points.
    Returns distinct pages visited, first-visit order."""
    split = urlsplit(base_url)
    host = split.hostname or "127.0.0.1"
    port = split.port or 80
    client = _Client(host, port, user_agent, store.session_cookie_name)

    discovered: list[str] = []
    queue: deque[list[str]] = deque()

    if role == "0":
        if credentials is not None:
            raise CrawlError("role 0 is the unauthenticated crawl; no credentials apply")
        # landing fetch seeds the walk but is session scaffolding, unrecorded
        status, _, body, _ = client.fetch("GET", split.path or "/")
        if status != 200:
            raise CrawlError(f"landing page returned {status}")
        for page in extract_links(body):
            discovered.append(page)
            queue.append([page])
    else:
        if credentials is None:
            raise CrawlError(f"role {role} requires credentials")
        username, password = credentials
        status, resp_headers, _, _ = client.fetch(
            "POST", f"/{login_page}", form={"username": username, "password": password}
        )
        if status not in (301, 302, 303) or not client.set_cookie_from(resp_headers):
            raise CrawlError(f"login failed for role {role}")
        location = next((v for k, v in resp_headers if k.lower() == "location"), "/")
        first = page_of(location)
        discovered.append(first)
        queue.append([first])

    visited_order: list[str] = []
    fetched = 0
    while queue:
        trail = queue.popleft()
        store.begin_trail(role)
        body = ""
        for index, page in enumerate(trail):
            fetched += 1
            if fetched > _PAGE_BUDGET:
                raise CrawlError(f"crawl exceeded {_PAGE_BUDGET} page fetches")
            status, _, body, raw_head = client.fetch("GET", f"/{page}")
            store.record_exchange(raw_head, role)
            if status != 200:
                raise CrawlError(f"GET /{page} returned {status} during role {role} crawl")
            if page not in visited_order:
                visited_order.append(page)
        leaf = trail[-1]
        if role == "0" and leaf == login_page:
            # unauthenticated form probe: public surface, recorded
            _, _, _, raw_head = client.fetch("POST", f"/{login_page}", form={"username": "", "password": ""})
            store.record_exchange(raw_head, role)
        else:
            for link in extract_links(body):
                if link not in discovered:
                    discovered.append(link)
                    queue.append(trail + [link])

    if role != "0":
        client.fetch("GET", f"/{logout_page}")  # unrecorded, see module docstring
    return visited_order
