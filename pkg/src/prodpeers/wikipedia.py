"""Wikipedia page-id resolution and lead-section summaries with a disk cache.

Cache files live one per page id (``<page_id>.txt``) and hold a small
``key: value`` header, a blank line, then the raw plain-text extract.
Normalization happens on read, so cached snapshots never need refetching
when the transliteration table changes.
"""

from __future__ import annotations

import datetime as dt
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import httpx

from .corpus import CompanyRecord
from .textcore import normalize_text

logger = logging.getLogger(__name__)

API_URL = "https://en.wikipedia.org/w/api.php"
USER_AGENT = "prodpeers/0.1 (company product extraction research)"
CACHE_ENV_VAR = "PRODPEERS_CACHE_DIR"


class WikipediaError(Exception):
    pass


class NoMatchError(WikipediaError):
    pass


class AmbiguousMatchError(WikipediaError):
    def __init__(self, name: str, candidates: list[str]):
        super().__init__(f"{name!r} is ambiguous: {', '.join(candidates)}")
        self.candidates = candidates


class UnknownPageError(WikipediaError):
    pass


class NoExtractError(WikipediaError):
    pass


class NetworkError(WikipediaError):
    pass


class RateLimitedError(NetworkError):
    pass


@dataclass(frozen=True)
class PageRef:
    page_id: int
    title: str
    retrieved_on: dt.date

    def __post_init__(self):
        if self.page_id <= 0:
            raise ValueError(f"page_id must be positive, got {self.page_id}")


@dataclass(frozen=True)
class CacheEntry:
    page_ref: PageRef
    raw_summary: str

    @property
    def normalized_summary(self) -> str:
        return normalize_text(self.raw_summary)

    def to_record(self, name: Optional[str] = None) -> CompanyRecord:
        return CompanyRecord(
            name=name or self.page_ref.title,
            page_id=self.page_ref.page_id,
            summary=self.normalized_summary,
        )


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV_VAR, "wiki_cache"))


class SummaryCache:
    """One file per page id; writes go through a temp file and ``os.replace``."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def path_for(self, page_id: int) -> Path:
        return self.directory / f"{page_id}.txt"

    def get(self, page_id: int) -> Optional[CacheEntry]:
        path = self.path_for(page_id)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None
        header, sep, body = text.partition("\n\n")
        if not sep:
            raise WikipediaError(f"corrupt cache file {path}: missing header separator")
        meta = {}
        for line in header.splitlines():
            key, _, value = line.partition(":")
            meta[key.strip()] = value.strip()
        try:
            ref = PageRef(
                page_id=int(meta["page_id"]),
                title=meta["title"],
                retrieved_on=dt.date.fromisoformat(meta["retrieved_on"]),
            )
        except (KeyError, ValueError) as exc:
            raise WikipediaError(f"corrupt cache file {path}: {exc}") from None
        if body.endswith("\n"):
            body = body[:-1]
        return CacheEntry(page_ref=ref, raw_summary=body)

    def put(self, entry: CacheEntry) -> None:
        ref = entry.page_ref
        content = (
            f"page_id: {ref.page_id}\n"
            f"title: {ref.title}\n"
            f"retrieved_on: {ref.retrieved_on.isoformat()}\n"
            f"\n{entry.raw_summary}\n"
        )
        self.directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{ref.page_id}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(content)
            os.replace(tmp, self.path_for(ref.page_id))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class RateLimiter:
    """Spaces out request starts by at least ``min_interval`` seconds.

    Thread-safe: each caller reserves the next free slot under a lock and
    sleeps outside it.
    """

    def __init__(self, min_interval: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.min_interval = max(0.0, float(min_interval))
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_slot = float("-inf")

    def wait(self) -> float:
        with self._lock:
            now = self._clock()
            start = max(now, self._next_slot)
            self._next_slot = start + self.min_interval
        delay = start - now
        if delay > 0:
            self._sleep(delay)
        return start


def _title_key(title: str) -> str:
    return normalize_text(title).casefold().rstrip(".")


class WikipediaClient:
    """Resolve names, fetch summaries, and keep the on-disk snapshot warm.

    ``http`` may be any ``httpx.Client``; tests pass one built on
    ``httpx.MockTransport``. ``request_count`` counts outbound requests.
    """

    def __init__(
        self,
        cache_dir=None,
        http: Optional[httpx.Client] = None,
        api_url: str = API_URL,
        min_interval: float = 1.0,
        today: Callable[[], dt.date] = dt.date.today,
        timeout: float = 30.0,
    ):
        self.cache = SummaryCache(cache_dir if cache_dir is not None else default_cache_dir())
        self.http = http or httpx.Client(headers={"User-Agent": USER_AGENT}, timeout=timeout)
        self.api_url = api_url
        self.limiter = RateLimiter(min_interval)
        self.today = today
        self.request_count = 0
        self._count_lock = threading.Lock()

    def _get(self, params: dict) -> dict:
        self.limiter.wait()
        with self._count_lock:
            self.request_count += 1
        try:
            resp = self.http.get(self.api_url, params={**params, "format": "json", "formatversion": 2})
        except httpx.HTTPError as exc:
            raise NetworkError(f"request failed: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimitedError("remote rate limit (HTTP 429)")
        if resp.status_code >= 400:
            raise NetworkError(f"HTTP {resp.status_code} from {self.api_url}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise NetworkError("response is not JSON") from exc
        if "error" in data:
            code = data["error"].get("code", "")
            if code in ("ratelimited", "maxlag"):
                raise RateLimitedError(f"remote rate limit ({code})")
            raise NetworkError(f"API error {code}: {data['error'].get('info', '')}")
        return data

    def resolve_page_id(self, company_name: str) -> PageRef:
        """Map a company name to the best-matching page.

        An exact title match wins over search rank. Several exact matches,
        or a disambiguation page on top, raise AmbiguousMatchError.
        """
        if not company_name or not company_name.strip():
            raise ValueError("company name must be non-empty")
        data = self._get({"action": "query", "list": "search", "srsearch": company_name,
                          "srlimit": 5, "srprop": ""})
        hits = data.get("query", {}).get("search", [])
        if not hits:
            raise NoMatchError(f"no Wikipedia page found for {company_name!r}")
        wanted = _title_key(company_name)
        exact = [h for h in hits if _title_key(h["title"]) == wanted]
        if len(exact) > 1:
            raise AmbiguousMatchError(company_name, [h["title"] for h in exact])
        best = exact[0] if exact else hits[0]
        if "(disambiguation)" in best["title"]:
            raise AmbiguousMatchError(company_name, [h["title"] for h in hits])
        return PageRef(page_id=int(best["pageid"]), title=best["title"], retrieved_on=self.today())

    def fetch_summary(self, page_id: int) -> CacheEntry:
        if page_id <= 0:
            raise ValueError(f"page_id must be positive, got {page_id}")
        cached = self.cache.get(page_id)
        if cached is not None:
            return cached
        data = self._get({"action": "query", "prop": "extracts", "exintro": 1,
                          "explaintext": 1, "pageids": page_id})
        pages = data.get("query", {}).get("pages", [])
        if not pages or pages[0].get("missing") or pages[0].get("invalid"):
            raise UnknownPageError(f"no Wikipedia page with id {page_id}")
        page = pages[0]
        extract = (page.get("extract") or "").strip()
        if not extract:
            raise NoExtractError(f"page {page_id} ({page.get('title')}) has no summary extract")
        entry = CacheEntry(
            page_ref=PageRef(page_id=int(page["pageid"]), title=page["title"], retrieved_on=self.today()),
            raw_summary=extract,
        )
        self.cache.put(entry)
        return entry

    def close(self) -> None:
        self.http.close()


@dataclass
class IngestFailure:
    item: Union[int, str]
    error: str


@dataclass
class IngestReport:
    records: list[CompanyRecord] = field(default_factory=list)
    failures: list[IngestFailure] = field(default_factory=list)


def ingest_universe(client: WikipediaClient, names_or_ids: list, parallelism: int = 1) -> IngestReport:
    """Fetch every entry, collecting per-entry failures instead of raising.

    Integers (or digit strings) are page ids; anything else is a company name
    to resolve first. Results keep input order. Request pacing is the
    client's ``min_interval``.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def work(item):
        if isinstance(item, int) or (isinstance(item, str) and item.strip().isdigit()):
            return client.fetch_summary(int(item)).to_record()
        ref = client.resolve_page_id(item)
        return client.fetch_summary(ref.page_id).to_record(name=item)

    def guarded(item):
        try:
            return work(item), None
        except (WikipediaError, ValueError) as exc:
            logger.warning("ingest failed for %r: %s", item, exc)
            return None, IngestFailure(item=item, error=f"{type(exc).__name__}: {exc}")

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        outcomes = list(pool.map(guarded, names_or_ids))

    report = IngestReport()
    seen: set[int] = set()
    for item, (record, failure) in zip(names_or_ids, outcomes):
        if failure is not None:
            report.failures.append(failure)
        elif record.page_id in seen:
            report.failures.append(IngestFailure(item=item, error=f"duplicate page_id {record.page_id}"))
        else:
            seen.add(record.page_id)
            report.records.append(record)
    return report
