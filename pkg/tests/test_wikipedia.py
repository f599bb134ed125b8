import datetime as dt
import threading

import httpx
import pytest

from prodpeers import data_path
from prodpeers.wikipedia import (
    AmbiguousMatchError,
    CacheEntry,
    NetworkError,
    NoExtractError,
    NoMatchError,
    PageRef,
    RateLimitedError,
    RateLimiter,
    SummaryCache,
    UnknownPageError,
    WikipediaClient,
    ingest_universe,
)

SQM_TEXT = ("Sociedad Química y Minera de Chile (SQM) is a Chilean chemical company and a supplier "
            "of plant nutrients, iodine, lithium and industrial chemicals.")

SEARCH = {
    "Apple Inc.": [{"title": "Apple Inc.", "pageid": 856}, {"title": "Apple", "pageid": 18978754}],
    "Iridium Communications Inc.": [{"title": "Iridium Communications", "pageid": 53008},
                                    {"title": "Iridium satellite constellation", "pageid": 1455}],
    "Mercury": [{"title": "Mercury (disambiguation)", "pageid": 19694}],
    "Twin Co": [{"title": "Twin Co", "pageid": 11}, {"title": "Twin Co.", "pageid": 12}],
}
PAGES = {
    7290045: {"pageid": 7290045, "title": "Sociedad Química y Minera", "extract": SQM_TEXT},
    856: {"pageid": 856, "title": "Apple Inc.", "extract": "Apple Inc. is an American company."},
    53008: {"pageid": 53008, "title": "Iridium Communications", "extract": "Iridium operates satellites."},
    777: {"pageid": 777, "title": "Redirect stub", "extract": ""},
}


def handler(request: httpx.Request) -> httpx.Response:
    q = request.url.params
    if q.get("list") == "search":
        return httpx.Response(200, json={"query": {"search": SEARCH.get(q["srsearch"], [])}})
    if q.get("prop") == "extracts":
        pid = int(q["pageids"])
        page = PAGES.get(pid, {"pageid": pid, "missing": True})
        return httpx.Response(200, json={"query": {"pages": [page]}})
    return httpx.Response(400)


def make_client(tmp_path, fn=handler, **kw):
    http = httpx.Client(transport=httpx.MockTransport(fn))
    return WikipediaClient(cache_dir=tmp_path / "cache", http=http, min_interval=0,
                           today=lambda: dt.date(2023, 6, 7), **kw)


def test_resolve_examples(tmp_path):
    client = make_client(tmp_path)
    assert client.resolve_page_id("Apple Inc.").page_id == 856
    ref = client.resolve_page_id("Iridium Communications Inc.")
    assert ref.page_id == 53008 and ref.retrieved_on == dt.date(2023, 6, 7)
    with pytest.raises(NoMatchError):
        client.resolve_page_id("zzqx-nonexistent-company-명")
    with pytest.raises(ValueError):
        client.resolve_page_id("  ")


def test_resolve_ambiguity(tmp_path):
    client = make_client(tmp_path)
    with pytest.raises(AmbiguousMatchError):
        client.resolve_page_id("Mercury")
    with pytest.raises(AmbiguousMatchError) as info:
        client.resolve_page_id("Twin Co")
    assert info.value.candidates == ["Twin Co", "Twin Co."]


@pytest.mark.parametrize("response, error", [
    (httpx.Response(429), RateLimitedError),
    (httpx.Response(503), NetworkError),
    (httpx.Response(200, json={"error": {"code": "ratelimited"}}), RateLimitedError),
    (httpx.Response(200, text="<html>"), NetworkError),
])
def test_remote_failures(tmp_path, response, error):
    client = make_client(tmp_path, fn=lambda req: response)
    with pytest.raises(error):
        client.resolve_page_id("Apple Inc.")


def test_transport_failure(tmp_path):
    def boom(request):
        raise httpx.ConnectError("unreachable")
    client = make_client(tmp_path, fn=boom)
    with pytest.raises(NetworkError):
        client.fetch_summary(856)


def test_fetch_then_cache_hit(tmp_path):
    client = make_client(tmp_path)
    first = client.fetch_summary(7290045)
    assert first.normalized_summary.startswith(
        "Sociedad Quimica y Minera de Chile (SQM) is a Chilean chemical company")
    assert client.request_count == 1
    second = client.fetch_summary(7290045)
    assert second == first
    assert client.request_count == 1
    # raw text kept verbatim on disk, normalization applied on read
    assert "Química" in (tmp_path / "cache" / "7290045.txt").read_text(encoding="utf-8")


def test_warm_fixture_cache_needs_no_network(no_network):
    client = WikipediaClient(cache_dir=data_path("wiki_cache"), min_interval=0)
    entry = client.fetch_summary(856)
    assert entry.page_ref == PageRef(856, "Apple Inc.", dt.date(2023, 6, 7))
    assert client.request_count == 0 and no_network == []


def test_missing_and_empty_pages(tmp_path):
    client = make_client(tmp_path)
    with pytest.raises(UnknownPageError):
        client.fetch_summary(123456789)
    with pytest.raises(NoExtractError):
        client.fetch_summary(777)
    with pytest.raises(ValueError):
        client.fetch_summary(0)


def test_cache_round_trip_and_atomic_concurrent_writes(tmp_path):
    cache = SummaryCache(tmp_path)
    entries = [CacheEntry(PageRef(42, "Title", dt.date(2023, 6, 7)), f"text version {i}\nline two")
               for i in range(20)]
    threads = [threading.Thread(target=cache.put, args=(e,)) for e in entries]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    got = cache.get(42)
    assert got in entries
    assert got.normalized_summary.endswith("line two")
    assert [p.name for p in tmp_path.iterdir()] == ["42.txt"]


def test_ingest_fixture_ids_all_cached(no_network, corpus):
    client = WikipediaClient(cache_dir=data_path("wiki_cache"), min_interval=0)
    report = ingest_universe(client, [d.page_id for d in corpus], parallelism=2)
    assert report.failures == []
    assert [r.page_id for r in report.records] == [d.page_id for d in corpus]
    assert [r.summary for r in report.records] == [d.company.summary for d in corpus]


def test_ingest_collects_failures(tmp_path):
    client = make_client(tmp_path)
    report = ingest_universe(client, [856, 53008, 999999, "Apple Inc.", 7290045], parallelism=3)
    # the bad id fails and the name resolves to an id already fetched
    assert [r.page_id for r in report.records] == [856, 53008, 7290045]
    assert [f.item for f in report.failures] == [999999, "Apple Inc."]
    assert "UnknownPageError" in report.failures[0].error
    with pytest.raises(ValueError):
        ingest_universe(client, [856], parallelism=0)


def test_ingest_names(tmp_path):
    client = make_client(tmp_path)
    report = ingest_universe(client, ["Apple Inc.", "zzqx-nonexistent", "Iridium Communications Inc."])
    assert [r.name for r in report.records] == ["Apple Inc.", "Iridium Communications Inc."]
    assert len(report.failures) == 1


def test_rate_limiter_spaces_request_starts():
    now = [0.0]
    slept = []

    def sleep(d):
        slept.append(d)
        now[0] += d

    limiter = RateLimiter(1.0, clock=lambda: now[0], sleep=sleep)
    starts = [limiter.wait() for _ in range(4)]
    assert starts == [0.0, 1.0, 2.0, 3.0]
    assert slept == [1.0, 1.0, 1.0]


def test_rate_limiter_threads_get_distinct_slots():
    limiter = RateLimiter(0.01)
    starts = []
    lock = threading.Lock()

    def go():
        s = limiter.wait()
        with lock:
            starts.append(s)

    threads = [threading.Thread(target=go) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    starts.sort()
    gaps = [b - a for a, b in zip(starts, starts[1:])]
    assert all(g >= 0.01 - 1e-9 for g in gaps)
