import json

import httpx
import pytest

from prodpeers import cli, data_path
from prodpeers.corpus import load_corpus
from prodpeers.extractors import load_results

from test_wikipedia import handler

CORPUS = str(data_path("companies13.jsonl"))
UNIVERSE = str(data_path("universe_fixture.jsonl"))
WARM_CACHE = str(data_path("wiki_cache"))


@pytest.fixture(autouse=True)
def pinned_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1686096000")
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)


def write_lines(path, lines):
    path.write_text("".join(f"{x}\n" for x in lines), encoding="utf-8")
    return str(path)


def test_ingest_warm_cache(tmp_path, corpus, no_network):
    ids = write_lines(tmp_path / "ids.txt", [d.page_id for d in corpus])
    out = tmp_path / "corpus.jsonl"
    assert cli.main(["ingest", "--ids", ids, "--cache-dir", WARM_CACHE, "--out", str(out)]) == 0
    docs = load_corpus(out)
    assert len(docs) == 13 and not no_network
    assert [d.company.summary for d in docs] == [d.company.summary for d in corpus]


def test_ingest_one_bad_name_of_three(tmp_path, monkeypatch):
    real = cli.WikipediaClient
    monkeypatch.setattr(cli, "WikipediaClient", lambda **kw: real(
        http=httpx.Client(transport=httpx.MockTransport(handler)), **kw))
    names = write_lines(tmp_path / "names.txt", ["Apple Inc.", "zzqx-nonexistent", "Iridium Communications Inc."])
    out, report = tmp_path / "c.jsonl", tmp_path / "report.json"
    code = cli.main(["ingest", "--names", names, "--cache-dir", str(tmp_path / "cache"),
                     "--out", str(out), "--report", str(report), "--min-interval", "0"])
    assert code == 0
    assert len(load_corpus(out)) == 2
    assert len(json.loads(report.read_text())["failures"]) == 1


def test_ingest_cold_cache_unreachable(tmp_path):
    ids = write_lines(tmp_path / "ids.txt", [856, 53008])
    code = cli.main(["ingest", "--ids", ids, "--cache-dir", str(tmp_path / "empty"),
                     "--out", str(tmp_path / "c.jsonl"), "--min-interval", "0",
                     "--api-url", "http://127.0.0.1:9/w/api.php"])
    assert code == 2


def test_ingest_usage_errors(tmp_path):
    out = str(tmp_path / "c.jsonl")
    assert cli.main(["ingest", "--out", out]) == 1
    bad = write_lines(tmp_path / "ids.txt", ["apple"])
    assert cli.main(["ingest", "--ids", bad, "--out", out]) == 1


def test_extract_replay_is_reproducible(tmp_path, no_network):
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.jsonl"
        assert cli.main(["extract", "--corpus", CORPUS, "--extractor", "replay", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    results = load_results(tmp_path / "r0.jsonl")
    assert len(results) == 13 and all(r.status.value in ("ok", "empty") for r in results)
    assert b'"_manifest"' in outs[0]


def test_extract_gazetteer_with_dictionary(tmp_path):
    terms = write_lines(tmp_path / "terms.txt", ["# products", "lithium", "iodine", "satellites"])
    outs = []
    for i in range(2):
        out = tmp_path / f"g{i}.jsonl"
        assert cli.main(["extract", "--corpus", CORPUS, "--extractor", "gazetteer",
                         "--dictionary", terms, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    found = {r.page_id: set(r.predicted) for r in load_results(tmp_path / "g0.jsonl")}
    assert {"lithium", "iodine"} <= found[7290045]


def test_extract_llm_without_credential(tmp_path, no_network, capsys):
    code = cli.main(["extract", "--corpus", CORPUS, "--extractor", "llm", "--out", str(tmp_path / "x.jsonl")])
    assert code == 1
    assert "OPENAI_API_KEY" in capsys.readouterr().err
    assert not (tmp_path / "x.jsonl").exists()


def test_extract_all_service_failures_is_total_failure(tmp_path):
    empty = tmp_path / "rec.jsonl"
    empty.write_text("")
    code = cli.main(["extract", "--corpus", CORPUS, "--extractor", "replay", "--recordings", str(empty),
                     "--out", str(tmp_path / "x.jsonl")])
    assert code == 2


def test_eval_machine_output_and_series(tmp_path, capsys):
    series = tmp_path / "series.csv"
    code = cli.main(["eval", "--corpus", CORPUS, "--extractor", "gazetteer", "--n-shots", "0..2",
                     "--trials", "2", "--seed", "7", "--out", str(series), "--format", "machine"])
    assert code == 0
    printed = capsys.readouterr().out
    assert printed == series.read_text()
    rows = [line for line in printed.splitlines() if not line.startswith("#")]
    assert rows[0] == "extractor,n_shot,trials,mean_f,per_trial_f"
    assert [r.split(",")[1] for r in rows[1:]] == ["0", "1", "2"]


def test_eval_errors(tmp_path):
    assert cli.main(["eval", "--corpus", CORPUS, "--n-shots", "0..13"]) == 1
    assert cli.main(["eval", "--corpus", CORPUS, "--n-shots", "nine"]) == 1
    unannotated = tmp_path / "u.jsonl"
    unannotated.write_text(json.dumps({"name": "A", "page_id": 1, "summary": "a b"}) + "\n")
    assert cli.main(["eval", "--corpus", str(unannotated), "--n-shots", "0"]) == 1


def test_peers_table(capsys):
    assert cli.main(["peers", "--target", "804161", "--corpus", CORPUS, "--universe", UNIVERSE]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].startswith("Chevron Corporation")
    assert [int(line.split()[-1]) for line in lines[1:]] == [5, 5, 4, 4, 4, 3, 3, 3, 3, 3]


def test_peers_machine_and_missing_target(tmp_path, capsys):
    out = tmp_path / "peers.jsonl"
    assert cli.main(["peers", "--target", "53008", "--corpus", CORPUS, "--universe", UNIVERSE,
                     "--top", "3", "--format", "machine", "--out", str(out)]) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()][1:]
    assert len(rows) == 3 and all(r["count"] == 1 for r in rows)
    capsys.readouterr()
    assert cli.main(["peers", "--target", "1", "--universe", UNIVERSE]) == 1


def test_network_outputs(tmp_path, capsys):
    out = tmp_path / "net"
    assert cli.main(["network", "--universe", UNIVERSE, "--out", str(out)]) == 0
    edges = [l for l in (out / "edges.csv").read_text().splitlines() if not l.startswith("#")]
    dist = [l for l in (out / "distribution.csv").read_text().splitlines() if not l.startswith("#")]
    assert edges[0] == "a,b,strength" and dist[0] == "k,s"
    assert sum(int(l.split(",")[1]) for l in dist[1:]) == len(edges) - 1
    assert "gamma" in (out / "fit.txt").read_text()


def test_config_file_defaults_and_flags_win(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"eval": {"n_shots": "0", "trials": 1, "extractor": ["gazetteer"],
                                        "format": "machine"}}))
    assert cli.main(["--config", str(cfg), "eval", "--corpus", CORPUS]) == 0
    rows = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")]
    assert [r.split(",")[:3] for r in rows[1:]] == [["gazetteer", "0", "1"]]
    assert cli.main(["--config", str(cfg), "eval", "--corpus", CORPUS, "--trials", "2"]) == 0
    rows = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")]
    assert rows[1].split(",")[2] == "2"


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    assert cli.main(["--config", str(cfg), "network", "--universe", UNIVERSE, "--out", str(tmp_path)]) == 1


def test_manifest_has_no_absolute_paths(tmp_path):
    out = tmp_path / "r.jsonl"
    cli.main(["extract", "--corpus", CORPUS, "--extractor", "gazetteer", "--out", str(out)])
    manifest = json.loads(out.read_text().splitlines()[0])["_manifest"]
    assert str(tmp_path) not in json.dumps(manifest)
    assert manifest["timestamp"] == "2023-06-07T00:00:00+00:00"
    assert {"command", "config_digest", "input_digests", "tool_version"} <= set(manifest)
