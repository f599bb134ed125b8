"""Command-line pipeline: ingest -> extract -> eval / peers / network.

Exit codes: 0 success (per-item failures are reported, not fatal),
1 usage or configuration error, 2 total operational failure.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import click

from . import __version__
from .corpus import AnnotatedDocument, CorpusError, load_corpus, save_corpus
from .evaluation import format_series, format_sweep_table, run_sweep
from .extractors import (
    CREDENTIAL_ENV_VAR,
    DEFAULT_ENDPOINT,
    DEFAULT_MODEL,
    ConfigError,
    ExtractorConfig,
    extract_batch,
    load_results,
    make_extractor,
    save_results,
    summarize,
)
from .peergroup import (
    build_network,
    fit_exponential,
    fit_power_law,
    format_fit_summary,
    format_peer_table,
    rank_peers,
    strength_distribution,
)
from .wikipedia import API_URL, WikipediaClient, default_cache_dir, ingest_universe

logger = logging.getLogger("prodpeers")

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2


class OperationalFailure(Exception):
    """Nothing could be produced (e.g. every fetch failed)."""


# --- run manifests --------------------------------------------------------

def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the clock for reproducible outputs
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc) if epoch
            else dt.datetime.now(dt.timezone.utc).replace(microsecond=0))
    return when.isoformat()


def build_manifest(command: str, config: dict, inputs: list) -> dict:
    """Provenance block embedded in every output file.

    Paths are reduced to base names so identical runs from different
    working directories produce identical bytes.
    """
    def scrub(value):
        if isinstance(value, Path):
            return value.name
        if isinstance(value, (list, tuple)):
            return [scrub(v) for v in value]
        return value

    clean = {k: scrub(v) for k, v in sorted(config.items())}
    digest = hashlib.sha256(json.dumps(clean, sort_keys=True, default=str).encode()).hexdigest()
    return {
        "command": command,
        "config_digest": digest,
        "input_digests": [{"file": Path(p).name, "sha256": _sha256_file(p)}
                          for p in inputs if p is not None and Path(p).is_file()],
        "timestamp": _timestamp(),
        "tool_version": __version__,
    }


def _manifest_line(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True)


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


# --- shared option helpers ------------------------------------------------

def _parse_n_shots(text: str) -> list[int]:
    """Accepts "0..9", "0-9", "3" or "0,2,4"."""
    text = text.strip()
    try:
        for sep in ("..", "-"):
            if sep in text:
                lo, hi = text.split(sep, 1)
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ValueError
                return list(range(lo, hi + 1))
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"cannot read n-shot range {text!r}") from None


def _read_lines(path: Path) -> list[str]:
    return [line.strip() for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.lstrip().startswith("#")]


def _load_corpus(path: Path) -> list[AnnotatedDocument]:
    try:
        return load_corpus(path)
    except OSError as exc:
        raise ConfigError(f"cannot read corpus {path}: {exc}") from None
    except CorpusError as exc:
        raise ConfigError(str(exc)) from None


def _extractor_config(kind: str, model: str, endpoint: str, temperature: Optional[float],
                      recordings: Optional[Path], dictionary: Optional[Path],
                      max_tokens: int, train=()) -> ExtractorConfig:
    terms = tuple(_read_lines(dictionary)) if dictionary else ()
    config = ExtractorConfig(
        kind=kind, train_examples=tuple(train), model_name=model, endpoint_url=endpoint,
        temperature=temperature, max_output_tokens=max_tokens,
        recordings=str(recordings) if recordings else None, dictionary=terms,
    )
    config.validate()
    return config


def extractor_options(f):
    options = [
        click.option("--extractor", "extractor", type=click.Choice(["llm", "gazetteer", "replay"]),
                     default="replay", show_default=True),
        click.option("--model", default=DEFAULT_MODEL, show_default=True),
        click.option("--endpoint", default=DEFAULT_ENDPOINT, show_default=True),
        click.option("--temperature", type=float, default=None,
                     help="Omit to use the service default."),
        click.option("--max-tokens", type=int, default=512, show_default=True),
        click.option("--recordings", type=click.Path(path_type=Path), default=None,
                     help="Replay source: recordings JSONL or an LLM response-cache directory."),
        click.option("--dictionary", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                     default=None, help="Extra gazetteer terms, one per line."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _default_recordings(kind: str, recordings: Optional[Path]) -> Optional[Path]:
    if kind == "replay" and recordings is None:
        from . import data_path
        return data_path("recordings.jsonl")
    return recordings


# --- commands ---------------------------------------------------------------

@click.group()
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="JSON file of option defaults; command-line flags win.")
@click.option("-v", "--verbose", is_flag=True)
@click.version_option(__version__, prog_name="prodpeers")
@click.pass_context
def cli(ctx, config_file, verbose):
    """Extract company products with LLM prompting and build peer groups."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if config_file is not None:
        try:
            settings = json.loads(config_file.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"config file {config_file}: {exc}") from None
        if not isinstance(settings, dict):
            raise ConfigError("config file must hold a JSON object")
        flat = {k: v for k, v in settings.items() if not isinstance(v, dict)}
        ctx.default_map = {
            name: _option_defaults(command, {**flat, **settings.get(name, {})})
            for name, command in cli.commands.items()
        }


def _option_defaults(command: click.Command, values: dict) -> dict:
    """Map config keys spelled like flags ("n-shots", "format") to parameter names."""
    lookup = {}
    for param in command.params:
        lookup[param.name] = param.name
        for opt in param.opts:
            lookup[opt.lstrip("-").replace("-", "_")] = param.name
    out = {}
    for key, value in values.items():
        name = lookup.get(key.replace("-", "_"))
        if name is not None:
            out[name] = value
    return out


@cli.command()
@click.option("--ids", "ids_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="File of Wikipedia page ids, one per line.")
@click.option("--names", "names_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="File of company names, one per line.")
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Summary snapshot directory (default $PRODPEERS_CACHE_DIR or ./wiki_cache).")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the failure report here as JSON.")
@click.option("--parallelism", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--min-interval", type=float, default=1.0, show_default=True,
              help="Seconds between request starts.")
@click.option("--api-url", default=API_URL, show_default=True)
def ingest(ids_file, names_file, cache_dir, out, report, parallelism, min_interval, api_url):
    """Fetch summaries for page ids or company names into a corpus file."""
    if (ids_file is None) == (names_file is None):
        raise click.UsageError("give exactly one of --ids or --names")
    source = ids_file or names_file
    items = _read_lines(source)
    if ids_file is not None:
        try:
            items = [int(x) for x in items]
        except ValueError:
            raise ConfigError(f"{ids_file} must contain integer page ids") from None
    cache_dir = cache_dir or default_cache_dir()
    client = WikipediaClient(cache_dir=cache_dir, api_url=api_url, min_interval=min_interval)
    try:
        result = ingest_universe(client, items, parallelism=parallelism)
    finally:
        client.close()

    manifest = build_manifest("ingest", {"source": source, "parallelism": parallelism}, [source])
    save_corpus([AnnotatedDocument(r) for r in result.records], out, manifest=manifest)
    failures = [{"item": f.item, "error": f.error} for f in result.failures]
    if report is not None:
        report.write_text(json.dumps({"manifest": manifest, "failures": failures}, indent=2) + "\n",
                          encoding="utf-8")
    for f in failures:
        click.echo(f"failed: {f['item']}: {f['error']}", err=True)
    click.echo(f"ingested {len(result.records)} of {len(items)}; "
               f"{client.request_count} network request(s)", err=True)
    if items and not result.records:
        raise OperationalFailure("every entry failed")


@cli.command()
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--train", "train_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="Annotated corpus whose documents become the worked examples.")
@extractor_options
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="LLM response cache directory.")
@click.option("--parallelism", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def extract(corpus, train_file, extractor, model, endpoint, temperature, max_tokens, recordings,
            dictionary, cache_dir, parallelism, out):
    """Run one extractor over every company in a corpus file."""
    docs = _load_corpus(corpus)
    train = _load_corpus(train_file) if train_file else []
    recordings = _default_recordings(extractor, recordings)
    config = _extractor_config(extractor, model, endpoint, temperature, recordings, dictionary,
                               max_tokens, train)
    runner = make_extractor(config, cache_dir=cache_dir)
    results = extract_batch(config, [d.company for d in docs], parallelism=parallelism,
                            extractor=runner)
    manifest = build_manifest(
        "extract",
        {"extractor": config.extractor_id, "temperature": temperature, "max_tokens": max_tokens,
         "train": train_file, "recordings": recordings, "dictionary": dictionary},
        [corpus, train_file, recordings, dictionary],
    )
    save_results(results, out, manifest=manifest)
    s = summarize(results)
    statuses = ", ".join(f"{k}={v}" for k, v in sorted(s.by_status.items()))
    click.echo(f"{s.total} companies ({statuses}); {s.non_empty} with at least one product", err=True)
    if docs and s.by_status.get("service_failed", 0) == s.total:
        raise OperationalFailure("every extraction failed at the service")


@cli.command(name="eval")
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--extractor", "extractors", multiple=True,
              type=click.Choice(["llm", "gazetteer", "replay"]),
              help="Repeat to compare several extractors (default: replay and gazetteer).")
@click.option("--model", default=DEFAULT_MODEL, show_default=True)
@click.option("--endpoint", default=DEFAULT_ENDPOINT, show_default=True)
@click.option("--temperature", type=float, default=None)
@click.option("--max-tokens", type=int, default=512, show_default=True)
@click.option("--recordings", type=click.Path(path_type=Path), default=None)
@click.option("--dictionary", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--n-shots", default="0..9", show_default=True)
@click.option("--trials", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--seed", type=int, default=2023, show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--parallelism", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Series file (CSV) for plotting.")
@click.option("--format", "fmt", type=click.Choice(["table", "machine"]), default="table",
              show_default=True)
def eval_cmd(corpus, extractors, model, endpoint, temperature, max_tokens, recordings, dictionary,
             n_shots, trials, seed, cache_dir, parallelism, out, fmt):
    """F-score versus number of worked examples (n-shot sweep)."""
    docs = _load_corpus(corpus)
    shots = _parse_n_shots(n_shots)
    if not shots:
        raise click.BadParameter("empty n-shot range", param_hint="--n-shots")
    if max(shots) >= len(docs):
        raise ConfigError(f"--n-shots must stay below the corpus size ({len(docs)})")
    if any(d.gold is None for d in docs):
        raise ConfigError("eval needs an annotated corpus (every record with products)")
    kinds = extractors or ("replay", "gazetteer")
    all_results = []
    used_recordings = []
    for kind in kinds:
        rec = _default_recordings(kind, recordings)
        base = _extractor_config(kind, model, endpoint, temperature, rec, dictionary, max_tokens)
        if rec is not None:
            used_recordings.append(rec)
        all_results.extend(run_sweep(docs, base.with_train, shots, trials, seed,
                                     parallelism=parallelism, cache_dir=cache_dir))
    manifest = build_manifest(
        "eval",
        {"extractors": list(kinds), "model": model, "n_shots": shots, "trials": trials, "seed": seed,
         "temperature": temperature, "dictionary": dictionary},
        [corpus, dictionary, *used_recordings],
    )
    series = format_series(all_results, manifest=_manifest_line(manifest))
    if out is not None:
        _emit(series, out)
    click.echo(series if fmt == "machine" else format_sweep_table(all_results), nl=False)


@cli.command()
@click.option("--target", type=int, required=True, help="Wikipedia page id of the target company.")
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None,
              help="Annotated corpus; a target found here is matched by its gold products.")
@click.option("--universe", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--top", type=click.IntRange(min=0), default=10, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Also write the ranking as JSON lines.")
@click.option("--format", "fmt", type=click.Choice(["table", "machine"]), default="table",
              show_default=True)
def peers(target, corpus, universe, top, out, fmt):
    """Rank comparable companies by shared products."""
    try:
        results = load_results(universe)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    subject = None
    if corpus is not None:
        subject = next((d for d in _load_corpus(corpus) if d.page_id == target and d.gold is not None), None)
    if subject is None:
        subject = next((r for r in results if r.page_id == target), None)
    if subject is None:
        raise ConfigError(f"target page {target} not found in corpus or universe")
    matches = rank_peers(subject, results, top)
    manifest = build_manifest("peers", {"target": target, "top": top}, [corpus, universe])
    lines = [json.dumps({"_manifest": manifest}, sort_keys=True)]
    for m in matches:
        lines.append(json.dumps({"target_page_id": m.target_page_id, "page_id": m.candidate_page_id,
                                 "name": m.candidate_name, "matched": list(m.matched),
                                 "count": m.count}))
    machine = "".join(line + "\n" for line in lines)
    if out is not None:
        _emit(machine, out)
    click.echo(machine if fmt == "machine" else format_peer_table(matches), nl=False)


@cli.command()
@click.option("--universe", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True,
              help="Directory for edges.csv, distribution.csv and fit.txt.")
def network(universe, out_dir):
    """Company network from shared products, with strength distribution fits."""
    try:
        results = load_results(universe)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    net = build_network(results)
    dist = strength_distribution(net)
    manifest = _manifest_line(build_manifest("network", {}, [universe]))
    out_dir.mkdir(parents=True, exist_ok=True)
    edges = [f"# manifest: {manifest}", "a,b,strength"] + [f"{a},{b},{s}" for a, b, s in net.edges]
    (out_dir / "edges.csv").write_text("\n".join(edges) + "\n", encoding="utf-8")
    rows = [f"# manifest: {manifest}", "k,s"] + [f"{k},{s}" for k, s in dist]
    (out_dir / "distribution.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    header = f"nodes={len(net.nodes)} edges={len(net.edges)} strength_values={len(dist)}\n"
    try:
        summary = header + format_fit_summary(fit_power_law(dist), fit_exponential(dist))
    except ValueError as exc:
        summary = header + f"no fit: {exc}\n"
    (out_dir / "fit.txt").write_text(f"# manifest: {manifest}\n" + summary, encoding="utf-8")
    click.echo(summary, nl=False)


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cli.main(args=argv, prog_name="prodpeers", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        return EXIT_CONFIG
    except OperationalFailure as exc:
        click.echo(f"failed: {exc}", err=True)
        return EXIT_FAILURE
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
