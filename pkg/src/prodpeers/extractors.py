"""PRODUCT extractors: chat-completion LLM, gazetteer baseline, and replay.

Every extractor maps a CompanyRecord to an ExtractionResult. Per-document
problems (service errors, unparseable replies, missing recordings) are
reported through ``status``; only configuration mistakes raise.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import httpx

from .corpus import AnnotatedDocument, CompanyRecord, ProductSet
from .prompting import (
    UnparseableOutput,
    estimate_tokens,
    parse_output,
    prompt_digest,
    render_prompt,
)

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_MODEL = "gpt-3.5-turbo"
CREDENTIAL_ENV_VAR = "OPENAI_API_KEY"

# Context windows in tokens for the models the experiments used.
MODEL_CONTEXT_LIMITS = {
    "gpt-3.5-turbo": 4096,
    "gpt-3.5-turbo-16k": 16384,
}


class ConfigError(ValueError):
    pass


class Status(str, Enum):
    OK = "ok"
    EMPTY = "empty"
    PARSE_FAILED = "parse_failed"
    SERVICE_FAILED = "service_failed"


class Kind(str, Enum):
    LLM = "llm"
    GAZETTEER = "gazetteer"
    REPLAY = "replay"


@dataclass(frozen=True)
class ExtractorConfig:
    kind: Kind
    train_examples: tuple[AnnotatedDocument, ...] = ()
    model_name: str = DEFAULT_MODEL
    endpoint_url: str = DEFAULT_ENDPOINT
    temperature: Optional[float] = None  # None leaves the service default
    max_output_tokens: int = 512
    credential_env: str = CREDENTIAL_ENV_VAR
    context_limit: Optional[int] = None
    retries: int = 3
    timeout: float = 60.0
    recordings: Optional[str] = None  # replay: JSONL file or response-cache directory
    dictionary: tuple[str, ...] = ()  # gazetteer: extra terms beyond the training gold

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "train_examples", tuple(self.train_examples))
        object.__setattr__(self, "dictionary", tuple(self.dictionary))

    @property
    def extractor_id(self) -> str:
        if self.kind is Kind.GAZETTEER:
            return "gazetteer"
        return f"{self.kind.value}:{self.model_name}"

    def with_train(self, train: Iterable[AnnotatedDocument]) -> "ExtractorConfig":
        return replace(self, train_examples=tuple(train))

    def validate(self) -> None:
        if self.max_output_tokens <= 0:
            raise ConfigError("max_output_tokens must be positive")
        if self.temperature is not None and self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.kind is Kind.LLM:
            if not self.endpoint_url or not self.model_name:
                raise ConfigError("llm extractor needs endpoint_url and model_name")
            if not os.environ.get(self.credential_env):
                raise ConfigError(f"llm extractor needs the {self.credential_env} environment variable")
        if self.kind is Kind.REPLAY and not self.recordings:
            raise ConfigError("replay extractor needs a recordings path")


@dataclass(frozen=True)
class ExtractionResult:
    page_id: int
    predicted: ProductSet
    extractor_id: str
    status: Status
    name: str = ""
    raw: Optional[str] = None
    error: Optional[str] = None

    def to_json(self) -> str:
        obj = {
            "page_id": self.page_id,
            "name": self.name,
            "extractor_id": self.extractor_id,
            "status": self.status.value,
            "predicted": self.predicted.sorted(),
            "raw": self.raw,
            "error": self.error,
        }
        return json.dumps(obj, ensure_ascii=False)

    @classmethod
    def from_json(cls, obj: dict) -> "ExtractionResult":
        return cls(
            page_id=int(obj["page_id"]),
            predicted=ProductSet(obj.get("predicted") or []),
            extractor_id=obj.get("extractor_id", ""),
            status=Status(obj.get("status", "ok")),
            name=obj.get("name", ""),
            raw=obj.get("raw"),
            error=obj.get("error"),
        )


def _result_from_reply(target: CompanyRecord, extractor_id: str, content: str) -> ExtractionResult:
    try:
        predicted = parse_output(content)
    except UnparseableOutput as exc:
        return ExtractionResult(target.page_id, ProductSet(), extractor_id, Status.PARSE_FAILED,
                                name=target.name, raw=content, error=str(exc))
    status = Status.OK if predicted else Status.EMPTY
    return ExtractionResult(target.page_id, predicted, extractor_id, status,
                            name=target.name, raw=content)


def _failed(target: CompanyRecord, extractor_id: str, error: str) -> ExtractionResult:
    return ExtractionResult(target.page_id, ProductSet(), extractor_id, Status.SERVICE_FAILED,
                            name=target.name, error=error)


def reply_content(body: dict) -> str:
    """Message text from a chat-completion response body."""
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ValueError(f"malformed chat-completion response: {exc!r}") from None
    if not isinstance(content, str):
        raise ValueError("chat-completion content is not a string")
    return content


def _write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class GazetteerExtractor:
    """Dictionary baseline: predicts every known term found in the summary.

    Matching is case-insensitive and anchored on word boundaries (neither
    neighbour of a match may be a letter or digit). A character trie is
    walked from each word start, so overlapping terms such as
    "personal computer" and "computer" are both reported.
    """

    _END = object()

    def __init__(self, config: ExtractorConfig):
        self.config = config
        self.extractor_id = config.extractor_id
        terms: list[str] = []
        for doc in config.train_examples:
            terms.extend(doc.gold or ())
        terms.extend(ProductSet(config.dictionary))
        self.terms = ProductSet(terms)
        self._trie: dict = {}
        for term in self.terms:
            node = self._trie
            for ch in term:
                node = node.setdefault(ch, {})
            node[self._END] = term

    @staticmethod
    def _is_word_char(ch: str) -> bool:
        return ch.isascii() and ch.isalnum()

    def find_terms(self, text: str) -> ProductSet:
        text = text.lower()
        found = []
        n = len(text)
        for i in range(n):
            if i > 0 and self._is_word_char(text[i - 1]):
                continue
            node = self._trie
            j = i
            while j < n and text[j] in node:
                node = node[text[j]]
                j += 1
                term = node.get(self._END)
                if term is not None and (j == n or not self._is_word_char(text[j])):
                    found.append(term)
        return ProductSet(found)

    def extract(self, target: CompanyRecord) -> ExtractionResult:
        return ExtractionResult(target.page_id, self.find_terms(target.summary), self.extractor_id,
                                Status.OK, name=target.name)


@lru_cache(maxsize=32)
def _load_recordings_file(path: str, mtime: float) -> dict[tuple[str, str], dict]:
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "_manifest" in obj:
                continue
            try:
                table[(obj["model"], obj["prompt_sha256"])] = obj["response"]
            except KeyError as exc:
                raise ConfigError(f"{path}:{lineno}: recording lacks {exc}") from None
    return table


class ReplayExtractor:
    """Serves recorded chat-completion responses keyed by (model, prompt digest).

    ``recordings`` is either a JSON-lines file of ``{model, prompt_sha256,
    response}`` objects or a response-cache directory laid out as
    ``<dir>/<model>/<digest>.json`` (what the LLM extractor writes).
    """

    def __init__(self, config: ExtractorConfig):
        self.config = config
        self.extractor_id = config.extractor_id
        self.source = Path(config.recordings)
        if not self.source.exists():
            raise ConfigError(f"recordings not found: {self.source}")

    def lookup(self, prompt: str) -> Optional[dict]:
        digest = prompt_digest(prompt)
        if self.source.is_dir():
            path = self.source / self.config.model_name / f"{digest}.json"
            if not path.exists():
                return None
            return json.loads(path.read_text(encoding="utf-8"))
        table = _load_recordings_file(str(self.source), self.source.stat().st_mtime)
        return table.get((self.config.model_name, digest))

    def extract(self, target: CompanyRecord) -> ExtractionResult:
        prompt = render_prompt(self.config.train_examples, target.summary)
        body = self.lookup(prompt)
        if body is None:
            return _failed(target, self.extractor_id, f"replay miss for prompt {prompt_digest(prompt)[:12]}")
        try:
            content = reply_content(body)
        except ValueError as exc:
            return _failed(target, self.extractor_id, str(exc))
        return _result_from_reply(target, self.extractor_id, content)


class LLMExtractor:
    """Sends the rendered prompt to a chat-completion endpoint.

    With ``cache_dir`` set, response bodies are stored verbatim under
    ``<cache_dir>/<model>/<digest>.json`` and reused without a service call.
    """

    def __init__(self, config: ExtractorConfig, http: Optional[httpx.Client] = None,
                 cache_dir=None, retry_delay: float = 1.0):
        config.validate()
        self.config = config
        self.extractor_id = config.extractor_id
        self.http = http or httpx.Client(timeout=config.timeout)
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.retry_delay = retry_delay
        self.service_calls = 0
        self._lock = threading.Lock()

    @property
    def context_limit(self) -> Optional[int]:
        return self.config.context_limit or MODEL_CONTEXT_LIMITS.get(self.config.model_name)

    def request_body(self, prompt: str) -> dict:
        body = {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": ""},
                {"role": "user", "content": prompt},
            ],
            "max_tokens": self.config.max_output_tokens,
        }
        if self.config.temperature is not None:
            body["temperature"] = self.config.temperature
        return body

    def _cache_path(self, digest: str) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / self.config.model_name / f"{digest}.json"

    def _call(self, prompt: str) -> bytes:
        headers = {"Authorization": f"Bearer {os.environ.get(self.config.credential_env, '')}"}
        last_error = "no attempt made"
        for attempt in range(self.config.retries):
            with self._lock:
                self.service_calls += 1
            try:
                resp = self.http.post(self.config.endpoint_url, json=self.request_body(prompt),
                                      headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    return resp.content
                last_error = f"HTTP {resp.status_code}"
                if resp.status_code < 500 and resp.status_code != 429:
                    break
            if attempt + 1 < self.config.retries:
                time.sleep(self.retry_delay)
        raise RuntimeError(last_error)

    def extract(self, target: CompanyRecord) -> ExtractionResult:
        prompt = render_prompt(self.config.train_examples, target.summary)
        limit = self.context_limit
        if limit is not None and estimate_tokens(prompt) > limit:
            return _failed(target, self.extractor_id,
                           f"prompt needs ~{estimate_tokens(prompt)} tokens, model allows {limit}")
        digest = prompt_digest(prompt)
        cache_path = self._cache_path(digest)
        if cache_path is not None and cache_path.exists():
            raw_body = cache_path.read_bytes()
        else:
            try:
                raw_body = self._call(prompt)
            except RuntimeError as exc:
                return _failed(target, self.extractor_id, str(exc))
        try:
            content = reply_content(json.loads(raw_body))
        except ValueError as exc:
            return _failed(target, self.extractor_id, str(exc))
        if cache_path is not None and not cache_path.exists():
            _write_atomic(cache_path, raw_body)
        return _result_from_reply(target, self.extractor_id, content)


def make_extractor(config: ExtractorConfig, http: Optional[httpx.Client] = None, cache_dir=None):
    config.validate()
    if config.kind is Kind.GAZETTEER:
        return GazetteerExtractor(config)
    if config.kind is Kind.REPLAY:
        return ReplayExtractor(config)
    return LLMExtractor(config, http=http, cache_dir=cache_dir)


def extract(config: ExtractorConfig, target: CompanyRecord, **kwargs) -> ExtractionResult:
    if not target.summary:
        raise ValueError(f"page {target.page_id} has an empty summary")
    return make_extractor(config, **kwargs).extract(target)


def extract_batch(config: ExtractorConfig, universe: Sequence[CompanyRecord], parallelism: int = 1,
                  cache_dir=None, extractor=None) -> list[ExtractionResult]:
    """Run one extractor over many companies with at most ``parallelism`` in flight.

    Results come back in input order. Failures are recorded per company and
    never abort the batch.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    extractor = extractor or make_extractor(config, cache_dir=cache_dir)

    def one(record: CompanyRecord) -> ExtractionResult:
        if not record.summary:
            return _failed(record, extractor.extractor_id, "empty summary")
        try:
            return extractor.extract(record)
        except Exception as exc:  # one bad company must not sink the batch
            logger.exception("extraction crashed for page %s", record.page_id)
            return _failed(record, extractor.extractor_id, f"{type(exc).__name__}: {exc}")

    if parallelism == 1:
        return [one(r) for r in universe]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, universe))


@dataclass
class BatchSummary:
    total: int = 0
    by_status: dict = field(default_factory=dict)
    non_empty: int = 0


def summarize(results: Iterable[ExtractionResult]) -> BatchSummary:
    summary = BatchSummary()
    for r in results:
        summary.total += 1
        summary.by_status[r.status.value] = summary.by_status.get(r.status.value, 0) + 1
        summary.non_empty += bool(r.predicted)
    return summary


def save_results(results: Iterable[ExtractionResult], path, manifest: Optional[dict] = None) -> None:
    lines = []
    if manifest is not None:
        lines.append(json.dumps({"_manifest": manifest}, sort_keys=True))
    lines.extend(r.to_json() for r in results)
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_results(path) -> list[ExtractionResult]:
    results = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if "_manifest" in obj:
                    continue
                results.append(ExtractionResult.from_json(obj))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad extraction record ({exc})") from None
    return results
