"""Annotated company corpus: records, product sets, file I/O and splitting."""

from __future__ import annotations

import json
import random
from collections.abc import Set
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .textcore import normalize_text, word_count

class CorpusError(ValueError):
    """Malformed corpus file or record."""


class DuplicatePageIdError(CorpusError):
    pass


def canonical_item(item: str) -> str:
    return normalize_text(item).lower()


class ProductSet(Set):
    """Immutable set of canonical (normalized, lowercase) product strings.

    Equality and hashing are set-based; iteration keeps first-seen order so
    annotations render in the order they were written.
    """

    __slots__ = ("_items", "_members")

    def __init__(self, items: Iterable[str] = ()):
        if isinstance(items, str):
            raise TypeError("ProductSet takes an iterable of strings, not a string")
        ordered: dict[str, None] = {}
        for item in items:
            canon = canonical_item(item)
            if canon:
                ordered.setdefault(canon, None)
        self._items = tuple(ordered)
        self._members = frozenset(self._items)

    def __contains__(self, item) -> bool:
        return item in self._members

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        return hash(self._members)

    def __repr__(self) -> str:
        return f"ProductSet({list(self._items)!r})"

    def sorted(self) -> list[str]:
        return sorted(self._items)


def product_set(items: Iterable[str]) -> ProductSet:
    """Canonicalize ``items`` into a product set, dropping blanks."""
    return items if isinstance(items, ProductSet) else ProductSet(items)


@dataclass(frozen=True)
class CompanyRecord:
    name: str
    page_id: int
    summary: str

    def __post_init__(self):
        if not isinstance(self.page_id, int) or isinstance(self.page_id, bool) or self.page_id <= 0:
            raise CorpusError(f"page_id must be a positive integer, got {self.page_id!r}")
        if normalize_text(self.summary) != self.summary:
            object.__setattr__(self, "summary", normalize_text(self.summary))

    @property
    def word_count(self) -> int:
        return word_count(self.summary)


@dataclass(frozen=True)
class AnnotatedDocument:
    company: CompanyRecord
    gold: Optional[ProductSet] = None  # None for unannotated records

    @property
    def page_id(self) -> int:
        return self.company.page_id


@dataclass(frozen=True)
class CorpusSplit:
    train: list[AnnotatedDocument]
    test: list[AnnotatedDocument]
    seed: int


def parse_record(obj: dict) -> AnnotatedDocument:
    if not isinstance(obj, dict):
        raise CorpusError("record is not an object")
    missing = [k for k in ("name", "page_id", "summary") if k not in obj]
    if missing:
        raise CorpusError(f"missing field(s): {', '.join(missing)}")
    name, page_id, summary = obj["name"], obj["page_id"], obj["summary"]
    if not isinstance(name, str) or not isinstance(summary, str):
        raise CorpusError("name and summary must be strings")
    company = CompanyRecord(name=name, page_id=page_id, summary=summary)
    gold = None
    if obj.get("products") is not None:
        products = obj["products"]
        if not isinstance(products, list) or not all(isinstance(p, str) for p in products):
            raise CorpusError("products must be a list of strings")
        gold = product_set(products)
    return AnnotatedDocument(company=company, gold=gold)


def load_corpus(path) -> list[AnnotatedDocument]:
    """Read a JSON-lines corpus file.

    Blank lines and embedded run-manifest lines are skipped. Raises
    CorpusError with the offending line number on malformed input and
    DuplicatePageIdError when a page id repeats.
    """
    docs: list[AnnotatedDocument] = []
    seen: dict[int, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if isinstance(obj, dict) and "_manifest" in obj:
                continue
            try:
                doc = parse_record(obj)
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            if doc.page_id in seen:
                raise DuplicatePageIdError(
                    f"{path}:{lineno}: duplicate page_id {doc.page_id} (first seen on line {seen[doc.page_id]})"
                )
            seen[doc.page_id] = lineno
            docs.append(doc)
    return docs


def record_to_json(doc: AnnotatedDocument) -> str:
    obj = {"name": doc.company.name, "page_id": doc.page_id, "summary": doc.company.summary}
    if doc.gold is not None:
        obj["products"] = doc.gold.sorted()
    return json.dumps(obj, ensure_ascii=False)


def dump_corpus(docs: Iterable[AnnotatedDocument], manifest: Optional[dict] = None) -> str:
    lines = []
    if manifest is not None:
        lines.append(json.dumps({"_manifest": manifest}, sort_keys=True))
    lines.extend(record_to_json(doc) for doc in docs)
    return "".join(line + "\n" for line in lines)


def save_corpus(docs: Iterable[AnnotatedDocument], path, manifest: Optional[dict] = None) -> None:
    Path(path).write_text(dump_corpus(docs, manifest), encoding="utf-8")


def validate_annotation(doc: AnnotatedDocument) -> list[str]:
    """Warn about gold items that cannot be found in the summary text."""
    if not doc.gold:
        return [f"page {doc.page_id}: empty gold set"]
    text = doc.company.summary.lower()
    return [
        f"page {doc.page_id}: gold item {item!r} does not occur in the summary"
        for item in doc.gold
        if item not in text
    ]


def split_train_test(corpus: list[AnnotatedDocument], n_shot: int, seed: int) -> CorpusSplit:
    """Draw ``n_shot`` training documents at random; the rest form the test set.

    The permutation comes from ``random.Random(seed)`` (MT19937), so a given
    seed reproduces the same split on any platform. Test documents keep
    corpus order.
    """
    if not 0 <= n_shot < len(corpus):
        raise ValueError(f"n_shot must be in [0, {len(corpus)}), got {n_shot}")
    order = list(range(len(corpus)))
    random.Random(seed).shuffle(order)
    chosen = order[:n_shot]
    chosen_set = set(chosen)
    train = [corpus[i] for i in chosen]
    test = [doc for i, doc in enumerate(corpus) if i not in chosen_set]
    return CorpusSplit(train=train, test=test, seed=seed)
