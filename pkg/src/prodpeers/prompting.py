"""Few-shot PRODUCT extraction prompt and a tolerant reader for model replies."""

from __future__ import annotations

import hashlib
import math
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import AnnotatedDocument, ProductSet
from .textcore import normalize_text

TEMPLATE_VERSION = "product_ner_v1"
_TEMPLATE_DIR = Path(__file__).parent / "data" / "templates"


class UnparseableOutput(ValueError):
    """The reply contains no recognizable PRODUCT construct."""


@lru_cache(maxsize=None)
def template_header(version: str = TEMPLATE_VERSION) -> str:
    return (_TEMPLATE_DIR / f"{version}.txt").read_text(encoding="utf-8")


def format_output(products: Iterable[str]) -> str:
    # repr() gives the single-quoted style and escapes embedded quotes
    items = ", ".join(repr(item) for item in products)
    return "{{'PRODUCT': [" + items + "]}}"


def render_prompt(train: Sequence[AnnotatedDocument], target: str,
                  version: str = TEMPLATE_VERSION) -> str:
    """Build the full prompt: header, numbered worked examples, then the target.

    The target is the last numbered sentence and carries an empty output
    list for the model to fill in.
    """
    blocks = []
    for k, doc in enumerate(train, start=1):
        blocks.append(f"{k}. Sentence: {doc.company.summary}\nOutput: {format_output(doc.gold or ())}\n")
    blocks.append(f"{len(train) + 1}. Sentence: {normalize_text(target)}\nOutput: {format_output(())}\n")
    return template_header(version) + "\n".join(blocks)


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def estimate_tokens(text: str) -> int:
    """Rough token count, ceil(words * 4 / 3). A heuristic, not a tokenizer."""
    return math.ceil(len(text.split()) * 4 / 3)


# --- reply parsing -------------------------------------------------------

_NULL_WORDS = ("None", "none", "NONE", "null", "Null", "NULL")
_ESCAPES = {"n": " ", "t": " ", "r": " ", "\\": "\\", "'": "'", '"': '"', "/": "/"}


class _Reader:
    def __init__(self, text: str, pos: int = 0):
        self.text = text
        self.pos = pos

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def quoted(self) -> str:
        quote = self.text[self.pos]
        self.pos += 1
        out = []
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == "\\" and self.pos + 1 < len(self.text):
                nxt = self.text[self.pos + 1]
                if nxt == "u" and self.pos + 6 <= len(self.text):
                    try:
                        out.append(chr(int(self.text[self.pos + 2:self.pos + 6], 16)))
                        self.pos += 6
                        continue
                    except ValueError:
                        pass
                out.append(_ESCAPES.get(nxt, "\\" + nxt))
                self.pos += 2
                continue
            if ch == quote:
                self.pos += 1
                return "".join(out)
            out.append(ch)
            self.pos += 1
        raise UnparseableOutput("unterminated string in PRODUCT list")

    def bare(self) -> str:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in ",]}\n":
            self.pos += 1
        return self.text[start:self.pos].strip()


def _find_key(text: str) -> int:
    """Index just past ``PRODUCT:`` for the first key that sits inside braces."""
    upper = text.upper()
    start = 0
    while True:
        idx = upper.find("PRODUCT", start)
        if idx < 0:
            return -1
        start = idx + 1
        before = idx
        if before > 0 and text[before - 1] in "'\"":
            before -= 1
        while before > 0 and text[before - 1].isspace():
            before -= 1
        if before == 0 or text[before - 1] != "{":
            continue
        after = idx + len("PRODUCT")
        if text[after:after + 1] in ("'", '"'):
            after += 1
        while after < len(text) and text[after].isspace():
            after += 1
        if text[after:after + 1] == ":":
            return after + 1


def _parse_list(reader: _Reader) -> list[str]:
    reader.pos += 1  # '['
    items = []
    while True:
        reader.skip_ws()
        ch = reader.peek()
        if ch == "":
            raise UnparseableOutput("PRODUCT list is not closed")
        if ch == "]":
            reader.pos += 1
            return items
        if ch == ",":
            reader.pos += 1
            continue
        if ch in ("'", '"'):
            items.append(reader.quoted())
        elif ch in "[{}":
            raise UnparseableOutput(f"unexpected {ch!r} inside PRODUCT list")
        else:
            items.append(reader.bare())
        reader.skip_ws()
        if reader.peek() not in (",", "]"):
            raise UnparseableOutput(f"expected ',' or ']' at offset {reader.pos}")


def parse_output(raw: str) -> ProductSet:
    """Pull the first ``{'PRODUCT': [...]}`` construct out of a model reply.

    Tolerates single or doubled braces, either quote style, surrounding
    prose, ``None``/``null`` and empty lists. Raises UnparseableOutput when
    no PRODUCT construct can be read.
    """
    pos = _find_key(raw)
    if pos < 0:
        raise UnparseableOutput("no PRODUCT construct found")
    reader = _Reader(raw, pos)
    reader.skip_ws()
    ch = reader.peek()
    if ch == "[":
        return ProductSet(_parse_list(reader))
    if ch in ("'", '"'):
        value = reader.quoted()
        return ProductSet([] if value.strip() in _NULL_WORDS else [value])
    word = reader.bare()
    if word in _NULL_WORDS:
        return ProductSet()
    raise UnparseableOutput(f"PRODUCT value is neither a list nor None: {word[:40]!r}")
