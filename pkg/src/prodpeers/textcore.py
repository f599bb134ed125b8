"""Text preprocessing for company summaries.

Summaries are reduced to the 95 printable ASCII characters: line breaks become
spaces, accented Latin letters are transliterated through a fixed table, and
anything else outside printable ASCII is dropped.
"""

from __future__ import annotations

import re

_SPACE_RUN_RE = re.compile(r" {2,}")

# Base letter -> accented forms. Covers the letters of Latin-1 Supplement
# (U+00C0-U+00FF) and all of Latin Extended-A (U+0100-U+017F).
_LETTER_GROUPS = {
    "A": "ÀÁÂÃÄÅĀĂĄ",
    "a": "àáâãäåāăą",
    "AE": "Æ",
    "ae": "æ",
    "C": "ÇĆĈĊČ",
    "c": "çćĉċč",
    "D": "ÐĎĐ",
    "d": "ðďđ",
    "E": "ÈÉÊËĒĔĖĘĚ",
    "e": "èéêëēĕėęě",
    "G": "ĜĞĠĢ",
    "g": "ĝğġģ",
    "H": "ĤĦ",
    "h": "ĥħ",
    "I": "ÌÍÎÏĨĪĬĮİ",
    "i": "ìíîïĩīĭįı",
    "IJ": "Ĳ",
    "ij": "ĳ",
    "J": "Ĵ",
    "j": "ĵ",
    "K": "Ķ",
    "k": "ķĸ",
    "L": "ĹĻĽĿŁ",
    "l": "ĺļľŀł",
    "N": "ÑŃŅŇŊ",
    "n": "ñńņňŋ",
    "'n": "ŉ",
    "O": "ÒÓÔÕÖØŌŎŐ",
    "o": "òóôõöøōŏő",
    "OE": "Œ",
    "oe": "œ",
    "R": "ŔŖŘ",
    "r": "ŕŗř",
    "S": "ŚŜŞŠ",
    "s": "śŝşšſ",
    "ss": "ß",
    "T": "ŢŤŦ",
    "t": "ţťŧ",
    "TH": "Þ",
    "th": "þ",
    "U": "ÙÚÛÜŨŪŬŮŰŲ",
    "u": "ùúûüũūŭůűų",
    "W": "Ŵ",
    "w": "ŵ",
    "Y": "ÝŶŸ",
    "y": "ýÿŷ",
    "Z": "ŹŻŽ",
    "z": "źżž",
}

# Typographic punctuation that has an obvious ASCII spelling.
_PUNCT_GROUPS = {
    "'": "‘’‚‛′´",
    '"': "“”„‟″«»",
    "-": "\u2010\u2011\u2012\u2013\u2014\u2015\u2212",
    "...": "…",
    "x": "×",
    " ": "\u00a0\u2002\u2003\u2004\u2005\u2006\u2007\u2008\u2009\u200a\u202f",
}


def _build_table() -> dict[str, str]:
    table: dict[str, str] = {}
    for groups in (_LETTER_GROUPS, _PUNCT_GROUPS):
        for ascii_form, chars in groups.items():
            for ch in chars:
                if ch in table:
                    raise RuntimeError(f"duplicate transliteration for {ch!r}")
                table[ch] = ascii_form
    return table


TRANSLITERATION: dict[str, str] = _build_table()


def _convert_char(ch: str) -> str:
    mapped = TRANSLITERATION.get(ch)
    if mapped is not None:
        return mapped
    if " " <= ch <= "~":
        return ch
    if ch.isspace():
        return " "
    return ""


def normalize_text(raw: str) -> str:
    """Return ``raw`` reduced to single-spaced printable ASCII.

    >>> normalize_text("Nescafé")
    'Nescafe'
    >>> normalize_text("Sociedad Química y\\nMinera")
    'Sociedad Quimica y Minera'
    """
    converted = "".join(_convert_char(ch) for ch in raw)
    return _SPACE_RUN_RE.sub(" ", converted).strip()


def is_normalized(text: str) -> bool:
    return normalize_text(text) == text


def word_count(text: str) -> int:
    return len(text.split())
