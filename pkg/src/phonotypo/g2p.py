"""
Grapheme-to-phoneme expansion: deterministic grapheme tables, pronunciation
lexicons with variants, and label remapping rules.

Tables, lexicons and rules are plain TSV data files and immutable once
loaded.
"""

from __future__ import annotations

import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .core import (PhonotypoError, Pronunciation, Source, StructuralError,
                   SymbolTable, default_symbols)

logger = logging.getLogger(__name__)

OOV_POLICIES = ("skip", "error", "pass-through")


class UnmappedGraphemeError(PhonotypoError, KeyError):
    def __init__(self, grapheme: str, offset: int):
        super().__init__(f"no mapping for grapheme {grapheme!r} at offset {offset}")
        self.grapheme = grapheme
        self.offset = offset

    def __str__(self):
        return self.args[0]


class MissingPronunciationError(PhonotypoError, KeyError):
    """A word has no lexicon entry and no fallback table was given."""


class RemapConfigError(PhonotypoError, ValueError):
    pass


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def tokenize(text: str, casefold: bool = True) -> list[tuple[str, int]]:
    """Split on whitespace and strip edge punctuation.

    Returns ``(word, offset)`` pairs where ``offset`` indexes the first kept
    character in the NFC-normalised text. Tokens that are all punctuation
    are dropped.
    """
    text = _nfc(text)
    out = []
    for m in re.finditer(r"\S+", text):
        tok, start = m.group(), m.start()
        lo, hi = 0, len(tok)
        while lo < hi and _is_punct(tok[lo]):
            lo += 1
        while hi > lo and _is_punct(tok[hi - 1]):
            hi -= 1
        if lo < hi:
            word = tok[lo:hi]
            out.append((word.lower() if casefold else word, start + lo))
    return out


@dataclass(frozen=True)
class GraphemeTable:
    """Ordered grapheme -> label-sequence map; multigraphs match longest-first."""

    entries: tuple[tuple[str, tuple[str, ...]], ...]
    casefold: bool = True

    def __post_init__(self):
        seen = {}
        for g, labels in self.entries:
            if not g:
                raise StructuralError("empty grapheme in table")
            if g in seen and seen[g] != tuple(labels):
                raise StructuralError(f"grapheme {g!r} mapped twice")
            seen[g] = tuple(labels)
        object.__setattr__(self, "_map", seen)
        object.__setattr__(self, "_lengths", sorted({len(g) for g in seen}, reverse=True))

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Sequence[str]], casefold=True):
        return cls(tuple((_nfc(g), tuple(v)) for g, v in mapping.items()), casefold)

    @classmethod
    def load(cls, path, casefold: bool = True,
             symbols: Optional[SymbolTable] = None) -> "GraphemeTable":
        text = Path(path).read_text(encoding="utf-8")
        return cls.parse(text, casefold, symbols)

    @classmethod
    def parse(cls, text: str, casefold: bool = True,
              symbols: Optional[SymbolTable] = None) -> "GraphemeTable":
        symbols = symbols or default_symbols()
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            grapheme = _nfc(parts[0])
            labels = tuple(parts[1].split()) if len(parts) > 1 else ()
            for lab in labels:
                symbols.validate(lab)
            entries.append((grapheme.lower() if casefold else grapheme, labels))
        return cls(tuple(entries), casefold)

    @classmethod
    def default(cls) -> "GraphemeTable":
        text = resources.files("phonotypo.data").joinpath("unitran_latin.tsv").read_text("utf-8")
        return cls.parse(text)

    def __contains__(self, grapheme: str) -> bool:
        return grapheme in self._map

    def expand_word(self, word: str, policy: str = "pass-through", offset: int = 0,
                    unmapped: Optional[Counter] = None) -> tuple[str, ...]:
        if policy not in OOV_POLICIES:
            raise ValueError(f"unknown policy {policy!r}; expected one of {OOV_POLICIES}")
        out: list[str] = []
        i = 0
        while i < len(word):
            for n in self._lengths:
                piece = word[i:i + n]
                if len(piece) == n and piece in self._map:
                    out.extend(self._map[piece])
                    i += n
                    break
            else:
                ch = word[i]
                if unmapped is not None:
                    unmapped[ch] += 1
                if policy == "error":
                    raise UnmappedGraphemeError(ch, offset + i)
                if policy == "pass-through":
                    out.append(ch)
                i += 1
        return tuple(out)


def expand_text(text: str, table: GraphemeTable, policy: str = "pass-through",
                unmapped: Optional[Counter] = None) -> list[tuple[str, ...]]:
    """One label sequence per whitespace token of ``text``.

    Unmapped graphemes are skipped, raise :class:`UnmappedGraphemeError`, or
    pass through as their own label, per ``policy``; pass ``unmapped`` to
    collect their counts.
    """
    return [table.expand_word(w, policy, off, unmapped)
            for w, off in tokenize(text, table.casefold)]


@dataclass(frozen=True)
class Lexicon:
    entries: Mapping[str, Pronunciation]
    frequencies: Mapping[str, int] = field(default_factory=dict)
    casefold: bool = True

    def normalize(self, word: str) -> str:
        word = _nfc(word)
        return word.lower() if self.casefold else word

    def get(self, word: str) -> Optional[Pronunciation]:
        return self.entries.get(self.normalize(word))

    def __len__(self):
        return len(self.entries)

    @classmethod
    def parse(cls, text: str, casefold: bool = True,
              symbols: Optional[SymbolTable] = None) -> "Lexicon":
        """Parse ``word<TAB>variant`` lines; repeated words add variants."""
        symbols = symbols or default_symbols()
        variants: dict[str, list[tuple[str, ...]]] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2 or not parts[1].split():
                raise StructuralError(f"line {lineno}: expected word<TAB>pronunciation")
            word = _nfc(parts[0].strip())
            word = word.lower() if casefold else word
            labels = tuple(parts[1].split())
            for lab in labels:
                symbols.validate(lab)
            variants.setdefault(word, []).append(labels)
        entries = {w: Pronunciation(w, tuple(v), Source.LEXICON) for w, v in variants.items()}
        return cls(entries, {}, casefold)

    @classmethod
    def load(cls, path, casefold: bool = True, symbols=None) -> "Lexicon":
        return cls.parse(Path(path).read_text(encoding="utf-8"), casefold, symbols)

    def with_frequencies(self, counts: Mapping[str, int]) -> "Lexicon":
        return Lexicon(self.entries, dict(counts), self.casefold)


def lookup_pronunciations(word: str, lexicon: Optional[Lexicon] = None,
                          fallback: Optional[GraphemeTable] = None,
                          policy: str = "pass-through",
                          include_fallback: bool = False) -> Pronunciation:
    """Lexicon variants for ``word``, else its deterministic table expansion.

    With ``include_fallback`` the table expansion is appended to lexicon
    variants as one more candidate (duplicates collapse).
    """
    entry = lexicon.get(word) if lexicon is not None else None
    key = lexicon.normalize(word) if lexicon is not None else _nfc(word)
    if entry is not None:
        if include_fallback and fallback is not None:
            expansion = fallback.expand_word(_fold(key, fallback), policy)
            if expansion:
                return Pronunciation(entry.word, entry.variants + (expansion,), Source.LEXICON)
        return entry
    if fallback is None:
        raise MissingPronunciationError(f"{word!r} not in lexicon and no fallback table")
    expansion = fallback.expand_word(_fold(key, fallback), policy)
    if not expansion:
        raise MissingPronunciationError(f"{word!r} expands to an empty pronunciation")
    return Pronunciation(key, (expansion,), Source.DETERMINISTIC_G2P)


def _fold(word: str, table: GraphemeTable) -> str:
    return word.lower() if table.casefold else word


# ---------------------------------------------------------------------------
# Remapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RemapRules:
    """Context-free rewrites applied in one left-to-right longest-match pass."""

    rules: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...] = ()

    def __post_init__(self):
        table: dict[tuple[str, ...], tuple[str, ...]] = {}
        for old, new in self.rules:
            old, new = tuple(old), tuple(new)
            if not old:
                raise RemapConfigError("remap rule with empty left-hand side")
            if old in table and table[old] != new:
                raise RemapConfigError(
                    f"ambiguous rules for {' '.join(old)!r}: "
                    f"{' '.join(table[old])!r} vs {' '.join(new)!r}")
            table[old] = new
        object.__setattr__(self, "_table", table)
        object.__setattr__(self, "_lengths", sorted({len(k) for k in table}, reverse=True))

    @classmethod
    def parse(cls, text: str, symbols: Optional[SymbolTable] = None) -> "RemapRules":
        symbols = symbols or default_symbols()
        rules = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise RemapConfigError(f"line {lineno}: expected old<TAB>new")
            old, new = tuple(parts[0].split()), tuple(parts[1].split())
            for lab in old + new:
                symbols.validate(lab)
            rules.append((old, new))
        return cls(tuple(rules))

    @classmethod
    def load(cls, path, symbols=None) -> "RemapRules":
        return cls.parse(Path(path).read_text(encoding="utf-8"), symbols)


def apply_remap(seq: Sequence[str], rules: RemapRules) -> tuple[str, ...]:
    table, lengths = rules._table, rules._lengths
    seq = tuple(seq)
    out: list[str] = []
    i = 0
    while i < len(seq):
        for n in lengths:
            key = seq[i:i + n]
            if len(key) == n and key in table:
                out.extend(table[key])
                i += n
                break
        else:
            out.append(seq[i])
            i += 1
    return tuple(out)


def remap_pronunciation(pron: Pronunciation, rules: RemapRules) -> Pronunciation:
    variants = tuple(apply_remap(v, rules) for v in pron.variants)
    variants = tuple(v for v in variants if v)
    return Pronunciation(pron.word, variants, pron.source)


def word_counts(texts: Iterable[str], casefold: bool = True) -> Counter:
    return Counter(w for t in texts for w, _ in tokenize(t, casefold))
