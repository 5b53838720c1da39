"""
Domain types for readings, utterances, pronunciations and aligned segments.

All times are float seconds. Segments are addressed by
``reading_id/utterance_id`` plus a per-utterance ``token_index``; there is no
global registry. Every type here is a frozen dataclass, so values can be
shared freely between worker processes; "mutation" means building a new
value with :func:`dataclasses.replace`.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Optional, Sequence

SILENCE = "sil"


class PhonotypoError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(PhonotypoError, ValueError):
    """An argument is outside the range an operation accepts."""


class UnknownSymbolError(PhonotypoError, ValueError):
    """A phoneme label is not in the configured symbol table."""


class StructuralError(PhonotypoError, ValueError):
    """Segment lists or files violate a structural invariant."""


class Source(str, enum.Enum):
    """Where a pronunciation (and thus a segment label) came from."""

    DETERMINISTIC_G2P = "deterministic-g2p"
    LEXICON = "lexicon"
    EXTERNAL = "external"


# ---------------------------------------------------------------------------
# X-SAMPA symbol table
# ---------------------------------------------------------------------------


class SymbolTable:
    """A configurable X-SAMPA inventory used to validate labels.

    A label is accepted when it can be split, longest-match first, into at
    most ``max_bases`` base symbols, each followed by any number of
    diacritics (so ``tS``, ``a:``, ``t_h`` and ``ai`` are all valid).
    Symbols listed in ``extra`` are accepted verbatim.
    """

    def __init__(self, bases: Iterable[str], diacritics: Iterable[str] = (),
                 extra: Iterable[str] = (), max_bases: int = 3):
        self.bases = frozenset(bases)
        self.diacritics = frozenset(diacritics)
        self.extra = frozenset(extra) | {SILENCE}
        self.max_bases = max_bases
        self._base_lens = sorted({len(b) for b in self.bases}, reverse=True)
        self._diac_lens = sorted({len(d) for d in self.diacritics}, reverse=True)
        self._vowels: frozenset[str] = frozenset()

    @classmethod
    def default(cls) -> "SymbolTable":
        text = resources.files("phonotypo.data").joinpath("xsampa.tsv").read_text("utf-8")
        return cls.from_tsv(text)

    @classmethod
    def from_tsv(cls, text: str) -> "SymbolTable":
        bases, diacritics, extra, vowels = [], [], [], []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            kind, sym = line.rstrip("\n").split("\t")[:2]
            if kind in ("vowel", "consonant"):
                bases.append(sym)
                if kind == "vowel":
                    vowels.append(sym)
            elif kind == "diacritic":
                diacritics.append(sym)
            elif kind == "extra":
                extra.append(sym)
            else:
                raise StructuralError(f"unknown symbol kind {kind!r}")
        table = cls(bases, diacritics, extra)
        table._vowels = frozenset(vowels)
        return table

    def with_extra(self, symbols: Iterable[str]) -> "SymbolTable":
        table = SymbolTable(self.bases, self.diacritics, self.extra | set(symbols),
                            self.max_bases)
        table._vowels = self._vowels
        return table

    def _match(self, text: str, pos: int, lengths, pool) -> int:
        for n in lengths:
            if text[pos:pos + n] in pool:
                return n
        return 0

    def is_known(self, label: str) -> bool:
        if label in self.extra:
            return True
        if not label or any(ch.isspace() for ch in label):
            return False
        pos, n_bases = 0, 0
        while pos < len(label):
            n = self._match(label, pos, self._base_lens, self.bases)
            if not n:
                return False
            pos += n
            n_bases += 1
            while pos < len(label):
                d = self._match(label, pos, self._diac_lens, self.diacritics)
                if not d:
                    break
                pos += d
        return n_bases <= self.max_bases

    def validate(self, label: str) -> str:
        if not isinstance(label, str) or not label or any(c.isspace() for c in label):
            raise UnknownSymbolError(f"malformed label {label!r}")
        if not self.is_known(label):
            raise UnknownSymbolError(f"unknown X-SAMPA symbol {label!r}")
        return label

    def is_vowel(self, label: str) -> bool:
        """True when the label starts with a vowel base symbol."""
        n = self._match(label, 0, self._base_lens, self.bases)
        return bool(n) and label[:n] in self._vowels


_DEFAULT_TABLE: Optional[SymbolTable] = None


def default_symbols() -> SymbolTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = SymbolTable.default()
    return _DEFAULT_TABLE


def parse_label(symbol: str, table: Optional[SymbolTable] = None) -> str:
    """Validate one phoneme label against ``table`` (default X-SAMPA table)."""
    return (table or default_symbols()).validate(symbol)


# ---------------------------------------------------------------------------
# Readings, utterances, pronunciations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pronunciation:
    """All candidate pronunciations of one orthographic word."""

    word: str
    variants: tuple[tuple[str, ...], ...]
    source: Source = Source.LEXICON

    def __post_init__(self):
        seen, uniq = set(), []
        for v in self.variants:
            v = tuple(v)
            if not v:
                raise StructuralError(f"empty pronunciation variant for {self.word!r}")
            if v not in seen:
                seen.add(v)
                uniq.append(v)
        if not uniq:
            raise StructuralError(f"no pronunciation variants for {self.word!r}")
        object.__setattr__(self, "variants", tuple(uniq))
        object.__setattr__(self, "source", Source(self.source))


@dataclass(frozen=True)
class Utterance:
    id: str
    text: str
    audio_ref: str = ""
    duration_s: float = 0.0
    mcd: Optional[float] = None

    def __post_init__(self):
        if self.duration_s < 0:
            raise ParameterError(f"negative duration for utterance {self.id}")
        if self.mcd is not None and self.mcd < 0:
            raise ParameterError(f"negative MCD for utterance {self.id}")


@dataclass(frozen=True)
class Reading:
    """One recorded reading: a language, its utterances, and quality data."""

    reading_id: str
    language_iso639_3: str
    utterances: tuple[Utterance, ...] = ()
    mean_mcd: Optional[float] = None

    def __post_init__(self):
        code = self.language_iso639_3
        if len(code) != 3 or not code.isalpha():
            raise ParameterError(f"not an ISO 639-3 code: {code!r}")
        object.__setattr__(self, "utterances", tuple(self.utterances))
        ids = [u.id for u in self.utterances]
        if len(set(ids)) != len(ids):
            dup = [k for k, n in Counter(ids).items() if n > 1]
            raise StructuralError(f"duplicate utterance ids in {self.reading_id}: {dup}")
        if self.mean_mcd is not None:
            computed = self.utterance_mean_mcd()
            if computed is not None and abs(computed - self.mean_mcd) > 1e-9:
                raise StructuralError(
                    f"mean_mcd {self.mean_mcd} disagrees with utterance mean {computed}")

    def utterance_mean_mcd(self) -> Optional[float]:
        vals = [u.mcd for u in self.utterances if u.mcd is not None]
        return math.fsum(vals) / len(vals) if vals else None

    @classmethod
    def with_computed_mcd(cls, reading_id, language, utterances) -> "Reading":
        r = cls(reading_id, language, tuple(utterances))
        return replace(r, mean_mcd=r.utterance_mean_mcd())

    def utterance(self, utt_id: str) -> Utterance:
        for u in self.utterances:
            if u.id == utt_id:
                return u
        raise KeyError(utt_id)


@dataclass(frozen=True)
class SegmentRecord:
    """One aligned phoneme token and its standoff markup fields."""

    utterance_id: str
    token_index: int
    label: str
    start_s: float
    duration_s: float
    prev: Optional[str] = None
    next: Optional[str] = None
    word: Optional[str] = None
    source: Source = Source.DETERMINISTIC_G2P
    reading_id: str = ""

    def __post_init__(self):
        if self.token_index < 0:
            raise StructuralError(f"negative token_index {self.token_index}")
        if self.start_s < 0:
            raise StructuralError(f"negative start time {self.start_s}")
        if not self.duration_s > 0:
            raise StructuralError(f"non-positive duration {self.duration_s}")
        object.__setattr__(self, "source", Source(self.source))

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s

    @property
    def midpoint_s(self) -> float:
        return self.start_s + self.duration_s / 2.0

    @property
    def key(self) -> tuple[str, str]:
        return (self.reading_id, self.utterance_id)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _group_by_utterance(segments: Sequence[SegmentRecord]) -> dict:
    groups: dict[tuple[str, str], list[SegmentRecord]] = {}
    for seg in segments:
        groups.setdefault(seg.key, []).append(seg)
    return groups


def annotate_context(segments: Sequence[SegmentRecord]) -> list[SegmentRecord]:
    """Fill ``prev``/``next`` from neighbouring tokens of the same utterance.

    Context follows token order within an utterance (across word
    boundaries) and never crosses into another utterance. The output keeps
    the input order.
    """
    context: dict[int, tuple[Optional[str], Optional[str]]] = {}
    for key, group in _group_by_utterance(segments).items():
        indices = [s.token_index for s in group]
        if len(set(indices)) != len(indices):
            dup = sorted(k for k, n in Counter(indices).items() if n > 1)
            raise StructuralError(f"duplicate token_index {dup} in utterance {'/'.join(key)}")
        ordered = sorted(group, key=lambda s: s.token_index)
        for i, seg in enumerate(ordered):
            prev = ordered[i - 1].label if i > 0 else None
            nxt = ordered[i + 1].label if i + 1 < len(ordered) else None
            context[id(seg)] = (prev, nxt)
    return [replace(s, prev=context[id(s)][0], next=context[id(s)][1]) for s in segments]


def build_inventory(reading: Optional[Reading],
                    segments: Iterable[SegmentRecord]) -> Counter:
    """Token count per label. ``reading`` is accepted for call symmetry only."""
    return Counter(seg.label for seg in segments)


@dataclass(frozen=True)
class Violation:
    kind: str  # "overlap" | "order" | "range" | "duplicate"
    token_index: int
    detail: str = field(default="", compare=False)


def validate_tiling(segments: Sequence[SegmentRecord], utterance: Utterance,
                    frame_step_s: float = 0.00625, eps: float = 1e-9) -> list[Violation]:
    """Report every overlap, ordering, and out-of-range problem.

    Returns an empty list iff the segments of ``utterance`` are
    non-overlapping, ordered by start time when sorted by ``token_index``,
    and end no later than the utterance duration plus one frame step.
    """
    out: list[Violation] = []
    ordered = sorted((s for s in segments if s.utterance_id == utterance.id),
                     key=lambda s: s.token_index)
    limit = utterance.duration_s + frame_step_s + eps
    prev: Optional[SegmentRecord] = None
    for seg in ordered:
        if prev is not None:
            if seg.token_index == prev.token_index:
                out.append(Violation("duplicate", seg.token_index, "repeated token_index"))
            elif seg.start_s + eps < prev.start_s:
                out.append(Violation("order", seg.token_index,
                                     f"starts at {seg.start_s} before token {prev.token_index}"))
            elif seg.start_s + eps < prev.end_s:
                out.append(Violation("overlap", seg.token_index,
                                     f"starts at {seg.start_s} before {prev.end_s}"))
        if seg.end_s > limit:
            out.append(Violation("range", seg.token_index,
                                 f"ends at {seg.end_s} past {utterance.duration_s}"))
        prev = seg
    return out
