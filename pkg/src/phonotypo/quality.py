"""
Alignment and pronunciation quality metrics.

Edit distance based scores (PER, pronunciation accuracy), nearest-midpoint
matching of two segmentations with boundary error, and mel cepstral
distortion between equal-length feature sequences.
"""

from __future__ import annotations

import bisect
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import ParameterError, SegmentRecord
from .signal import FeatureSequence

logger = logging.getLogger(__name__)

MCD_SCALE = 10.0 / math.log(10.0)

MATCH, SUB, DEL, INS = "match", "substitute", "delete", "insert"


@dataclass(frozen=True)
class EditOp:
    op: str
    ref_index: Optional[int]
    hyp_index: Optional[int]


@dataclass(frozen=True)
class EditAlignment:
    ops: tuple[EditOp, ...]
    ref: tuple[str, ...]
    hyp: tuple[str, ...]

    def count(self, op: str) -> int:
        return sum(1 for o in self.ops if o.op == op)

    @property
    def distance(self) -> int:
        return sum(1 for o in self.ops if o.op != MATCH)

    @property
    def substitutions(self) -> int:
        return self.count(SUB)

    @property
    def insertions(self) -> int:
        return self.count(INS)

    @property
    def deletions(self) -> int:
        return self.count(DEL)

    def apply(self) -> tuple[str, ...]:
        """Replay the ops on the reference; yields the hypothesis."""
        out = []
        for o in self.ops:
            if o.op in (MATCH, SUB, INS):
                out.append(self.hyp[o.hyp_index])
        return tuple(out)


def levenshtein(ref: Sequence[str], hyp: Sequence[str]) -> EditAlignment:
    """Unit-cost minimum edit alignment of ``ref`` into ``hyp``.

    Among optimal alignments the backtrace prefers, at each step, match
    over substitution over deletion over insertion.
    """
    ref, hyp = tuple(ref), tuple(hyp)
    n, m = len(ref), len(hyp)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            d[i, j] = min(d[i - 1, j - 1] + cost, d[i - 1, j] + 1, d[i, j - 1] + 1)
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            same = ref[i - 1] == hyp[j - 1]
            if same and d[i, j] == d[i - 1, j - 1]:
                ops.append(EditOp(MATCH, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
            if not same and d[i, j] == d[i - 1, j - 1] + 1:
                ops.append(EditOp(SUB, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i > 0 and d[i, j] == d[i - 1, j] + 1:
            ops.append(EditOp(DEL, i - 1, None))
            i -= 1
        else:
            ops.append(EditOp(INS, None, j - 1))
            j -= 1
    return EditAlignment(tuple(reversed(ops)), ref, hyp)


def per(ref: Sequence[str], hyp: Sequence[str]) -> float:
    """Phoneme error rate in percent; may exceed 100.

    An empty reference has no natural denominator; it is scored as
    ``100 * len(hyp)`` with a warning (0 when both are empty).
    """
    ali = levenshtein(ref, hyp)
    if not ref:
        if hyp:
            warnings.warn("empty reference pronunciation; PER taken as 100 per inserted label",
                          RuntimeWarning, stacklevel=2)
        return 100.0 * len(hyp)
    return 100.0 * ali.distance / len(ref)


@dataclass(frozen=True)
class PerSummary:
    type_per: float
    token_per: float
    n_words: int
    per_word: Mapping[str, float]


def weighted_per(ref: Mapping[str, Sequence[str]], hyp: Mapping[str, Sequence[str]],
                 frequencies: Optional[Mapping[str, int]] = None) -> PerSummary:
    """Type PER (mean over words) and token PER (frequency-weighted mean).

    Only words present in both lexicons are scored. Words missing from
    ``frequencies`` get weight 0 in the token mean; without frequencies the
    two means coincide.
    """
    words = sorted(set(ref) & set(hyp))
    if not words:
        raise ParameterError("no words shared between the two lexicons")
    scores = {w: per(ref[w], hyp[w]) for w in words}
    type_per = math.fsum(scores.values()) / len(words)
    if frequencies is None:
        token_per = type_per
    else:
        weights = {w: float(frequencies.get(w, 0)) for w in words}
        total = math.fsum(weights.values())
        token_per = (math.fsum(scores[w] * weights[w] for w in words) / total
                     if total > 0 else math.nan)
    return PerSummary(type_per, token_per, len(words), scores)


def pronunciation_accuracy(ref: Sequence[str], hyp: Sequence[str]) -> float:
    """Percent of hypothesis tokens aligned to an identical reference token."""
    if not hyp:
        return math.nan
    return 100.0 * levenshtein(ref, hyp).count(MATCH) / len(hyp)


# ---------------------------------------------------------------------------
# Segment matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchedPair:
    hyp: SegmentRecord
    ref: SegmentRecord
    label_match: bool

    @property
    def boundary_error_s(self) -> float:
        return abs(self.hyp.start_s - self.ref.start_s) + abs(self.hyp.end_s - self.ref.end_s)


@dataclass(frozen=True)
class MatchReport:
    pairs: tuple[MatchedPair, ...]

    @property
    def label_accuracy(self) -> float:
        if not self.pairs:
            return math.nan
        return 100.0 * sum(p.label_match for p in self.pairs) / len(self.pairs)

    @property
    def ref_indices(self) -> list[int]:
        return [p.ref.token_index for p in self.pairs]


def midpoint_match(hyp: Sequence[SegmentRecord], ref: Sequence[SegmentRecord]) -> MatchReport:
    """Pair each hypothesis token with the reference token of nearest midpoint.

    Ties go to the earlier reference token (by ``token_index``).
    """
    if not ref:
        raise ParameterError("empty reference segmentation")
    ordered = sorted(ref, key=lambda s: (s.midpoint_s, s.token_index))
    mids = [s.midpoint_s for s in ordered]
    pairs = []
    for h in hyp:
        m = h.midpoint_s
        i = bisect.bisect_left(mids, m)
        best = None
        # candidates: the run of equal midpoints on each side of m
        for j in _neighbours(mids, i):
            r = ordered[j]
            key = (abs(r.midpoint_s - m), r.token_index)
            if best is None or key < best[0]:
                best = (key, r)
        r = best[1]
        pairs.append(MatchedPair(h, r, h.label == r.label))
    return MatchReport(tuple(pairs))


def _neighbours(mids: list[float], i: int) -> list[int]:
    out = []
    if i > 0:
        v = mids[i - 1]
        j = i - 1
        while j >= 0 and mids[j] == v:
            out.append(j)
            j -= 1
    if i < len(mids):
        v = mids[i]
        j = i
        while j < len(mids) and mids[j] == v:
            out.append(j)
            j += 1
    return out


def boundary_error(report: MatchReport) -> Optional[float]:
    """Mean of |left offset| + |right offset| over label-matching pairs.

    Returns ``None`` when no pair has matching labels.
    """
    errs = [p.boundary_error_s for p in report.pairs if p.label_match]
    return math.fsum(errs) / len(errs) if errs else None


# ---------------------------------------------------------------------------
# Mel cepstral distortion
# ---------------------------------------------------------------------------


def _frames(x) -> np.ndarray:
    return x.frames if isinstance(x, FeatureSequence) else np.atleast_2d(np.asarray(x, float))


def mcd_frames(a, b) -> np.ndarray:
    """Per-frame MCD in dB, excluding coefficient 0."""
    fa, fb = _frames(a), _frames(b)
    if fa.shape != fb.shape:
        raise ParameterError(f"shape mismatch {fa.shape} vs {fb.shape}")
    diff = fa[:, 1:] - fb[:, 1:]
    return MCD_SCALE * np.sqrt(2.0 * np.sum(diff * diff, axis=1))


def mcd(a, b) -> float:
    """Mean mel cepstral distortion between two equal-shape sequences."""
    per_frame = mcd_frames(a, b)
    if per_frame.size == 0:
        raise ParameterError("empty feature sequences")
    return float(per_frame.mean())


def expected_cepstra(model, alignment, features: Optional[FeatureSequence] = None) -> FeatureSequence:
    """Emission mean of the occupied state at every frame of a Viterbi path."""
    if not alignment.state_path:
        raise ParameterError("alignment has no state path")
    frames = np.array([model[lab].state_mean(s) for lab, s in alignment.state_path])
    step = features.frame_step_s if features is not None else 0.00625
    win = features.frame_len_s if features is not None else 0.025
    return FeatureSequence(frames, step, win)
