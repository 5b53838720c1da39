"""
Cross-linguistic analyses over measured tokens.

Quality filtering with per-stage retention accounting, bivariate Gaussian
vowel categories and their conditional entropy, Pearson/Spearman
correlations with Benjamini-Hochberg adjustment, and the per-pair
uniformity tables built from per-reading label means.
"""

from __future__ import annotations

import itertools
import logging
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, replace
from importlib import resources
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import betainc

from .core import ParameterError, StructuralError
from .signal import hz_to_erb

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterConfig:
    reading_mean_mcd_max: float = 8.0
    utterance_mcd_max: float = 6.0
    outlier_sd: float = 2.0
    vowel_duration_max_s: float = 0.300
    min_tokens_per_label_pair: int = 50
    min_readings_per_pair: int = 10
    # units for the outlier stage: "hz" or "erb"
    outlier_units: str = "hz"

    def __post_init__(self):
        for name in ("reading_mean_mcd_max", "utterance_mcd_max", "outlier_sd",
                     "vowel_duration_max_s"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.min_tokens_per_label_pair < 1 or self.min_readings_per_pair < 3:
            raise ParameterError("need min_tokens_per_label_pair >= 1 and min_readings_per_pair >= 3")
        if self.outlier_units not in ("hz", "erb"):
            raise ParameterError(f"outlier_units must be 'hz' or 'erb', not {self.outlier_units!r}")


@dataclass(frozen=True)
class Token:
    """One measured vowel or sibilant token, with its quality metadata."""

    reading: str
    utterance: str
    token_index: int
    label: str
    kind: str  # "vowel" | "sibilant"
    duration_s: float
    f1_hz: float = math.nan
    f2_hz: float = math.nan
    midpeak_hz: float = math.nan
    utterance_mcd: Optional[float] = None
    failed: bool = False
    # None when no reference segmentation was available
    midpoint_ok: Optional[bool] = None

    @property
    def f1_erb(self) -> float:
        return _erb(self.f1_hz)

    @property
    def f2_erb(self) -> float:
        return _erb(self.f2_hz)

    @property
    def midpeak_erb(self) -> float:
        return _erb(self.midpeak_hz)


def _erb(f: float) -> float:
    return float(hz_to_erb(f)) if np.isfinite(f) else math.nan


MEASURES: dict[str, Callable[[Token], float]] = {
    "f1_erb": lambda t: t.f1_erb,
    "f2_erb": lambda t: t.f2_erb,
    "f1_hz": lambda t: t.f1_hz,
    "f2_hz": lambda t: t.f2_hz,
    "midpeak_erb": lambda t: t.midpeak_erb,
    "midpeak_hz": lambda t: t.midpeak_hz,
    "duration": lambda t: t.duration_s,
}


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------

STAGES = ("reading_mcd", "midpoint", "utterance_mcd", "failure", "duration", "outlier")


@dataclass
class RetentionReport:
    """Tokens removed at each filter stage for one reading and token kind.

    ``removed`` follows the order of :data:`STAGES`. ``standalone`` gives
    the percentage retained by the Midpoint, MCD and Outlier methods each
    applied alone to the tokens that passed the reading gate, and AGG for
    all three in order (Midpoint is ``None`` without a reference).
    """

    reading: str
    kind: str
    n_input: int
    removed: dict[str, int]
    n_output: int
    standalone: dict[str, Optional[float]]
    reading_passed: bool = True

    @property
    def n_tokens(self) -> int:
        """Tokens entering the token-level filters."""
        return self.n_input - self.removed["reading_mcd"]

    def reconciles(self) -> bool:
        return self.n_input - sum(self.removed.values()) == self.n_output


def _mcd_ok(mcd: Optional[float], limit: float) -> bool:
    return mcd is None or mcd < limit


def _measured(t: Token) -> bool:
    if t.failed:
        return False
    if t.kind == "vowel":
        return bool(np.isfinite(t.f1_hz) and np.isfinite(t.f2_hz))
    return bool(np.isfinite(t.midpeak_hz))


def _outlier_values(t: Token, units: str) -> tuple[float, ...]:
    if t.kind == "vowel":
        return (t.f1_hz, t.f2_hz) if units == "hz" else (t.f1_erb, t.f2_erb)
    peak = t.midpeak_hz if units == "hz" else t.midpeak_erb
    return (peak, t.duration_s)


def outlier_filter(tokens: Sequence[Token], sd: float = 2.0, units: str = "hz") -> list[Token]:
    """Drop tokens beyond ``sd`` standard deviations of their label's mean.

    Mean and SD (ddof=1) are computed once per label over ``tokens``; a
    token goes when any of its measures lies strictly outside the band.
    Labels with a single token keep it.
    """
    by_label: dict[str, list[int]] = defaultdict(list)
    for i, t in enumerate(tokens):
        by_label[t.label].append(i)
    keep = np.ones(len(tokens), dtype=bool)
    for idx in by_label.values():
        if len(idx) < 2:
            continue
        vals = np.array([_outlier_values(tokens[i], units) for i in idx])
        mean = vals.mean(axis=0)
        std = vals.std(axis=0, ddof=1)
        bad = np.any(np.abs(vals - mean) > sd * std, axis=1)
        keep[np.array(idx)[bad]] = False
    return [t for t, k in zip(tokens, keep) if k]


def filter_tokens(tokens: Sequence[Token], reading_mean_mcd: Optional[float] = None,
                  cfg: FilterConfig = FilterConfig()) -> tuple[list[Token], RetentionReport]:
    """Apply the quality filters in order and account for every removal.

    Stages: reading MCD gate, midpoint label check (only for tokens that
    carry one), utterance MCD gate, measurement failure, vowel duration
    cap, and per-label outlier removal. Missing MCD values pass their
    gate. ``tokens`` must come from one reading and one kind.
    """
    tokens = list(tokens)
    readings = {t.reading for t in tokens}
    kinds = {t.kind for t in tokens}
    if len(readings) > 1 or len(kinds) > 1:
        raise StructuralError("filter_tokens expects tokens from one reading and one kind")
    reading = next(iter(readings), "")
    kind = next(iter(kinds), "")
    removed = dict.fromkeys(STAGES, 0)

    def stage(name, items, pred):
        kept = [t for t in items if pred(t)]
        removed[name] = len(items) - len(kept)
        return kept

    passed = _mcd_ok(reading_mean_mcd, cfg.reading_mean_mcd_max)
    cur = stage("reading_mcd", tokens, lambda t: passed)
    gated = cur
    cur = stage("midpoint", cur, lambda t: t.midpoint_ok is not False)
    cur = stage("utterance_mcd", cur, lambda t: _mcd_ok(t.utterance_mcd, cfg.utterance_mcd_max))
    cur = stage("failure", cur, _measured)
    cur = stage("duration", cur,
                lambda t: t.kind != "vowel" or t.duration_s <= cfg.vowel_duration_max_s)
    before = len(cur)
    cur = outlier_filter(cur, cfg.outlier_sd, cfg.outlier_units)
    removed["outlier"] = before - len(cur)

    standalone = _standalone(gated, cur, cfg)
    report = RetentionReport(reading, kind, len(tokens), removed, len(cur), standalone, passed)
    assert report.reconciles()
    return cur, report


def _standalone(gated: list[Token], final: list[Token], cfg: FilterConfig) -> dict:
    n = len(gated)

    def pct(k):
        return 100.0 * k / n if n else None

    has_ref = any(t.midpoint_ok is not None for t in gated)
    outlier_only = [t for t in gated if _measured(t)
                    and (t.kind != "vowel" or t.duration_s <= cfg.vowel_duration_max_s)]
    outlier_only = outlier_filter(outlier_only, cfg.outlier_sd, cfg.outlier_units)
    return {
        "Midpoint": pct(sum(t.midpoint_ok is not False for t in gated)) if has_ref else None,
        "MCD": pct(sum(_mcd_ok(t.utterance_mcd, cfg.utterance_mcd_max) for t in gated)),
        "Outlier": pct(len(outlier_only)),
        "AGG": pct(len(final)),
    }


RETENTION_COLUMNS = ("Midpoint", "MCD", "Outlier", "AGG")


@dataclass(frozen=True)
class RetentionSummary:
    kind: str
    column: str
    n_readings: int
    min: float
    median: float
    mean: float
    max: float


def retention_stats(reports: Iterable[RetentionReport]) -> list[RetentionSummary]:
    """Min, median, mean and max retention per kind and filter column.

    Only readings that passed the reading-level MCD gate and had tokens
    contribute; columns with no values are omitted.
    """
    groups: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in reports:
        if not r.reading_passed:
            continue
        for col in RETENTION_COLUMNS:
            v = r.standalone.get(col)
            if v is not None:
                groups[(r.kind, col)].append(v)
    out = []
    for kind in sorted({k for k, _ in groups}):
        for col in RETENTION_COLUMNS:
            vals = groups.get((kind, col))
            if vals:
                out.append(RetentionSummary(kind, col, len(vals), min(vals),
                                            statistics.median(vals), math.fsum(vals) / len(vals),
                                            max(vals)))
    return out


# ---------------------------------------------------------------------------
# Vowel categories and entropy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianCategoryModel:
    label: str
    mean: np.ndarray        # (F1_erb, F2_erb)
    covariance: np.ndarray  # 2x2, maximum likelihood
    prior: float
    n: int
    singular: bool = False


def fit_category_gaussians(points: Mapping[str, np.ndarray], rcond: float = 1e-12,
                           diagnostics: Optional[list] = None) -> list[GaussianCategoryModel]:
    """Maximum-likelihood bivariate Gaussian per category.

    ``points`` maps a label to an (n, 2) array. Categories with fewer than
    two tokens are dropped; priors are relative token counts over the
    categories kept. A covariance whose smallest eigenvalue is at most
    ``rcond`` times its largest is flagged singular.
    """
    kept = {}
    for label in sorted(points):
        x = np.asarray(points[label], dtype=float).reshape(-1, 2)
        if len(x) < 2:
            msg = f"category {label!r} has {len(x)} token(s); dropped"
            logger.info(msg)
            if diagnostics is not None:
                diagnostics.append(msg)
            continue
        kept[label] = x
    total = sum(len(x) for x in kept.values())
    out = []
    for label, x in kept.items():
        mean = x.mean(axis=0)
        d = x - mean
        cov = d.T @ d / len(x)
        eig = np.linalg.eigvalsh(cov)
        singular = bool(eig[-1] <= 0 or eig[0] <= rcond * eig[-1])
        if singular and diagnostics is not None:
            diagnostics.append(f"category {label!r} has a singular covariance")
        out.append(GaussianCategoryModel(label, mean, cov, len(x) / total, len(x), singular))
    return out


def conditional_entropy(models: Sequence[GaussianCategoryModel]) -> float:
    """Sum over categories of prior * 0.5 * ln det(2 pi e Sigma), in nats."""
    terms = []
    for m in models:
        cov = np.asarray(m.covariance, dtype=float)
        sign, logdet = np.linalg.slogdet(2 * math.pi * math.e * cov)
        if m.singular or sign <= 0:
            raise ParameterError(f"singular covariance for category {m.label!r}")
        terms.append(m.prior * 0.5 * logdet)
    return math.fsum(terms)


def reading_entropy(tokens: Sequence[Token], diagnostics: Optional[list] = None):
    """Vowel category count and entropy for one reading's filtered vowels."""
    pts: dict[str, list] = defaultdict(list)
    for t in tokens:
        if t.kind == "vowel":
            pts[t.label].append((t.f1_erb, t.f2_erb))
    models = fit_category_gaussians({k: np.array(v) for k, v in pts.items()},
                                    diagnostics=diagnostics)
    good = [m for m in models if not m.singular]
    total = sum(m.n for m in good)
    good = [replace(m, prior=m.n / total) for m in good]
    return len(good), (conditional_entropy(good) if good else math.nan)


@dataclass(frozen=True)
class DispersionResult:
    inventory_sizes: tuple[int, ...]
    entropies: tuple[float, ...]
    readings: tuple[str, ...]
    spearman: Optional["Correlation"]
    pearson: Optional["Correlation"]


def dispersion_study(per_reading: Mapping[str, Sequence[Token]],
                     diagnostics: Optional[list] = None) -> DispersionResult:
    """Correlate vowel inventory size with conditional entropy across readings."""
    names, sizes, ents = [], [], []
    for r in sorted(per_reading):
        size, h = reading_entropy(per_reading[r], diagnostics)
        if size and np.isfinite(h):
            names.append(r)
            sizes.append(size)
            ents.append(h)
    if len(names) < 3:
        raise ParameterError(f"need at least 3 readings with vowel categories, got {len(names)}")
    return DispersionResult(tuple(sizes), tuple(ents), tuple(names),
                            spearman(sizes, ents), pearson(sizes, ents))


# ---------------------------------------------------------------------------
# Correlation and multiple comparisons
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Correlation:
    r: float
    p: float
    n: int


def _t_pvalue(r: float, n: int) -> float:
    df = n - 2
    if abs(r) >= 1.0:
        return 0.0
    # two-tailed Student-t tail via the regularized incomplete beta
    t2 = r * r * df / (1.0 - r * r)
    return float(betainc(df / 2.0, 0.5, df / (df + t2)))


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[Correlation]:
    """Pearson r with a two-tailed t-test p-value; None for zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError("x and y must be equal-length 1-D sequences")
    n = len(x)
    if n < 3:
        raise ParameterError(f"need at least 3 points, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ParameterError("non-finite values in correlation input")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        return None
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    return Correlation(r, _t_pvalue(r, n), n)


def _ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> Optional[Correlation]:
    """Spearman rho: Pearson on mid-ranks, same p-value approximation."""
    return pearson(_ranks(np.asarray(x, dtype=float)), _ranks(np.asarray(y, dtype=float)))


def bh_adjust(pvals: Sequence[float], fdr: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """Benjamini-Hochberg step-up. Returns (adjusted p-values, reject flags)."""
    p = np.asarray(pvals, dtype=float)
    if p.ndim != 1:
        raise ParameterError("p-values must be 1-D")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ParameterError("p-values must lie in [0, 1]")
    m = len(p)
    if m == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    order = np.argsort(p, kind="stable")
    ranked = p[order] * (m / np.arange(1, m + 1))
    adj_sorted = np.minimum(np.minimum.accumulate(ranked[::-1])[::-1], 1.0)
    adjusted = np.empty(m)
    adjusted[order] = adj_sorted
    below = np.flatnonzero(p[order] <= np.arange(1, m + 1) * fdr / m)
    reject = np.zeros(m, dtype=bool)
    if below.size:
        reject[order[:below[-1] + 1]] = True
    return adjusted, reject


# ---------------------------------------------------------------------------
# Uniformity tables
# ---------------------------------------------------------------------------


class FeatureTable:
    """Height and backness per vowel, keyed on the bare base symbol."""

    def __init__(self, features: Mapping[str, tuple[str, str]]):
        self.features = dict(features)

    @classmethod
    def parse(cls, text: str) -> "FeatureTable":
        out = {}
        for line in text.splitlines():
            if line.strip() and not line.startswith("#"):
                label, height, back = line.split("\t")[:3]
                out[label] = (height, back)
        return cls(out)

    @classmethod
    def default(cls) -> "FeatureTable":
        return cls.parse(resources.files("phonotypo.data")
                         .joinpath("vowel_features.tsv").read_text("utf-8"))

    def lookup(self, label: str) -> Optional[tuple[str, str]]:
        base = label.split("_")[0].rstrip(":")
        return self.features.get(label) or self.features.get(base)

    def shares(self, a: str, b: str, feature: str) -> Optional[bool]:
        fa, fb = self.lookup(a), self.lookup(b)
        if fa is None or fb is None:
            return None
        i = 0 if feature == "height" else 1
        return fa[i] == fb[i]


@dataclass(frozen=True)
class CorrelationResult:
    pair: tuple[str, str]
    n_readings: int
    r: float
    p: float
    p_adjusted: float
    bh_reject: bool
    significant: bool
    rho: Optional[float] = None
    feature_match: Optional[bool] = None
    readings: tuple[str, ...] = ()
    means: tuple[tuple[float, float], ...] = ()
    sds: tuple[tuple[float, float], ...] = ()


def label_means(tokens: Sequence[Token], measure: str) -> dict[str, tuple[int, float, float]]:
    """Per label: (count, mean, sample SD) of ``measure``."""
    get = MEASURES[measure]
    vals: dict[str, list[float]] = defaultdict(list)
    for t in tokens:
        v = get(t)
        if np.isfinite(v):
            vals[t.label].append(v)
    out = {}
    for lab, v in vals.items():
        a = np.array(v)
        out[lab] = (len(a), float(a.mean()), float(a.std(ddof=1)) if len(a) > 1 else 0.0)
    return out


def uniformity_table(per_reading: Mapping[str, Sequence[Token]],
                     pairs: Optional[Sequence[tuple[str, str]]] = None,
                     measure: str = "f1_erb", cfg: FilterConfig = FilterConfig(),
                     fdr: float = 0.25, alpha: float = 0.05,
                     features: Optional[FeatureTable] = None,
                     diagnostics: Optional[list] = None) -> list[CorrelationResult]:
    """Correlate per-reading label means for each label pair across readings.

    A reading counts for a pair when it has at least
    ``cfg.min_tokens_per_label_pair`` tokens of both labels; pairs with
    fewer than ``cfg.min_readings_per_pair`` such readings are omitted.
    P-values are BH-adjusted jointly over the table; ``significant`` means
    the adjusted p is below ``alpha``. Rows are sorted by descending |r|.
    """
    if measure not in MEASURES:
        raise ParameterError(f"unknown measure {measure!r}; choose from {sorted(MEASURES)}")
    diagnostics = diagnostics if diagnostics is not None else []
    means = {r: label_means(toks, measure) for r, toks in sorted(per_reading.items())}
    if pairs is None:
        labels = sorted({lab for m in means.values() for lab in m})
        pairs = list(itertools.combinations(labels, 2))
    feature = "backness" if measure.startswith("f2") else "height"
    rows = []
    for a, b in pairs:
        names, xs, ys = [], [], []
        for r, m in means.items():
            if (a in m and b in m and m[a][0] >= cfg.min_tokens_per_label_pair
                    and m[b][0] >= cfg.min_tokens_per_label_pair):
                names.append(r)
                xs.append(m[a][1:])
                ys.append(m[b][1:])
        if len(names) < cfg.min_readings_per_pair:
            diagnostics.append(f"{a}-{b}: {len(names)} qualifying readings "
                               f"(< {cfg.min_readings_per_pair}); omitted")
            continue
        x = [v[0] for v in xs]
        y = [v[0] for v in ys]
        c = pearson(x, y)
        if c is None:
            diagnostics.append(f"{a}-{b}: zero variance across readings; omitted")
            continue
        s = spearman(x, y)
        feat = features.shares(a, b, feature) if features is not None else None
        rows.append(CorrelationResult(
            (a, b), len(names), c.r, c.p, math.nan, False, False,
            s.r if s else None, feat, tuple(names),
            tuple(zip(x, y)), tuple((u[1], v[1]) for u, v in zip(xs, ys))))
    if not rows:
        return []
    adjusted, reject = bh_adjust([row.p for row in rows], fdr)
    rows = [replace(row, p_adjusted=float(q), bh_reject=bool(rej),
                    significant=bool(q < alpha))
            for row, q, rej in zip(rows, adjusted, reject)]
    return sorted(rows, key=lambda row: (-abs(row.r), row.pair))


def group_by_reading(tokens: Iterable[Token]) -> dict[str, list[Token]]:
    out: dict[str, list[Token]] = defaultdict(list)
    for t in tokens:
        out[t.reading].append(t)
    return dict(out)


def filter_corpus(tokens: Iterable[Token], reading_mcd: Mapping[str, Optional[float]],
                  cfg: FilterConfig = FilterConfig()):
    """Filter every (reading, kind) group; returns kept tokens and reports."""
    groups: dict[tuple[str, str], list[Token]] = defaultdict(list)
    for t in tokens:
        groups[(t.reading, t.kind)].append(t)
    kept: list[Token] = []
    reports = []
    for key in sorted(groups):
        k, rep = filter_tokens(groups[key], reading_mcd.get(key[0]), cfg)
        kept.extend(k)
        reports.append(rep)
    return kept, reports


def scatter_rows(result: CorrelationResult) -> list[tuple]:
    """Per-reading paired means, SDs, and ellipse half-axes at SD/10."""
    return [(name, mx, my, sx, sy, sx / 10.0, sy / 10.0)
            for name, (mx, my), (sx, sy) in zip(result.readings, result.means, result.sds)]
