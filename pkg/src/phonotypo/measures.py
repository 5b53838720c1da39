"""
Token-level acoustic measures for vowels and sibilants.

Vowels get F1-F4 at eleven relative timepoints (deciles plus quartiles).
Sibilants get spectral moments and peak frequencies from a multitaper
spectrum over the middle half of the token.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import ParameterError, SegmentRecord, StructuralError, SymbolTable, default_symbols
from .signal import (AudioBuffer, MultitaperConfig, PowerSpectrum, _extract, _sample_index,
                     formant_track, hz_to_erb, multitaper_spectrum)

TIMEPOINTS = (10, 20, 25, 30, 40, 50, 60, 70, 75, 80, 90)
N_FORMANTS = 4
ALVEOLAR_BAND_HZ = (3000.0, 7000.0)
POSTALVEOLAR_BAND_HZ = (2000.0, 6000.0)


@dataclass(frozen=True)
class FormantConfig:
    window_s: float = 0.025
    step_s: float = 0.00625
    max_formants: int = 5
    ceiling_hz: float = 5000.0
    preemphasis_from_hz: float = 50.0
    # number formants after discarding candidates wider than 700 Hz
    drop_wide: bool = True


# ---------------------------------------------------------------------------
# Label classes
# ---------------------------------------------------------------------------


class LabelClasses:
    """Decides which labels are vowels and which are sibilants (and where)."""

    def __init__(self, overrides: Optional[dict[str, str]] = None,
                 symbols: Optional[SymbolTable] = None):
        self.overrides = dict(overrides or {})
        self.symbols = symbols or default_symbols()

    @classmethod
    def parse(cls, text: str, symbols: Optional[SymbolTable] = None) -> "LabelClasses":
        out = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in _CLASSES:
                raise StructuralError(f"line {lineno}: expected label<TAB>one of {_CLASSES}")
            out[parts[0]] = parts[1]
        return cls(out, symbols)

    @classmethod
    def default(cls) -> "LabelClasses":
        text = resources.files("phonotypo.data").joinpath("label_classes.tsv").read_text("utf-8")
        return cls.parse(text)

    def classify(self, label: str) -> Optional[str]:
        if label in self.overrides:
            return self.overrides[label]
        if self.symbols.is_vowel(label):
            return "vowel"
        return None

    def is_vowel(self, label: str) -> bool:
        return self.classify(label) == "vowel"

    def is_sibilant(self, label: str) -> bool:
        return (self.classify(label) or "").startswith("sibilant")

    def sibilant_band(self, label: str) -> tuple[float, float]:
        if self.classify(label) == "sibilant-postalveolar":
            return POSTALVEOLAR_BAND_HZ
        return ALVEOLAR_BAND_HZ


_CLASSES = ("vowel", "sibilant-alveolar", "sibilant-postalveolar", "other")


# ---------------------------------------------------------------------------
# Vowels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VowelMeasures:
    segment: SegmentRecord
    duration_s: float
    # formants[i, j]: formant i+1 at TIMEPOINTS[j], NaN where not measured
    formants: np.ndarray
    failed: np.ndarray  # (11,) True where F1 or F2 is missing

    def formant(self, number: int, percent: int) -> float:
        return float(self.formants[number - 1, TIMEPOINTS.index(percent)])

    @property
    def f1_mid(self) -> float:
        return self.formant(1, 50)

    @property
    def f2_mid(self) -> float:
        return self.formant(2, 50)

    @property
    def f1_erb(self) -> float:
        return _erb(self.f1_mid)

    @property
    def f2_erb(self) -> float:
        return _erb(self.f2_mid)

    @property
    def measured(self) -> bool:
        """F1 and F2 exist at the midpoint."""
        return not self.failed[TIMEPOINTS.index(50)]


def _erb(f: float) -> float:
    return float(hz_to_erb(f)) if np.isfinite(f) else math.nan


def _number_formants(cands, n: int, drop_wide: bool) -> list[float]:
    if cands is None:
        return [math.nan] * n
    freqs = [c.frequency_hz for c in cands if not (drop_wide and c.wide)]
    freqs = freqs[:n]
    return freqs + [math.nan] * (n - len(freqs))


def measure_vowel(audio: AudioBuffer, segment: SegmentRecord,
                  config: FormantConfig = FormantConfig()) -> VowelMeasures:
    """F1-F4 at each timepoint from the nearest analysis frame.

    Frames are centred every ``step_s`` from the segment start up to its
    end; the audio is cut with half a window of context on each side. A
    segment shorter than one window fails at every timepoint.
    """
    n_pts = len(TIMEPOINTS)
    formants = np.full((N_FORMANTS, n_pts), math.nan)
    dur = segment.duration_s
    if dur < config.window_s:
        return VowelMeasures(segment, dur, formants, np.ones(n_pts, dtype=bool))
    half = config.window_s / 2
    fs = audio.sample_rate_hz
    start = _sample_index(segment.start_s - half, fs)
    stop = _sample_index(segment.end_s + half, fs)
    chunk = AudioBuffer(_extract(audio.samples, start, stop), fs)
    offset = start / fs
    n_frames = int(math.floor(dur / config.step_s + 1e-9)) + 1
    centers = segment.start_s + config.step_s * np.arange(n_frames)
    track = formant_track(chunk, centers - offset, config.max_formants, config.ceiling_hz,
                          config.window_s, config.step_s, config.preemphasis_from_hz)
    for j, pct in enumerate(TIMEPOINTS):
        t = segment.start_s + dur * pct / 100.0
        frame = int(np.argmin(np.abs(centers - t)))
        formants[:, j] = _number_formants(track.frames[frame], N_FORMANTS, config.drop_wide)
    failed = np.isnan(formants[0]) | np.isnan(formants[1])
    return VowelMeasures(segment, dur, formants, failed)


# ---------------------------------------------------------------------------
# Sibilants
# ---------------------------------------------------------------------------


def spectral_moments(spec: PowerSpectrum) -> tuple[float, float, float, float]:
    """COG, variance (Hz^2), skewness and excess kurtosis of the power spectrum."""
    p = np.asarray(spec.power, dtype=float)
    total = p.sum()
    if not total > 0:
        raise ParameterError("spectrum has zero total power")
    w = p / total
    f = np.asarray(spec.freqs_hz, dtype=float)
    cog = float(w @ f)
    d = f - cog
    m2 = float(w @ d ** 2)
    if m2 <= 0:
        return cog, 0.0, math.nan, math.nan
    m3 = float(w @ d ** 3)
    m4 = float(w @ d ** 4)
    return cog, m2, m3 / m2 ** 1.5, m4 / m2 ** 2 - 3.0


def mid_frequency_peak(spec: PowerSpectrum, lo_hz: float, hi_hz: float) -> float:
    """Frequency of maximum power within [lo_hz, hi_hz]; ties go low."""
    f = spec.freqs_hz
    sel = np.flatnonzero((f >= lo_hz) & (f <= hi_hz))
    if sel.size == 0:
        raise ParameterError(f"no spectral bins within [{lo_hz}, {hi_hz}] Hz")
    peak = float(f[sel[int(np.argmax(spec.power[sel]))]])
    assert lo_hz <= peak <= hi_hz
    return peak


@dataclass(frozen=True)
class SibilantMeasures:
    segment: SegmentRecord
    duration_s: float
    spectral_peak_hz: float = math.nan
    cog_hz: float = math.nan
    variance_hz2: float = math.nan
    skewness: float = math.nan
    kurtosis_excess: float = math.nan
    midfreq_peak_alveolar_hz: float = math.nan
    midfreq_peak_postalveolar_hz: float = math.nan
    failed: bool = False

    @property
    def peak_erb(self) -> float:
        return _erb(self.spectral_peak_hz)

    @property
    def midpeak_alveolar_erb(self) -> float:
        return _erb(self.midfreq_peak_alveolar_hz)

    @property
    def midpeak_postalveolar_erb(self) -> float:
        return _erb(self.midfreq_peak_postalveolar_hz)

    def midpeak_hz(self, band: tuple[float, float]) -> float:
        if band == POSTALVEOLAR_BAND_HZ:
            return self.midfreq_peak_postalveolar_hz
        return self.midfreq_peak_alveolar_hz


def measure_sibilant(audio: AudioBuffer, segment: SegmentRecord,
                     config: MultitaperConfig = MultitaperConfig()) -> SibilantMeasures:
    """Multitaper spectral measures over the middle 50% of the token."""
    fs = audio.sample_rate_hz
    dur = segment.duration_s
    start = _sample_index(segment.start_s + dur / 4, fs)
    stop = _sample_index(segment.start_s + 3 * dur / 4, fs)
    x = _extract(audio.samples, start, stop)
    if len(x) < 2 * config.k + 1 or not np.any(x):
        return SibilantMeasures(segment, dur, failed=True)
    spec = multitaper_spectrum(x, config, fs)
    cog, var, skew, kurt = spectral_moments(spec)
    assert spec.freqs_hz[0] <= cog <= spec.freqs_hz[-1]
    nyq = fs / 2

    def band_peak(band):
        lo, hi = band
        return mid_frequency_peak(spec, lo, hi) if lo <= nyq else math.nan

    return SibilantMeasures(
        segment, dur,
        spectral_peak_hz=float(spec.freqs_hz[int(np.argmax(spec.power))]),
        cog_hz=cog, variance_hz2=var, skewness=skew, kurtosis_excess=kurt,
        midfreq_peak_alveolar_hz=band_peak(ALVEOLAR_BAND_HZ),
        midfreq_peak_postalveolar_hz=band_peak(POSTALVEOLAR_BAND_HZ))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

ID_COLUMNS = ["reading", "utterance", "token_index", "label", "duration"]
VOWEL_COLUMNS = ID_COLUMNS + [f"F{i}_{p}" for i in range(1, N_FORMANTS + 1)
                              for p in TIMEPOINTS] + [
    "F1_erb", "F2_erb", "utterance_mcd", "failed_points", "failed"]
SIBILANT_COLUMNS = ID_COLUMNS + [
    "cog", "variance", "skewness", "kurtosis", "peak", "midpeak_alv", "midpeak_postalv",
    "peak_erb", "midpeak_alv_erb", "midpeak_postalv_erb", "utterance_mcd", "failed"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return "" if not np.isfinite(x) else repr(round(float(x), 6))
    return str(x)


def _ids(seg: SegmentRecord, dur: float) -> list:
    return [seg.reading_id, seg.utterance_id, seg.token_index, seg.label, dur]


def vowel_row(m: VowelMeasures, utterance_mcd: Optional[float] = None) -> list[str]:
    failed_pts = ";".join(str(p) for p, f in zip(TIMEPOINTS, m.failed) if f)
    vals = _ids(m.segment, m.duration_s) + list(m.formants.ravel()) + [
        m.f1_erb, m.f2_erb, utterance_mcd, failed_pts, not m.measured]
    return [_fmt(v) for v in vals]


def sibilant_row(m: SibilantMeasures, utterance_mcd: Optional[float] = None) -> list[str]:
    vals = _ids(m.segment, m.duration_s) + [
        m.cog_hz, m.variance_hz2, m.skewness, m.kurtosis_excess, m.spectral_peak_hz,
        m.midfreq_peak_alveolar_hz, m.midfreq_peak_postalveolar_hz,
        m.peak_erb, m.midpeak_alveolar_erb, m.midpeak_postalveolar_erb, utterance_mcd, m.failed]
    return [_fmt(v) for v in vals]


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


@dataclass
class MeasureRow:
    """One token read back from a measures CSV."""

    reading: str
    utterance: str
    token_index: int
    label: str
    duration_s: float
    values: dict[str, float] = field(default_factory=dict)
    utterance_mcd: Optional[float] = None
    failed: bool = False

    def get(self, name: str) -> float:
        return self.values.get(name, math.nan)


def read_measures_csv(path) -> list[MeasureRow]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            vals = {}
            for k, v in rec.items():
                if k in ID_COLUMNS or k in ("utterance_mcd", "failed", "failed_points"):
                    continue
                vals[k] = float(v) if v != "" else math.nan
            mcd = rec.get("utterance_mcd", "")
            out.append(MeasureRow(rec["reading"], rec["utterance"], int(rec["token_index"]),
                                  rec["label"], float(rec["duration"]), vals,
                                  float(mcd) if mcd else None, rec.get("failed") == "1"))
    return out
