"""
DSP primitives: pre-emphasis, DPSS multitaper spectra, Burg LPC, formant
extraction from LPC roots, mel cepstra, ERB conversion and resampling.

Every function is a pure function of its inputs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import linalg, signal as sp_signal
from scipy.io import wavfile

from .core import ParameterError, PhonotypoError

#: bandwidth above which a formant candidate is flagged as wide
WIDE_BANDWIDTH_HZ = 700.0


class DegenerateFrameError(PhonotypoError, ValueError):
    """An analysis frame carries no energy, so no spectrum can be fitted."""


def _readonly(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if int(self.sample_rate_hz) <= 0:
            raise ParameterError(f"sample rate must be positive, got {self.sample_rate_hz}")
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ParameterError("audio must be single-channel")
        object.__setattr__(self, "samples", _readonly(samples))
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def slice(self, start_s: float, end_s: float) -> "AudioBuffer":
        """Samples in [start_s, end_s), zero-padded where outside the buffer."""
        return AudioBuffer(_extract(self.samples, _sample_index(start_s, self.sample_rate_hz),
                                    _sample_index(end_s, self.sample_rate_hz)),
                           self.sample_rate_hz)


@dataclass(frozen=True)
class FeatureSequence:
    frames: np.ndarray  # (T, D), column 0 is c0
    frame_step_s: float
    frame_len_s: float

    def __post_init__(self):
        frames = np.atleast_2d(np.asarray(self.frames, dtype=float))
        if frames.shape[0] < 1:
            raise ParameterError("a feature sequence needs at least one frame")
        if not np.all(np.isfinite(frames)):
            raise ParameterError("feature frames must be finite")
        object.__setattr__(self, "frames", _readonly(frames))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class PowerSpectrum:
    freqs_hz: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.freqs_hz, dtype=float)
        power = np.asarray(self.power, dtype=float)
        if freqs.shape != power.shape or freqs.ndim != 1:
            raise ParameterError("frequency and power arrays must be 1-D and equal length")
        if np.any(np.diff(freqs) <= 0):
            raise ParameterError("frequencies must be strictly ascending")
        if np.any(power < 0):
            raise ParameterError("power must be non-negative")
        object.__setattr__(self, "freqs_hz", _readonly(freqs))
        object.__setattr__(self, "power", _readonly(power))


@dataclass(frozen=True)
class MultitaperConfig:
    nw: float = 4.0
    k: int = 8

    def __post_init__(self):
        if not 1 <= self.k <= 2 * self.nw:
            raise ParameterError(f"need 1 <= k <= 2*nw, got k={self.k}, nw={self.nw}")


@dataclass(frozen=True)
class Formant:
    frequency_hz: float
    bandwidth_hz: float

    @property
    def wide(self) -> bool:
        return self.bandwidth_hz > WIDE_BANDWIDTH_HZ


@dataclass(frozen=True)
class FormantTrack:
    """Per-frame formant candidates; ``None`` marks a failed frame."""

    times_s: np.ndarray
    frames: tuple[Optional[tuple[Formant, ...]], ...]
    frame_step_s: float
    window_s: float

    def nearest_frame(self, t: float) -> int:
        # argmin returns the first (earliest) frame on ties
        return int(np.argmin(np.abs(np.asarray(self.times_s) - t)))

    def formant(self, frame: int, number: int) -> Optional[float]:
        """Frequency of formant ``number`` (1-based) in ``frame``, or None."""
        cands = self.frames[frame]
        if cands is None or len(cands) < number:
            return None
        return cands[number - 1].frequency_hz


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def read_wav(path: str | os.PathLike) -> AudioBuffer:
    """Read single-channel 16-bit PCM or 32-bit float WAV data."""
    try:
        rate, data = wavfile.read(os.fspath(path))
    # scipy raises UnboundLocalError on some truncated headers
    except (ValueError, EOFError, UnboundLocalError) as exc:
        raise ParameterError(f"{path}: unreadable WAV ({exc})") from exc
    if data.ndim != 1:
        raise ParameterError(f"{path}: {data.shape[1]} channels, expected mono")
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(float)
    else:
        raise ParameterError(f"{path}: unsupported sample format {data.dtype}")
    return AudioBuffer(samples, rate)


def write_wav(path: str | os.PathLike, audio: AudioBuffer, fmt: str = "int16") -> None:
    if fmt == "int16":
        data = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        data = audio.samples.astype(np.float32)
    else:
        raise ParameterError(f"unknown WAV format {fmt!r}")
    wavfile.write(os.fspath(path), audio.sample_rate_hz, data)


# ---------------------------------------------------------------------------
# Elementary operations
# ---------------------------------------------------------------------------


def _sample_index(t: float, rate: float) -> int:
    # round half up so that integer shifts commute with rounding
    return int(math.floor(t * rate + 0.5))


def _extract(x: np.ndarray, start: int, stop: int) -> np.ndarray:
    out = np.zeros(max(stop - start, 0))
    lo, hi = max(start, 0), min(stop, len(x))
    if hi > lo:
        out[lo - start:hi - start] = x[lo:hi]
    return out


def preemphasize(audio: AudioBuffer, from_hz: float = 50.0) -> AudioBuffer:
    """First-order pre-emphasis ``y[n] = x[n] - a*x[n-1]``, ``a = exp(-2*pi*F/fs)``."""
    nyquist = audio.sample_rate_hz / 2.0
    if not 0 <= from_hz < nyquist:
        raise ParameterError(f"pre-emphasis frequency {from_hz} Hz outside [0, {nyquist})")
    alpha = math.exp(-2.0 * math.pi * from_hz / audio.sample_rate_hz)
    x = audio.samples
    y = x.copy()
    y[1:] = x[1:] - alpha * x[:-1]
    return AudioBuffer(y, audio.sample_rate_hz)


def hz_to_erb(f_hz):
    """ERB-number of a frequency: ``21.4 * log10(4.37 * f / 1000 + 1)``."""
    f = np.asarray(f_hz, dtype=float)
    if np.any(f < 0) or np.any(np.isnan(f)):
        raise ParameterError("ERB conversion needs non-negative frequencies")
    erb = 21.4 * np.log10(4.37e-3 * f + 1.0)
    return float(erb) if erb.ndim == 0 else erb


def erb_to_hz(erb):
    e = np.asarray(erb, dtype=float)
    if np.any(e < 0) or np.any(np.isnan(e)):
        raise ParameterError("ERB number must be non-negative")
    f = (np.power(10.0, e / 21.4) - 1.0) / 4.37e-3
    return float(f) if f.ndim == 0 else f


def resample(audio: AudioBuffer, target_rate_hz: int) -> AudioBuffer:
    """Polyphase anti-aliased downsampling to ``target_rate_hz``."""
    src = audio.sample_rate_hz
    target_rate_hz = int(target_rate_hz)
    if target_rate_hz == src:
        return AudioBuffer(audio.samples.copy(), src)
    if target_rate_hz > src or target_rate_hz <= 0:
        raise ParameterError(f"can only downsample: {src} Hz -> {target_rate_hz} Hz")
    g = math.gcd(src, target_rate_hz)
    y = sp_signal.resample_poly(audio.samples, target_rate_hz // g, src // g)
    return AudioBuffer(y, target_rate_hz)


# ---------------------------------------------------------------------------
# Multitaper spectra
# ---------------------------------------------------------------------------


def dpss_tapers(n: int, cfg: MultitaperConfig = MultitaperConfig()):
    """Discrete prolate spheroidal sequences.

    Parameters
    ----------
    n : int
        Taper length in samples; must exceed ``2 * cfg.k``.
    cfg : MultitaperConfig
        Time-bandwidth product and number of tapers.

    Returns
    -------
    tapers : ndarray, shape (k, n)
        Unit-norm tapers ordered by decreasing spectral concentration.
        Even-indexed tapers have positive sum, odd-indexed tapers start
        positive.
    concentrations : ndarray, shape (k,)
        Fraction of each taper's energy inside ``[-W, W]``, ``W = nw / n``.

    Notes
    -----
    The tapers are eigenvectors of the symmetric tridiagonal matrix that
    commutes with the time-frequency concentration operator, found by
    bisection and inverse iteration.
    """
    if n <= 2 * cfg.k:
        raise ParameterError(f"taper length {n} must exceed 2*k = {2 * cfg.k}")
    w = cfg.nw / n
    idx = np.arange(n)
    diag = ((n - 1 - 2 * idx) / 2.0) ** 2 * math.cos(2 * math.pi * w)
    off = idx[1:] * (n - idx[1:]) / 2.0
    _, vecs = linalg.eigh_tridiagonal(diag, off, select="i",
                                      select_range=(n - cfg.k, n - 1),
                                      lapack_driver="stebz")
    tapers = vecs[:, ::-1].T.copy()
    ramp = (n - 1 - 2 * idx).astype(float)
    for j, v in enumerate(tapers):
        ref = v.sum() if j % 2 == 0 else v @ ramp
        if ref < 0:
            tapers[j] = -v
        tapers[j] /= np.linalg.norm(tapers[j])
    return tapers, _concentrations(tapers, w)


def _concentrations(tapers: np.ndarray, w: float) -> np.ndarray:
    n = tapers.shape[1]
    lags = np.arange(1, n)
    kernel = np.concatenate([np.sin(2 * np.pi * w * lags[::-1]) / (np.pi * lags[::-1]),
                             [2 * w],
                             np.sin(2 * np.pi * w * lags) / (np.pi * lags)])
    out = []
    for v in tapers:
        acf = sp_signal.fftconvolve(v, v[::-1])
        out.append(float(acf @ kernel))
    return np.array(out)


def _next_pow2(n: int) -> int:
    return 1 << max(int(n - 1).bit_length(), 0)


def multitaper_spectrum(samples: Sequence[float], cfg: MultitaperConfig = MultitaperConfig(),
                        sample_rate_hz: float = 16000.0,
                        nfft: Optional[int] = None) -> PowerSpectrum:
    """One-sided multitaper power spectrum averaged over ``cfg.k`` tapers.

    ``nfft`` defaults to the next power of two at least twice the segment
    length. Power is scaled so that the bins sum to the taper-weighted mean
    square of the input (Parseval).
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    tapers, _ = dpss_tapers(n, cfg)
    nfft = nfft or _next_pow2(2 * n)
    if nfft < n:
        raise ParameterError(f"nfft {nfft} shorter than segment {n}")
    spec = np.abs(np.fft.rfft(tapers * x, n=nfft, axis=1)) ** 2
    power = spec.mean(axis=0) / nfft
    if nfft % 2 == 0:
        power[1:-1] *= 2.0
    else:
        power[1:] *= 2.0
    freqs = np.fft.rfftfreq(nfft, d=1.0 / sample_rate_hz)
    return PowerSpectrum(freqs, power)


# ---------------------------------------------------------------------------
# Linear prediction and formants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LpcResult:
    """Burg fit. ``a`` is the inverse filter ``[1, a1, ..., ap]``."""

    a: np.ndarray
    reflection: np.ndarray
    error: float

    @property
    def predictor(self) -> np.ndarray:
        """Coefficients ``c`` with ``x[n] ~ sum_k c[k] * x[n-k-1]``."""
        return -self.a[1:]


def burg_lpc(frame: Sequence[float], order: int) -> LpcResult:
    """Linear prediction coefficients by Burg's recursion.

    Each stage picks the reflection coefficient minimising the summed
    forward and backward prediction error power, which keeps every
    ``|k| < 1`` and hence the synthesis filter minimum-phase.
    """
    x = np.asarray(frame, dtype=float)
    if not 1 <= order < len(x):
        raise ParameterError(f"need 1 <= order < frame length, got {order} for {len(x)}")
    f = x.copy()
    b = x.copy()
    a = np.array([1.0])
    refl = np.zeros(order)
    err = float(x @ x) / len(x)
    if err == 0.0:
        raise DegenerateFrameError("all-zero frame")
    for m in range(1, order + 1):
        fm = f[m:]
        bm = b[m - 1:-1]
        den = fm @ fm + bm @ bm
        if den <= 0.0:
            raise DegenerateFrameError(f"prediction error vanished at stage {m}")
        k = -2.0 * (fm @ bm) / den
        f_new = fm + k * bm
        b_new = bm + k * fm
        f[m:] = f_new
        b[m:] = b_new
        ext = np.append(a, 0.0)
        a = ext + k * ext[::-1]
        refl[m - 1] = k
        err *= 1.0 - k * k
    if np.any(np.abs(refl) >= 1.0):
        raise DegenerateFrameError("non-minimum-phase Burg solution")
    return LpcResult(a, refl, err)


def lpc_to_formants(lpc, sample_rate_hz: float, max_formants: int = 5,
                    ceiling_hz: float = 5000.0,
                    margin_hz: float = 50.0) -> Optional[tuple[Formant, ...]]:
    """Formant candidates from the roots of the LPC inverse filter.

    Returns at most ``max_formants`` candidates ascending in frequency, or
    ``None`` when the root finder fails.
    """
    a = lpc.a if isinstance(lpc, LpcResult) else np.asarray(lpc, dtype=float)
    try:
        roots = np.roots(a)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(roots)):
        return None
    roots = roots[roots.imag > 0]
    freqs = np.angle(roots) * sample_rate_hz / (2 * np.pi)
    with np.errstate(divide="ignore"):
        bws = -(sample_rate_hz / np.pi) * np.log(np.abs(roots))
    keep = (freqs > margin_hz) & (freqs < ceiling_hz - margin_hz)
    order = np.argsort(freqs[keep], kind="stable")
    cands = [Formant(float(f), float(bw))
             for f, bw in zip(freqs[keep][order], bws[keep][order])]
    return tuple(cands[:max_formants])


def formant_track(audio: AudioBuffer, centers_s: Optional[Sequence[float]] = None,
                  max_formants: int = 5, ceiling_hz: float = 5000.0,
                  window_s: float = 0.025, step_s: float = 0.00625,
                  preemphasis_from_hz: float = 50.0) -> FormantTrack:
    """Burg formant analysis on Hamming-windowed frames.

    The audio is downsampled so that the Nyquist frequency equals
    ``ceiling_hz`` and pre-emphasised; LPC order is ``2 * max_formants``.
    Frames are centred at ``centers_s`` (seconds from the start of
    ``audio``), by default every ``step_s`` from ``window_s / 2`` while the
    window fits inside the audio. Frames with no energy are failed
    (``None``).
    """
    target = int(round(2 * ceiling_hz))
    if audio.sample_rate_hz < target:
        raise ParameterError(f"need at least {target} Hz audio for a {ceiling_hz} Hz ceiling")
    audio = preemphasize(resample(audio, target), preemphasis_from_hz)
    fs = audio.sample_rate_hz
    if centers_s is None:
        n_frames = int(math.floor((audio.duration_s - window_s) / step_s + 1e-9)) + 1
        centers_s = window_s / 2 + step_s * np.arange(max(n_frames, 0))
    centers = np.asarray(centers_s, dtype=float)
    width = _sample_index(window_s, fs)
    window = np.hamming(width)
    order = 2 * max_formants
    frames: list[Optional[tuple[Formant, ...]]] = []
    for c in centers:
        start = _sample_index(c - window_s / 2, fs)
        chunk = _extract(audio.samples, start, start + width) * window
        try:
            lpc = burg_lpc(chunk, order)
        except DegenerateFrameError:
            frames.append(None)
            continue
        frames.append(lpc_to_formants(lpc, fs, max_formants, ceiling_hz))
    return FormantTrack(_readonly(centers), tuple(frames), step_s, window_s)


# ---------------------------------------------------------------------------
# Mel cepstra
# ---------------------------------------------------------------------------


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, nfft: int, sample_rate_hz: float,
                   fmin: float = 0.0, fmax: Optional[float] = None) -> np.ndarray:
    fmax = fmax or sample_rate_hz / 2.0
    edges = _mel_inv(np.linspace(_mel(fmin), _mel(fmax), n_filters + 2))
    bins = np.fft.rfftfreq(nfft, 1.0 / sample_rate_hz)
    fb = np.zeros((n_filters, len(bins)))
    for i in range(n_filters):
        lo, mid, hi = edges[i:i + 3]
        up = (bins - lo) / (mid - lo)
        down = (hi - bins) / (hi - mid)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_cepstra(audio: AudioBuffer, frame_len_s: float = 0.025,
                frame_step_s: float = 0.00625, n_coeffs: int = 13,
                n_filters: int = 26, log_floor: float = 1e-10) -> FeatureSequence:
    """Log mel-filterbank energies decorrelated by an orthonormal DCT-II.

    ``T = floor((N - L) / S) + 1`` frames for ``N`` samples, frame length
    ``L`` and step ``S`` (in samples); audio shorter than one frame is
    zero-padded to a single frame. Column 0 is c0.
    """
    x = audio.samples
    if len(x) == 0:
        raise ParameterError("empty audio")
    fs = audio.sample_rate_hz
    flen = _sample_index(frame_len_s, fs)
    step = _sample_index(frame_step_s, fs)
    if len(x) < flen:
        x = np.pad(x, (0, flen - len(x)))
    n_frames = (len(x) - flen) // step + 1
    idx = np.arange(flen)[None, :] + step * np.arange(n_frames)[:, None]
    framed = x[idx] * np.hamming(flen)
    nfft = _next_pow2(flen)
    power = np.abs(np.fft.rfft(framed, n=nfft, axis=1)) ** 2
    energies = power @ mel_filterbank(n_filters, nfft, fs).T
    logmel = np.log(np.maximum(energies, log_floor))
    ceps = sp_fft.dct(logmel, type=2, norm="ortho", axis=1)[:, :n_coeffs]
    return FeatureSequence(ceps, frame_step_s, frame_len_s)
