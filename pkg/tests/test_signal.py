import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import lfilter

from phonotypo.core import ParameterError
from phonotypo.signal import (AudioBuffer, DegenerateFrameError, MultitaperConfig, burg_lpc,
                              dpss_tapers, erb_to_hz, formant_track, hz_to_erb, lpc_to_formants,
                              mel_cepstra, multitaper_spectrum, preemphasize, read_wav, resample,
                              write_wav)


def test_erb_roundtrip_and_errors():
    f = np.array([0.0, 100.0, 1000.0, 7999.0])
    assert np.allclose(erb_to_hz(hz_to_erb(f)), f)
    assert hz_to_erb(0.0) == 0.0
    with pytest.raises(ParameterError):
        hz_to_erb(-1.0)


def test_dpss_signs_and_zero_crossings():
    tapers, _ = dpss_tapers(256, MultitaperConfig(4, 8))
    for k, t in enumerate(tapers):
        assert np.count_nonzero(np.diff(np.sign(t[np.abs(t) > 1e-12])) != 0) == k
        if k % 2 == 0:
            assert t.sum() > 0


def test_dpss_needs_long_enough_segment():
    with pytest.raises(ParameterError):
        dpss_tapers(16, MultitaperConfig(4, 8))


def test_multitaper_parseval_and_tone_peak():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(1024)
    spec = multitaper_spectrum(x, sample_rate_hz=16000)
    tapers, _ = dpss_tapers(1024)
    assert math.isclose(spec.power.sum(), np.mean(np.sum((tapers * x) ** 2, axis=1)),
                        rel_tol=1e-9)
    t = np.arange(800) / 16000
    tone = multitaper_spectrum(np.sin(2 * np.pi * 4000 * t), sample_rate_hz=16000)
    bin_hz = tone.freqs_hz[1]
    assert abs(tone.freqs_hz[np.argmax(tone.power)] - 4000) <= bin_hz


def test_preemphasis_coefficient():
    x = np.ones(10)
    y = preemphasize(AudioBuffer(x, 10000), 50.0).samples
    alpha = math.exp(-2 * math.pi * 50 / 10000)
    assert y[0] == 1.0 and np.allclose(y[1:], 1 - alpha)


def test_resample_rejects_upsampling():
    a = AudioBuffer(np.zeros(100), 8000)
    with pytest.raises(ParameterError):
        resample(a, 16000)
    assert resample(a, 8000).sample_rate_hz == 8000


def test_burg_recovers_ar2():
    # stationary AR(2) process with known coefficients
    rng = np.random.default_rng(1)
    a = [1.0, -1.5, 0.8]
    x = lfilter([1.0], a, rng.standard_normal(20000))
    lpc = burg_lpc(x, 2)
    assert np.allclose(lpc.a, a, atol=0.02)
    assert np.all(np.abs(lpc.reflection) < 1)


def test_burg_degenerate():
    with pytest.raises(DegenerateFrameError):
        burg_lpc(np.zeros(100), 4)


def test_formants_from_known_poles():
    fs = 10000
    poles = []
    for f, bw in ((500, 60), (1500, 90)):
        r = math.exp(-math.pi * bw / fs)
        poles += [r * np.exp(2j * np.pi * f / fs), r * np.exp(-2j * np.pi * f / fs)]
    a = np.real(np.poly(poles))
    got = lpc_to_formants(a, fs)
    assert [round(c.frequency_hz) for c in got] == [500, 1500]
    assert [round(c.bandwidth_hz) for c in got] == [60, 90]


def test_formant_track_frames_and_failures():
    track = formant_track(AudioBuffer(np.zeros(1000), 10000))
    assert all(f is None for f in track.frames)
    assert track.nearest_frame(track.times_s[3] + 1e-4) == 3


def test_mel_cepstra_shape():
    fs = 16000
    x = np.random.default_rng(2).standard_normal(fs)
    feats = mel_cepstra(AudioBuffer(x, fs))
    assert feats.dim == 13
    assert feats.n_frames == (fs - 400) // 100 + 1
    short = mel_cepstra(AudioBuffer(x[:100], fs))
    assert short.n_frames == 1


def test_wav_roundtrip(tmp_path):
    x = np.sin(np.linspace(0, 20, 1600)) * 0.5
    p = tmp_path / "a.wav"
    write_wav(p, AudioBuffer(x, 16000), fmt="float32")
    back = read_wav(p)
    assert back.sample_rate_hz == 16000 and np.allclose(back.samples, x, atol=1e-7)
    (tmp_path / "bad.wav").write_bytes(b"RIFF0000garbage")
    with pytest.raises((ParameterError, ValueError)):
        read_wav(tmp_path / "bad.wav")


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100.0))
def test_spectrum_scales_quadratically(lam):
    x = np.random.default_rng(3).standard_normal(256)
    a = multitaper_spectrum(x).power
    b = multitaper_spectrum(lam * x).power
    assert np.allclose(b, lam * lam * a, rtol=1e-9)
