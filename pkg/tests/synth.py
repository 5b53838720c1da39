"""Synthetic signals and corpora shared by the tests."""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from phonotypo.aligner import TrainingUtterance
from phonotypo.core import Pronunciation
from phonotypo.signal import AudioBuffer, FeatureSequence, write_wav


def resonator(x, freq, bw, fs):
    """Unit-DC-gain two-pole resonator."""
    r = np.exp(-np.pi * bw / fs)
    a = [1.0, -2 * r * np.cos(2 * np.pi * freq / fs), r * r]
    return lfilter([sum(a)], a, x)


def vowel(fs, formants, dur_s=0.2, f0=100.0, bw=80.0, tilt=0.98):
    """Impulse-train source through a one-pole tilt and cascaded resonators."""
    n = int(round(dur_s * fs))
    x = np.zeros(n)
    x[::int(round(fs / f0))] = 1.0
    if tilt:
        x = lfilter([1.0], [1.0, -tilt], x)
    for f in formants:
        x = resonator(x, f, bw, fs)
    return x / np.max(np.abs(x))


def band_noise(fs, center, width, dur_s, rng):
    n = int(round(dur_s * fs))
    sos = butter(6, [center - width / 2, center + width / 2], btype="band", fs=fs, output="sos")
    x = sosfilt(sos, rng.standard_normal(n + 2000))[2000:]
    return x / np.max(np.abs(x))


def hmm_corpus(seed=0, n_utt=50, dim=4, self_loop=0.8, spread=3.0):
    """Utterances sampled from a known 3-label, 3-state HMM.

    Returns the corpus, the generating means, and per utterance the true
    phone start frames (after the first) and chosen variant per word.
    """
    rng = np.random.default_rng(seed)
    means = {lab: rng.normal(0, spread, size=(3, dim)) for lab in "abc"}
    vocab = [Pronunciation("ab", [("a", "b")]), Pronunciation("ca", [("c", "a")]),
             Pronunciation("bac", [("b", "a", "c")]),
             Pronunciation("v1", [("a", "b", "c"), ("a", "c", "c")]),
             Pronunciation("v2", [("c", "b"), ("c", "a", "b")])]
    corpus, truth = [], []
    for u in range(n_utt):
        words = [vocab[i] for i in rng.integers(0, len(vocab), rng.integers(2, 5))]
        frames, bounds, chosen = [], [], []
        for w in words:
            v = int(rng.integers(len(w.variants)))
            chosen.append(v)
            for lab in w.variants[v]:
                bounds.append(len(frames))
                for s in range(3):
                    for _ in range(rng.geometric(1 - self_loop)):
                        frames.append(means[lab][s] + rng.standard_normal(dim))
        feats = FeatureSequence(np.array(frames), 0.00625, 0.025)
        corpus.append(TrainingUtterance(f"u{u:03d}", feats, tuple(words)))
        truth.append((bounds[1:], chosen))
    return corpus, means, truth


def write_toy_corpus(root, n_utt=10, fs=16000, seed=0):
    """WAVs of alternating vowel and /s/ noise for the words "sasa"/"asas"."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    texts = ["sasa asas", "asas sasa", "sasa", "asas sasa sasa"]
    rows = ["utterance_id\ttext\taudio\tmcd"]
    for i in range(n_utt):
        text = texts[i % len(texts)]
        parts = [np.zeros(int(0.05 * fs))]
        for word in text.split():
            for ch in word:
                dur = rng.uniform(0.08, 0.14)
                if ch == "a":
                    parts.append(0.5 * vowel(fs, [700, 1200, 2600, 3500], dur))
                else:
                    parts.append(0.2 * band_noise(fs, 5500, 2000, dur, rng))
            parts.append(np.zeros(int(0.03 * fs)))
        x = np.concatenate(parts) + 1e-3 * rng.standard_normal(sum(len(p) for p in parts))
        name = f"utt{i:02d}.wav"
        write_wav(root / name, AudioBuffer(x, fs))
        rows.append(f"utt{i:02d}\t{text}\t{name}\t{4.0 + 0.1 * i:.1f}")
    (root / "utterances.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return root
