"""
Flat-start monophone HMM training and Viterbi forced alignment.

Each phoneme label gets a left-to-right HMM (3 emitting states by default,
no skips) with diagonal-covariance Gaussian mixture emissions. An utterance
is compiled into a graph: words in sequence, one parallel branch per
pronunciation variant, and an optional one-state ``sil`` model at the edges
and between words. Exit probability of a state is shared uniformly among
its successor arcs; entry is uniform among the initial states. All
recursions run in log space.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import SILENCE, ParameterError, Pronunciation, SegmentRecord, Source
from .signal import FeatureSequence

logger = logging.getLogger(__name__)

MODEL_FORMAT = "phonotypo-hmm"
MODEL_VERSION = 1
_LOG2PI = math.log(2 * math.pi)


@dataclass
class PhonemeHmm:
    """Left-to-right HMM for one label.

    Arrays are indexed ``[state]``, ``[state, mixture]`` or
    ``[state, mixture, dim]``. The forward probability of state ``s`` is
    ``1 - self_loop[s]``.
    """

    label: str
    self_loop: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.self_loop)

    @property
    def n_mix(self) -> int:
        return self.weights.shape[1]

    def state_mean(self, s: int) -> np.ndarray:
        return self.weights[s] @ self.means[s]

    def copy(self) -> "PhonemeHmm":
        return PhonemeHmm(self.label, self.self_loop.copy(), self.weights.copy(),
                          self.means.copy(), self.variances.copy())


@dataclass
class PhonemeHmmSet:
    hmms: dict[str, PhonemeHmm]
    dim: int
    var_floor: np.ndarray
    optional_silence: bool = True

    def __getitem__(self, label: str) -> PhonemeHmm:
        return self.hmms[label]

    def __contains__(self, label: str) -> bool:
        return label in self.hmms

    @property
    def labels(self) -> list[str]:
        return sorted(self.hmms)

    def copy(self) -> "PhonemeHmmSet":
        return PhonemeHmmSet({k: h.copy() for k, h in self.hmms.items()}, self.dim,
                             self.var_floor.copy(), self.optional_silence)

    # -- serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "dim": self.dim,
            "optional_silence": self.optional_silence,
            "var_floor": self.var_floor.tolist(),
            "models": [
                {"label": h.label, "n_states": h.n_states, "n_mix": h.n_mix,
                 "self_loop": h.self_loop.tolist(), "weights": h.weights.tolist(),
                 "means": h.means.tolist(), "variances": h.variances.tolist()}
                for h in (self.hmms[k] for k in self.labels)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhonemeHmmSet":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ParameterError(f"unsupported model file: {d.get('format')} v{d.get('version')}")
        hmms = {}
        for m in d["models"]:
            hmms[m["label"]] = PhonemeHmm(
                m["label"], np.array(m["self_loop"], dtype=float),
                np.array(m["weights"], dtype=float).reshape(m["n_states"], m["n_mix"]),
                np.array(m["means"], dtype=float).reshape(m["n_states"], m["n_mix"], d["dim"]),
                np.array(m["variances"], dtype=float).reshape(m["n_states"], m["n_mix"], d["dim"]))
        return cls(hmms, d["dim"], np.array(d["var_floor"], dtype=float), d["optional_silence"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PhonemeHmmSet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class AlignerConfig:
    n_states: int = 3
    mixtures: int = 1
    optional_silence: bool = True
    var_floor_scale: float = 1e-4
    min_iters: int = 15
    max_iters: int = 30
    tol: float = 1e-4
    criterion: str = "loglik"  # or "mcd"
    mixup_after: int = 5
    workers: int = 1


@dataclass(frozen=True)
class TrainingUtterance:
    """Features plus the word pronunciations (with variants) spoken in them."""

    id: str
    features: FeatureSequence
    words: tuple[Pronunciation, ...]


class AlignmentStatus(str, enum.Enum):
    ALIGNED = "aligned"
    UNALIGNED = "unaligned"


@dataclass
class AlignmentResult:
    status: AlignmentStatus
    segments: list[SegmentRecord] = field(default_factory=list)
    chosen_variant: list[int] = field(default_factory=list)
    log_likelihood: float = -math.inf
    # per frame: (hmm label, hmm state) and token index (-1 for silence)
    state_path: list[tuple[str, int]] = field(default_factory=list)
    frame_tokens: Optional[np.ndarray] = None
    silence_frames: int = 0
    n_frames: int = 0
    reason: str = ""

    @property
    def aligned(self) -> bool:
        return self.status is AlignmentStatus.ALIGNED


# ---------------------------------------------------------------------------
# Utterance graphs
# ---------------------------------------------------------------------------


@dataclass
class _Graph:
    labels: list[str]          # hmm label per graph state
    subs: np.ndarray           # hmm state index per graph state
    tokens: np.ndarray         # token id per graph state, -1 for silence
    token_info: list[tuple[int, int, int, str]]  # word, variant, position, label
    src: np.ndarray
    dst: np.ndarray
    kind: np.ndarray           # 0 self loop, 1 forward
    n_succ: np.ndarray         # number of forward arcs leaving each state
    init: np.ndarray           # indices of initial states
    final: np.ndarray          # indices of final states
    min_frames: int

    @property
    def n_states(self) -> int:
        return len(self.labels)


def _variants(word) -> tuple[tuple[str, ...], ...]:
    return word.variants if isinstance(word, Pronunciation) else tuple(map(tuple, word))


def build_graph(model: PhonemeHmmSet, words: Sequence) -> _Graph:
    """Compile the word sequence into an utterance graph (topology only)."""
    labels: list[str] = []
    subs: list[int] = []
    toks: list[int] = []
    token_info: list[tuple[int, int, int, str]] = []
    arcs: list[tuple[int, int, int]] = []

    def add_hmm(label: str, token: int) -> tuple[int, int]:
        if label not in model:
            raise ParameterError(f"no model for label {label!r}")
        first = len(labels)
        for s in range(model[label].n_states):
            idx = len(labels)
            labels.append(label)
            subs.append(s)
            toks.append(token)
            arcs.append((idx, idx, 0))
            if s > 0:
                arcs.append((idx - 1, idx, 1))
        return first, len(labels) - 1

    # slots: (entries, exits, optional, min_frames)
    slots: list[tuple[list[int], list[int], bool, int]] = []

    def silence_slot():
        i, _ = add_hmm(SILENCE, -1)
        last = len(labels) - 1
        slots.append(([i], [last], True, 0))

    if model.optional_silence:
        silence_slot()
    for w, word in enumerate(words):
        entries, exits, lengths = [], [], []
        for v, variant in enumerate(_variants(word)):
            prev_last = None
            n = 0
            for pos, lab in enumerate(variant):
                tok = len(token_info)
                token_info.append((w, v, pos, lab))
                first, last = add_hmm(lab, tok)
                n += last - first + 1
                if prev_last is None:
                    entries.append(first)
                else:
                    arcs.append((prev_last, first, 1))
                prev_last = last
            exits.append(prev_last)
            lengths.append(n)
        slots.append((entries, exits, False, min(lengths)))
        if model.optional_silence:
            silence_slot()

    def reachable(i: int) -> list[int]:
        out: list[int] = []
        while i < len(slots):
            out.extend(slots[i][0])
            if not slots[i][2]:
                break
            i += 1
        return out

    for i, (_, exits, _, _) in enumerate(slots):
        for e in exits:
            for d in reachable(i + 1):
                arcs.append((e, d, 1))
    final: list[int] = []
    i = len(slots) - 1
    while i >= 0:
        final.extend(slots[i][1])
        if not slots[i][2]:
            break
        i -= 1
    arr = np.array(arcs, dtype=np.int64).reshape(-1, 3)
    n_succ = np.bincount(arr[arr[:, 2] == 1, 0], minlength=len(labels))
    return _Graph(labels, np.array(subs), np.array(toks), token_info,
                  arr[:, 0], arr[:, 1], arr[:, 2], n_succ,
                  np.array(sorted(reachable(0))), np.array(sorted(set(final))),
                  sum(s[3] for s in slots))


def _arc_weights(model: PhonemeHmmSet, g: _Graph) -> np.ndarray:
    p_self = np.array([model[l].self_loop[s] for l, s in zip(g.labels, g.subs)])
    with np.errstate(divide="ignore"):
        log_self = np.log(p_self)
        log_fwd = np.log1p(-p_self) - np.log(np.maximum(g.n_succ, 1))
    return np.where(g.kind == 0, log_self[g.src], log_fwd[g.src])


def _padded(keys: np.ndarray, other: np.ndarray, w: np.ndarray, kind: np.ndarray, n: int):
    """Per-state neighbour lists padded to equal width, self loop first."""
    order = np.lexsort((other, kind, keys))
    keys, other, w = keys[order], other[order], w[order]
    counts = np.bincount(keys, minlength=n)
    width = max(int(counts.max()), 1)
    idx = np.zeros((n, width), dtype=np.int64)
    wt = np.full((n, width), -np.inf)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    col = np.arange(len(keys)) - starts[keys]
    idx[keys, col] = other
    wt[keys, col] = w
    return idx, wt


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.exp(x - safe[:, None]).sum(axis=1))


# ---------------------------------------------------------------------------
# Emissions
# ---------------------------------------------------------------------------


def _component_loglik(x: np.ndarray, hmm: PhonemeHmm, s: int) -> np.ndarray:
    """(T, M) log of weight times Gaussian density for each mixture component."""
    mu, var = hmm.means[s], hmm.variances[s]
    diff = x[:, None, :] - mu[None, :, :]
    quad = np.einsum("tmd,md->tm", diff * diff, 1.0 / var)
    norm = -0.5 * (x.shape[1] * _LOG2PI + np.log(var).sum(axis=1))
    with np.errstate(divide="ignore"):
        return np.log(hmm.weights[s])[None, :] + norm[None, :] - 0.5 * quad


def _emissions(model: PhonemeHmmSet, g: _Graph, x: np.ndarray):
    """Log emission per (frame, graph state), plus per-pair component terms."""
    pairs = sorted(set(zip(g.labels, g.subs.tolist())))
    pair_index = {p: i for i, p in enumerate(pairs)}
    comp = [_component_loglik(x, model[l], s) for l, s in pairs]
    pair_ll = np.stack([_logsumexp_rows(c) for c in comp], axis=1)
    state_pair = np.array([pair_index[(l, s)] for l, s in zip(g.labels, g.subs.tolist())])
    return pair_ll[:, state_pair], pairs, state_pair, comp, pair_ll


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _all_labels(corpus: Sequence[TrainingUtterance]) -> set[str]:
    return {lab for u in corpus for w in u.words for v in _variants(w) for lab in v}


def flat_start(corpus: Sequence[TrainingUtterance],
               config: AlignerConfig = AlignerConfig()) -> PhonemeHmmSet:
    """Every state of every label gets the global mean and variance.

    Transitions start uniform (self loop 0.5). Labels are the union over all
    pronunciation variants, plus ``sil`` when optional silence is enabled.
    """
    if not corpus:
        raise ParameterError("empty training corpus")
    for u in corpus:
        if not u.words:
            raise ParameterError(f"utterance {u.id} has no pronounced words")
    frames = np.concatenate([u.features.frames for u in corpus], axis=0)
    dims = {u.features.dim for u in corpus}
    if len(dims) != 1:
        raise ParameterError(f"inconsistent feature dimensions {sorted(dims)}")
    mean = frames.mean(axis=0)
    var = frames.var(axis=0)
    floor = config.var_floor_scale * np.where(var > 0, var, 1.0)
    var = np.maximum(var, floor)
    labels = _all_labels(corpus)
    if config.optional_silence:
        labels.add(SILENCE)
    hmms = {}
    for lab in sorted(labels):
        n = 1 if lab == SILENCE else config.n_states
        hmms[lab] = PhonemeHmm(lab, np.full(n, 0.5), np.ones((n, 1)),
                               np.tile(mean, (n, 1, 1)), np.tile(var, (n, 1, 1)))
    model = PhonemeHmmSet(hmms, frames.shape[1], floor, config.optional_silence)
    if config.mixtures > 1 and config.mixup_after <= 0:
        model = increase_mixtures(model, config.mixtures)
    return model


def increase_mixtures(model: PhonemeHmmSet, target: int) -> PhonemeHmmSet:
    """Split the heaviest component of every state until ``target`` components.

    The split copies are offset by +/-0.2 standard deviations and share the
    parent's weight equally, so the procedure is deterministic.
    """
    out = model.copy()
    for h in out.hmms.values():
        while h.n_mix < target:
            w, mu, var = list(h.weights), list(h.means), list(h.variances)
            new_w = np.zeros((h.n_states, h.n_mix + 1))
            new_mu = np.zeros((h.n_states, h.n_mix + 1, model.dim))
            new_var = np.zeros_like(new_mu)
            for s in range(h.n_states):
                j = int(np.argmax(w[s]))
                off = 0.2 * np.sqrt(var[s][j])
                new_w[s] = np.append(w[s], w[s][j] / 2)
                new_w[s][j] /= 2
                new_mu[s] = np.vstack([mu[s], mu[s][j] + off])
                new_mu[s][j] = mu[s][j] - off
                new_var[s] = np.vstack([var[s], var[s][j]])
            h.weights, h.means, h.variances = new_w, new_mu, new_var
    return out


@dataclass
class _Stats:
    occ: dict
    sx: dict
    sxx: dict
    n_self: dict
    n_out: dict
    loglik: float = 0.0
    frames: int = 0
    skipped: list = field(default_factory=list)

    @classmethod
    def empty(cls, model: PhonemeHmmSet) -> "_Stats":
        z = lambda f: {k: f(h) for k, h in model.hmms.items()}
        return cls(z(lambda h: np.zeros((h.n_states, h.n_mix))),
                   z(lambda h: np.zeros((h.n_states, h.n_mix, model.dim))),
                   z(lambda h: np.zeros((h.n_states, h.n_mix, model.dim))),
                   z(lambda h: np.zeros(h.n_states)),
                   z(lambda h: np.zeros(h.n_states)))

    def add(self, other: "_Stats") -> "_Stats":
        for name in ("occ", "sx", "sxx", "n_self", "n_out"):
            mine, theirs = getattr(self, name), getattr(other, name)
            for k in mine:
                mine[k] += theirs[k]
        self.loglik += other.loglik
        self.frames += other.frames
        self.skipped.extend(other.skipped)
        return self


def _forward_backward(model: PhonemeHmmSet, utt: TrainingUtterance) -> _Stats:
    stats = _Stats.empty(model)
    x = utt.features.frames
    g = build_graph(model, utt.words)
    T, S = len(x), g.n_states
    if g.min_frames > T:
        stats.skipped.append(utt.id)
        return stats
    w = _arc_weights(model, g)
    B, pairs, state_pair, comp, pair_ll = _emissions(model, g, x)
    pred_idx, pred_w = _padded(g.dst, g.src, w, g.kind, S)
    succ_idx, succ_w = _padded(g.src, g.dst, w, g.kind, S)

    alpha = np.full((T, S), -np.inf)
    alpha[0, g.init] = -math.log(len(g.init)) + B[0, g.init]
    for t in range(1, T):
        alpha[t] = _logsumexp_rows(alpha[t - 1][pred_idx] + pred_w) + B[t]
    beta = np.full((T, S), -np.inf)
    beta[T - 1, g.final] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = B[t + 1] + beta[t + 1]
        beta[t] = _logsumexp_rows(nxt[succ_idx] + succ_w)
    log_z = float(_logsumexp_rows(alpha[T - 1][None, g.final])[0])
    if not np.isfinite(log_z):
        stats.skipped.append(utt.id)
        return stats

    gamma = np.exp(alpha + beta - log_z)
    # occupancy per (label, state) pair, then split over mixture components
    pair_gamma = np.zeros((T, len(pairs)))
    np.add.at(pair_gamma.T, state_pair, gamma.T)
    for u, (lab, s) in enumerate(pairs):
        post = np.exp(comp[u] - pair_ll[:, u][:, None])
        r = pair_gamma[:, u][:, None] * post
        stats.occ[lab][s] += r.sum(axis=0)
        stats.sx[lab][s] += r.T @ x
        stats.sxx[lab][s] += r.T @ (x * x)
    xi = np.exp(alpha[:-1, g.src] + w[None, :] + B[1:, g.dst] + beta[1:, g.dst] - log_z).sum(axis=0)
    for a in range(len(g.src)):
        lab, s = g.labels[g.src[a]], g.subs[g.src[a]]
        stats.n_out[lab][s] += xi[a]
        if g.kind[a] == 0:
            stats.n_self[lab][s] += xi[a]
    stats.loglik = log_z
    stats.frames = T
    return stats


def _check_dims(model: PhonemeHmmSet, corpus: Sequence[TrainingUtterance]):
    for u in corpus:
        if u.features.dim != model.dim:
            raise ParameterError(
                f"utterance {u.id}: feature dimension {u.features.dim} != model {model.dim}")


def _map(fn, model, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, [model] * len(items), items))
    return [fn(model, it) for it in items]


def baum_welch_iterate(model: PhonemeHmmSet, corpus: Sequence[TrainingUtterance],
                       workers: int = 1, skipped: Optional[list] = None):
    """One EM pass. Returns ``(new_model, log_likelihood_before_update)``.

    Utterances whose graph needs more frames than they have are left out of
    the statistics; their ids are appended to ``skipped`` when given.
    """
    _check_dims(model, corpus)
    total = _Stats.empty(model)
    for st in _map(_forward_backward, model, list(corpus), workers):
        total.add(st)
    if total.skipped:
        logger.info("skipped %d unalignable utterances", len(total.skipped))
        if skipped is not None:
            skipped.extend(total.skipped)
    new = model.copy()
    for lab, h in new.hmms.items():
        occ = total.occ[lab]
        for s in range(h.n_states):
            state_occ = occ[s].sum()
            if state_occ > 0:
                h.weights[s] = occ[s] / state_occ
            for m in range(h.n_mix):
                if occ[s, m] <= 0:
                    continue
                mu = total.sx[lab][s, m] / occ[s, m]
                var = total.sxx[lab][s, m] / occ[s, m] - mu * mu
                h.means[s, m] = mu
                h.variances[s, m] = np.maximum(var, model.var_floor)
            if total.n_out[lab][s] > 0:
                h.self_loop[s] = total.n_self[lab][s] / total.n_out[lab][s]
    return new, total.loglik


@dataclass
class TrainResult:
    model: PhonemeHmmSet
    history: list[float]
    loglik_history: list[float]
    n_iterations: int
    converged: bool
    skipped: list[str]


def corpus_mcd(model: PhonemeHmmSet, corpus: Sequence[TrainingUtterance]) -> float:
    """Mean MCD between observed features and the model's Viterbi-path means."""
    from .quality import expected_cepstra, mcd

    vals = []
    for u in corpus:
        res = viterbi_align(model, u.features, u.words, utterance_id=u.id)
        if res.aligned:
            vals.append(mcd(u.features, expected_cepstra(model, res, u.features)))
    return float(np.mean(vals)) if vals else math.inf


def train(corpus: Sequence[TrainingUtterance], config: AlignerConfig = AlignerConfig(),
          model: Optional[PhonemeHmmSet] = None) -> TrainResult:
    """Baum-Welch from a flat start until the criterion stops improving.

    Runs at least ``config.min_iters`` and at most ``config.max_iters``
    iterations, stopping once the relative improvement of the criterion
    (total log-likelihood, or mean MCD of the Viterbi-path model means)
    falls below ``config.tol``.
    """
    if config.criterion not in ("loglik", "mcd"):
        raise ParameterError(f"unknown convergence criterion {config.criterion!r}")
    if not 1 <= config.min_iters <= config.max_iters:
        raise ParameterError("need 1 <= min_iters <= max_iters")
    model = model if model is not None else flat_start(corpus, config)
    history: list[float] = []
    lls: list[float] = []
    skipped: list[str] = []
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        if config.mixtures > 1 and it == config.mixup_after + 1:
            model = increase_mixtures(model, config.mixtures)
        skipped_now: list[str] = []
        crit_mcd = corpus_mcd(model, corpus) if config.criterion == "mcd" else None
        model, ll = baum_welch_iterate(model, corpus, config.workers, skipped_now)
        skipped = skipped_now
        lls.append(ll)
        history.append(ll if crit_mcd is None else crit_mcd)
        logger.debug("iteration %d: loglik %.6f", it, ll)
        if len(history) >= 2 and it >= config.min_iters:
            prev, cur = history[-2], history[-1]
            if config.criterion == "loglik":
                gain = (cur - prev) / abs(prev) if prev else 0.0
            else:
                gain = (prev - cur) / abs(prev) if prev else 0.0
            if gain < config.tol:
                converged = True
                break
    return TrainResult(model, history, lls, it, converged, skipped)


# ---------------------------------------------------------------------------
# Viterbi alignment
# ---------------------------------------------------------------------------


def viterbi_align(model: PhonemeHmmSet, features: FeatureSequence, words: Sequence,
                  utterance_id: str = "", reading_id: str = "") -> AlignmentResult:
    """Most probable state path through the utterance graph.

    Each word contributes one branch per pronunciation variant;
    ``chosen_variant`` records the branch on the best path. On exact score
    ties the earlier transition wins (self loop before entry, so boundaries
    sit as far left as possible).
    """
    if features.dim != model.dim:
        raise ParameterError(f"feature dimension {features.dim} != model {model.dim}")
    x = features.frames
    g = build_graph(model, words)
    T, S = len(x), g.n_states
    if g.min_frames > T:
        return AlignmentResult(AlignmentStatus.UNALIGNED, n_frames=T,
                               reason=f"needs {g.min_frames} frames, has {T}")
    w = _arc_weights(model, g)
    B = _emissions(model, g, x)[0]
    pred_idx, pred_w = _padded(g.dst, g.src, w, g.kind, S)
    delta = np.full(S, -np.inf)
    delta[g.init] = -math.log(len(g.init)) + B[0, g.init]
    back = np.zeros((T, S), dtype=np.int64)
    for t in range(1, T):
        cand = delta[pred_idx] + pred_w
        j = np.argmax(cand, axis=1)
        back[t] = pred_idx[np.arange(S), j]
        delta = cand[np.arange(S), j] + B[t]
    best_final = g.final[int(np.argmax(delta[g.final]))]
    score = float(delta[best_final])
    if not np.isfinite(score):
        return AlignmentResult(AlignmentStatus.UNALIGNED, n_frames=T, reason="no finite path")
    path = np.empty(T, dtype=np.int64)
    path[-1] = best_final
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return _result_from_path(g, path, score, features, words, utterance_id, reading_id)


def _result_from_path(g: _Graph, path, score, features, words, utterance_id, reading_id):
    T = len(path)
    step = features.frame_step_s
    frame_tokens = g.tokens[path]
    chosen = [-1] * len(words)
    segments: list[SegmentRecord] = []
    t = 0
    k = 0
    while t < T:
        tok = frame_tokens[t]
        t_end = t
        while t_end + 1 < T and frame_tokens[t_end + 1] == tok:
            t_end += 1
        if tok >= 0:
            w_idx, v_idx, _, lab = g.token_info[tok]
            chosen[w_idx] = v_idx
            word = words[w_idx]
            src = word.source if isinstance(word, Pronunciation) else Source.EXTERNAL
            wname = word.word if isinstance(word, Pronunciation) else None
            segments.append(SegmentRecord(utterance_id, k, lab, t * step,
                                          (t_end - t + 1) * step, word=wname,
                                          source=src, reading_id=reading_id))
            k += 1
        t = t_end + 1
    from .core import annotate_context

    segments = annotate_context(segments)
    return AlignmentResult(AlignmentStatus.ALIGNED, segments, chosen, score,
                           [(g.labels[s], int(g.subs[s])) for s in path],
                           frame_tokens, int(np.sum(frame_tokens < 0)), T)


def align_corpus(model: PhonemeHmmSet, corpus: Sequence[TrainingUtterance],
                 reading_id: str = "", workers: int = 1) -> list[AlignmentResult]:
    items = [(u, reading_id) for u in corpus]
    return _map(_align_one, model, items, workers)


def _align_one(model, item):
    u, reading_id = item
    return viterbi_align(model, u.features, u.words, u.id, reading_id)
