import itertools
import math
import statistics

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats

from phonotypo.core import ParameterError
from phonotypo.signal import erb_to_hz
from phonotypo.typology import (FilterConfig, GaussianCategoryModel, RetentionReport, Token,
                                bh_adjust, conditional_entropy, dispersion_study,
                                filter_tokens, fit_category_gaussians, outlier_filter, pearson,
                                retention_stats, spearman, uniformity_table)


def vtok(i, label="a", f1=500.0, f2=1500.0, dur=0.1, mcd=None, reading="r", **kw):
    return Token(reading, "u", i, label, "vowel", dur, f1, f2, utterance_mcd=mcd, **kw)


# --- filtering -------------------------------------------------------------

def test_identical_tokens_survive_outlier_stage():
    toks = [vtok(i) for i in range(20)]
    kept, rep = filter_tokens(toks)
    assert len(kept) == 20 and rep.removed["outlier"] == 0


def _brute_outlier(tokens, k=2.0):
    keep = []
    for t in tokens:
        same = [u for u in tokens if u.label == t.label]
        ok = True
        if len(same) > 1:
            for f in ("f1_hz", "f2_hz"):
                v = [getattr(u, f) for u in same]
                mu, sd = statistics.fmean(v), statistics.stdev(v)
                ok &= not abs(getattr(t, f) - mu) > k * sd
        keep.append(ok)
    return [t for t, k_ in zip(tokens, keep) if k_]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("ae"), st.floats(300, 900), st.floats(900, 2500)),
                min_size=1, max_size=30))
def test_outlier_filter_matches_brute_force(rows):
    toks = [vtok(i, lab, f1, f2) for i, (lab, f1, f2) in enumerate(rows)]
    assert outlier_filter(toks) == _brute_outlier(toks)


def test_stage_accounting_and_order():
    toks = [vtok(0, dur=0.35), vtok(1, mcd=6.5), vtok(2, f1=math.nan),
            vtok(3, midpoint_ok=False)] + [vtok(i) for i in range(4, 10)]
    kept, rep = filter_tokens(toks)
    assert rep.removed == {"reading_mcd": 0, "midpoint": 1, "utterance_mcd": 1, "failure": 1,
                           "duration": 1, "outlier": 0}
    assert rep.reconciles() and set(kept) <= set(toks) and len(kept) == 6
    _, rep = filter_tokens(toks, reading_mean_mcd=8.5)
    assert rep.n_output == 0 and not rep.reading_passed


def test_filter_rejects_mixed_readings():
    with pytest.raises(Exception):
        filter_tokens([vtok(0, reading="x"), vtok(1, reading="y")])


def test_sibilant_outliers_use_peak_and_duration():
    toks = [Token("r", "u", i, "s", "sibilant", 0.1, midpeak_hz=5000.0) for i in range(10)]
    toks.append(Token("r", "u", 10, "s", "sibilant", 0.9, midpeak_hz=5000.0))
    kept, rep = filter_tokens(toks)
    assert rep.removed["outlier"] == 1 and all(t.duration_s == 0.1 for t in kept)


def test_filter_config_validation():
    with pytest.raises(ParameterError):
        FilterConfig(outlier_sd=0)
    with pytest.raises(ParameterError):
        FilterConfig(outlier_units="bark")


# --- retention -------------------------------------------------------------

def report(agg, kind="vowel", passed=True, reading="r"):
    return RetentionReport(reading, kind, 10, {}, 0,
                           {"Midpoint": None, "MCD": agg, "Outlier": agg, "AGG": agg}, passed)


def test_retention_one_and_two_readings():
    (row,) = [s for s in retention_stats([report(70.0)]) if s.column == "AGG"]
    assert row.min == row.median == row.mean == row.max == 70.0
    rows = retention_stats([report(40.0), report(60.0)])
    agg = next(s for s in rows if s.column == "AGG")
    assert agg.mean == 50.0 and agg.median == 50.0 and agg.n_readings == 2
    assert not any(s.column == "Midpoint" for s in rows)


def test_retention_matches_brute_force():
    rng = np.random.default_rng(0)
    reps = [report(float(v), kind) for v, kind in
            zip(rng.uniform(0, 100, 5), ["vowel", "vowel", "sibilant", "vowel", "sibilant"])]
    reps.append(report(1.0, passed=False))
    for s in retention_stats(reps):
        vals = [r.standalone[s.column] for r in reps if r.kind == s.kind and r.reading_passed]
        assert (s.min, s.max, s.n_readings) == (min(vals), max(vals), len(vals))
        assert s.median == statistics.median(vals)
        assert math.isclose(s.mean, sum(vals) / len(vals), rel_tol=1e-15)


# --- entropy ---------------------------------------------------------------

def test_gaussian_sampling_oracle():
    rng = np.random.default_rng(1)
    cov = np.array([[1.0, 0.4], [0.4, 2.0]])
    x = rng.multivariate_normal([5.0, 12.0], cov, size=10000)
    (m,) = fit_category_gaussians({"a": x})
    assert np.all(np.abs(m.mean - [5, 12]) < 3 * np.sqrt(np.diag(cov)) / 100)
    assert np.allclose(m.covariance, cov, rtol=0.05, atol=0.05 * 0.4)
    assert m.prior == 1.0 and m.n == 10000


def test_priors_and_dropped_category():
    rng = np.random.default_rng(2)
    diag = []
    models = fit_category_gaussians({"a": rng.normal(size=(75, 2)), "b": rng.normal(size=(25, 2)),
                                     "c": np.ones((1, 2))}, diagnostics=diag)
    assert [m.prior for m in models] == [0.75, 0.25]
    assert any("'c'" in d for d in diag)


def test_singular_covariance_flagged_and_rejected():
    t = np.linspace(0, 1, 10)
    (m,) = fit_category_gaussians({"a": np.column_stack([t, 2 * t])})
    assert m.singular
    with pytest.raises(ParameterError, match="'a'"):
        conditional_entropy([m])


def _model(label, cov, prior):
    return GaussianCategoryModel(label, np.zeros(2), np.asarray(cov, float), prior, 10)


def test_entropy_closed_forms():
    assert conditional_entropy([_model("a", np.eye(2), 1.0)]) == pytest.approx(
        math.log(2 * math.pi * math.e), abs=1e-12)
    two = conditional_entropy([_model("a", np.eye(2), 0.3), _model("b", np.eye(2), 0.7)])
    assert two == pytest.approx(math.log(2 * math.pi * math.e), abs=1e-12)


@given(st.floats(0.1, 10.0))
def test_entropy_axis_scaling(lam):
    cov = np.array([[1.0, 0.2], [0.2, 0.5]])
    base = conditional_entropy([_model("a", cov, 1.0)])
    scaled = conditional_entropy([_model("a", lam * lam * cov, 1.0)])
    assert scaled == pytest.approx(base + 2 * math.log(lam), abs=1e-9)


def test_entropy_invariant_to_relabel_and_order():
    rng = np.random.default_rng(3)
    pts = {"a": rng.normal(size=(30, 2)), "b": rng.normal(2, 0.5, size=(20, 2))}
    h = conditional_entropy(fit_category_gaussians(pts))
    relabeled = {"z": pts["a"][::-1], "y": rng.permutation(pts["b"])}
    assert conditional_entropy(fit_category_gaussians(relabeled)) == pytest.approx(h, abs=1e-12)


def _reading_with_inventory(name, k, rng, scale):
    labels = "aeiou"[:k]
    return [vtok(i, labels[i % k], erb_to_hz(rng.normal(10 + i % k, scale)),
                 erb_to_hz(rng.normal(20, scale)), reading=name) for i in range(20 * k)]


def test_dispersion_monotone_gives_rho_one():
    rng = np.random.default_rng(4)
    per = {f"r{k}": _reading_with_inventory(f"r{k}", k, rng, 0.2 * k) for k in (2, 3, 4, 5)}
    res = dispersion_study(per)
    assert res.inventory_sizes == (2, 3, 4, 5)
    assert res.spearman.r == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        dispersion_study({"a": per["r2"]})


def test_dispersion_null_rho_small():
    rng = np.random.default_rng(5)
    x = rng.integers(3, 12, size=50)
    y = rng.normal(size=50)
    assert abs(spearman(x, y).r) < 0.3


# --- correlation -----------------------------------------------------------

def test_pearson_examples():
    x = np.arange(10.0)
    c = pearson(x, 2 * x + 1)
    assert c.r == 1.0 and c.p == 0.0
    assert pearson([1, 2, 3], [2, 1, 0]).r == -1.0
    assert pearson([1, 1, 1], [1, 2, 3]) is None
    with pytest.raises(ParameterError):
        pearson([1, 2], [3, 4])


def test_pearson_brute_force_fixture():
    x = list(range(1, 11))
    y = x.copy()
    y[3], y[4] = y[4], y[3]
    mx, my = sum(x) / 10, sum(y) / 10
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    assert abs(pearson(x, y).r - num / den) < 1e-12


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30))
def test_p_values_match_scipy(rows):
    x, y = map(np.array, zip(*rows))
    c = pearson(x, y)
    assume(c is not None and abs(c.r) < 1 - 1e-9)
    ref = stats.pearsonr(x, y)
    assert c.r == pytest.approx(ref[0], abs=1e-9)
    assert c.p == pytest.approx(ref[1], abs=1e-9)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)), min_size=3, max_size=30),
       st.sampled_from([-3.0, -0.5, 2.0]), st.sampled_from([-1.0, 4.0]))
def test_pearson_symmetry_and_affine(rows, a, c):
    x, y = map(lambda v: np.array(v, float), zip(*rows))
    r = pearson(x, y)
    assume(r is not None)
    assert pearson(y, x).r == pytest.approx(r.r, abs=1e-12)
    assert pearson(a * x + 7, c * y - 2).r == pytest.approx(np.sign(a * c) * r.r, abs=1e-9)


@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=3, max_size=25))
def test_spearman_monotone_invariance(rows):
    x, y = map(lambda v: np.array(v, float), zip(*rows))
    s = spearman(x, y)
    assume(s is not None)
    ref = stats.spearmanr(x, y)[0]
    assert s.r == pytest.approx(ref, abs=1e-9)
    assert spearman(np.exp(x / 10), y ** 3).r == pytest.approx(s.r, abs=1e-12)


def test_bh_examples():
    adj, rej = bh_adjust([0.01, 0.02, 0.03, 0.04, 0.05])
    assert adj.tolist() == [0.05] * 5 and rej.all()
    adj, _ = bh_adjust([0.3])
    assert adj.tolist() == [0.3]
    assert not bh_adjust([1.0, 1.0, 1.0])[1].any()
    with pytest.raises(ParameterError):
        bh_adjust([0.5, 1.2])


def _brute_bh(p, fdr):
    # largest subset size k such that the k smallest all satisfy the step-up rule
    m = len(p)
    best = 0
    for k in range(1, m + 1):
        for subset in itertools.combinations(range(m), k):
            kth = max(p[i] for i in subset)
            if sorted(p)[k - 1] == kth and kth <= k * fdr / m:
                best = max(best, k)
    if best == 0:
        return [False] * m
    cut = sorted(p)[best - 1]
    return [v <= cut for v in p]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from([0.001, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8, 1.0]),
                min_size=1, max_size=8))
def test_bh_flags_and_monotonicity(p):
    adj, rej = bh_adjust(p)
    assert rej.tolist() == _brute_bh(p, 0.25)
    assert np.all(adj >= np.asarray(p) - 1e-15)
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(adj[order]) >= 0)


# --- uniformity ------------------------------------------------------------

def planted(n_readings, rng, n_tok=60, labels=("i", "u", "a")):
    per = {}
    for r in range(n_readings):
        name = f"r{r:02d}"
        m = rng.normal(0, 1.0)
        toks = []
        for lab in labels:
            base = {"i": 8.0, "u": 8.5}.get(lab)
            for j in range(n_tok):
                mu = (base + m) if base is not None else rng.normal(14, 1.0)
                toks.append(vtok(len(toks), lab, erb_to_hz(rng.normal(mu, 0.3)), 1500.0,
                                 reading=name))
        per[name] = toks
    return per


def test_planted_pair_recovered():
    per = planted(30, np.random.default_rng(6))
    rows = uniformity_table(per)
    assert rows[0].pair == ("i", "u") and rows[0].r >= 0.9
    assert all(r.p_adjusted >= r.p for r in rows)


def test_pair_in_nine_readings_excluded():
    per = planted(9, np.random.default_rng(7))
    diag = []
    assert uniformity_table(per, diagnostics=diag) == [] and diag


def test_too_few_tokens_excluded():
    per = planted(12, np.random.default_rng(8), n_tok=49)
    assert uniformity_table(per) == []


def test_rank_stable_between_hz_and_erb():
    per = planted(30, np.random.default_rng(9))
    erb = [r.pair for r in uniformity_table(per, measure="f1_erb")]
    hz = [r.pair for r in uniformity_table(per, measure="f1_hz")]
    assert erb[0] == hz[0]


def test_unknown_measure():
    with pytest.raises(ParameterError):
        uniformity_table({}, measure="f9")
