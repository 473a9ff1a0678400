import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from everlast.between_thresholds import (
    Answer,
    BetweenThresholds,
    BTConfig,
    FixedUniforms,
    GapTooSmallError,
    HaltedError,
    answers_to_string,
    bt_init,
    bt_min_gap,
    bt_min_n,
    bt_query,
)
from everlast.dp import c_halt_epsilon

mpmath.mp.dps = 50


def gap_oracle(eps, delta, n):
    eps, delta = mpmath.mpf(eps), mpmath.mpf(delta)
    return 12 / (eps * n) * (mpmath.log(10 / eps, 2) + mpmath.log(1 / delta, 2) + 1)


def min_n_oracle(alpha, beta, eps, k):
    a, b, e = mpmath.mpf(alpha), mpmath.mpf(beta), mpmath.mpf(eps)
    return int(mpmath.ceil(8 / (a * e) * (mpmath.log(k + 1, 2) + mpmath.log(1 / b, 2))))


def zero_noise(cfg):
    return BetweenThresholds(cfg, FixedUniforms(), enforce_gap=False)


# -- formulas ---------------------------------------------------------------------


def test_min_gap_examples():
    assert bt_min_gap(1, 0.01, 1000) == pytest.approx(float(gap_oracle(1, 0.01, 1000)), rel=1e-12)
    assert bt_min_gap(1, 0.01, 1000) == pytest.approx(0.1316, abs=1e-4)
    # (12/5000)(log2 20 + log2 1000 + 1) evaluates to 0.03669
    v = bt_min_gap(0.5, 0.001, 10000)
    assert v == pytest.approx(float(gap_oracle(0.5, 0.001, 10000)), rel=1e-12)
    assert v == pytest.approx(0.036691, abs=1e-6)


@given(st.floats(0.01, 1), st.floats(1e-9, 0.99), st.integers(1, 10**6))
def test_min_gap_oracle_and_decreasing(eps, delta, n):
    assert bt_min_gap(eps, delta, n) == pytest.approx(float(gap_oracle(eps, delta, n)), rel=1e-10)
    assert bt_min_gap(eps, delta, n + 1) < bt_min_gap(eps, delta, n)


def test_min_n_examples():
    assert min_n_oracle(0.1, 0.05, 1, 100) == 879
    assert bt_min_n(0.1, 0.05, 1, 100) == 879
    assert min_n_oracle(0.2, 0.1, 1, 15) == 293
    assert bt_min_n(0.2, 0.1, 1, 15) == 293


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.05, 1), st.integers(1, 10**5))
def test_min_n_oracle_and_monotone(alpha, beta, eps, k):
    assert bt_min_n(alpha, beta, eps, k) == min_n_oracle(alpha, beta, eps, k)
    assert bt_min_n(alpha, beta, eps, 2 * k + 1) > bt_min_n(alpha, beta, eps, k)


@pytest.mark.parametrize("args", [(0, 0.1, 10), (1.5, 0.1, 10), (0.5, 0, 10), (0.5, 1, 10), (0.5, 0.1, 0)])
def test_min_gap_rejects(args):
    with pytest.raises(ValueError):
        bt_min_gap(*args)


# -- stubbed-noise examples ----------------------------------------------------------


def test_zero_noise_thresholds():
    bt = zero_noise(BTConfig(10, 1.0, 0.4, 0.6))
    assert bt.mu == 0.0
    assert (bt.noisy_lower, bt.noisy_upper) == (0.4, 0.6)


def test_zero_noise_answers():
    bt = zero_noise(BTConfig(10, 1.0, 0.4, 0.6, c=3))
    assert bt_query(bt, 0.0) is Answer.L
    assert bt_query(bt, 1.0) is Answer.R
    assert bt.remaining == 3


def test_in_gap_query_halts_with_budget_one():
    bt = zero_noise(BTConfig(10, 1.0, 0.4, 0.6, c=1))
    assert bt.query(0.5) is Answer.TOP
    assert bt.halted
    with pytest.raises(HaltedError):
        bt.query(0.0)


def test_threshold_equality_is_top():
    bt = zero_noise(BTConfig(10, 1.0, 0.25, 0.75, c=5))
    assert bt.query(0.25) is Answer.TOP
    assert bt.query(0.75) is Answer.TOP


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(0.05, 0.45), st.floats(0.55, 0.95))
def test_zero_noise_is_two_threshold_classifier(qs, lo, hi):
    bt = zero_noise(BTConfig(5, 1.0, lo, hi, c=len(qs) + 1))
    for q in qs:
        want = Answer.L if q < lo else Answer.R if q > hi else Answer.TOP
        assert bt.query(q) is want


def test_noise_uses_inverse_cdf_scales():
    cfg = BTConfig(4, 0.5, 0.3, 0.7, c=2)
    # u = 0.75 gives ln 2 times the scale
    bt = BetweenThresholds(cfg, FixedUniforms([0.75, 0.75]), enforce_gap=False)
    assert bt.mu == pytest.approx(2 / (0.5 * 4) * math.log(2))
    assert bt.noise_scale == pytest.approx(6 / (0.5 * 4))
    # nu = 3 ln 2 pushes 0 above the noisy upper threshold 0.7 - ln 2
    assert bt.query(0.0) is Answer.R


def test_query_out_of_range():
    bt = zero_noise(BTConfig(10, 1.0, 0.4, 0.6))
    with pytest.raises(ValueError):
        bt.query(1.5)


# -- configuration and privacy plumbing ---------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        BTConfig(10, 1.0, 0.6, 0.4)
    with pytest.raises(ValueError):
        BTConfig(0, 1.0, 0.4, 0.6)
    with pytest.raises(ValueError):
        BTConfig(10, 1.0, 0.4, 0.6, c=0)


def test_gap_enforced():
    cfg = BTConfig(100, 1.0, 0.45, 0.55, delta=0.01)
    assert cfg.gap < cfg.min_gap()
    with pytest.raises(GapTooSmallError):
        bt_init(cfg, 0)
    with pytest.warns(UserWarning):
        bt_init(cfg, 0, enforce_gap=False)
    wide = BTConfig(10**4, 1.0, 0.3, 0.7, delta=0.01)
    assert bt_init(wide, 0).config is wide


def test_privacy_composite():
    bt = bt_init(BTConfig(10**4, 0.5, 0.3, 0.7, c=4, delta=1e-6), 0)
    p = bt.privacy
    assert p.epsilon == pytest.approx(c_halt_epsilon(0.5, 1e-6, 4))
    assert p.delta == pytest.approx(8e-6)


def test_same_seed_same_thresholds():
    cfg = BTConfig(50, 1.0, 0.3, 0.7)
    a = BetweenThresholds(cfg, 9, enforce_gap=False)
    b = BetweenThresholds(cfg, 9, enforce_gap=False)
    assert (a.noisy_lower, a.noisy_upper) == (b.noisy_lower, b.noisy_upper)


def test_mu_variance():
    eps, n = 1.0, 20
    mus = np.array(
        [BetweenThresholds(BTConfig(n, eps, 0.3, 0.7), s, enforce_gap=False).mu for s in range(20000)]
    )
    var = 8 / (eps * n) ** 2
    assert mus.var() == pytest.approx(var, rel=0.06)


# -- batching and the halting budget ------------------------------------------------


@given(st.integers(0, 2**32), st.integers(1, 6), st.lists(st.floats(0, 1), min_size=1, max_size=60))
def test_batch_equals_sequential(seed, c, qs):
    cfg = BTConfig(8, 1.0, 0.4, 0.6, c=c)
    a = BetweenThresholds(cfg, np.random.default_rng(seed), enforce_gap=False)
    b = BetweenThresholds(cfg, np.random.default_rng(seed), enforce_gap=False)
    batch = a.query_many(qs)
    seq = []
    for q in qs:
        if b.halted:
            break
        seq.append(b.query(q))
    assert batch == seq
    assert (a.remaining, a.n_top, a.n_queries) == (b.remaining, b.n_top, b.n_queries)


@given(st.integers(0, 2**32), st.integers(1, 6), st.lists(st.floats(0, 1), min_size=1, max_size=80))
def test_top_count_is_min_of_budget_and_gap_events(seed, c, qs):
    bt = BetweenThresholds(BTConfig(3, 1.0, 0.3, 0.7, c=c), np.random.default_rng(seed), enforce_gap=False)
    answers = bt.query_many(qs)
    tops = [i for i, a in enumerate(answers) if a is Answer.TOP]
    assert len(tops) <= c
    if bt.halted:
        assert len(tops) == c and tops[-1] == len(answers) - 1
    else:
        assert len(answers) == len(qs)


def test_answers_to_string():
    assert answers_to_string([Answer.L, Answer.R, Answer.TOP]) == "LRT"
    assert answers_to_string([0, 1, 2]) == "LRT"


def test_snapshot_fields():
    bt = zero_noise(BTConfig(10, 1.0, 0.4, 0.6, c=2))
    bt.query(0.5)
    snap = bt.snapshot()
    assert snap["remaining"] == 1 and snap["n_queries"] == 1 and not snap["halted"]
