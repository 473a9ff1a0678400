import json
import math
import warnings
from decimal import ROUND_CEILING, Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from everlast.between_thresholds import Answer, BetweenThresholds, BTConfig, FixedUniforms, bt_min_gap
from everlast.concepts import ConceptClass, Dataset, Distribution, Hypothesis, empirical_error
from everlast.generic_bbl import (
    GenericBBL,
    PredictorConfig,
    PredictorFailure,
    PreflightWarning,
    initial_n,
    phase_scalars,
    preflight_validate,
    required_sample_size,
)

getcontext().prec = 80
D = Decimal
LN2 = D(2).ln()


def log2(x):
    return D(x).ln() / LN2


def ceil(x):
    return int(x.to_integral_value(rounding=ROUND_CEILING))


def schedule_oracle(i, alpha, beta, eps, delta, tau, vc, r_mult=25600, c_mult=64):
    """Independent Decimal evaluation of the per-phase scalars."""
    a = D(alpha) / D(2) ** i
    b = D(beta) / D(2) ** i
    e, d = D(eps), D(delta)
    lam = ceil((8 * vc * log2(13 / a) + 4 * log2(2 / b)) / a)
    T = ceil(D(tau) * lam * log2(1 / d) * log2(lam / (e * a * b * d)) ** 2 / (a * e))
    R = ceil(D(r_mult) * lam * T / e)
    c = ceil(D(c_mult) * a * R)
    eps_i = 1 / (3 * (c * (2 / d).ln()).sqrt())
    return dict(lambda_i=lam, T_i=T, R_i=R, c_i=c, eps_i=eps_i, delta_i=d / (2 * c))


def initial_n_oracle(alpha, beta, eps, delta, tau, vc):
    a, b, e, d = D(alpha), D(beta), D(eps), D(delta)
    A = 8 * vc * log2(26 / a) + 4 * log2(4 / b)
    m = 3 + (e + 4).exp()
    n = 8 * D(tau) / (a**3 * e**2) * A**2 * log2(1 / d) * log2(8 * A / (e * a**2 * b * d)) ** 2 * m
    return ceil(n)


def cfg(**kw):
    base = dict(
        concept_class=ConceptClass.threshold(16), alpha=0.5, beta=0.5, epsilon=1.0, delta=0.5,
        tau=1e-9, r_multiplier=4, c_multiplier=64, subsample_denominator=1,
    )
    base.update(kw)
    return PredictorConfig(**base)


EXACT = dict(alpha=1 / 17, beta=1 / 17, delta=1 / 17, epsilon=0.5, tau=1.1e10 + 1)


def exact_cfg(**kw):
    return PredictorConfig(ConceptClass.threshold(1024), mode="paper-exact", **{**EXACT, **kw})


# quiet config: T_1 = 2000 and c_i = 1, so the per-query noise scale is about 0.01
QUIET = dict(tau=0.0131, r_multiplier=0.01, c_multiplier=1e-4)


def fitted(config, target=None, seed=0):
    N = config.concept_class.domain_size
    target = target or Hypothesis.threshold(N // 2, N)
    rng = np.random.default_rng(seed + 1000)
    X = rng.integers(0, N, size=required_sample_size(config))
    return GenericBBL.from_config(config, random_state=seed).fit(X, target.predict(X)), target


# -- schedule arithmetic -----------------------------------------------------------------


def test_phase_one_example_matches_oracle():
    c = cfg(tau=1.0, delta=1 / 16, r_multiplier=25600, c_multiplier=64, subsample_denominator=None)
    sc = phase_scalars(1, c)
    want = schedule_oracle(1, 0.5, 0.5, 1.0, 1 / 16, 1.0, 1)
    assert sc.lambda_i == 231 == want["lambda_i"]
    assert (sc.T_i, sc.R_i, sc.c_i) == (want["T_i"], want["R_i"], want["c_i"])
    assert sc.eps_i == pytest.approx(float(want["eps_i"]), rel=1e-14)
    assert sc.delta_i == pytest.approx(float(want["delta_i"]), rel=1e-14)


@given(
    st.integers(1, 6),
    st.floats(0.01, 0.9),
    st.floats(0.01, 0.9),
    st.floats(0.05, 1.0),
    st.floats(1e-6, 0.5),
    st.floats(1e-6, 10.0),
)
def test_phase_scalars_oracle(i, alpha, beta, eps, delta, tau):
    c = cfg(alpha=alpha, beta=beta, epsilon=eps, delta=delta, tau=tau, r_multiplier=25600, c_multiplier=64)
    sc = phase_scalars(i, c)
    want = schedule_oracle(i, alpha, beta, eps, delta, tau, 1)
    assert (sc.lambda_i, sc.T_i, sc.R_i, sc.c_i) == (want["lambda_i"], want["T_i"], want["R_i"], want["c_i"])
    assert sc.alpha_i == alpha / 2**i and sc.beta_i == beta / 2**i
    assert sc.c_i * sc.delta_i == pytest.approx(delta / 2, rel=1e-14)
    assert sc.size_s == sc.lambda_i * sc.T_i
    assert sc.t_upper - sc.t_lower == pytest.approx(2 * sc.alpha_i, abs=1e-15)


def test_initial_n_scaled_example():
    c = cfg(alpha=0.25, beta=0.25, delta=1 / 16, tau=1.0, subsample_denominator=None)
    assert initial_n(c) == initial_n_oracle(0.25, 0.25, 1.0, 1 / 16, 1.0, 1)


def test_initial_n_exact_config_exceeds_1e15():
    n = initial_n(exact_cfg())
    assert n == initial_n_oracle(1 / 17, 1 / 17, 0.5, 1 / 17, 1.1e10 + 1, 1)
    assert n > 10**15
    assert required_sample_size(exact_cfg()) >= n


def test_initial_n_increases_as_alpha_decreases():
    vals = [initial_n(cfg(alpha=a, tau=1.0)) for a in (0.5, 0.3, 0.2, 0.1, 0.05)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_required_sample_size_rule():
    c = cfg(subsample_denominator=None)
    sc = phase_scalars(1, c)
    m = Decimal(3) + Decimal(5).exp()
    assert required_sample_size(c) == ceil(sc.lambda_i * sc.T_i * m / Decimal(1))


def test_paper_exact_relabel_ratio():
    c = exact_cfg()
    for i in (1, 2, 3):
        sc = phase_scalars(i, c)
        assert Decimal(sc.R_i) / Decimal(sc.size_s) == pytest.approx(25600 / 0.5, rel=1e-15)
        m = Decimal(3) + (Decimal("0.5") + 4).exp()
        s_hat = int(Decimal("0.5") * sc.size_s / m)
        d_hat = int(Decimal("0.5") * sc.R_i / m)
        assert d_hat / s_hat == pytest.approx(25600 / 0.5, rel=1e-9)


# -- configuration -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "change",
    [dict(tau=1e10), dict(alpha=1 / 16), dict(beta=0.1), dict(delta=0.07), dict(epsilon=1.0), dict(r_multiplier=10)],
)
def test_paper_exact_requirements(change):
    with pytest.raises(ValueError):
        exact_cfg(**change)


def test_scaled_requires_positive_overrides():
    for bad in (dict(tau=0), dict(r_multiplier=-1), dict(c_multiplier=0), dict(subsample_denominator=0)):
        with pytest.raises(ValueError):
            cfg(**bad)


def test_config_dict_roundtrip_and_unknown_field():
    c = cfg()
    d = json.loads(json.dumps(c.to_dict()))
    assert PredictorConfig.from_dict(d) == c
    d["gamma"] = 1
    with pytest.raises(ValueError, match="gamma"):
        PredictorConfig.from_dict(d)


# -- preflight ----------------------------------------------------------------------------


def test_preflight_scaled_warns_not_raises():
    with pytest.warns(PreflightWarning):
        rep = preflight_validate(cfg(), horizon=2)
    assert not rep.passed
    assert {c.name for c in rep.checks} >= {"relabel_supply", "relabel_capacity", "bt_gap", "bt_accuracy"}
    assert len(rep.checks) == 2 * 5


def test_preflight_gap_lhs_is_two_alpha():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = preflight_validate(cfg(), horizon=3)
    for chk in rep.checks:
        if chk.name == "bt_gap":
            assert float(chk.lhs) == pytest.approx(2 * 0.5 / 2**chk.phase, rel=1e-11)


def test_preflight_paper_exact_report_shape():
    rep = preflight_validate(exact_cfg(), horizon=5)
    assert len(rep.checks) == 25
    assert json.dumps(rep.to_dict())
    # privacy, supply, capacity and accuracy hold in every phase
    for chk in rep.checks:
        if chk.name != "bt_gap":
            assert chk.ok, chk


# -- initialization -----------------------------------------------------------------------


def test_fit_rejects_small_sample():
    c = cfg()
    need = required_sample_size(c)
    model = GenericBBL.from_config(c, random_state=0)
    with pytest.raises(ValueError, match=str(need)):
        model.fit(np.zeros(need - 1, dtype=int), np.zeros(need - 1, dtype=int))


def test_partition_and_consistency():
    c = cfg(tau=0.004)
    model, target = fitted(c)
    sc = model.scalars_
    assert sc.T_i > 1
    assert len(model.S_) == sc.lambda_i * sc.T_i
    assert len(model.ensemble_) == sc.T_i
    blocks = model.S_.points.reshape(sc.T_i, sc.lambda_i)
    labels = model.S_.labels.reshape(sc.T_i, sc.lambda_i)
    for h, p, y in zip(model.ensemble_, blocks, labels):
        assert empirical_error(h, Dataset(p, y, 16)) == 0


def test_bt_instantiated_with_phase_parameters():
    model, _ = fitted(cfg())
    sc = model.scalars_
    bc = model.bt_.config
    assert (bc.n, bc.c, bc.epsilon, bc.delta) == (sc.T_i, sc.c_i, sc.eps_i, sc.delta_i)
    assert (bc.t_lower, bc.t_upper) == (0.5 - sc.alpha_i, 0.5 + sc.alpha_i)


def test_same_seed_same_ensemble_and_answers():
    a, _ = fitted(cfg(), seed=3)
    b, _ = fitted(cfg(), seed=3)
    assert a.ensemble_ == b.ensemble_
    q = np.random.default_rng(0).integers(0, 16, 2000)
    ra, rb = a.predict_stream(q), b.predict_stream(q)
    assert np.array_equal(ra.labels, rb.labels) and np.array_equal(ra.answers, rb.answers)


def test_estimator_params():
    m = GenericBBL(ConceptClass.threshold(8), alpha=0.3)
    assert m.get_params()["alpha"] == 0.3
    assert m.set_params(beta=0.2).beta == 0.2


# -- prediction ---------------------------------------------------------------------------


def test_label_is_zero_iff_answer_is_l():
    model, _ = fitted(cfg())
    res = model.predict_stream(np.random.default_rng(1).integers(0, 16, 3000))
    assert np.array_equal(res.labels == 0, res.answers == 0)


def test_unanimous_ensemble():
    model, target = fitted(cfg(**QUIET))
    assert model.scalars_.T_i == 2000
    hi = [x for x in range(16) if model.votes_[x] == 1.0]
    lo = [x for x in range(16) if model.votes_[x] == 0.0]
    assert hi and lo
    for x in hi:
        p = model.predict_one(x)
        assert (p.answer, p.label) == (Answer.R, 1)
    for x in lo:
        p = model.predict_one(x)
        assert (p.answer, p.label) == (Answer.L, 0)


def test_split_ensemble_zero_noise_gives_top():
    model, _ = fitted(cfg(c_multiplier=64))
    sc = model.scalars_
    model.bt_ = BetweenThresholds(
        BTConfig(sc.T_i, sc.eps_i, sc.t_lower, sc.t_upper, sc.c_i), FixedUniforms(), enforce_gap=False
    )
    votes = model.votes_.copy()
    votes[5] = 0.5
    model.votes_ = votes
    before = model.bt_.remaining
    p = model.predict_one(5)
    assert (p.answer, p.label) == (Answer.TOP, 1)
    assert model.bt_.remaining == before - 1


def test_failure_is_sticky_and_last_query_answered():
    model, _ = fitted(cfg(c_multiplier=1e-3))
    assert model.scalars_.c_i == 1
    q = np.random.default_rng(2).integers(0, 16, 5000)
    res = model.predict_stream(q)
    assert res.failed and model.failed_
    assert res.answers[-1] == 2 and res.labels[-1] == 1
    assert (res.answers[:-1] != 2).all()
    with pytest.raises(PredictorFailure):
        model.predict_one(0)
    with pytest.raises(PredictorFailure):
        model.predict([1, 2])


def test_predict_failure_carries_partial_labels():
    model, _ = fitted(cfg(c_multiplier=1e-3))
    q = np.random.default_rng(2).integers(0, 16, 5000)
    with pytest.raises(PredictorFailure) as info:
        model.predict(q)
    assert 0 < info.value.labels.size < q.size


def test_phase_transitions_structural():
    c = cfg()
    model, target = fitted(c, seed=4)
    R1 = model.scalars_.R_i
    model.predict_stream(np.full(R1 - 1, 3))
    assert model.phase_ == 1
    model.predict_one(3)
    # the transition runs right after the R_1-th query
    assert model.phase_ == 2
    R2 = model.scalars_.R_i
    model.predict_stream(np.random.default_rng(0).integers(0, 16, R2))
    assert model.phase_ == 3
    for rec in model.phases_[:-1]:
        assert rec.completed and rec.s_realizable
        assert not rec.transition["truncated"]
    for rec in model.phases_:
        sc = rec.scalars
        assert rec.size_s == sc.lambda_i * sc.T_i
        assert sc.alpha_i == 0.5 / 2**sc.i and sc.beta_i == 0.5 / 2**sc.i
    assert c.concept_class.contains(model.last_relabel_.hypothesis)
    names = [e["name"] for e in model.ledger_.entries]
    assert names.count("between_thresholds") == 3 and names.count("relabel_subsampled") == 2
    json.dumps(model.snapshot())


def test_scaled_truncation_warns():
    c = cfg(r_multiplier=2)
    model, _ = fitted(c)
    with pytest.warns(RuntimeWarning, match="truncating"):
        model.predict_stream(np.random.default_rng(0).integers(0, 16, model.scalars_.R_i))
    assert model.phases_[0].transition["truncated"]


def test_trajectory_is_deterministic():
    c = cfg()
    q = np.random.default_rng(9).integers(0, 16, 4000)
    outs = []
    for _ in range(2):
        model, _ = fitted(c, seed=11)
        res = model.predict_stream(q)
        outs.append((res.labels.tobytes(), res.answers.tobytes(), json.dumps(model.snapshot(), sort_keys=True)))
    assert outs[0] == outs[1]


def test_expected_error_matches_simulation():
    model, target = fitted(cfg())
    dist = Distribution.uniform(16)
    exact = model.expected_error(target, dist)
    # draw fresh noise with the same thresholds and ensemble
    rng = np.random.default_rng(0)
    x = rng.integers(0, 16, 200000)
    nu = rng.laplace(0, model.bt_.noise_scale, x.size)
    lab = (model.votes_[x] + nu >= model.bt_.noisy_lower).astype(int)
    mc = (lab != target.predict(x)).mean()
    assert abs(mc - exact) <= 4 * math.sqrt(exact * (1 - exact) / x.size)


def test_gap_flag_reported():
    model, _ = fitted(cfg())
    sc = model.scalars_
    assert model.gap_ok_ == (2 * sc.alpha_i >= bt_min_gap(sc.eps_i, sc.delta_i, sc.T_i))
