import math

import numpy as np
import pytest

from everlast.concepts import ConceptClass, Dataset, Distribution, Hypothesis
from everlast.generic_bbl import GenericBBL, PredictorConfig
from everlast.harness import (
    ADVERSARIES,
    FAILED,
    HIDDEN,
    Adversary,
    ConstantPairAdversary,
    EchoPredictor,
    FlipOnLastAnswerAdversary,
    GameRuleViolation,
    OneDiffQueryAdversary,
    OneDiffTrainingAdversary,
    binomial_slack,
    bt_accuracy_suite,
    bt_halt_suite,
    labelboost_suite,
    map_trials,
    run_accuracy_experiment,
    run_privacy_game,
    transcript_smoke_test,
    trial_seed,
)


def fast_cfg(**kw):
    base = dict(
        concept_class=ConceptClass.threshold(16), alpha=0.5, beta=0.5, epsilon=1.0, delta=0.5,
        tau=1e-9, r_multiplier=4, c_multiplier=64, subsample_denominator=1,
    )
    base.update(kw)
    return PredictorConfig(**base)


class BBLFactory:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, seed):
        return GenericBBL.from_config(self.cfg, random_state=seed)


def echo(seed):
    return EchoPredictor(0.0, random_state=seed)


# -- game mechanics --------------------------------------------------------------------------


def test_identical_inputs_give_identical_transcripts():
    adv = ConstantPairAdversary(16, 231)
    f = BBLFactory(fast_cfg())
    for seed in range(5):
        t0 = run_privacy_game(adv, 0, 30, f, seed)
        t1 = run_privacy_game(adv, 1, 30, f, seed)
        assert t0.view() == t1.view()
        assert t0.outcome() == t1.outcome()


def test_seed_determinism():
    adv = FlipOnLastAnswerAdversary(16, 231, round_=4)
    f = BBLFactory(fast_cfg())
    a = run_privacy_game(adv, 1, 20, f, 7, 99)
    b = run_privacy_game(adv, 1, 20, f, 7, 99)
    assert a.to_dict() == b.to_dict()


def test_flag_hides_differing_round_and_keeps_later_ones():
    adv = OneDiffQueryAdversary(16, 20, round_=3)
    for b in (0, 1):
        tr = run_privacy_game(adv, b, 6, echo, 1)
        assert tr.flags[:3] == [0, 0, 0]
        assert tr.flags[3:] == [1, 1, 1, 1]
        assert tr.disclosed[2] == HIDDEN
        assert all(v in (0, 1) for i, v in enumerate(tr.disclosed) if i != 2)


def test_one_diff_training_sets_flag_at_start():
    tr = run_privacy_game(OneDiffTrainingAdversary(16, 20), 0, 3, echo, 0)
    assert tr.flags[0] == 1


class TwoDiffAdversary(Adversary):
    name = "two-diff"

    def training_sets(self, rng):
        S = self._base_training(rng)
        lab = S.labels.copy()
        lab[:2] = 1 - lab[:2]
        return S, Dataset(S.points, lab, self.domain_size)

    def query(self, r, view, rng):
        return 0, 0


class PostFlagCheater(Adversary):
    name = "post-flag-cheater"

    def training_sets(self, rng):
        S = self._base_training(rng)
        return S, S

    def query(self, r, view, rng):
        return (0, 1) if r in (1, 2) else (0, 0)


class OutOfDomain(Adversary):
    name = "out-of-domain"

    def training_sets(self, rng):
        S = self._base_training(rng)
        return S, S

    def query(self, r, view, rng):
        return self.domain_size, self.domain_size


@pytest.mark.parametrize("adv", [TwoDiffAdversary(8, 5), PostFlagCheater(8, 5), OutOfDomain(8, 5)])
def test_rule_violations_rejected(adv):
    with pytest.raises(GameRuleViolation):
        run_privacy_game(adv, 0, 4, echo, 0)


def test_failed_predictor_recorded():
    cfg = fast_cfg(c_multiplier=1e-3)
    adv = ConstantPairAdversary(16, 231)
    tr = run_privacy_game(adv, 0, 900, BBLFactory(cfg), 0)
    assert FAILED in tr.disclosed
    first = tr.disclosed.index(FAILED)
    assert all(v == FAILED for v in tr.disclosed[first:])


def test_adversary_library_names():
    assert set(ADVERSARIES) == {"constant-pair", "one-diff-training", "one-diff-query", "flip-on-last-answer"}


# -- smoke test -----------------------------------------------------------------------------


def test_smoke_identical_passes_at_zero():
    rep = transcript_smoke_test(ConstantPairAdversary(16, 231), 8, BBLFactory(fast_cfg()), 200, 0.0, 0.0, 5)
    assert rep["identical"]
    assert rep["empirical_violation"] == 0.0
    assert not rep["flagged"]
    assert "not a privacy proof" in rep["caveat"]


def test_smoke_flags_echo_canary():
    rep = transcript_smoke_test(OneDiffTrainingAdversary(16, 50), 5, echo, 300, 1.0, 1e-3, 0)
    assert rep["flagged"]
    assert rep["empirical_violation"] == pytest.approx(1.0)


def test_smoke_generic_bbl_one_diff_not_flagged():
    cfg = fast_cfg()
    rep = transcript_smoke_test(OneDiffTrainingAdversary(16, 231), 4, BBLFactory(cfg), 400, cfg.epsilon, cfg.delta, 2)
    assert not rep["flagged"], rep


def test_binomial_slack():
    assert binomial_slack(0.05, 2000) == pytest.approx(3 * math.sqrt(0.05 * 0.95 / 2000))


def test_trial_seed_stable_and_distinct():
    assert trial_seed(1, 2) == trial_seed(1, 2)
    assert len({trial_seed(1, k) for k in range(1000)}) == 1000
    assert 0 <= trial_seed(5, 3) < 2**63


def _square(v):
    return v * v


def test_map_trials_keeps_order(monkeypatch):
    monkeypatch.setenv("EVERLAST_WORKERS", "2")
    assert map_trials(_square, list(range(20))) == [v * v for v in range(20)]
    monkeypatch.setenv("EVERLAST_WORKERS", "1")
    assert map_trials(_square, list(range(5))) == [0, 1, 4, 9, 16]


# -- accuracy experiment ------------------------------------------------------------------


QUIET = dict(tau=0.0131, r_multiplier=0.01, c_multiplier=1e-4)


def test_point_mass_error_zero():
    cfg = fast_cfg(**QUIET)
    dist = Distribution.point_mass(16, 11)
    target = Hypothesis.threshold(8, 16)
    rows = run_accuracy_experiment(cfg, dist, target, 3000, 3, 0, phases=1)
    for r in rows:
        assert not r["failed"]
        assert r["expected_error"][0] < 1e-12
        assert r["stream_error"] == [0.0]
        assert r["n_top"] == [0]


def test_accuracy_experiment_structure():
    cfg = fast_cfg()
    rows = run_accuracy_experiment(cfg, Distribution.uniform(16), Hypothesis.threshold(8, 16), 10**6, 3, 1, phases=2)
    for r in rows:
        assert r["phases_completed"] == 2
        assert r["sizes_exact"] and r["realizable"] and r["halving_exact"]
        assert len(r["expected_error"]) == 3
    again = run_accuracy_experiment(cfg, Distribution.uniform(16), Hypothesis.threshold(8, 16), 10**6, 3, 1, phases=2)
    assert rows == again


# -- mechanism suites ------------------------------------------------------------------------


def test_bt_halt_suite_exact():
    rows = bt_halt_suite(4, 60, 0)
    assert {r["stream"] for r in rows} >= {"all-in-gap"}
    assert all(r["exact"] for r in rows)


def test_bt_accuracy_suite_small():
    rows = bt_accuracy_suite(0.1, 0.05, 1.0, 100, 879, 100, 0)
    assert len(rows) == 100
    assert sum(r["violated"] for r in rows) / 100 <= 0.05 + binomial_slack(0.05, 100)


def test_labelboost_suite_capacity_checked():
    with pytest.raises(ValueError):
        labelboost_suite(32, 20, 64, 0.1, 0.05, 2, 0)
    rows = labelboost_suite(32, 200, 64, 0.1, 0.05, 20, 0)
    assert all(r["realizable"] for r in rows)
