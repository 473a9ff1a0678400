"""Experiment drivers: accuracy experiments for the predictor, the adaptive
privacy game with its statistical audit, and the seeded suites behind the
command line and the acceptance tests.

Every driver takes a top-level integer seed.  Trial ``k`` derives all of its
randomness from that seed and ``k``, so results do not depend on how trials
are scheduled across worker processes.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import child_stream
from .between_thresholds import Answer, BetweenThresholds, BTConfig
from .concepts import (
    ConceptClass,
    Dataset,
    Distribution,
    Hypothesis,
    empirical_error,
    generalization_error,
)
from .dp import FiniteDistribution, max_violation
from .generic_bbl import GenericBBL, PredictorFailure, required_sample_size
from .label_boost import label_boost, label_boost_capacity
from .reduction import (
    ScriptedStream,
    accuracy_boost,
    boost_rounds,
    hypothesis_learner,
    learner_rounds,
)

__all__ = [
    "Adversary",
    "ConstantPairAdversary",
    "OneDiffTrainingAdversary",
    "OneDiffQueryAdversary",
    "FlipOnLastAnswerAdversary",
    "ADVERSARIES",
    "EchoPredictor",
    "GameRuleViolation",
    "Transcript",
    "run_privacy_game",
    "transcript_smoke_test",
    "run_accuracy_experiment",
    "bt_accuracy_suite",
    "bt_halt_suite",
    "labelboost_suite",
    "learner_failure_suite",
    "boost_majority_suite",
    "binomial_slack",
    "trial_seed",
    "map_trials",
]


def binomial_slack(p, n, k=3.0):
    """``k`` standard deviations of a frequency estimate at rate ``p`` from ``n`` trials."""
    return k * math.sqrt(p * (1 - p) / n)


def trial_seed(seed, *key):
    """A 63-bit integer seed derived from ``seed`` and an integer key path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _workers():
    raw = os.environ.get("EVERLAST_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"EVERLAST_WORKERS must be an integer, got {raw!r}") from None


def map_trials(fn, args, workers=None):
    """``[fn(a) for a in args]``, optionally across processes; order is kept."""
    workers = _workers() if workers is None else workers
    args = list(args)
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args, chunksize=max(1, len(args) // (4 * workers))))


# -- privacy game --------------------------------------------------------------


class GameRuleViolation(RuntimeError):
    """An adversary move breaks the rules of the privacy game."""


class Adversary:
    """Base class of game adversaries.

    Subclasses implement :meth:`training_sets` and :meth:`query`; both get the
    adversary's own generator, so its moves are reproducible from its seed.
    """

    name = "adversary"

    def __init__(self, domain_size, n):
        self.domain_size = domain_size
        self.n = n

    def _base_training(self, rng):
        pts = rng.integers(0, self.domain_size, size=self.n)
        t = self.domain_size // 2
        return Dataset(pts, (pts >= t).astype(np.int8), self.domain_size)

    def training_sets(self, rng):
        raise NotImplementedError

    def query(self, r, view, rng):
        """Query pair for round ``r`` (1-based) given the disclosed view so far."""
        raise NotImplementedError

    def describe(self):
        return {"name": self.name, "domain_size": self.domain_size, "n": self.n}


class ConstantPairAdversary(Adversary):
    """Identical training sets and identical query pairs, fixed by its seed."""

    name = "constant-pair"

    def training_sets(self, rng):
        S = self._base_training(rng)
        self._x = int(rng.integers(self.domain_size))
        return S, S

    def query(self, r, view, rng):
        x = int(rng.integers(self.domain_size)) if r % 2 else self._x
        return x, x


class OneDiffTrainingAdversary(Adversary):
    """Training sets differing in the label of one example; equal queries at
    that example's point."""

    name = "one-diff-training"

    def __init__(self, domain_size, n, position=0):
        super().__init__(domain_size, n)
        self.position = position

    def training_sets(self, rng):
        S0 = self._base_training(rng)
        lab = S0.labels.copy()
        lab[self.position] = 1 - lab[self.position]
        self._x = int(S0.points[self.position])
        return S0, Dataset(S0.points, lab, self.domain_size)

    def query(self, r, view, rng):
        return self._x, self._x


class OneDiffQueryAdversary(Adversary):
    """Identical training sets; the query pair differs in round ``round_`` only."""

    name = "one-diff-query"

    def __init__(self, domain_size, n, round_=1):
        super().__init__(domain_size, n)
        self.round_ = round_

    def training_sets(self, rng):
        S = self._base_training(rng)
        return S, S

    def query(self, r, view, rng):
        if r == self.round_:
            return 0, self.domain_size - 1
        x = int(rng.integers(self.domain_size))
        return x, x


class FlipOnLastAnswerAdversary(Adversary):
    """Identical training sets; walks its query point up or down depending on
    the last disclosed answer and plays one differing pair at ``round_``."""

    name = "flip-on-last-answer"

    def __init__(self, domain_size, n, round_=None):
        super().__init__(domain_size, n)
        self.round_ = round_

    def training_sets(self, rng):
        S = self._base_training(rng)
        self._x = self.domain_size // 2
        return S, S

    def query(self, r, view, rng):
        last = next((v for v in reversed(view) if v in (0, 1)), None)
        if last == 1:
            self._x = max(0, self._x - 1)
        elif last == 0:
            self._x = min(self.domain_size - 1, self._x + 1)
        if self.round_ is not None and r == self.round_:
            return self._x, (self._x + 1) % self.domain_size
        return self._x, self._x


ADVERSARIES = {
    cls.name: cls
    for cls in (
        ConstantPairAdversary,
        OneDiffTrainingAdversary,
        OneDiffQueryAdversary,
        FlipOnLastAnswerAdversary,
    )
}


class EchoPredictor:
    """Deliberately non-private canary: answers a query with the training label
    of the first example at that point (0 when absent), flipped with
    probability ``flip``."""

    def __init__(self, flip=0.0, random_state=None):
        self.flip = flip
        self.random_state = random_state

    def fit(self, X, y):
        self._rng = np.random.default_rng(self.random_state)
        self._labels = {}
        for x, lab in zip(np.asarray(X).tolist(), np.asarray(y).tolist()):
            self._labels.setdefault(x, lab)
        return self

    def predict_one(self, x):
        lab = self._labels.get(int(x), 0)
        if self.flip and self._rng.random() < self.flip:
            lab = 1 - lab
        return lab


HIDDEN = "-"
FAILED = "X"


@dataclass
class Transcript:
    """The adversary's view of one execution of the game.

    ``disclosed[r-1]`` is the label revealed in round ``r``, ``"-"`` when the
    query pair differed and ``"X"`` once the predictor has failed.
    ``flags[r]`` is the flag after round ``r`` (index 0 is after training).
    ``b`` is kept for bookkeeping and is not part of the view.
    """

    adversary: str
    adversary_seed: int
    mechanism_seed: int
    b: int
    queries: list = field(default_factory=list)
    disclosed: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def view(self):
        """Hashable view: seeds, query pairs, disclosed predictions and flags."""
        return (
            self.adversary,
            self.adversary_seed,
            tuple(map(tuple, self.queries)),
            tuple(self.disclosed),
            tuple(self.flags),
        )

    def outcome(self, t=None):
        """Disclosed predictions as a string, truncated to ``t`` symbols."""
        s = "".join(str(v) for v in self.disclosed)
        return s if t is None else s[:t]

    def to_dict(self):
        return {
            "adversary": self.adversary,
            "adversary_seed": self.adversary_seed,
            "mechanism_seed": self.mechanism_seed,
            "b": self.b,
            "queries": self.queries,
            "disclosed": self.outcome(),
            "flags": self.flags,
        }


def _check_domain_point(x, N):
    if not (isinstance(x, (int, np.integer)) and 0 <= x < N):
        raise GameRuleViolation(f"query {x!r} is not a domain point")


def run_privacy_game(adversary, b, t, predictor_factory, seed, mechanism_seed=None):
    """Play the game for ``t`` rounds with the side-``b`` inputs.

    Parameters
    ----------
    adversary : Adversary
    b : {0, 1}
    t : int
        Number of prediction rounds.
    predictor_factory : callable
        ``predictor_factory(mechanism_seed)`` returns an unfitted predictor
        with ``fit(X, y)`` and ``predict_one(x)``.
    seed : int
        Adversary seed.
    mechanism_seed : int, optional
        Seed handed to the predictor; derived from ``seed`` when omitted, so
        both values of ``b`` share mechanism randomness.

    Raises
    ------
    GameRuleViolation
        Training sets differing in more than one position, or a differing
        query pair after the flag is set.
    """
    if b not in (0, 1):
        raise ValueError("b must be 0 or 1")
    if mechanism_seed is None:
        mechanism_seed = trial_seed(seed, 1)
    rng = child_stream(seed, 0)
    S0, S1 = adversary.training_sets(rng)
    if len(S0) != len(S1) or S0.domain_size != S1.domain_size:
        raise GameRuleViolation("training sets must have equal length over one domain")
    diff = S0.n_differences(S1)
    if diff > 1:
        raise GameRuleViolation(f"training sets differ in {diff} positions; at most 1 allowed")
    N = S0.domain_size
    flag = int(diff == 1)
    tr = Transcript(adversary.name, int(seed), int(mechanism_seed), b, flags=[flag])
    S = S1 if b else S0
    predictor = predictor_factory(mechanism_seed)
    predictor.fit(S.points, S.labels)
    failed = False
    for r in range(1, t + 1):
        x0, x1 = adversary.query(r, list(tr.disclosed), rng)
        _check_domain_point(x0, N)
        _check_domain_point(x1, N)
        if flag and x0 != x1:
            raise GameRuleViolation(f"round {r}: differing query pair after the flag was set")
        if x0 != x1:
            flag = 1
        x = x1 if b else x0
        if failed:
            label = FAILED
        else:
            try:
                label = int(_predict_one(predictor, x))
            except PredictorFailure:
                failed = True
                label = FAILED
        tr.queries.append([int(x0), int(x1)])
        tr.disclosed.append(label if x0 == x1 or label == FAILED else HIDDEN)
        tr.flags.append(flag)
    return tr


def _predict_one(predictor, x):
    out = predictor.predict_one(x)
    return getattr(out, "label", out)


def _smoke_trial(args):
    adversary, t, factory, seed, k = args
    # the adversary is one fixed strategy; only the mechanism's coins vary
    s = trial_seed(seed, 0)
    m = trial_seed(seed, k, 1)
    t0 = run_privacy_game(adversary, 0, t, factory, s, m)
    t1 = run_privacy_game(adversary, 1, t, factory, s, m)
    return t0.outcome(t), t1.outcome(t)


def transcript_smoke_test(adversary, t, predictor_factory, trials, epsilon, delta, seed, *, gamma=0.01):
    """Statistical audit of the game's indistinguishability requirement.

    Runs ``trials`` executions per side.  The adversary seed is fixed, so the
    adversary is one deterministic strategy; trial ``k`` draws a fresh
    mechanism seed shared between ``b = 0`` and ``b = 1``.  The audit turns
    each view into its disclosed-prediction string, and compares the two
    empirical distributions.  The worst event violation
    ``max_E P0(E) - e^eps P1(E)`` (both directions) is flagged when it
    exceeds ``delta`` plus a uniform deviation bound that holds with
    probability ``1 - gamma`` over events built from the observed outcomes.

    This is an audit, not a proof: it samples one adversary and cannot
    certify privacy.
    """
    rows = map_trials(_smoke_trial, [(adversary, t, predictor_factory, seed, k) for k in range(trials)])
    c0, c1 = {}, {}
    for o0, o1 in rows:
        c0[o0] = c0.get(o0, 0) + 1
        c1[o1] = c1.get(o1, 0) + 1
    outs = sorted(set(c0) | set(c1))
    p0 = np.array([c0.get(o, 0) for o in outs]) / trials
    p1 = np.array([c1.get(o, 0) for o in outs]) / trials
    viol = max_violation(p0, p1, epsilon)
    K = len(outs)
    dev = math.sqrt((K * math.log(2) + math.log(2 / gamma)) / (2 * trials))
    slack = (1 + math.exp(epsilon)) * dev
    return {
        "adversary": adversary.describe(),
        "rounds": t,
        "trials": trials,
        "epsilon": epsilon,
        "delta": delta,
        "n_outcomes": K,
        "empirical_violation": viol,
        "statistical_slack": slack,
        "flagged": bool(viol > delta + slack),
        "identical": bool(c0 == c1),
        "distribution_b0": FiniteDistribution(tuple(outs), p0).probs.tolist(),
        "distribution_b1": FiniteDistribution(tuple(outs), p1).probs.tolist(),
        "outcomes": outs,
        "per_trial": [list(r) for r in rows],
        "caveat": "statistical audit over one adversary; not a privacy proof",
    }


# -- accuracy experiment -------------------------------------------------------


def _accuracy_trial(args):
    cfg, dist, target, stream_length, phases, seed, k, chunk = args
    data_rng = child_stream(seed, k, 0)
    query_rng = child_stream(seed, k, 1)
    n = required_sample_size(cfg)
    X = dist.sample(n, data_rng)
    y = target.predict(X)
    model = GenericBBL.from_config(cfg, random_state=trial_seed(seed, k, 2))
    model.fit(X, y)
    errors = {1: model.expected_error(target, dist)}
    wrong = {}
    answered = 0
    while not model.failed_ and answered < stream_length and len(model.phases_) - 1 < phases:
        room = model.scalars_.R_i - model._n_queries
        size = min(chunk, room, stream_length - answered)
        xs = dist.sample(size, query_rng)
        res = model.predict_stream(xs)
        answered += len(res)
        if len(res):
            mis = res.labels != target.predict(res.points)
            for ph in np.unique(res.phases):
                sel = res.phases == ph
                w, c = wrong.get(int(ph), (0, 0))
                wrong[int(ph)] = (w + int(mis[sel].sum()), c + int(sel.sum()))
        errors.setdefault(model.phase_, model.expected_error(target, dist))
    completed = sum(r.completed for r in model.phases_)
    recs = model.phases_
    sizes_exact = all(r.size_s == r.scalars.size_s for r in recs)
    realizable = all(r.s_realizable for r in recs if r.completed)
    halving = all(
        math.isclose(r.scalars.alpha_i, cfg.alpha / 2**r.scalars.i, rel_tol=1e-12)
        and math.isclose(r.scalars.beta_i, cfg.beta / 2**r.scalars.i, rel_tol=1e-12)
        for r in recs
    )
    return {
        "trial": k,
        "phases_completed": completed,
        "failed": bool(model.failed_),
        "answered": answered,
        "sizes_exact": sizes_exact,
        "realizable": realizable,
        "halving_exact": halving,
        "expected_error": [errors[p] for p in sorted(errors)],
        "stream_error": [wrong[p][0] / wrong[p][1] for p in sorted(wrong)],
        "max_expected_error": max(errors.values()),
        "n_top": [r.n_top for r in recs],
    }


def run_accuracy_experiment(cfg, dist, target, stream_length, trials, seed, *, phases=None, chunk=1 << 20):
    """Train on an i.i.d. sample labeled by ``target`` and stream i.i.d. queries.

    A trial stops after ``stream_length`` queries, on failure, or once
    ``phases`` phases are complete.  Per trial the report holds the phase
    count, failure flag, structural checks (``|S_i| = lambda_i T_i``, the
    relabeled pool being consistent with one class member, halving of
    ``alpha_i`` and ``beta_i``), the exact expected error of every phase's
    predictions under ``dist`` and the observed error on the stream.
    """
    if not cfg.concept_class.contains(target):
        raise ValueError("target must belong to the concept class")
    phases = math.inf if phases is None else phases
    args = [(cfg, dist, target, stream_length, phases, seed, k, chunk) for k in range(trials)]
    return map_trials(_accuracy_trial, args)


# -- mechanism suites ----------------------------------------------------------


def _bt_violation(q, a, lo, hi, alpha):
    if a is Answer.L:
        return q > lo + alpha
    if a is Answer.R:
        return q < hi - alpha
    return not (lo - alpha <= q <= hi + alpha)


def _bt_accuracy_trial(args):
    cfg, alpha, k, seed, trial = args
    rng = child_stream(seed, trial, 0)
    bt = BetweenThresholds(cfg, child_stream(seed, trial, 1), enforce_gap=cfg.delta is not None)
    lo, hi = cfg.t_lower, cfg.t_upper
    eta = 1e-9
    # the four query values closest to violating one of the implications
    probes = [lo + alpha + eta, hi - alpha - eta, max(0.0, lo - alpha - eta), min(1.0, hi + alpha + eta)]
    last = None
    violated = False
    answered = 0
    for j in range(k):
        if bt.halted:
            break
        # adaptive: target the implication the previous answer leaned towards
        if last is Answer.L:
            q = probes[0] if j % 2 else probes[2]
        elif last is Answer.R:
            q = probes[1] if j % 2 else probes[3]
        else:
            q = probes[int(rng.integers(4))]
        a = bt.query(q)
        answered += 1
        violated |= _bt_violation(q, a, lo, hi, alpha)
        last = a
    return {"trial": trial, "violated": bool(violated), "answered": answered, "n_top": bt.n_top}


def bt_accuracy_suite(alpha, beta, epsilon, k, n, trials, seed, *, t_lower=0.3, t_upper=0.7, delta=1e-3):
    """Frequency of trials in which some answer breaks an accuracy implication.

    Each trial runs ``k`` adaptively chosen queries against a fresh instance
    with budget ``c = k``.
    """
    cfg = BTConfig(n, epsilon, t_lower, t_upper, c=k, delta=delta)
    return map_trials(_bt_accuracy_trial, [(cfg, alpha, k, seed, j) for j in range(trials)])


def _bt_halt_trial(args):
    c, n, seed, trial = args
    rng = child_stream(seed, trial, 0)
    kind = ("all-in-gap", "random", "mixed")[trial % 3]
    cfg = BTConfig(n, 1.0, 0.4, 0.6, c=c)
    bt = BetweenThresholds(cfg, child_stream(seed, trial, 1), enforce_gap=False)
    answers = []
    length = 20 * c + int(rng.integers(0, 50))
    for j in range(length):
        if kind == "all-in-gap":
            q = 0.5
        elif kind == "random":
            q = float(rng.random())
        else:
            q = 0.5 if j % 3 == 0 else float(rng.choice([0.0, 1.0]))
        if bt.halted:
            break
        answers.append(bt.query(q))
    tops = [i for i, a in enumerate(answers) if a is Answer.TOP]
    rejected = False
    if bt.halted:
        try:
            bt.query(0.5)
        except RuntimeError:
            rejected = True
    if bt.halted:
        exact = len(tops) == c and tops[-1] == len(answers) - 1 and rejected
    else:
        exact = len(tops) < c and len(answers) == length
    return {"trial": trial, "stream": kind, "answered": len(answers), "n_top": len(tops), "halted": bt.halted, "exact": bool(exact)}


def bt_halt_suite(c, trials, seed, *, n=200):
    """Checks that an instance stops exactly at its ``c``-th gap answer."""
    return map_trials(_bt_halt_trial, [(c, n, seed, j) for j in range(trials)])


def _labelboost_trial(args):
    N, size_s, size_t, alpha, seed, trial = args
    rng = child_stream(seed, trial, 0)
    C = ConceptClass.threshold(N)
    target = C.member(int(rng.integers(len(C))))
    S = Dataset.labeled_by(rng.integers(0, N, size=size_s), target)
    T = Dataset.unlabeled(rng.integers(0, N, size=size_t), N)
    res = label_boost(S, T, C, child_stream(seed, trial, 1))
    err = empirical_error(res.hypothesis, S)
    out = res.dataset
    realizable = C.contains(res.hypothesis) and bool(np.array_equal(res.hypothesis.predict(out.points), out.labels))
    return {
        "trial": trial,
        "target": target.identifier,
        "chosen": res.hypothesis.identifier,
        "error_s": float(err),
        "exceeds_alpha": bool(err > alpha),
        "realizable": bool(realizable),
        "n_hypotheses": res.n_hypotheses,
    }


def labelboost_suite(N, size_s, size_t, alpha, beta, trials, seed):
    """Utility and realizability of relabeling on threshold data."""
    cap = label_boost_capacity(size_s, alpha, beta, 1)
    if size_t > cap:
        raise ValueError(f"|T|={size_t} exceeds the capacity {cap} at alpha={alpha}, beta={beta}")
    return map_trials(_labelboost_trial, [(N, size_s, size_t, alpha, seed, j) for j in range(trials)])


def _learner_trial(args):
    N, beta, seed, trial = args
    rng = child_stream(seed, trial, 0)
    h = Hypothesis.threshold(int(rng.integers(N + 1)), N)
    res = hypothesis_learner(ScriptedStream([h]), N, beta, child_stream(seed, trial, 1))
    return {
        "trial": trial,
        "failed": bool(res.failed),
        "rounds": res.n_rounds,
        "exact": bool(res.failed or res.hypothesis.table().tolist() == h.table().tolist()),
    }


def learner_failure_suite(N, beta, trials, seed):
    """Failure frequency of the hypothesis extraction on a constant stream."""
    return map_trials(_learner_trial, [(N, beta, seed, j) for j in range(trials)])


def _good_hypothesis(target, probs, budget, rng):
    """A table erring on a random set of points of total mass at most ``budget``."""
    N = target.domain_size
    tab = target.table().copy()
    for x in rng.permutation(N):
        if probs[x] <= budget:
            budget -= probs[x]
            tab[x] = 1 - tab[x]
        if rng.random() < 0.3:
            break
    return Hypothesis.from_table(tab)


def _boost_trial(args):
    N, alpha, beta, seed, trial = args
    rng = child_stream(seed, trial, 0)
    probs = rng.dirichlet(np.ones(N))
    dist = Distribution(probs / probs.sum())
    target = Hypothesis.from_table(rng.integers(0, 2, size=N))
    R = boost_rounds(beta)
    n_good = math.ceil(7 * R / 8) + int(rng.integers(0, R - math.ceil(7 * R / 8) + 1))
    good = [_good_hypothesis(target, dist.probs, 8 * alpha, rng) for _ in range(n_good)]
    # the rest answer wrongly everywhere: the worst case of the counting argument
    bad = [target.complement() for _ in range(R - n_good)]
    script = good + bad
    order = rng.permutation(R)
    samples = [Dataset.from_pairs([(0, int(target(0)))], N) for _ in range(R)]
    streams = {id(s): ScriptedStream([script[order[i]]]) for i, s in enumerate(samples)}
    res = accuracy_boost(samples, lambda S, _rng: streams[id(S)], beta, child_stream(seed, trial, 1))
    extracted_good = sum(
        (not r.failed) and generalization_error(r.hypothesis, target, dist) <= 8 * alpha + 1e-12
        for r in res.extractions
    )
    premise = extracted_good >= 7 * R / 8
    err = generalization_error(res.hypothesis, target, dist)
    return {
        "trial": trial,
        "R": R,
        "extracted_good": int(extracted_good),
        "premise": bool(premise),
        "boosted_error": err,
        "holds": bool((not premise) or err <= 24 * alpha + 1e-12),
    }


def boost_majority_suite(N, alpha, beta, trials, seed):
    """Majority boosting on scripted streams, most of which are 8 alpha-good."""
    return map_trials(_boost_trial, [(N, alpha, beta, seed, j) for j in range(trials)])

