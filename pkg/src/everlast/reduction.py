"""From a stream of hypotheses to a single accurate hypothesis.

:func:`hypothesis_learner` samples one round per domain point from the
stream ``h_0, h_1, ...`` and stitches a hypothesis together from the chosen
rounds.  :func:`accuracy_boost` runs it on ``R = ceil(104 ln(1/beta))``
independent streams and takes the pointwise majority.
"""

import math
from dataclasses import dataclass
from itertools import cycle, islice

import numpy as np

from ._validation import check_domain_size, check_generator
from .concepts import Dataset, Hypothesis, erm

__all__ = [
    "LearnerResult",
    "BoostResult",
    "ScriptedStream",
    "learner_rounds",
    "boost_rounds",
    "hypothesis_learner",
    "accuracy_boost",
    "majority_vote",
    "erm_interface",
]


def learner_rounds(domain_size, beta):
    """``R = ceil(|X| log2|X| log2(1/beta))``; the learner runs rounds ``0..R``."""
    N = check_domain_size(domain_size)
    if not 0 < beta <= 1 / 8:
        raise ValueError(f"beta must lie in (0, 1/8], got {beta}")
    return math.ceil(N * math.log2(N) * math.log2(1 / beta))


def boost_rounds(beta):
    """``R = ceil(104 ln(1/beta))``."""
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    return math.ceil(104 * math.log(1 / beta))


class ScriptedStream:
    """A replayable hypothesis stream backed by a list.

    With ``repeat=True`` the list is cycled, otherwise the last hypothesis is
    repeated once the list runs out.
    """

    def __init__(self, hypotheses, repeat=True):
        self.hypotheses = list(hypotheses)
        if not self.hypotheses:
            raise ValueError("a scripted stream needs at least one hypothesis")
        self.repeat = repeat

    def __iter__(self):
        if self.repeat:
            return cycle(self.hypotheses)
        return _then_repeat(self.hypotheses, self.hypotheses[-1])


def _then_repeat(items, last):
    yield from items
    while True:
        yield last


@dataclass(frozen=True)
class LearnerResult:
    """Output of :func:`hypothesis_learner`.

    ``rounds_by_point[x]`` lists the rounds at which ``x`` was drawn;
    ``chosen_round[x]`` is the round whose hypothesis labels ``x`` (-1 on
    failure).
    """

    hypothesis: Hypothesis
    failed: bool
    n_rounds: int
    rounds_by_point: tuple
    chosen_round: np.ndarray


def hypothesis_learner(stream, domain_size, beta, rng):
    """Extract one hypothesis from a stream.

    For ``r = 0..R`` a point ``x`` is drawn uniformly and round ``r`` is added
    to ``L_x``.  If some ``L_x`` stays empty the learner fails and returns the
    all-zero hypothesis.  Otherwise ``h(x) = h_{r_x}(x)`` with ``r_x`` uniform
    in ``L_x``.

    Parameters
    ----------
    stream : iterable of Hypothesis
    domain_size : int
    beta : float
        Failure parameter in ``(0, 1/8]``.
    rng : seed or Generator
    """
    N = check_domain_size(domain_size)
    R = learner_rounds(N, beta)
    rng = check_generator(rng)
    hyps = list(islice(iter(stream), R + 1))
    if len(hyps) < R + 1:
        raise ValueError(f"stream ended after {len(hyps)} of {R + 1} hypotheses")
    for h in hyps:
        if h.domain_size != N:
            raise ValueError("stream hypotheses must live on the learner's domain")
    picks = rng.integers(0, N, size=R + 1)
    rounds = tuple(tuple(np.flatnonzero(picks == x).tolist()) for x in range(N))
    if any(len(L) == 0 for L in rounds):
        zero = Hypothesis.from_table(np.zeros(N, dtype=np.uint8))
        return LearnerResult(zero, True, R + 1, rounds, np.full(N, -1, dtype=np.int64))
    chosen = np.array([L[int(rng.integers(len(L)))] for L in rounds], dtype=np.int64)
    table = np.array([hyps[chosen[x]].table()[x] for x in range(N)], dtype=np.uint8)
    return LearnerResult(Hypothesis.from_table(table), False, R + 1, rounds, chosen)


def majority_vote(hypotheses):
    """Pointwise majority; exact ties go to label 1."""
    tabs = np.stack([h.table() for h in hypotheses]).astype(np.int64)
    ones = tabs.sum(axis=0)
    return Hypothesis.from_table((2 * ones >= tabs.shape[0]).astype(np.uint8))


@dataclass(frozen=True)
class BoostResult:
    hypothesis: Hypothesis
    extractions: tuple
    n_failures: int


def accuracy_boost(samples, interface_factory, beta, rng, *, learner_beta=1 / 8):
    """Majority of ``R = ceil(104 ln(1/beta))`` extracted hypotheses.

    Parameters
    ----------
    samples : sequence of Dataset
        Exactly ``R`` labeled samples over one domain.
    interface_factory : callable
        ``interface_factory(sample, rng)`` returns a hypothesis stream, the
        sequence of hypotheses a prediction interface trained on ``sample``
        produces.
    beta : float
    rng : seed or Generator
        Each extraction gets its own child generator.
    learner_beta : float, default=1/8
        Failure parameter passed to :func:`hypothesis_learner`.
    """
    R = boost_rounds(beta)
    samples = list(samples)
    if len(samples) != R:
        raise ValueError(f"accuracy boosting at beta={beta} needs {R} samples, got {len(samples)}")
    N = samples[0].domain_size
    if any(S.domain_size != N for S in samples):
        raise ValueError("all samples must share one domain")
    rng = check_generator(rng)
    children = rng.spawn(R)
    out = []
    for S, child in zip(samples, children):
        stream_rng, learn_rng = child.spawn(2)
        stream = interface_factory(S, stream_rng)
        out.append(hypothesis_learner(stream, N, learner_beta, learn_rng))
    h = majority_vote([r.hypothesis for r in out])
    return BoostResult(h, tuple(out), sum(r.failed for r in out))


def erm_interface(concept_class):
    """Interface factory whose stream repeats the ERM hypothesis of the sample."""

    def factory(sample, rng):
        if not isinstance(sample, Dataset):
            raise TypeError("samples must be Dataset instances")
        return cycle([erm(concept_class, sample)])

    return factory
