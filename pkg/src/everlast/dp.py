"""Differential-privacy primitives and privacy arithmetic.

Laplace sampling, the exponential mechanism with its exact selection
distribution, composition, subsampling amplification, the c-halt composite
for threshold mechanisms, and an exact (eps, delta)-indistinguishability
check for finite-support distributions.
"""

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_generator, check_positive

__all__ = [
    "PrivacyParams",
    "FiniteDistribution",
    "PrivacyLedger",
    "laplace_sample",
    "exponential_mechanism",
    "exact_selection_distribution",
    "compose",
    "amplify_by_subsampling",
    "subsample",
    "subsample_indices",
    "c_halt_epsilon",
    "indistinguishable",
    "max_violation",
]


@dataclass(frozen=True)
class PrivacyParams:
    """An ``(epsilon, delta)`` pair.

    ``valid`` is False when composition pushed ``delta`` to 1 or beyond; such
    values are kept so a ledger can report them, but they certify nothing.
    """

    epsilon: float
    delta: float = 0.0
    valid: bool = field(default=True, compare=False)

    def __post_init__(self):
        if not self.epsilon >= 0 or math.isnan(self.epsilon):
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon!r}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be non-negative, got {self.delta!r}")
        if self.delta >= 1:
            object.__setattr__(self, "valid", False)

    def __add__(self, other):
        return compose(self, other)

    def to_dict(self):
        return {"epsilon": self.epsilon, "delta": self.delta, "valid": self.valid}


ZERO = PrivacyParams(0.0, 0.0)


def compose(p1, p2):
    """Basic composition ``(eps1 + eps2, delta1 + delta2)``."""
    return PrivacyParams(p1.epsilon + p2.epsilon, p1.delta + p2.delta)


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Outcomes with probability weights summing to one."""

    outcomes: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).ravel()
        outs = tuple(self.outcomes)
        if len(outs) != p.size:
            raise ValueError("one weight per outcome required")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "outcomes", outs)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_counts(cls, counts):
        """Empirical distribution from an ``{outcome: count}`` mapping."""
        outs = sorted(counts)
        c = np.array([counts[o] for o in outs], dtype=np.float64)
        return cls(tuple(outs), c / c.sum())

    def prob(self, outcome):
        try:
            return float(self.probs[self.outcomes.index(outcome)])
        except ValueError:
            return 0.0

    def aligned(self, other):
        """Probability vectors of both distributions over the union of outcomes."""
        union = sorted(set(self.outcomes) | set(other.outcomes), key=repr)
        a = np.array([self.prob(o) for o in union])
        b = np.array([other.prob(o) for o in union])
        return union, a, b


def laplace_sample(scale, rng):
    """One draw from ``Lap(scale)`` by inverting the CDF at a single uniform.

    ``rng`` is anything with a ``random()`` method returning a float in
    ``[0, 1)``.  ``u = 1/2`` maps to 0; ``u = 0`` (which would give ``-inf``)
    is clamped to the smallest positive double.
    """
    check_positive("scale", scale)
    u = float(check_generator(rng).random())
    return _laplace_from_uniform(u, scale)


def _laplace_from_uniform(u, scale):
    d = u - 0.5
    tail = max(1.0 - 2.0 * abs(d), np.finfo(float).tiny)
    return -scale * math.copysign(1.0, d) * math.log(tail) if d != 0 else 0.0


def laplace_many(scale, u):
    """Vectorized inverse-CDF Laplace draws from an array of uniforms."""
    check_positive("scale", scale)
    u = np.asarray(u, dtype=np.float64)
    d = u - 0.5
    tail = np.maximum(1.0 - 2.0 * np.abs(d), np.finfo(float).tiny)
    return -scale * np.sign(d) * np.log(tail)


def exact_selection_distribution(scores, epsilon, sensitivity=1.0):
    """Exact output distribution of the exponential mechanism.

    ``Pr[i] ∝ exp(epsilon * scores[i] / (2 * sensitivity))``, computed with the
    max score subtracted so large score ranges do not overflow.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("exponential mechanism needs at least one outcome")
    check_positive("epsilon", epsilon)
    check_positive("sensitivity", sensitivity)
    z = epsilon * (s - s.max()) / (2.0 * sensitivity)
    w = np.exp(z)
    return FiniteDistribution(tuple(range(s.size)), w / w.sum())


def exponential_mechanism(scores, epsilon, sensitivity, rng):
    """Sample an outcome index from the exponential mechanism.

    A single uniform is drawn and mapped through the cumulative weights, so
    a stubbed uniform source gives exact, predictable selections.
    """
    dist = exact_selection_distribution(scores, epsilon, sensitivity)
    u = float(check_generator(rng).random())
    cdf = np.cumsum(dist.probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, len(cdf) - 1)


def amplify_by_subsampling(inner, epsilon, n):
    """Privacy of running an ``inner``-private algorithm on a random n-subset.

    Returns ``(t, params)`` where ``t = ceil((n / epsilon)(3 + e^{eps'}))`` is
    the outer database size and ``params = (epsilon, 4 epsilon delta' /
    (3 + e^{eps'}))``.
    """
    if not 0 < epsilon <= 1:
        raise ValueError(f"amplification requires 0 < epsilon <= 1, got {epsilon}")
    if int(n) < 1:
        raise ValueError("inner sample size n must be at least 1")
    denom = 3.0 + math.exp(inner.epsilon)
    t = math.ceil(int(n) / epsilon * denom)
    return t, PrivacyParams(epsilon, 4.0 * epsilon / denom * inner.delta)


def subsample_indices(size, m, rng):
    """Sorted indices of a uniform ``m``-subset of ``range(size)``."""
    m = int(m)
    if not 0 <= m <= size:
        raise ValueError(f"cannot draw {m} of {size} elements without replacement")
    if m == size:
        return np.arange(size, dtype=np.int64)
    rng = check_generator(rng)
    return np.sort(rng.choice(size, size=m, replace=False)).astype(np.int64)


def subsample(S, m, rng):
    """Uniform ``m``-subset of a dataset without replacement, order kept."""
    return S.take(subsample_indices(len(S), m, rng))


def c_halt_epsilon(epsilon, delta, c):
    """Epsilon of a threshold mechanism halted after ``c`` gap answers.

    ``eps' = sqrt(2c ln(1/(c delta))) eps + c eps (e^eps - 1)``; the composite
    guarantee is ``(eps', 2 c delta)``.
    """
    check_positive("epsilon", epsilon)
    if int(c) != c or c < 1:
        raise ValueError(f"c must be a positive integer, got {c}")
    if not delta > 0 or c * delta >= 1:
        raise ValueError(f"need 0 < c*delta < 1, got c={c}, delta={delta}")
    return math.sqrt(2 * c * math.log(1 / (c * delta))) * epsilon + c * epsilon * math.expm1(
        epsilon
    )


def c_halt_params(epsilon, delta, c):
    return PrivacyParams(c_halt_epsilon(epsilon, delta, c), 2 * c * delta)


def max_violation(p0, p1, epsilon):
    """Largest ``Pr[R0 in E] - e^eps Pr[R1 in E]`` over events, both directions.

    The maximizing event is ``{o : p0(o) > e^eps p1(o)}``.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    k = math.exp(epsilon)
    fwd = np.clip(p0 - k * p1, 0, None).sum()
    bwd = np.clip(p1 - k * p0, 0, None).sum()
    return float(max(fwd, bwd))


def indistinguishable(d0, d1, epsilon, delta, tol=1e-12):
    """Exact ``(epsilon, delta)``-indistinguishability of two finite distributions."""
    if isinstance(d0, FiniteDistribution) and isinstance(d1, FiniteDistribution):
        if set(d0.outcomes) != set(d1.outcomes):
            raise ValueError("distributions must share the same outcome set")
        _, p0, p1 = d0.aligned(d1)
    else:
        p0 = np.asarray(d0, dtype=np.float64)
        p1 = np.asarray(d1, dtype=np.float64)
        if p0.shape != p1.shape:
            raise ValueError("distributions must share the same outcome set")
    return max_violation(p0, p1, epsilon) <= delta + tol


@dataclass
class PrivacyLedger:
    """Running record of the privacy cost of each mechanism invocation."""

    entries: list = field(default_factory=list)

    def record(self, name, params, **info):
        if not params.valid:
            warnings.warn(f"{name}: delta {params.delta} >= 1 certifies nothing", stacklevel=2)
        self.entries.append({"name": name, **params.to_dict(), **info})
        return params

    def total(self, names=None):
        out = ZERO
        for e in self.entries:
            if names is None or e["name"] in names:
                out = compose(out, PrivacyParams(e["epsilon"], e["delta"]))
        return out

    def to_json(self):
        return json.dumps({"entries": self.entries, "total": asdict(self.total())}, sort_keys=True)
