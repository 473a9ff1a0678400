"""Noisy two-threshold classification of adaptively chosen queries.

Each query value ``q`` in ``[0, 1]`` is compared, after fresh Laplace noise,
to a pair of thresholds that were themselves perturbed once at start-up.
Answers below the lower threshold are ``L``, above the upper one ``R``, and
anything in between is the gap answer ``T``.  Only gap answers consume the
budget ``c``; the instance halts right after its ``c``-th gap answer.
"""

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._validation import check_generator, check_open_unit, check_positive_int, check_unit
from .dp import _laplace_from_uniform, c_halt_params, laplace_many, PrivacyParams

__all__ = [
    "Answer",
    "BTConfig",
    "BetweenThresholds",
    "HaltedError",
    "GapTooSmallError",
    "FixedUniforms",
    "bt_init",
    "bt_query",
    "bt_min_gap",
    "bt_min_n",
    "answers_to_string",
]


class Answer(str, Enum):
    L = "L"
    R = "R"
    TOP = "T"

    def __str__(self):
        return self.value


_CODES = (Answer.L, Answer.R, Answer.TOP)


class HaltedError(RuntimeError):
    """A query was sent to an instance that already used up its gap budget."""


class GapTooSmallError(ValueError):
    """The threshold gap is below what the privacy guarantee requires."""


def bt_min_gap(epsilon, delta, n, base=2):
    """Smallest threshold gap ``(12/(eps n))(log(10/eps) + log(1/delta) + 1)``."""
    check_unit("epsilon", epsilon)
    check_open_unit("delta", delta)
    n = check_positive_int("n", n)
    log = lambda v: math.log(v, base)  # noqa: E731
    return 12.0 / (epsilon * n) * (log(10.0 / epsilon) + log(1.0 / delta) + 1.0)


def bt_min_n(alpha, beta, epsilon, k, base=2):
    """Database size ``ceil((8/(alpha eps))(log(k+1) + log(1/beta)))`` for accuracy
    over ``k`` queries."""
    check_open_unit("alpha", alpha)
    check_open_unit("beta", beta)
    check_unit("epsilon", epsilon)
    k = check_positive_int("k", k)
    log = lambda v: math.log(v, base)  # noqa: E731
    return math.ceil(8.0 / (alpha * epsilon) * (log(k + 1) + log(1.0 / beta)))


@dataclass(frozen=True)
class BTConfig:
    """Parameters of one instance.

    Parameters
    ----------
    n : int
        Database size (the ensemble size when used inside the predictor).
    epsilon : float
        Per-instance privacy parameter.
    t_lower, t_upper : float
        Thresholds with ``0 < t_lower < t_upper < 1``.
    c : int
        Number of gap answers tolerated; the ``c``-th one halts the instance.
    delta : float, optional
        Per-instance delta; needed for the gap check and the privacy composite.
    """

    n: int
    epsilon: float
    t_lower: float
    t_upper: float
    c: int = 1
    delta: float = None

    def __post_init__(self):
        check_positive_int("n", self.n)
        check_positive_int("c", self.c)
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not (0 < self.t_lower < self.t_upper < 1):
            raise ValueError(
                f"need 0 < t_lower < t_upper < 1, got ({self.t_lower}, {self.t_upper})"
            )
        if self.delta is not None:
            check_open_unit("delta", self.delta)

    @property
    def gap(self):
        return self.t_upper - self.t_lower

    def min_gap(self):
        if self.delta is None:
            raise ValueError("delta is required to compute the minimum gap")
        return bt_min_gap(self.epsilon, self.delta, self.n)


class FixedUniforms:
    """Deterministic uniform source for tests: replays a list, then repeats a
    fill value (1/2 by default, which maps to zero Laplace noise)."""

    def __init__(self, values=(), fill=0.5):
        self._values = list(values)
        self._fill = fill
        self.calls = 0

    def random(self, size=None):
        if size is not None:
            return np.array([self.random() for _ in range(int(size))])
        self.calls += 1
        return self._values.pop(0) if self._values else self._fill


class BetweenThresholds:
    """Stateful mechanism instance (single owner, sequential queries).

    Parameters
    ----------
    config : BTConfig
    rng : seed, Generator or uniform source
        One uniform is consumed for the threshold noise at construction and
        one per query afterwards.
    enforce_gap : bool, default=True
        Refuse configurations whose gap is below :func:`bt_min_gap` (requires
        ``config.delta``).  With False the shortfall only raises a warning.
    """

    def __init__(self, config, rng=None, *, enforce_gap=True):
        self.config = config
        if config.delta is not None:
            need = config.min_gap()
            if config.gap < need:
                msg = f"threshold gap {config.gap:.6g} is below the required {need:.6g}"
                if enforce_gap:
                    raise GapTooSmallError(msg)
                warnings.warn(msg, stacklevel=2)
        elif enforce_gap:
            raise ValueError("enforce_gap needs config.delta")
        self._rng = check_generator(rng)
        self.noise_scale = 6.0 / (config.epsilon * config.n)
        self.mu = _laplace_from_uniform(
            float(self._rng.random()), 2.0 / (config.epsilon * config.n)
        )
        self.noisy_lower = config.t_lower + self.mu
        self.noisy_upper = config.t_upper - self.mu
        self.remaining = config.c
        self.n_queries = 0
        self.n_top = 0

    @property
    def halted(self):
        return self.remaining == 0

    @property
    def privacy(self):
        """The c-halt composite ``(eps', 2 c delta)``."""
        if self.config.delta is None:
            raise ValueError("delta is required for the privacy composite")
        return c_halt_params(self.config.epsilon, self.config.delta, self.config.c)

    def per_query_privacy(self):
        return PrivacyParams(self.config.epsilon, self.config.delta or 0.0)

    def _classify(self, noisy):
        # L is tested first, which matters when a large mu crosses the thresholds
        codes = np.full(noisy.shape, 2, dtype=np.int8)
        codes[noisy > self.noisy_upper] = 1
        codes[noisy < self.noisy_lower] = 0
        return codes

    def query(self, q):
        """Answer one query value in ``[0, 1]``."""
        if self.halted:
            raise HaltedError("instance halted after exhausting its gap budget")
        q = float(q)
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"query value must lie in [0, 1], got {q}")
        nu = _laplace_from_uniform(float(self._rng.random()), self.noise_scale)
        self.n_queries += 1
        noisy = q + nu
        if noisy < self.noisy_lower:
            return Answer.L
        if noisy > self.noisy_upper:
            return Answer.R
        self.n_top += 1
        self.remaining -= 1
        return Answer.TOP

    def query_codes(self, qs):
        """Answer a batch of non-adaptive queries; codes 0=L, 1=R, 2=T.

        Stops right after the query that exhausts the budget, so the result
        can be shorter than ``qs``.  With a numpy Generator the noise is drawn
        in one call, which yields the same uniforms as sequential queries.
        """
        if self.halted:
            raise HaltedError("instance halted after exhausting its gap budget")
        qs = np.asarray(qs, dtype=np.float64).ravel()
        if qs.size and (qs.min() < 0 or qs.max() > 1):
            raise ValueError("query values must lie in [0, 1]")
        if not isinstance(self._rng, np.random.Generator):
            out = [_CODES.index(self.query(q)) for q in _until_halt(self, qs)]
            return np.asarray(out, dtype=np.int8)
        noisy = qs + laplace_many(self.noise_scale, self._rng.random(qs.size))
        codes = self._classify(noisy)
        tops = np.cumsum(codes == 2)
        if tops.size and tops[-1] >= self.remaining:
            stop = int(np.searchsorted(tops, self.remaining)) + 1
            codes = codes[:stop]
        k = int((codes == 2).sum())
        self.n_queries += codes.size
        self.n_top += k
        self.remaining -= k
        return codes

    def query_many(self, qs):
        return [_CODES[c] for c in self.query_codes(qs)]

    def snapshot(self):
        return {
            "n": self.config.n,
            "epsilon": self.config.epsilon,
            "t_lower": self.config.t_lower,
            "t_upper": self.config.t_upper,
            "c": self.config.c,
            "remaining": self.remaining,
            "n_queries": self.n_queries,
            "halted": self.halted,
        }


def _until_halt(bt, qs):
    for q in qs:
        if bt.halted:
            return
        yield q


def bt_init(config, rng, *, enforce_gap=None):
    """Create an instance; see :class:`BetweenThresholds`.

    The gap check is enforced whenever ``config.delta`` is set unless
    ``enforce_gap`` says otherwise.
    """
    if enforce_gap is None:
        enforce_gap = config.delta is not None
    return BetweenThresholds(config, rng, enforce_gap=enforce_gap)


def bt_query(state, q):
    return state.query(q)


def answers_to_string(answers):
    """Serialize answers (or integer codes) as a string over ``{L, R, T}``."""
    return "".join(
        a.value if isinstance(a, Answer) else _CODES[int(a)].value for a in answers
    )
