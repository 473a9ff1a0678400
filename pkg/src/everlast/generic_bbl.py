"""Private everlasting predictor built from ERM ensembles, a noisy majority
vote and private relabeling between phases.

Phase ``i`` trains ``T_i`` ERM hypotheses on disjoint blocks of ``lambda_i``
labeled examples, answers ``R_i`` queries through a two-threshold mechanism
fed with the ensemble's vote fraction, and then turns a subsample of the
queries it saw into the next phase's (larger) labeled pool by relabeling
them privately.  Accuracy and failure targets halve with every phase.

Two modes exist.  ``paper-exact`` uses the full constants, which put the
initial sample size far beyond what can be simulated; it is useful for the
schedule arithmetic and :func:`preflight_validate`.  ``scaled`` keeps every
step identical but lets the multiplicative constants shrink so the predictor
actually runs.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import mpmath
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from ._validation import (
    check_labels,
    check_points,
    child_stream,
)
from .between_thresholds import Answer, BetweenThresholds, BTConfig, bt_min_gap
from .concepts import ConceptClass, Dataset, erm_blocks
from .dp import (
    PrivacyLedger,
    PrivacyParams,
    amplify_by_subsampling,
    c_halt_params,
    subsample,
    subsample_indices,
)
from .label_boost import label_boost

__all__ = [
    "PredictorConfig",
    "PhaseScalars",
    "Prediction",
    "StreamResult",
    "PredictorFailure",
    "PreflightReport",
    "PreflightWarning",
    "GenericBBL",
    "initial_n",
    "required_sample_size",
    "phase_scalars",
    "preflight_validate",
]

PAPER_EXACT = "paper-exact"
SCALED = "scaled"
EXACT_R_MULTIPLIER = 25600
EXACT_C_MULTIPLIER = 64
MIN_EXACT_TAU = 1.1e10
_DPS = 60

# child stream purposes
_SUB_S, _BT, _SUB_HAT_S, _SUB_HAT_D, _LABEL_BOOST = range(5)


class PredictorFailure(RuntimeError):
    """The gap budget of the current phase ran out; the predictor is halted.

    ``labels`` holds the labels produced before the failure, if any.
    """

    def __init__(self, message, labels=None):
        super().__init__(message)
        self.labels = labels


class PreflightWarning(UserWarning):
    """A schedule inequality does not hold at scaled constants."""


@dataclass(frozen=True)
class PredictorConfig:
    """Target parameters and schedule constants.

    Parameters
    ----------
    concept_class : ConceptClass
    alpha, beta, epsilon, delta : float
        Accuracy, confidence and privacy targets.
    tau : float
        Schedule constant in the ensemble size.
    mode : {"paper-exact", "scaled"}
    r_multiplier : float, default=25600
        ``R_i = ceil(r_multiplier |S_i| / epsilon)``.
    c_multiplier : float, default=64
        ``c_i = ceil(c_multiplier alpha_i R_i)``.
    subsample_denominator : float, optional
        ``m`` in the subsampling ratio ``epsilon / m``; defaults to
        ``3 + exp(epsilon + 4)``.
    log_base : float, default=2
        Base of every logarithm the formulas write without one.

    Notes
    -----
    ``paper-exact`` requires ``tau > 1.1e10``, ``alpha, beta, delta < 1/16``,
    ``epsilon < 1`` and the default multipliers.  ``scaled`` only requires
    positive values.
    """

    concept_class: ConceptClass
    alpha: float
    beta: float
    epsilon: float
    delta: float
    tau: float
    mode: str = SCALED
    r_multiplier: float = EXACT_R_MULTIPLIER
    c_multiplier: float = EXACT_C_MULTIPLIER
    subsample_denominator: float = None
    log_base: float = 2

    def __post_init__(self):
        if not isinstance(self.concept_class, ConceptClass):
            raise ValueError("concept_class must be a ConceptClass")
        if self.mode not in (PAPER_EXACT, SCALED):
            raise ValueError(f"mode must be '{PAPER_EXACT}' or '{SCALED}', got {self.mode!r}")
        for name in ("alpha", "beta", "delta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0 < v < 1):
                raise ValueError(f"{name} must lie in (0, 1), got {v!r}")
        if not (0 < self.epsilon <= 1):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        for name in ("tau", "r_multiplier", "c_multiplier", "log_base"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if self.log_base == 1:
            raise ValueError("log_base must differ from 1")
        if self.subsample_denominator is not None and not self.subsample_denominator > 0:
            raise ValueError("subsample_denominator must be positive")
        if self.mode == PAPER_EXACT:
            if not self.tau > MIN_EXACT_TAU:
                raise ValueError(f"tau must exceed 1.1e10 in paper-exact mode, got {self.tau}")
            for name in ("alpha", "beta", "delta"):
                if not getattr(self, name) < 1 / 16:
                    raise ValueError(f"{name} must be below 1/16 in paper-exact mode")
            if not self.epsilon < 1:
                raise ValueError("epsilon must be below 1 in paper-exact mode")
            if (
                self.r_multiplier != EXACT_R_MULTIPLIER
                or self.c_multiplier != EXACT_C_MULTIPLIER
                or self.subsample_denominator is not None
                or self.log_base != 2
            ):
                raise ValueError("paper-exact mode does not accept constant overrides")

    @property
    def vc(self):
        return self.concept_class.vc_dimension

    @property
    def m(self):
        """Subsample denominator as a float."""
        return float(self._m_mp())

    def _m_mp(self):
        if self.subsample_denominator is not None:
            return mpmath.mpf(self.subsample_denominator)
        return 3 + mpmath.exp(mpmath.mpf(self.epsilon) + 4)

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k != "concept_class"}
        d["concept_class"] = self.concept_class.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "concept_class" not in d:
            raise ValueError("config field 'concept_class' is required")
        d["concept_class"] = ConceptClass.from_dict(d["concept_class"])
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config field {sorted(extra)[0]!r}")
        return cls(**d)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class PhaseScalars:
    """Schedule values of phase ``i``; counts are ceilinged integers."""

    i: int
    alpha_i: float
    beta_i: float
    lambda_i: int
    T_i: int
    R_i: int
    c_i: int
    eps_i: float
    delta_i: float

    @property
    def size_s(self):
        """``|S_i| = lambda_i T_i``."""
        return self.lambda_i * self.T_i

    @property
    def t_lower(self):
        return 0.5 - self.alpha_i

    @property
    def t_upper(self):
        return 0.5 + self.alpha_i

    def to_dict(self):
        d = asdict(self)
        d["size_s"] = self.size_s
        return d


def _log(cfg):
    base = mpmath.mpf(cfg.log_base)
    return lambda v: mpmath.log(v) / mpmath.log(base)


def _ceil(v):
    return int(mpmath.ceil(v))


def _phase_mp(i, cfg):
    """High-precision schedule values for phase ``i`` (``i >= 1``)."""
    if int(i) != i or i < 1:
        raise ValueError(f"phase index must be a positive integer, got {i}")
    log = _log(cfg)
    with mpmath.workdps(_DPS):
        a = mpmath.mpf(cfg.alpha) / mpmath.mpf(2) ** i
        b = mpmath.mpf(cfg.beta) / mpmath.mpf(2) ** i
        eps = mpmath.mpf(cfg.epsilon)
        dlt = mpmath.mpf(cfg.delta)
        vc = cfg.vc
        lam = _ceil((8 * vc * log(13 / a) + 4 * log(2 / b)) / a)
        T = _ceil(
            mpmath.mpf(cfg.tau) * lam * log(1 / dlt) * log(lam / (eps * a * b * dlt)) ** 2 / (a * eps)
        )
        R = _ceil(mpmath.mpf(cfg.r_multiplier) * lam * T / eps)
        c = _ceil(mpmath.mpf(cfg.c_multiplier) * a * R)
        eps_i = 1 / (3 * mpmath.sqrt(c * mpmath.log(2 / dlt)))
        dlt_i = dlt / (2 * c)
        return dict(
            i=int(i), alpha_i=a, beta_i=b, lambda_i=lam, T_i=T, R_i=R, c_i=c,
            eps_i=eps_i, delta_i=dlt_i,
        )


def phase_scalars(i, cfg):
    """``(alpha_i, beta_i, lambda_i, T_i, R_i, c_i, eps'_i, delta'_i)`` of phase ``i``.

    * ``alpha_i = alpha / 2^i``, ``beta_i = beta / 2^i``
    * ``lambda_i = ceil((8 VC log(13/alpha_i) + 4 log(2/beta_i)) / alpha_i)``
    * ``T_i = ceil(tau lambda_i log(1/delta) log^2(lambda_i/(eps alpha_i beta_i delta))
      / (alpha_i eps))``
    * ``R_i = ceil(r_multiplier lambda_i T_i / eps)``
    * ``c_i = ceil(c_multiplier alpha_i R_i)``
    * ``eps'_i = 1 / (3 sqrt(c_i ln(2/delta)))``, ``delta'_i = delta / (2 c_i)``
    """
    v = _phase_mp(i, cfg)
    return PhaseScalars(
        i=v["i"],
        alpha_i=float(v["alpha_i"]),
        beta_i=float(v["beta_i"]),
        lambda_i=v["lambda_i"],
        T_i=v["T_i"],
        R_i=v["R_i"],
        c_i=v["c_i"],
        eps_i=float(v["eps_i"]),
        delta_i=float(v["delta_i"]),
    )


def initial_n(cfg):
    """Labeled sample size the predictor starts from.

    ``ceil((8 tau / (alpha^3 eps^2)) A^2 log(1/delta) log^2(8A / (eps alpha^2 beta
    delta)) m)`` with ``A = 8 VC log(26/alpha) + 4 log(4/beta)``.
    """
    log = _log(cfg)
    with mpmath.workdps(_DPS):
        a = mpmath.mpf(cfg.alpha)
        b = mpmath.mpf(cfg.beta)
        eps = mpmath.mpf(cfg.epsilon)
        dlt = mpmath.mpf(cfg.delta)
        A = 8 * cfg.vc * log(26 / a) + 4 * log(4 / b)
        n = (
            8 * mpmath.mpf(cfg.tau) / (a**3 * eps**2)
            * A**2
            * log(1 / dlt)
            * log(8 * A / (eps * a**2 * b * dlt)) ** 2
            * cfg._m_mp()
        )
        return _ceil(n)


def required_sample_size(cfg):
    """Smallest accepted ``|S|``.

    ``S_1`` has exactly ``lambda_1 T_1`` examples, drawn at rate ``eps / m``,
    so ``|S| >= ceil(lambda_1 T_1 m / eps)``; paper-exact mode also requires
    :func:`initial_n`.  The two agree up to rounding of ``lambda_1`` and ``T_1``.
    """
    ph = _phase_mp(1, cfg)
    with mpmath.workdps(_DPS):
        need = _ceil(ph["lambda_i"] * ph["T_i"] * cfg._m_mp() / mpmath.mpf(cfg.epsilon))
    if cfg.mode == PAPER_EXACT:
        need = max(need, initial_n(cfg))
    return need


def _floor_rate(size, cfg):
    with mpmath.workdps(_DPS):
        return int(mpmath.floor(mpmath.mpf(cfg.epsilon) * size / cfg._m_mp()))


@dataclass(frozen=True)
class PreflightCheck:
    phase: int
    name: str
    lhs: str
    relation: str
    rhs: str
    ok: bool

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PreflightReport:
    mode: str
    checks: tuple

    @property
    def passed(self):
        return all(c.ok for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.ok]

    def to_dict(self):
        return {"mode": self.mode, "passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _fmt(v):
    return mpmath.nstr(mpmath.mpf(v), 12)


def preflight_validate(cfg, horizon=5):
    """Check the four schedule inequalities for phases ``1..horizon``.

    ``relabel_supply``
        ``|D^'_i| >= lambda_{i+1} T_{i+1}`` with ``|D^'_i| = floor(eps R_i / m)``.
    ``relabel_capacity``
        ``|D^_i| <= (beta_i/e) VC exp(alpha_i |S^_i| / (2 VC)) - |S^_i|``.
    ``bt_gap``
        ``2 alpha_i >= (12/(eps'_i T_i))(log(10/eps'_i) + log(1/delta'_i) + 1)``.
    ``bt_accuracy``
        ``T_i >= (8/(alpha_i eps'_i))(log(R_i + 1) + log(1/beta_i))``.

    In addition ``bt_privacy`` checks that the gap-budget composite of each
    phase is at most ``(1, delta)``.  Scaled mode reports failing checks as
    :class:`PreflightWarning`.  Everything is evaluated in 60-digit arithmetic.
    """
    log = _log(cfg)
    checks = []
    with mpmath.workdps(_DPS):
        eps = mpmath.mpf(cfg.epsilon)
        dlt = mpmath.mpf(cfg.delta)
        vc = cfg.vc
        nxt = _phase_mp(1, cfg)
        for i in range(1, horizon + 1):
            ph, nxt = nxt, _phase_mp(i + 1, cfg)
            a, b, T, R, c = ph["alpha_i"], ph["beta_i"], ph["T_i"], ph["R_i"], ph["c_i"]
            e_i, d_i = ph["eps_i"], ph["delta_i"]
            s_hat = _floor_rate(ph["lambda_i"] * T, cfg)
            d_hat = _floor_rate(R, cfg)
            need = nxt["lambda_i"] * nxt["T_i"]
            checks.append(PreflightCheck(i, "relabel_supply", str(d_hat), ">=", str(need), d_hat >= need))
            cap = b / mpmath.e * vc * mpmath.exp(a * s_hat / (2 * vc)) - s_hat
            checks.append(PreflightCheck(i, "relabel_capacity", str(d_hat), "<=", _fmt(cap), d_hat <= cap))
            gap_need = 12 / (e_i * T) * (log(10 / e_i) + log(1 / d_i) + 1)
            checks.append(PreflightCheck(i, "bt_gap", _fmt(2 * a), ">=", _fmt(gap_need), 2 * a >= gap_need))
            t_need = 8 / (a * e_i) * (log(R + 1) + log(1 / b))
            checks.append(PreflightCheck(i, "bt_accuracy", str(T), ">=", _fmt(t_need), T >= t_need))
            comp_eps = mpmath.sqrt(2 * c * mpmath.log(1 / (c * d_i))) * e_i + c * e_i * mpmath.expm1(e_i)
            comp_dlt = 2 * c * d_i
            ok = comp_eps <= 1 and comp_dlt <= dlt * (1 + mpmath.mpf(10) ** -40)
            checks.append(
                PreflightCheck(i, "bt_privacy", f"({_fmt(comp_eps)}, {_fmt(comp_dlt)})", "<=", f"(1, {_fmt(dlt)})", bool(ok))
            )
    report = PreflightReport(cfg.mode, tuple(checks))
    if cfg.mode == SCALED:
        for f in report.failures():
            warnings.warn(
                f"phase {f.phase} {f.name}: {f.lhs} {f.relation} {f.rhs} fails", PreflightWarning, stacklevel=2
            )
    return report


@dataclass(frozen=True)
class Prediction:
    label: int
    phase: int
    answer: Answer
    ordinal: int
    point: int


@dataclass
class StreamResult:
    """Labels produced for a query stream, truncated at a failure."""

    points: np.ndarray
    labels: np.ndarray
    answers: np.ndarray
    phases: np.ndarray
    failed: bool

    def __len__(self):
        return int(self.labels.size)

    def records(self, start_ordinal=0):
        for k in range(len(self)):
            yield Prediction(
                int(self.labels[k]),
                int(self.phases[k]),
                (Answer.L, Answer.R, Answer.TOP)[int(self.answers[k])],
                start_ordinal + k,
                int(self.points[k]),
            )


@dataclass
class PhaseRecord:
    """Per-phase bookkeeping kept for reports and invariant checks."""

    scalars: PhaseScalars
    size_s: int
    n_answered: int = 0
    n_top: int = 0
    completed: bool = False
    s_realizable: bool = None
    transition: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "phase": self.scalars.i,
            **self.scalars.to_dict(),
            "actual_size_s": self.size_s,
            "n_answered": self.n_answered,
            "n_top": self.n_top,
            "completed": self.completed,
            "s_realizable": self.s_realizable,
            **{f"transition_{k}": v for k, v in self.transition.items()},
        }


def _laplace_cdf(z, b):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0) / b), 1 - 0.5 * np.exp(-np.maximum(z, 0) / b))


class GenericBBL(BaseEstimator, ClassifierMixin):
    """Private everlasting predictor over a finite domain.

    ``fit`` consumes the labeled sample; afterwards every call to
    :meth:`predict_one`, :meth:`predict_stream` or :meth:`predict` advances
    the online state, so the same point may receive different labels at
    different times.

    Parameters
    ----------
    concept_class : ConceptClass
    alpha, beta, epsilon, delta, tau : float
    mode : {"scaled", "paper-exact"}, default="scaled"
    r_multiplier, c_multiplier, subsample_denominator, log_base
        Schedule constants; see :class:`PredictorConfig`.
    random_state : int or None
        Root seed; every random step draws from a child stream keyed by the
        phase index and the step, so runs are reproducible.

    Attributes
    ----------
    phase_ : int
        Current phase index, starting at 1.
    failed_ : bool
    phases_ : list of PhaseRecord
    ledger_ : PrivacyLedger
    """

    def __init__(
        self,
        concept_class=None,
        alpha=0.1,
        beta=0.1,
        epsilon=0.5,
        delta=0.05,
        tau=1.0,
        mode=SCALED,
        r_multiplier=EXACT_R_MULTIPLIER,
        c_multiplier=EXACT_C_MULTIPLIER,
        subsample_denominator=None,
        log_base=2,
        random_state=None,
    ):
        self.concept_class = concept_class
        self.alpha = alpha
        self.beta = beta
        self.epsilon = epsilon
        self.delta = delta
        self.tau = tau
        self.mode = mode
        self.r_multiplier = r_multiplier
        self.c_multiplier = c_multiplier
        self.subsample_denominator = subsample_denominator
        self.log_base = log_base
        self.random_state = random_state

    @classmethod
    def from_config(cls, cfg, random_state=None):
        params = {k: getattr(cfg, k) for k in PredictorConfig.__dataclass_fields__}
        return cls(**params, random_state=random_state)

    def config(self):
        params = self.get_params()
        params.pop("random_state")
        return PredictorConfig(**params)

    # -- training -------------------------------------------------------------

    def fit(self, X, y):
        """Draw ``S_1`` from the labeled sample and start phase 1."""
        cfg = self.config()
        N = cfg.concept_class.domain_size
        x = check_points(X, N, allow_empty=False)
        labels = check_labels(y, x.shape[0])
        S = Dataset(x, labels, N)
        need = required_sample_size(cfg)
        if len(S) < need:
            raise ValueError(f"labeled sample has {len(S)} examples; at least {need} are required")
        if self.random_state is None:
            self.seed_ = int(np.random.SeedSequence().entropy % 2**63)
        elif isinstance(self.random_state, (int, np.integer)):
            self.seed_ = int(self.random_state)
        else:
            raise ValueError("random_state must be an int or None")
        self.cfg_ = cfg
        self.classes_ = np.array([0, 1])
        self.phase_ = 1
        self.failed_ = False
        self.n_answered_ = 0
        self.phases_ = []
        self.ledger_ = PrivacyLedger()
        sc = phase_scalars(1, cfg)
        S1 = subsample(S, sc.size_s, child_stream(self.seed_, 1, _SUB_S))
        self._start_phase(sc, S1)
        return self

    def _start_phase(self, sc, S_i):
        cfg = self.cfg_
        T = sc.T_i
        lam = len(S_i) // T
        if lam < 1:
            raise PredictorFailure(f"phase {sc.i} has fewer labeled examples than ensemble members")
        used = lam * T
        pts = S_i.points[:used].reshape(T, lam)
        lab = S_i.labels[:used].reshape(T, lam)
        self.ensemble_ = erm_blocks(cfg.concept_class, pts, lab)
        self.votes_ = self._vote_table(self.ensemble_)
        bt_cfg = BTConfig(T, sc.eps_i, sc.t_lower, sc.t_upper, sc.c_i, sc.delta_i)
        with warnings.catch_warnings():
            if cfg.mode == SCALED:
                warnings.simplefilter("ignore")
            self.bt_ = BetweenThresholds(
                bt_cfg, child_stream(self.seed_, sc.i, _BT), enforce_gap=cfg.mode == PAPER_EXACT
            )
        self.gap_ok_ = bt_cfg.gap >= bt_min_gap(sc.eps_i, sc.delta_i, T)
        self.ledger_.record(
            "between_thresholds", c_halt_params(sc.eps_i, sc.delta_i, sc.c_i), phase=sc.i
        )
        self.scalars_ = sc
        self.S_ = S_i
        self._queries = []
        self._n_queries = 0
        self.phases_.append(PhaseRecord(sc, len(S_i)))

    @staticmethod
    def _vote_table(ensemble):
        """Fraction of ensemble members voting 1 at every domain point."""
        N = ensemble[0].domain_size
        if all(h.kind == "threshold" for h in ensemble):
            ts = np.array([h.params[0] for h in ensemble])
            return np.cumsum(np.bincount(ts, minlength=N + 1))[:N] / len(ensemble)
        total = np.zeros(N, dtype=np.int64)
        for h in ensemble:
            total += h.table()
        return total / len(ensemble)

    # -- prediction -----------------------------------------------------------

    def _check_ready(self):
        if not hasattr(self, "phase_"):
            raise NotFittedError("GenericBBL is not fitted yet")
        if self.failed_:
            raise PredictorFailure("the predictor halted after exhausting its gap budget")

    def predict_one(self, x):
        """Answer a single query point; see :meth:`predict_stream`."""
        res = self.predict_stream([x])
        if len(res) == 0:
            raise PredictorFailure("the predictor halted after exhausting its gap budget")
        return next(res.records(self.n_answered_ - 1))

    def predict_stream(self, X):
        """Answer queries in order, stopping at the first failure.

        Labels are 0 exactly when the mechanism answers ``L``.  A phase
        transition runs as soon as the ``R_i``-th query of a phase has been
        answered.  The query that exhausts the gap budget is still answered
        (label 1); the predictor fails on every later query.
        """
        self._check_ready()
        x = check_points(X, self.cfg_.concept_class.domain_size)
        out_l, out_a, out_p = [], [], []
        pos = 0
        while pos < x.size and not self.failed_:
            room = self.scalars_.R_i - self._n_queries
            chunk = x[pos : pos + room]
            codes = self.bt_.query_codes(self.votes_[chunk])
            k = codes.size
            self._queries.append(chunk[:k])
            self._n_queries += k
            rec = self.phases_[-1]
            rec.n_answered += k
            rec.n_top += int((codes == 2).sum())
            out_a.append(codes)
            out_l.append((codes != 0).astype(np.int8))
            out_p.append(np.full(k, self.phase_, dtype=np.int32))
            pos += k
            self.n_answered_ += k
            if self.bt_.halted:
                self.failed_ = True
            elif self._n_queries == self.scalars_.R_i:
                self._transition()
        cat = lambda parts, dt: np.concatenate(parts) if parts else np.zeros(0, dt)  # noqa: E731
        return StreamResult(
            x[:pos], cat(out_l, np.int8), cat(out_a, np.int8), cat(out_p, np.int32), self.failed_
        )

    def predict(self, X):
        """Labels for ``X`` as an online stream; raises on failure."""
        res = self.predict_stream(X)
        if len(res) < check_points(X, self.cfg_.concept_class.domain_size).size:
            raise PredictorFailure(
                f"the predictor failed after {len(res)} of the requested queries",
                labels=res.labels.astype(np.int64),
            )
        return res.labels.astype(np.int64)

    def expected_error(self, target, dist):
        """Exact probability that the current phase mislabels a fresh query.

        Averages over the query distribution and the fresh per-query noise,
        with the current ensemble and noisy thresholds held fixed; the
        online state is not touched.
        """
        if not hasattr(self, "phase_"):
            raise NotFittedError("GenericBBL is not fitted yet")
        p_low = _laplace_cdf(self.bt_.noisy_lower - self.votes_, self.bt_.noise_scale)
        truth = target.table()
        # strict inequality and a continuous distribution: P[L] = CDF
        err = np.where(truth == 1, p_low, 1.0 - p_low)
        return float(np.dot(dist.probs, err))

    # -- phase transition -----------------------------------------------------

    def _transition(self):
        cfg = self.cfg_
        sc = self.scalars_
        i = sc.i
        rec = self.phases_[-1]
        D = Dataset.unlabeled(np.concatenate(self._queries), cfg.concept_class.domain_size)
        n_s_hat = _floor_rate(len(self.S_), cfg)
        n_d_hat = _floor_rate(len(D), cfg)
        S_hat = subsample(self.S_, n_s_hat, child_stream(self.seed_, i, _SUB_HAT_S))
        D_hat = subsample(D, n_d_hat, child_stream(self.seed_, i, _SUB_HAT_D))
        if len(S_hat) == 0:
            raise PredictorFailure(f"phase {i}: the relabeling subsample of S is empty")
        res = label_boost(S_hat, D_hat, cfg.concept_class, child_stream(self.seed_, i, _LABEL_BOOST))
        D_prime = res.dataset.take(np.arange(len(S_hat), len(res.dataset)))
        nxt = phase_scalars(i + 1, cfg)
        need = nxt.size_s
        truncated = False
        if len(D_prime) < need:
            msg = f"phase {i}: only {len(D_prime)} relabeled queries, {need} needed"
            if cfg.mode == PAPER_EXACT:
                raise RuntimeError(msg)
            warnings.warn(msg + "; truncating", RuntimeWarning, stacklevel=3)
            need = len(D_prime)
            truncated = True
        S_next = subsample(D_prime, need, child_stream(self.seed_, i + 1, _SUB_S))
        h = res.hypothesis
        # relabeling adds (3, 4e) on top of the next phase's (1, delta), and
        # the eps/m subsample amplifies the result
        self.ledger_.record(
            "relabel_subsampled",
            amplify_by_subsampling(
                PrivacyParams(cfg.epsilon + 4, 4 * math.e * cfg.delta),
                cfg.epsilon,
                max(len(S_hat) + len(D_hat), 1),
            )[1],
            phase=i,
        )
        rec.completed = True
        rec.transition = {
            "s_hat": len(S_hat),
            "d_hat": len(D_hat),
            "n_hypotheses": res.n_hypotheses,
            "hypothesis": h.identifier,
            "next_size_s": len(S_next),
            "truncated": truncated,
        }
        rec.s_realizable = bool(np.array_equal(h.predict(S_next.points), S_next.labels))
        self.last_relabel_ = res
        self.phase_ = i + 1
        self._start_phase(nxt, S_next)

    def snapshot(self):
        """JSON-ready view of the schedule, phase index and budget."""
        if not hasattr(self, "phase_"):
            raise NotFittedError("GenericBBL is not fitted yet")
        return {
            "phase": self.phase_,
            "failed": self.failed_,
            "n_answered": self.n_answered_,
            "queries_this_phase": self._n_queries,
            "scalars": self.scalars_.to_dict(),
            "bt": self.bt_.snapshot(),
            "phases": [r.to_dict() for r in self.phases_],
        }
