"""Concept classes over a finite ordered domain and the non-private learning
substrate: evaluation, errors, dichotomy enumeration and ERM.

Points of a domain of size ``N`` are the integers ``0..N-1``.  Four concept
classes are supported:

``threshold``
    ``h_t(x) = [x >= t]`` for ``t = 0..N``.
``interval``
    ``h_{a,b}(x) = [a <= x < b]``; the empty interval first, then every
    ``0 <= a < b <= N`` in lexicographic order.
``point``
    the all-zero concept first, then ``h_p(x) = [x == p]`` for ``p = 0..N-1``.
``explicit``
    an explicit list of bit vectors of length ``N``.

The member order above is the canonical order; whenever several members
realize the same labeling the earliest one is used as representative.
"""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from ._validation import (
    UNLABELED,
    DomainError,
    check_domain_size,
    check_generator,
    check_labels,
    check_points,
)

__all__ = [
    "Hypothesis",
    "ConceptClass",
    "Dataset",
    "Distribution",
    "Dichotomies",
    "ERMClassifier",
    "DomainError",
    "empirical_error",
    "generalization_error",
    "generalization_error_mc",
    "enumerate_dichotomies",
    "erm",
    "erm_blocks",
    "vc_sample_size",
]

KINDS = ("threshold", "interval", "point", "explicit")


@dataclass(frozen=True)
class Hypothesis:
    """A total boolean predicate on ``0..domain_size-1``.

    ``kind`` is one of the class kinds or ``"table"`` for an arbitrary
    function given by its truth table (used by majority votes and the
    hypothesis-extraction procedures).  For ``explicit`` and ``table`` the
    truth table lives in ``bits``.
    """

    kind: str
    params: tuple
    domain_size: int
    bits: tuple = field(default=None, repr=False)

    @classmethod
    def threshold(cls, t, domain_size):
        if not 0 <= t <= domain_size:
            raise ValueError(f"threshold {t} outside [0, {domain_size}]")
        return cls("threshold", (int(t),), domain_size)

    @classmethod
    def interval(cls, a, b, domain_size):
        if not 0 <= a <= b <= domain_size:
            raise ValueError(f"bad interval [{a}, {b}) for domain {domain_size}")
        if a == b:
            a = b = 0
        return cls("interval", (int(a), int(b)), domain_size)

    @classmethod
    def point(cls, p, domain_size):
        """``p = -1`` is the all-zero concept."""
        if not -1 <= p < domain_size:
            raise ValueError(f"point {p} outside domain")
        return cls("point", (int(p),), domain_size)

    @classmethod
    def from_table(cls, bits):
        bits = tuple(int(b) for b in np.asarray(bits).ravel())
        if any(b not in (0, 1) for b in bits):
            raise ValueError("truth table entries must be 0/1")
        return cls("table", (), len(bits), bits)

    @property
    def identifier(self):
        if self.kind in ("table",):
            return "Table(" + "".join(map(str, self.bits)) + ")"
        name = self.kind.capitalize() if self.kind != "explicit" else "ExplicitFinite"
        return f"{name}({', '.join(map(str, self.params))})"

    def predict(self, X):
        """Vectorized evaluation on an array of points."""
        x = check_points(X, self.domain_size)
        return self._eval(x)

    def _eval(self, x):
        k = self.kind
        if k == "threshold":
            out = x >= self.params[0]
        elif k == "interval":
            a, b = self.params
            out = (x >= a) & (x < b)
        elif k == "point":
            out = x == self.params[0]
        else:
            out = np.asarray(self.bits, dtype=np.uint8)[x]
        return np.asarray(out, dtype=np.uint8)

    def __call__(self, x):
        """Evaluate at a single point, raising ``DomainError`` outside the domain."""
        if np.ndim(x) != 0:
            return self.predict(x)
        return int(self.predict([x])[0])

    def table(self):
        return self._eval(np.arange(self.domain_size))

    def complement(self):
        return Hypothesis.from_table(1 - self.table())

    def to_dict(self):
        d = {"kind": self.kind, "params": list(self.params), "domain_size": self.domain_size}
        if self.bits is not None:
            d["bits"] = list(self.bits)
        return d


@dataclass(frozen=True)
class ConceptClass:
    """A concept class over the domain ``0..domain_size-1``."""

    kind: str
    domain_size: int
    concepts: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown concept class kind {self.kind!r}; expected one of {KINDS}")
        check_domain_size(self.domain_size)
        if self.kind == "explicit":
            if not self.concepts:
                raise ValueError("an explicit class needs at least one concept")
            rows = tuple(tuple(int(b) for b in c) for c in self.concepts)
            for r in rows:
                if len(r) != self.domain_size or any(b not in (0, 1) for b in r):
                    raise ValueError(
                        f"explicit concepts must be 0/1 vectors of length {self.domain_size}"
                    )
            object.__setattr__(self, "concepts", rows)
        elif self.concepts is not None:
            raise ValueError(f"'{self.kind}' classes take no explicit concept list")

    @classmethod
    def threshold(cls, domain_size):
        return cls("threshold", domain_size)

    @classmethod
    def interval(cls, domain_size):
        return cls("interval", domain_size)

    @classmethod
    def point(cls, domain_size):
        return cls("point", domain_size)

    @classmethod
    def explicit(cls, concepts):
        concepts = [tuple(c) for c in concepts]
        if not concepts:
            raise ValueError("an explicit class needs at least one concept")
        return cls("explicit", len(concepts[0]), tuple(concepts))

    def __len__(self):
        N = self.domain_size
        if self.kind == "threshold":
            return N + 1
        if self.kind == "interval":
            return 1 + N * (N + 1) // 2
        if self.kind == "point":
            return N + 1
        return len(self.concepts)

    def member(self, index):
        N = self.domain_size
        if not 0 <= index < len(self):
            raise IndexError(index)
        if self.kind == "threshold":
            return Hypothesis.threshold(index, N)
        if self.kind == "point":
            return Hypothesis.point(index - 1, N)
        if self.kind == "explicit":
            return Hypothesis("explicit", (index,), N, self.concepts[index])
        if index == 0:
            return Hypothesis.interval(0, 0, N)
        # invert the lexicographic numbering of pairs a < b
        i = index - 1
        for a in range(N):
            span = N - a
            if i < span:
                return Hypothesis.interval(a, a + 1 + i, N)
            i -= span
        raise AssertionError("unreachable")

    def members(self):
        for i in range(len(self)):
            yield self.member(i)

    def table(self):
        """All members evaluated on the whole domain, shape ``(|C|, N)``."""
        if self.kind == "explicit":
            return np.asarray(self.concepts, dtype=np.uint8)
        return np.stack([h.table() for h in self.members()])

    def contains(self, h):
        if h.domain_size != self.domain_size:
            return False
        if h.kind == self.kind and h.kind != "explicit":
            return True
        tab = h.table()
        if self.kind == "threshold":
            t = int(np.argmax(tab)) if tab.any() else self.domain_size
            return bool(np.array_equal(tab, Hypothesis.threshold(t, self.domain_size).table()))
        if self.kind == "point":
            return int(tab.sum()) <= 1
        if self.kind == "interval":
            ones = np.flatnonzero(tab)
            return ones.size == 0 or ones[-1] - ones[0] + 1 == ones.size
        return bool((self.table() == tab).all(axis=1).any())

    @cached_property
    def vc_dimension(self):
        """VC dimension, floored at 1.

        A singleton explicit class has true VC dimension 0; sample-size
        formulas divide by the VC dimension, so it is reported as 1.
        """
        if self.kind in ("threshold", "point"):
            return 1
        if self.kind == "interval":
            return 2 if self.domain_size >= 2 else 1
        tab = self.table()
        best = 0
        for d in range(1, self.domain_size + 1):
            if 2**d > len(tab):
                break
            shattered = any(
                len({tuple(r) for r in tab[:, list(B)]}) == 2**d
                for B in combinations(range(self.domain_size), d)
            )
            if not shattered:
                break
            best = d
        return max(best, 1)

    def to_explicit(self):
        return ConceptClass("explicit", self.domain_size, tuple(map(tuple, self.table())))

    def to_dict(self):
        d = {"kind": self.kind, "domain_size": self.domain_size}
        if self.kind == "explicit":
            d["concepts"] = [list(c) for c in self.concepts]
        return d

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        if kind == "explicit":
            return cls.explicit(d["concepts"])
        if "domain_size" not in d:
            raise ValueError("concept class needs 'domain_size'")
        return cls(kind, d["domain_size"])


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered sequence of ``(point, label)`` examples.

    Labels are 0, 1, or ``-1`` for the unlabeled marker.  The arrays are
    read-only; every operation returns a new dataset.
    """

    points: np.ndarray
    labels: np.ndarray
    domain_size: int

    def __post_init__(self):
        N = check_domain_size(self.domain_size)
        pts = check_points(self.points, N)
        lab = check_labels(self.labels, pts.shape[0], allow_unlabeled=True)
        pts.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def unlabeled(cls, points, domain_size):
        pts = np.asarray(points, dtype=np.int64)
        return cls(pts, np.full(pts.shape[0], UNLABELED, dtype=np.int8), domain_size)

    @classmethod
    def from_pairs(cls, pairs, domain_size):
        pairs = list(pairs)
        if not pairs:
            return cls(np.zeros(0, np.int64), np.zeros(0, np.int8), domain_size)
        p, y = zip(*pairs)
        return cls(np.asarray(p), np.asarray(y), domain_size)

    @classmethod
    def labeled_by(cls, points, h):
        pts = check_points(points, h.domain_size)
        return cls(pts, h.predict(pts).astype(np.int8), h.domain_size)

    def __len__(self):
        return int(self.points.shape[0])

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.domain_size == other.domain_size
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None

    def pairs(self):
        return list(zip(self.points.tolist(), self.labels.tolist()))

    @property
    def fully_labeled(self):
        return bool((self.labels != UNLABELED).all())

    @property
    def all_unlabeled(self):
        return bool((self.labels == UNLABELED).all())

    def take(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.points[idx], self.labels[idx], self.domain_size)

    def concat(self, other):
        if other.domain_size != self.domain_size:
            raise ValueError("cannot concatenate datasets over different domains")
        return Dataset(
            np.concatenate([self.points, other.points]),
            np.concatenate([self.labels, other.labels]),
            self.domain_size,
        )

    def relabel(self, h):
        return Dataset(self.points, h.predict(self.points).astype(np.int8), self.domain_size)

    def strip_labels(self):
        return Dataset.unlabeled(self.points, self.domain_size)

    def distinct_points(self):
        return np.unique(self.points)

    def n_differences(self, other):
        """Number of positions where two equal-length datasets differ."""
        if len(self) != len(other):
            raise ValueError("neighboring datasets must have equal length")
        return int(((self.points != other.points) | (self.labels != other.labels)).sum())

    def is_neighbor(self, other):
        return len(self) == len(other) and self.n_differences(other) == 1

    def to_dict(self):
        return {"domain_size": self.domain_size, "examples": [list(p) for p in self.pairs()]}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls.from_pairs([tuple(e) for e in d["examples"]], d["domain_size"])

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True, eq=False)
class Distribution:
    """Explicit probability vector over the domain."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).ravel()
        if p.size == 0 or (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("a distribution needs non-negative weights summing to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, domain_size):
        return cls(np.full(domain_size, 1.0 / domain_size))

    @classmethod
    def point_mass(cls, domain_size, x):
        p = np.zeros(domain_size)
        p[x] = 1.0
        return cls(p)

    @classmethod
    def uniform_on(cls, domain_size, support):
        p = np.zeros(domain_size)
        support = np.unique(np.asarray(support, dtype=np.int64))
        p[support] = 1.0 / support.size
        return cls(p)

    @property
    def domain_size(self):
        return int(self.probs.size)

    def sample(self, m, rng):
        rng = check_generator(rng)
        return rng.choice(self.domain_size, size=int(m), p=self.probs)

    def to_dict(self):
        return {"probs": self.probs.tolist()}

    @classmethod
    def from_spec(cls, spec, domain_size):
        """Build from a JSON config value: ``"uniform"``, ``{"uniform_on": [...]}``,
        ``{"grid": k}`` (uniform on ``k`` evenly spaced points), ``{"point_mass": x}``
        or ``{"probs": [...]}``."""
        if spec == "uniform":
            return cls.uniform(domain_size)
        if not isinstance(spec, dict) or len(spec) != 1:
            raise ValueError(f"bad distribution spec {spec!r}")
        (key, val), = spec.items()
        if key == "uniform_on":
            return cls.uniform_on(domain_size, val)
        if key == "grid":
            k = int(val)
            pts = (np.arange(k) * domain_size) // k + domain_size // (2 * k)
            return cls.uniform_on(domain_size, pts)
        if key == "point_mass":
            return cls.point_mass(domain_size, int(val))
        if key == "probs":
            d = cls(np.asarray(val))
            if d.domain_size != domain_size:
                raise ValueError("probability vector length does not match the domain")
            return d
        raise ValueError(f"unknown distribution kind {key!r}")


def empirical_error(h, S):
    """Exact fraction of examples of ``S`` misclassified by ``h``."""
    if len(S) == 0:
        raise ValueError("empirical error of an empty dataset is undefined")
    if not S.fully_labeled:
        raise ValueError("empirical error needs a fully labeled dataset")
    wrong = int((h.predict(S.points) != S.labels).sum())
    return Fraction(wrong, len(S))


def generalization_error(h, c, dist):
    """Exact probability mass on which ``h`` and ``c`` disagree."""
    disagree = h.table() != c.table()
    return float(dist.probs[disagree].sum())


def generalization_error_mc(h, c, dist, m, seed):
    """Monte Carlo estimate of the disagreement mass from ``m`` i.i.d. draws."""
    if int(m) < 1:
        raise ValueError("m must be at least 1")
    x = dist.sample(m, seed)
    return float((h.predict(x) != c.predict(x)).mean())


@dataclass(frozen=True, eq=False)
class Dichotomies:
    """The labelings ``Pi_C(P)`` of a point list ``P`` with one representative
    member per labeling.  Row ``i`` of ``labelings`` is realized by
    ``representatives[i]``."""

    points: np.ndarray
    labelings: np.ndarray
    rep_index: np.ndarray
    concept_class: ConceptClass

    def __len__(self):
        return int(self.labelings.shape[0])

    @property
    def representatives(self):
        return [self.concept_class.member(int(i)) for i in self.rep_index]

    def representative(self, i):
        return self.concept_class.member(int(self.rep_index[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield tuple(self.labelings[i].tolist()), self.representative(i)


def _sorted_dichotomies(cls, s):
    """Analytic enumeration on sorted distinct points ``s``.

    Returns ``(labelings over s, representative member indices)``.
    """
    k = s.size
    N = cls.domain_size
    if cls.kind == "threshold":
        # j zeros followed by ones; smallest threshold realizing it
        lab = (np.arange(k)[None, :] >= np.arange(k + 1)[:, None]).astype(np.uint8)
        reps = np.concatenate([[0], s + 1])
        return lab, reps
    if cls.kind == "point":
        lab = np.vstack([np.zeros((1, k), np.uint8), np.eye(k, dtype=np.uint8)])
        reps = np.concatenate([[0], s + 1])
        return lab, reps
    if cls.kind == "interval":
        runs = [(j, l) for j in range(k) for l in range(j + 1, k + 1)]
        lab = np.zeros((1 + len(runs), k), np.uint8)
        reps = np.zeros(1 + len(runs), np.int64)
        for r, (j, l) in enumerate(runs, start=1):
            lab[r, j:l] = 1
            a = 0 if j == 0 else int(s[j - 1]) + 1
            b = int(s[l - 1]) + 1
            reps[r] = _interval_index(a, b, N)
        return lab, reps
    raise AssertionError(cls.kind)


def _interval_index(a, b, N):
    # members: empty, then (a, b) lexicographic with a < b
    before = sum(N - x for x in range(a))
    return 1 + before + (b - a - 1)


def enumerate_dichotomies(cls, P):
    """All labelings of the distinct points ``P`` realized by ``cls``.

    Threshold, interval and point classes are enumerated analytically by
    sweeping boundaries between sorted points; explicit classes by brute
    force with deduplication.  Labeling columns follow the order of ``P``.
    """
    P = check_points(P, cls.domain_size, allow_empty=False)
    if np.unique(P).size != P.size:
        raise ValueError("dichotomies are defined on distinct points")
    if cls.kind == "explicit":
        tab = cls.table()[:, P]
        _, first = np.unique(tab, axis=0, return_index=True)
        first = np.sort(first)
        return Dichotomies(P, tab[first], first.astype(np.int64), cls)
    order = np.argsort(P, kind="stable")
    lab_sorted, reps = _sorted_dichotomies(cls, P[order])
    lab = np.empty_like(lab_sorted)
    lab[:, order] = lab_sorted
    by_rep = np.argsort(reps, kind="stable")
    return Dichotomies(P, lab[by_rep], np.asarray(reps, np.int64)[by_rep], cls)


def _error_counts(labelings, n0, n1):
    """Misclassification counts of each labeling given per-point label counts."""
    L = labelings.astype(np.int64)
    return L @ n0 + (1 - L) @ n1


def erm(cls, S):
    """Empirical risk minimizer over the dichotomies realized on ``S``.

    Ties are broken by the lexicographically smallest labeling of the sorted
    distinct points of ``S``; the representative member is returned.
    """
    if len(S) == 0:
        raise ValueError("ERM needs a non-empty sample")
    if not S.fully_labeled:
        raise ValueError("ERM needs a fully labeled sample")
    P, inv = np.unique(S.points, return_inverse=True)
    n1 = np.bincount(inv, weights=S.labels, minlength=P.size).astype(np.int64)
    n0 = np.bincount(inv, minlength=P.size) - n1
    dich = enumerate_dichotomies(cls, P)
    errs = _error_counts(dich.labelings, n0, n1)
    best = np.flatnonzero(errs == errs.min())
    rows = dich.labelings[best]
    # lexsort keys are read last-to-first
    pick = best[np.lexsort(rows.T[::-1])[0]]
    return dich.representative(pick)


def erm_blocks(cls, points, labels):
    """ERM on each row of ``points``/``labels`` (shape ``(T, lam)``).

    Same result as calling :func:`erm` per block; thresholds use a histogram
    sweep so large ensembles stay cheap.
    """
    points = np.asarray(points, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if points.ndim != 2 or points.shape != labels.shape or points.shape[1] == 0:
        raise ValueError("blocks must be a non-empty (T, lam) array")
    if cls.kind != "threshold":
        return [
            erm(cls, Dataset(p, y, cls.domain_size)) for p, y in zip(points, labels)
        ]
    T, _ = points.shape
    N = cls.domain_size
    if points.min() < 0 or points.max() >= N:
        raise DomainError("block point outside the domain")
    flat = (np.arange(T)[:, None] * N + points).ravel()
    n1 = np.bincount(flat, weights=labels.ravel(), minlength=T * N).reshape(T, N)
    cnt = np.bincount(flat, minlength=T * N).reshape(T, N)
    n0 = cnt - n1
    # errors(t) = ones strictly below t + zeros at or above t, t = 0..N
    ones_below = np.concatenate([np.zeros((T, 1)), np.cumsum(n1, axis=1)], axis=1)
    zeros_above = np.concatenate(
        [np.cumsum(n0[:, ::-1], axis=1)[:, ::-1], np.zeros((T, 1))], axis=1
    )
    errs = ones_below + zeros_above
    # among minimizers the largest t has the most zeros, i.e. the smallest labeling
    t_max = N - np.argmin(errs[:, ::-1], axis=1)
    # representative: one past the largest sample point below t_max
    present = cnt > 0
    out = []
    for b in range(T):
        below = np.flatnonzero(present[b, : t_max[b]])
        t = 0 if below.size == 0 else int(below[-1]) + 1
        out.append(Hypothesis.threshold(t, N))
    return out


def vc_sample_size(alpha, beta, vc, base=2):
    """Sample size ``(8 vc log(13/alpha) + 4 log(2/beta)) / alpha``, ceiled."""
    if not (0 < alpha <= 0.5 and 0 < beta <= 0.5):
        raise ValueError(f"need 0 < alpha, beta <= 1/2, got alpha={alpha}, beta={beta}")
    if vc < 1:
        raise ValueError("vc must be at least 1")
    log = lambda v: math.log(v, base)  # noqa: E731
    return math.ceil((8 * vc * log(13 / alpha) + 4 * log(2 / beta)) / alpha)


class ERMClassifier(BaseEstimator, ClassifierMixin):
    """Deterministic ERM learner for a concept class, sklearn style.

    Parameters
    ----------
    concept_class : ConceptClass
    """

    def __init__(self, concept_class=None):
        self.concept_class = concept_class

    def fit(self, X, y):
        if self.concept_class is None:
            raise ValueError("concept_class is required")
        N = self.concept_class.domain_size
        x = check_points(X, N, allow_empty=False)
        labels = check_labels(y, x.shape[0])
        self.hypothesis_ = erm(self.concept_class, Dataset(x, labels, N))
        self.classes_ = np.array([0, 1])
        return self

    def predict(self, X):
        if not hasattr(self, "hypothesis_"):
            raise NotFittedError("ERMClassifier is not fitted yet")
        return self.hypothesis_.predict(X).astype(np.int64)


def dichotomy_errors(cls, P, n0, n1):
    """Misclassification count of every dichotomy on distinct points ``P``.

    ``n0[j]``/``n1[j]`` count the examples at ``P[j]`` labeled 0/1.  Returns
    ``(errors, rep_index)`` ordered like :func:`enumerate_dichotomies`, without
    materializing the labelings for the analytic classes.
    """
    P = check_points(P, cls.domain_size, allow_empty=False)
    n0 = np.asarray(n0, dtype=np.int64)
    n1 = np.asarray(n1, dtype=np.int64)
    if cls.kind == "explicit":
        d = enumerate_dichotomies(cls, P)
        return _error_counts(d.labelings, n0, n1), d.rep_index
    order = np.argsort(P, kind="stable")
    s, a0, a1 = P[order], n0[order], n1[order]
    if np.any(np.diff(s) == 0):
        raise ValueError("dichotomies are defined on distinct points")
    k = s.size
    tot1 = int(a1.sum())
    c0 = np.concatenate([[0], np.cumsum(a0)])
    c1 = np.concatenate([[0], np.cumsum(a1)])
    if cls.kind == "threshold":
        j = np.arange(k + 1)
        errs = c1[j] + (c0[k] - c0[j])
        return errs, np.concatenate([[0], s + 1])
    if cls.kind == "point":
        errs = np.concatenate([[tot1], tot1 - a1 + a0])
        return errs, np.concatenate([[0], s + 1])
    N = cls.domain_size
    j, l = np.triu_indices(k + 1, k=1)
    errs = tot1 - (c1[l] - c1[j]) + (c0[l] - c0[j])
    a = np.where(j == 0, 0, s[np.maximum(j - 1, 0)] + 1)
    b = s[l - 1] + 1
    before = a * N - a * (a - 1) // 2
    reps = 1 + before + (b - a - 1)
    errs = np.concatenate([[tot1], errs])
    reps = np.concatenate([[0], reps])
    by_rep = np.argsort(reps, kind="stable")
    return errs[by_rep], reps[by_rep]
