"""Private relabeling of a partially labeled database.

Given labeled examples ``S`` and unlabeled examples ``T``, one
representative member of the class is kept per labeling it realizes on the
distinct points of ``S∘T``.  The exponential mechanism (epsilon 1,
sensitivity 1) picks one of them, scoring each by minus its number of
mistakes on ``S``, and every example of ``S∘T`` is relabeled by the pick.
"""

import math
import warnings
from dataclasses import dataclass

import mpmath
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import UNLABELED, check_generator, check_labels, check_points
from .concepts import Dataset, dichotomy_errors
from .dp import exact_selection_distribution, exponential_mechanism

__all__ = [
    "LabelBoost",
    "LabelBoostResult",
    "CapacityWarning",
    "label_boost",
    "label_boost_capacity",
    "label_boost_scores",
]


class CapacityWarning(UserWarning):
    """The utility bound admits no unlabeled examples at this sample size."""


@dataclass(frozen=True, eq=False)
class LabelBoostResult:
    """Output of :func:`label_boost`.

    Attributes
    ----------
    dataset : Dataset
        ``S∘T`` with every label replaced by ``hypothesis(x)``.
    hypothesis : Hypothesis
        The selected representative.
    n_hypotheses : int
        ``|H|``, the number of realized labelings.
    selection : FiniteDistribution
        Exact distribution the selection was drawn from, indexed like
        ``rep_index``.
    rep_index : ndarray
        Class member index of each candidate, in canonical order.
    scores : ndarray
        Score of each candidate (minus its mistake count on ``S``).
    chosen : int
        Position of the selected candidate.
    """

    dataset: Dataset
    hypothesis: object
    n_hypotheses: int
    selection: object
    rep_index: np.ndarray
    scores: np.ndarray
    chosen: int


def label_boost_scores(S, T, concept_class):
    """Candidate scores and representatives for ``S∘T``.

    Returns ``(scores, rep_index)`` where ``scores[i]`` is minus the number of
    examples of ``S`` misclassified by candidate ``i``.
    """
    if len(S) == 0:
        raise ValueError("LabelBoost needs a non-empty labeled sample S")
    if not S.fully_labeled:
        raise ValueError("S must be fully labeled")
    if len(T) and not T.all_unlabeled:
        raise ValueError("T must be unlabeled")
    N = concept_class.domain_size
    if S.domain_size != N or T.domain_size != N:
        raise ValueError("datasets and class must share the domain")
    P = np.unique(np.concatenate([S.points, T.points]))
    pos = np.searchsorted(P, S.points)
    n1 = np.bincount(pos, weights=S.labels, minlength=P.size).astype(np.int64)
    n0 = np.bincount(pos, minlength=P.size) - n1
    errs, reps = dichotomy_errors(concept_class, P, n0, n1)
    return -errs.astype(np.float64), reps


def label_boost(S, T, concept_class, rng, *, epsilon=1.0):
    """Relabel ``S∘T`` with a hypothesis picked by the exponential mechanism.

    Parameters
    ----------
    S : Dataset
        Fully labeled, non-empty.
    T : Dataset
        Unlabeled.
    concept_class : ConceptClass
    rng : seed or Generator
    epsilon : float, default=1.0
        Exponential-mechanism parameter; the privacy analysis assumes 1.

    Returns
    -------
    LabelBoostResult
    """
    scores, reps = label_boost_scores(S, T, concept_class)
    dist = exact_selection_distribution(scores, epsilon, 1.0)
    pick = exponential_mechanism(scores, epsilon, 1.0, check_generator(rng))
    h = concept_class.member(int(reps[pick]))
    out = S.concat(T).relabel(h)
    return LabelBoostResult(out, h, int(reps.size), dist, reps, scores, pick)


def label_boost_capacity(size_s, alpha, beta, vc):
    """Largest ``|T|`` covered by the utility bound.

    ``floor((beta/e) vc exp(alpha |S| / (2 vc)) - |S|)``, evaluated in high
    precision so huge exponents stay exact.  A negative value returns 0 and
    issues a :class:`CapacityWarning`.
    """
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise ValueError(f"need 0 < alpha, beta < 1, got alpha={alpha}, beta={beta}")
    if vc < 1:
        raise ValueError("vc must be at least 1")
    with mpmath.workdps(max(30, int(alpha * size_s / (2 * vc) / math.log(10)) + 30)):
        val = (
            mpmath.mpf(beta) / mpmath.e * vc * mpmath.exp(mpmath.mpf(alpha) * size_s / (2 * vc))
            - size_s
        )
        if val < 0:
            warnings.warn(
                f"capacity is negative for |S|={size_s}; no unlabeled examples are covered",
                CapacityWarning,
                stacklevel=2,
            )
            return 0
        return int(mpmath.floor(val))


class LabelBoost(BaseEstimator, TransformerMixin):
    """Estimator wrapper: ``fit_transform(X, y)`` with ``y = -1`` marking the
    unlabeled rows returns the relabeled ``y`` for all rows.

    Parameters
    ----------
    concept_class : ConceptClass
    epsilon : float, default=1.0
    random_state : int, Generator or None
    """

    def __init__(self, concept_class=None, epsilon=1.0, random_state=None):
        self.concept_class = concept_class
        self.epsilon = epsilon
        self.random_state = random_state

    def fit(self, X, y):
        if self.concept_class is None:
            raise ValueError("concept_class is required")
        N = self.concept_class.domain_size
        x = check_points(X, N, allow_empty=False)
        labels = check_labels(y, x.shape[0], allow_unlabeled=True)
        known = labels != UNLABELED
        S = Dataset(x[known], labels[known], N)
        T = Dataset.unlabeled(x[~known], N)
        res = label_boost(S, T, self.concept_class, self.random_state, epsilon=self.epsilon)
        self.result_ = res
        self.hypothesis_ = res.hypothesis
        return self

    def transform(self, X):
        if not hasattr(self, "hypothesis_"):
            raise NotFittedError("LabelBoost is not fitted yet")
        return self.hypothesis_.predict(X).astype(np.int64)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform(X)
