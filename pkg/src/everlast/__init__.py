"""Private everlasting prediction for finite concept classes.

The main entry point is :class:`GenericBBL`, a predictor that answers an
unbounded stream of classification queries while protecting both its
training data and the queries themselves.  Its building blocks live in
their own modules:

``concepts``
    Finite domains, concept classes, datasets, ERM.
``dp``
    Laplace and exponential mechanisms, composition, amplification.
``between_thresholds``
    The between-thresholds query mechanism with a halting budget.
``label_boost``
    Private relabeling of a partially labeled database.
``reduction``
    Turning a prediction interface into a single hypothesis.
``harness``
    Privacy game, statistical audit and experiment suites.
"""

__version__ = "0.1.0"

from .between_thresholds import Answer, BetweenThresholds, BTConfig
from .concepts import ConceptClass, Dataset, Distribution, Hypothesis
from .dp import PrivacyParams
from .generic_bbl import GenericBBL, PredictorConfig, PredictorFailure, preflight_validate, required_sample_size
from .label_boost import LabelBoost, label_boost
from .reduction import accuracy_boost, hypothesis_learner

__all__ = [
    "Answer",
    "BTConfig",
    "BetweenThresholds",
    "ConceptClass",
    "Dataset",
    "Distribution",
    "GenericBBL",
    "Hypothesis",
    "LabelBoost",
    "PredictorConfig",
    "PredictorFailure",
    "PrivacyParams",
    "accuracy_boost",
    "hypothesis_learner",
    "label_boost",
    "preflight_validate",
    "required_sample_size",
    "__version__",
]
