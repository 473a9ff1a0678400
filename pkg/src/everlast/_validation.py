"""Input validation helpers shared by the estimators and mechanisms."""

import numbers

import numpy as np

UNLABELED = -1


class DomainError(ValueError):
    """A point lies outside the finite domain ``[0, N)``."""


def check_domain_size(n):
    if not isinstance(n, numbers.Integral) or isinstance(n, bool) or n < 1:
        raise ValueError(f"domain_size must be a positive integer, got {n!r}")
    return int(n)


def check_points(X, domain_size, *, allow_empty=True):
    """Coerce ``X`` to a 1-d int64 array of domain points.

    Accepts a scalar, a sequence, or an ``(n, 1)`` array the way sklearn
    callers pass single-feature data.
    """
    arr = np.asarray(X)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"expected a single feature column, got shape {arr.shape}")
        arr = arr[:, 0]
    arr = np.atleast_1d(arr)
    if arr.ndim != 1:
        raise ValueError(f"points must be 1-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        if not allow_empty:
            raise ValueError("no points given")
        return np.zeros(0, dtype=np.int64)
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or not np.all(arr == np.floor(arr)):
            raise DomainError("domain points must be integers")
    elif arr.dtype.kind not in "iub":
        raise DomainError(f"domain points must be integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= domain_size:
        bad = arr[(arr < 0) | (arr >= domain_size)][0]
        raise DomainError(f"point {bad} outside domain [0, {domain_size})")
    return arr


def check_labels(y, n, *, allow_unlabeled=False, require_unlabeled=False):
    """Coerce labels to int8 with ``-1`` standing for the unlabeled marker."""
    arr = np.atleast_1d(np.asarray(y))
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ValueError(f"expected {n} labels, got shape {arr.shape}")
    if n == 0:
        return np.zeros(0, dtype=np.int8)
    arr = arr.astype(np.int64)
    ok = (arr == 0) | (arr == 1) | (arr == UNLABELED)
    if not ok.all():
        raise ValueError(f"labels must be 0, 1 or {UNLABELED} (unlabeled)")
    if require_unlabeled and (arr != UNLABELED).any():
        raise ValueError("expected an unlabeled dataset")
    if not allow_unlabeled and not require_unlabeled and (arr == UNLABELED).any():
        raise ValueError("unlabeled example present where labels are required")
    return arr.astype(np.int8)


def check_open_unit(name, value, *, upper=1.0):
    """Require ``0 < value < upper``."""
    if not isinstance(value, numbers.Real) or not (0 < value < upper):
        raise ValueError(f"{name} must lie in (0, {upper}), got {value!r}")
    return float(value)


def check_unit(name, value):
    """Require ``0 < value <= 1``."""
    if not isinstance(value, numbers.Real) or not (0 < value <= 1):
        raise ValueError(f"{name} must lie in (0, 1], got {value!r}")
    return float(value)


def check_positive(name, value):
    if not isinstance(value, numbers.Real) or not value > 0 or not np.isfinite(value):
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


def check_positive_int(name, value):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_generator(seed):
    """Return a ``numpy.random.Generator`` for ``seed``.

    ``seed`` may be ``None``, an int, a ``SeedSequence``, a ``Generator``,
    or any object exposing ``random()`` (the stubbed uniform sources used in
    tests), which is passed through untouched.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    if hasattr(seed, "random"):
        return seed
    raise TypeError(f"cannot build a random generator from {seed!r}")


def child_stream(root_seed, *key):
    """Deterministic independent generator addressed by an integer key path.

    Two calls with the same root seed and key give the same stream; distinct
    keys give statistically independent streams.
    """
    if root_seed is None:
        raise ValueError("an explicit seed is required")
    ss = np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
