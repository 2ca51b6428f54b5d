"""Small input-validation helpers shared across modules."""

import numpy as np

from .errors import NotOnSimplexError


def as_vector(x, name="array"):
    """Coerce to a 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def check_simplex(weights, *, sum_tol=1e-6, neg_tol=1e-9, name="weights"):
    """Validate a weight vector: components >= -neg_tol, sum within sum_tol of 1."""
    w = as_vector(weights, name)
    if not np.all(np.isfinite(w)):
        raise NotOnSimplexError(f"{name} contains non-finite entries")
    if np.any(w < -neg_tol):
        raise NotOnSimplexError(f"{name} has negative component {w.min():.3e}")
    total = float(w.sum())
    if abs(total - 1.0) > sum_tol:
        raise NotOnSimplexError(f"{name} sums to {total:.9f}, not 1")
    return w
