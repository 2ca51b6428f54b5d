"""Comparison strategies: long-only mean-variance, follow-the-winner/loser, index hold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHistoryError, NotPSDError, TooShortError

PSD_EIGENVALUE_TOL = -1e-10


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection of v onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - 1.0
    rho = np.nonzero(u - cumulative / np.arange(1, v.size + 1) > 0)[0][-1]
    theta = cumulative[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True)
class MvoResult:
    weights: np.ndarray
    converged: bool
    iterations: int
    objective: float


def mvo_weights(
    mu,
    sigma,
    risk_aversion: float = 1.0,
    *,
    max_iter: int = 10_000,
    tol: float = 1e-10,
) -> MvoResult:
    """Maximize mu'w - risk_aversion * w'Sigma*w over the simplex.

    Projected gradient ascent with a 1/L step (L from the largest eigenvalue of
    2 * risk_aversion * Sigma). If the movement never falls below `tol` within
    `max_iter` iterations, the best iterate is returned with converged=False.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if risk_aversion <= 0:
        raise ValueError("risk_aversion must be positive")
    if sigma.shape != (mu.size, mu.size):
        raise ValueError(f"covariance shape {sigma.shape} incompatible with {mu.size} assets")
    if not np.allclose(sigma, sigma.T, atol=1e-8 * max(1.0, np.abs(sigma).max())):
        raise NotPSDError("covariance matrix is not symmetric")
    sigma = 0.5 * (sigma + sigma.T)
    eigenvalues = np.linalg.eigvalsh(sigma)
    if eigenvalues.min() < PSD_EIGENVALUE_TOL:
        raise NotPSDError(f"covariance has eigenvalue {eigenvalues.min():.3e} < 0")

    lipschitz = 2.0 * risk_aversion * max(eigenvalues.max(), 0.0)
    step = 1.0 / max(lipschitz, 1e-8)

    def objective(w):
        return float(mu @ w - risk_aversion * w @ sigma @ w)

    w = np.full(mu.size, 1.0 / mu.size)
    best_w, best_obj = w, objective(w)
    for iteration in range(1, max_iter + 1):
        grad = mu - 2.0 * risk_aversion * (sigma @ w)
        w_next = project_to_simplex(w + step * grad)
        moved = float(np.linalg.norm(w_next - w))
        w = w_next
        obj = objective(w)
        if obj > best_obj:
            best_w, best_obj = w, obj
        if moved < tol:
            return MvoResult(weights=w, converged=True, iterations=iteration, objective=obj)
    return MvoResult(weights=best_w, converged=False, iterations=max_iter, objective=best_obj)


def follow_winner(previous_returns) -> np.ndarray:
    """All weight on the asset with the highest prior-period return (ties: lowest index)."""
    r = np.asarray(previous_returns, dtype=np.float64)
    if r.size == 0:
        raise InsufficientHistoryError("no previous-period returns available")
    weights = np.zeros(r.size)
    weights[int(np.argmax(r))] = 1.0
    return weights


def follow_loser(previous_returns) -> np.ndarray:
    """All weight on the asset with the lowest prior-period return (ties: lowest index)."""
    r = np.asarray(previous_returns, dtype=np.float64)
    if r.size == 0:
        raise InsufficientHistoryError("no previous-period returns available")
    weights = np.zeros(r.size)
    weights[int(np.argmin(r))] = 1.0
    return weights


def index_hold(index_closes, initial_capital: float = 1_000_000.0) -> np.ndarray:
    """Buy-and-hold wealth curve of an index series (reference curve, no costs)."""
    closes = np.asarray(index_closes, dtype=np.float64)
    if closes.size < 1:
        raise TooShortError("index series is empty")
    return initial_capital * closes / closes[0]
