"""Kalman filter updates and the control-independent covariance schedule.

Besides the usual predicted/posterior covariances, each step also carries the
covariance of the *next belief mean* viewed as a random variable before the
measurement arrives: K (C S C' + R) K'. That matrix drives the abstraction's
transition probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError, RejectedInputError
from .models import GaussianDist, LtiSystem, rediscretize, symmetrize

CONVERGENCE_TOL = 1e-8


@dataclass(frozen=True)
class KalmanStep:
    """Covariance quantities of one filter cycle (means filled in simulation only)."""

    predicted_cov: np.ndarray
    gain: np.ndarray
    posterior_cov: np.ndarray
    mean_dyn_cov: np.ndarray
    predicted_mean: np.ndarray | None = None
    innovation: np.ndarray | None = None


def predict(sys: LtiSystem, belief: GaussianDist, u) -> tuple[np.ndarray, np.ndarray]:
    """Prediction step: mean A mu + B u + mu_w, covariance A S A' + Sigma_w."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if not sys.control_box.contains(u, tol=1e-12):
        raise RejectedInputError(f"control {u} outside control box")
    mean = sys.A @ belief.mean + sys.B @ u + sys.process_noise.mean
    cov = symmetrize(sys.A @ belief.cov @ sys.A.T + sys.process_noise.cov)
    return mean, cov


def _innovation_cov(sys: LtiSystem, predicted_cov: np.ndarray) -> np.ndarray:
    return symmetrize(sys.C @ predicted_cov @ sys.C.T + sys.meas_noise_cov)


def gain(sys: LtiSystem, predicted_cov: np.ndarray) -> np.ndarray:
    """Optimal gain S C' (C S C' + R)^{-1}, via SPD factorization of the
    innovation covariance. Raises NumericalError if it is numerically singular;
    a pseudo-inverse here would silently corrupt the downstream guarantees."""
    S = _innovation_cov(sys, predicted_cov)
    try:
        factor = scipy.linalg.cho_factor(S)
    except scipy.linalg.LinAlgError as exc:
        eigs = np.linalg.eigvalsh(S)
        raise NumericalError(
            f"innovation covariance is singular (eigenvalues {eigs}); "
            "measurement noise too small or model degenerate"
        ) from exc
    return scipy.linalg.cho_solve(factor, sys.C @ predicted_cov).T


def correct_covariance(sys: LtiSystem, predicted_cov: np.ndarray,
                       K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Correction step for covariances.

    Returns the posterior covariance (I - K C) S and the mean-dynamics
    covariance K (C S C' + R) K', both symmetrized.
    """
    n = sys.n
    posterior = symmetrize((np.eye(n) - K @ sys.C) @ predicted_cov)
    S = _innovation_cov(sys, predicted_cov)
    mean_dyn = symmetrize(K @ S @ K.T)
    return posterior, mean_dyn


def correct_mean(predicted_mean, K: np.ndarray, C: np.ndarray, y) -> np.ndarray:
    """Correction step for the mean: mu^ + K (y - C mu^)."""
    predicted_mean = np.atleast_1d(np.asarray(predicted_mean, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return predicted_mean + K @ (y - C @ predicted_mean)


def filter_step(sys: LtiSystem, posterior_cov: np.ndarray) -> KalmanStep:
    """One full covariance cycle from the previous posterior covariance."""
    pred = symmetrize(sys.A @ posterior_cov @ sys.A.T + sys.process_noise.cov)
    K = gain(sys, pred)
    post, mean_dyn = correct_covariance(sys, pred, K)
    return KalmanStep(predicted_cov=pred, gain=K, posterior_cov=post, mean_dyn_cov=mean_dyn)


def covariance_schedule(sys: LtiSystem, sigma0, horizon: int,
                        deltas=None) -> list[KalmanStep]:
    """Covariance recursion for k = 1..horizon, without any control input.

    The recursion takes no control argument at all: predicted and posterior
    covariances do not depend on the inputs applied. When `deltas` is given
    (one rate per step), each step uses the correspondingly merged system.
    """
    if horizon < 1:
        raise RejectedInputError("horizon must be >= 1")
    sigma = symmetrize(np.atleast_2d(np.asarray(sigma0, dtype=float)))
    if deltas is not None and len(deltas) != horizon:
        raise RejectedInputError("deltas must have one entry per step")
    merged_cache: dict[int, LtiSystem] = {1: sys}
    steps = []
    for k in range(horizon):
        d = 1 if deltas is None else int(deltas[k])
        if d not in merged_cache:
            merged_cache[d] = rediscretize(sys, d).as_system()
        step = filter_step(merged_cache[d], sigma)
        steps.append(step)
        sigma = step.posterior_cov
    return steps


def steady_state_step(sys: LtiSystem, sigma0, tol: float = CONVERGENCE_TOL,
                      max_iter: int = 10_000) -> tuple[KalmanStep, int]:
    """Iterate the covariance cycle until the posterior covariance is Cauchy
    in sup-norm below `tol`. Returns the converged step and its index."""
    sigma = symmetrize(np.atleast_2d(np.asarray(sigma0, dtype=float)))
    for k in range(1, max_iter + 1):
        step = filter_step(sys, sigma)
        if np.abs(step.posterior_cov - sigma).max() < tol:
            return step, k
        sigma = step.posterior_cov
    raise NumericalError(f"covariance schedule did not converge within {max_iter} steps")
