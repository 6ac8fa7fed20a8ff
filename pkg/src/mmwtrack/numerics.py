"""Numerical building blocks: pseudo-inverse, Levenberg-Marquardt, chi-squared
quantiles and seeded complex Gaussian sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable

import numpy as np
from scipy.special import gammaincc


class InvalidInputError(ValueError):
    """Raised for non-finite or out-of-domain arguments."""


class ConvergenceError(RuntimeError):
    """LM could not produce a solvable damped system.

    ``result`` carries the best point found before giving up.
    """

    def __init__(self, message: str, result: "LMResult"):
        super().__init__(message)
        self.result = result


# --------------------------------------------------------------------------
# pseudo-inverse


def pseudo_inverse(a: np.ndarray, rank_tolerance: float = 1e-10) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through the SVD.

    Singular values below ``rank_tolerance * s_max`` are treated as zero.
    """
    a = np.asarray(a)
    if a.ndim != 2:
        raise InvalidInputError("pseudo_inverse expects a 2-D matrix")
    if rank_tolerance <= 0:
        raise InvalidInputError("rank_tolerance must be positive")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    rows, cols = a.shape
    if a.size == 0:
        return np.zeros((cols, rows), dtype=a.dtype)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    cutoff = rank_tolerance * s[0]
    keep = s > cutoff
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vh.conj().T * s_inv) @ u.conj().T


# --------------------------------------------------------------------------
# Levenberg-Marquardt


@dataclass(frozen=True)
class LMConfig:
    initial_damping: float = 1e-3
    damping_up_factor: float = 10.0
    damping_down_factor: float = 0.1
    max_iterations: int = 100
    step_tolerance: float = 1e-8
    residual_tolerance: float = 1e-12
    # damping beyond this is treated as "no descent direction left"
    max_damping: float = 1e16

    def __post_init__(self):
        if self.initial_damping <= 0:
            raise InvalidInputError("initial_damping must be positive")
        if self.damping_up_factor <= 1:
            raise InvalidInputError("damping_up_factor must exceed 1")
        if not 0 < self.damping_down_factor < 1:
            raise InvalidInputError("damping_down_factor must lie in (0, 1)")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if self.step_tolerance <= 0 or self.residual_tolerance <= 0:
            raise InvalidInputError("tolerances must be positive")


@dataclass
class LMResult:
    x: np.ndarray
    residual_norm: float
    initial_residual_norm: float
    accepted_steps: int
    reason: str
    # residual norm after each accepted step, starting with the initial one
    history: list[float] = field(default_factory=list)


def lm_minimize(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian_fn: Callable[[np.ndarray], np.ndarray],
    x0,
    config: LMConfig | None = None,
) -> LMResult:
    """Minimize ``||residual_fn(x)||`` with damped Gauss-Newton steps.

    Each step solves ``(J^T J + lam * S^2) dx = -J^T r`` with ``S`` the
    diagonal of Jacobian column norms. A step is accepted only if it lowers
    the residual norm; ``lam`` shrinks on acceptance and grows on rejection.

    Stops when the accepted step is shorter than ``step_tolerance``, when the
    residual norm drops by less than ``residual_tolerance``, when the gradient
    vanishes, or after ``max_iterations`` Jacobian evaluations.
    """
    cfg = config or LMConfig()
    x = np.array(x0, dtype=np.float64, copy=True)
    r = np.asarray(residual_fn(x), dtype=np.float64)
    cost = float(np.linalg.norm(r))
    history = [cost]
    lam = cfg.initial_damping
    accepted = 0
    reason = "max_iterations"

    for _ in range(cfg.max_iterations):
        J = np.asarray(jacobian_fn(x), dtype=np.float64)
        if J.shape != (r.size, x.size):
            raise InvalidInputError(
                f"jacobian shape {J.shape} does not match ({r.size}, {x.size})"
            )
        grad = J.T @ r
        if x.size == 0 or not np.any(grad):
            reason = "zero_gradient"
            break
        col_norms = np.linalg.norm(J, axis=0)
        floor = np.finfo(float).eps * max(col_norms.max(), 1.0)
        scale2 = np.maximum(col_norms, floor) ** 2
        normal = J.T @ J

        step_taken = False
        while lam <= cfg.max_damping:
            try:
                step = np.linalg.solve(normal + lam * np.diag(scale2), -grad)
            except np.linalg.LinAlgError:
                lam *= cfg.damping_up_factor
                continue
            if not np.all(np.isfinite(step)):
                lam *= cfg.damping_up_factor
                continue
            x_new = x + step
            r_new = np.asarray(residual_fn(x_new), dtype=np.float64)
            cost_new = float(np.linalg.norm(r_new))
            if cost_new < cost:
                step_taken = True
                break
            if np.linalg.norm(step) < cfg.step_tolerance:
                # even a tiny step fails to descend: we are at the minimum
                break
            lam *= cfg.damping_up_factor
        if not step_taken:
            if lam > cfg.max_damping:
                result = LMResult(x, cost, history[0], accepted, "damping_overflow", history)
                raise ConvergenceError("damped normal equations never produced descent", result)
            reason = "no_descent"
            break

        decrease = cost - cost_new
        x, r, cost = x_new, r_new, cost_new
        accepted += 1
        history.append(cost)
        lam = max(lam * cfg.damping_down_factor, 1e-15)
        if np.linalg.norm(step) < cfg.step_tolerance:
            reason = "step_tolerance"
            break
        if decrease < cfg.residual_tolerance:
            reason = "residual_tolerance"
            break

    return LMResult(x, cost, history[0], accepted, reason, history)


# --------------------------------------------------------------------------
# chi-squared


def chi_squared_sf(x: float, dof: int) -> float:
    """Right-tail probability of a chi-squared variable with ``dof`` degrees."""
    if x <= 0:
        return 1.0
    return float(gammaincc(0.5 * dof, 0.5 * x))


def _wilson_hilferty(p_right_tail: float, dof: int) -> float:
    z = NormalDist().inv_cdf(1.0 - p_right_tail)
    h = 2.0 / (9.0 * dof)
    return dof * max(1.0 - h + z * math.sqrt(h), 1e-3) ** 3


def chi_squared_quantile(p_right_tail: float, dof: int) -> float:
    """Inverse of :func:`chi_squared_sf` by bisection.

    The bracket is seeded with the Wilson-Hilferty approximation and widened
    geometrically until it straddles the target.
    """
    if not 0.0 < p_right_tail < 1.0:
        raise InvalidInputError("p_right_tail must lie strictly inside (0, 1)")
    if dof < 1 or int(dof) != dof:
        raise InvalidInputError("dof must be a positive integer")
    guess = _wilson_hilferty(p_right_tail, dof)
    lo, hi = guess, guess
    while chi_squared_sf(lo, dof) < p_right_tail:
        lo *= 0.5
    while chi_squared_sf(hi, dof) > p_right_tail:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi_squared_sf(mid, dof) > p_right_tail:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# random sampling


def make_rng(seed: int | None) -> np.random.Generator:
    return np.random.default_rng(seed)


def derived_rng(master_seed: int, *counters: int) -> np.random.Generator:
    """Independent stream keyed by ``(master_seed, *counters)``.

    Trial ``k`` of stream ``s`` is ``derived_rng(seed, s, k)`` and can be
    regenerated without replaying earlier trials.
    """
    return np.random.default_rng([int(master_seed), *map(int, counters)])


def sample_complex_gaussian(rng: np.random.Generator, variance: float, count: int) -> np.ndarray:
    """``count`` i.i.d. draws of CN(0, variance)."""
    if variance < 0 or not math.isfinite(variance):
        raise InvalidInputError("variance must be finite and non-negative")
    if variance == 0:
        return np.zeros(count, dtype=np.complex128)
    parts = rng.standard_normal((count, 2))
    return math.sqrt(variance / 2.0) * (parts[:, 0] + 1j * parts[:, 1])
