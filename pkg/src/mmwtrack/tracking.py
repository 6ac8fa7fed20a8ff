"""Extended Kalman filter on the angle vector, gains held fixed within a block."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .acquisition import ChannelEstimate
from .channel import ArrayGeometry, reflect_angles
from .sounding import ObservationBatch, PilotGrid, phi_and_derivatives

DEFAULT_XI = (2.0 * math.pi / 180.0) ** 2


class TrackingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrackerState:
    theta_hat: np.ndarray
    M: np.ndarray
    alpha: np.ndarray
    Q_u_assumed: np.ndarray
    innovation_last: float = 0.0
    # normalized innovation squared of the last update
    nis_last: float = float("nan")
    steps: int = 0

    @property
    def n_paths(self) -> int:
        return self.alpha.size


def tracker_init(estimate: ChannelEstimate, xi: float = DEFAULT_XI) -> TrackerState:
    """Start from an acquired estimate with zero error covariance and ``Q_u = xi I``."""
    if estimate.n_paths == 0:
        raise ValueError("cannot track an empty estimate")
    if xi < 0:
        raise ValueError("xi must be non-negative")
    dim = estimate.angles.size
    return TrackerState(
        theta_hat=estimate.angles.copy(),
        M=np.zeros((dim, dim)),
        alpha=estimate.gains.copy(),
        Q_u_assumed=xi * np.eye(dim),
    )


def linearize_observation(state: TrackerState, grid: PilotGrid, geom: ArrayGeometry):
    """Real-stacked sensitivity ``C`` (2*m_r*m_t, 2L) and the predicted ``Phi alpha``.

    Column ``l`` of the complex sensitivity is ``(d Phi / d phi_l) alpha``,
    i.e. ``D[:, l] * alpha_l``; column ``L + l`` likewise for ``psi_l``.
    """
    Phi, D = phi_and_derivatives(state.theta_hat, grid, geom)
    alpha = state.alpha
    predicted = Phi @ alpha
    Cc = D * np.concatenate([alpha, alpha])[None, :]
    return np.vstack([Cc.real, Cc.imag]), predicted


def tracker_step(state: TrackerState, batch: ObservationBatch, grid: PilotGrid,
                 geom: ArrayGeometry) -> TrackerState:
    """One predict/correct cycle.

    Measurement noise in the real domain is ``(s2/2) I``. The gain is formed
    through the push-through identity

        M C^T (R + C M C^T)^-1 = (I + M C^T R^-1 C)^-1 M C^T R^-1,

    which needs a 2L x 2L solve instead of a 2*m_r*m_t one. The covariance
    update uses the Joseph form.
    """
    if batch.noise_variance <= 0:
        raise ValueError("tracking needs a positive noise variance")
    r = batch.noise_variance / 2.0
    M_pred = state.M + state.Q_u_assumed
    C, predicted = linearize_observation(state, grid, geom)
    y_tilde = batch.stacked()
    innovation = y_tilde - np.concatenate([predicted.real, predicted.imag])

    dim = M_pred.shape[0]
    MCt = M_pred @ C.T
    info = C.T @ C / r
    try:
        K = np.linalg.solve(np.eye(dim) + M_pred @ info, MCt / r)
    except np.linalg.LinAlgError as exc:
        raise TrackingError("innovation covariance solve failed") from exc
    if not np.all(np.isfinite(K)):
        raise TrackingError("non-finite Kalman gain")

    correction = K @ innovation
    IKC = np.eye(dim) - K @ C
    M_new = IKC @ M_pred @ IKC.T + r * (K @ K.T)
    M_new = 0.5 * (M_new + M_new.T)

    # S^-1 nu = R^-1 (nu - C K nu)
    nis = float(innovation @ (innovation - C @ correction)) / r
    return replace(
        state,
        theta_hat=reflect_angles(state.theta_hat + correction),
        M=M_new,
        innovation_last=float(np.linalg.norm(innovation)),
        nis_last=nis,
        steps=state.steps + 1,
    )


def tracker_log_header() -> list[str]:
    return ["slot", "theta_hat", "trace_M", "innovation_norm"]


def tracker_log_row(slot: int, state: TrackerState) -> list:
    """CSV row; angles joined with ``;`` so the column count stays fixed."""
    theta = ";".join(f"{a:.9g}" for a in state.theta_hat)
    return [slot, theta, f"{np.trace(state.M):.9g}", f"{state.innovation_last:.9g}"]
