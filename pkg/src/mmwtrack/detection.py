"""Per-slot abrupt change test on the tracker residual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ArrayGeometry
from .numerics import chi_squared_quantile
from .sounding import ObservationBatch, PilotGrid, build_phi
from .tracking import TrackerState


def detector_threshold(p_fa: float, m_t: int, m_r: int) -> float:
    """Half the right-tail chi-squared quantile with ``2 m_t m_r`` degrees."""
    return 0.5 * chi_squared_quantile(p_fa, 2 * m_t * m_r)


@dataclass(frozen=True)
class DetectorConfig:
    p_fa: float
    gamma: float
    dof: int

    def __post_init__(self):
        if not 0 < self.p_fa < 1:
            raise ValueError("p_fa must lie in (0, 1)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @classmethod
    def from_grid(cls, p_fa: float, grid: PilotGrid, gamma: float | None = None):
        """Threshold from ``p_fa``; pass ``gamma`` to override it."""
        if gamma is None:
            gamma = detector_threshold(p_fa, grid.m_t, grid.m_r)
        return cls(p_fa, float(gamma), 2 * grid.m_t * grid.m_r)


@dataclass(frozen=True)
class DetectionDecision:
    statistic: float
    threshold: float
    changed: bool


def change_statistic(batch: ObservationBatch, gains, angles, grid: PilotGrid,
                     geom: ArrayGeometry) -> float:
    """``||y - Phi(theta) alpha||^2 / s2``."""
    if batch.noise_variance <= 0:
        raise ValueError("change statistic needs a positive noise variance")
    resid = batch.y - build_phi(angles, grid, geom) @ np.asarray(gains)
    return float(np.vdot(resid, resid).real / batch.noise_variance)


def detect(batch: ObservationBatch, tracker: TrackerState, cfg: DetectorConfig,
           grid: PilotGrid, geom: ArrayGeometry) -> DetectionDecision:
    stat = change_statistic(batch, tracker.alpha, tracker.theta_hat, grid, geom)
    return DetectionDecision(stat, cfg.gamma, stat > cfg.gamma)
