"""Pilot grid design and observation synthesis."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .channel import ArrayGeometry, PathSet, steering_matrix
from .numerics import sample_complex_gaussian


@dataclass(frozen=True)
class PilotGrid:
    tx_directions: np.ndarray
    rx_directions: np.ndarray
    F: np.ndarray
    W: np.ndarray

    @property
    def m_t(self) -> int:
        return self.tx_directions.size

    @property
    def m_r(self) -> int:
        return self.rx_directions.size

    @property
    def n_pilots(self) -> int:
        return self.m_t * self.m_r

    @property
    def cos_tx(self) -> np.ndarray:
        return np.cos(self.tx_directions)

    @property
    def cos_rx(self) -> np.ndarray:
        return np.cos(self.rx_directions)

    def to_text(self) -> str:
        """Direction dump: ``side index angle cos(angle)``, one per line."""
        out = ["# side index angle_rad cos_angle"]
        for side, dirs in (("tx", self.tx_directions), ("rx", self.rx_directions)):
            for i, a in enumerate(dirs, start=1):
                out.append(f"{side} {i} {a:.12f} {math.cos(a):.12f}")
        return "\n".join(out) + "\n"


@dataclass(frozen=True)
class ObservationBatch:
    """Vectorized pilot measurements (combining index fastest)."""

    y: np.ndarray
    noise_variance: float

    def __post_init__(self):
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.y.real, self.y.imag])


def cosine_bin_centers(m: int) -> np.ndarray:
    p = np.arange(1, m + 1)
    return -1.0 + (2.0 * p - 1.0) / m


def design_grid(m_t: int, m_r: int, geom: ArrayGeometry) -> PilotGrid:
    """Directions at the arccosine of ``m`` equal bins of [-1, 1]."""
    if m_t < 1 or m_r < 1:
        raise ValueError("grid sizes must be >= 1")
    if m_t < geom.n_t or m_r < geom.n_r:
        warnings.warn(
            f"grid {m_t}x{m_r} is coarser than the array {geom.n_t}x{geom.n_r}; "
            "some directions will see weak pilot gain",
            stacklevel=2,
        )
    tx = np.arccos(cosine_bin_centers(m_t))
    rx = np.arccos(cosine_bin_centers(m_r))
    return PilotGrid(tx, rx, steering_matrix(tx, geom.n_t), steering_matrix(rx, geom.n_r))


def beam_gain(phi: float, phi_bar: float, n: int) -> complex:
    """``e(phi)^H e(phi_bar)`` as an explicit finite sum (exact at alignment)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n)
    return complex(np.exp(1j * np.pi * k * (math.cos(phi) - math.cos(phi_bar))).mean())


def _split(theta) -> tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.size % 2:
        raise ValueError("angle vector must have even length")
    L = theta.size // 2
    return theta[:L], theta[L:]


def phi_and_derivatives(theta, grid: PilotGrid, geom: ArrayGeometry):
    """Gain matrix ``Phi`` (m_r*m_t, L) and its derivative columns (m_r*m_t, 2L).

    Column ``l`` of the second array is d Phi[:, l]/d phi_l and column
    ``L + l`` is d Phi[:, l]/d psi_l; every other entry of d Phi/d theta_k
    is zero.
    """
    phi, psi = _split(theta)
    return _kernels.gain_terms(phi, psi, grid.cos_tx, grid.cos_rx, geom.n_t, geom.n_r)


def build_phi(theta, grid: PilotGrid, geom: ArrayGeometry) -> np.ndarray:
    return phi_and_derivatives(theta, grid, geom)[0]


def noiseless_observation(H: np.ndarray, grid: PilotGrid) -> np.ndarray:
    """``vec(W^H H F)`` with columns of ``Y`` concatenated."""
    return (grid.W.conj().T @ H @ grid.F).reshape(-1, order="F")


def sound_channel(
    H: np.ndarray,
    grid: PilotGrid,
    noise_variance: float,
    rng: np.random.Generator | None,
) -> ObservationBatch:
    """Pilot observations ``y = vec(W^H H F) + v`` with ``v ~ CN(0, s2 I)``.

    ``rng=None`` or ``noise_variance=0`` skips the noise draw.
    """
    y = noiseless_observation(H, grid)
    if rng is not None and noise_variance > 0:
        y = y + sample_complex_gaussian(rng, noise_variance, y.size)
    return ObservationBatch(y, float(noise_variance))


def observe_paths(
    paths: PathSet,
    grid: PilotGrid,
    geom: ArrayGeometry,
    noise_variance: float,
    rng: np.random.Generator | None,
) -> ObservationBatch:
    """Same distribution as :func:`sound_channel`, built as ``Phi(theta) alpha``."""
    y = build_phi(paths.angles, grid, geom) @ paths.gains
    if rng is not None and noise_variance > 0:
        y = y + sample_complex_gaussian(rng, noise_variance, y.size)
    return ObservationBatch(y, float(noise_variance))
