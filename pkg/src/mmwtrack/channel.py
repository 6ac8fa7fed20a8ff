"""Ground-truth channel: ULA steering vectors, the L-scatterer matrix and its
dual-timescale evolution (angle random walk + path birth/death)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import sample_complex_gaussian


@dataclass(frozen=True)
class ArrayGeometry:
    n_t: int = 16
    n_r: int = 16

    def __post_init__(self):
        if self.n_t < 1 or self.n_r < 1:
            raise ValueError("antenna counts must be >= 1")


def reflect_angles(angles) -> np.ndarray:
    """Fold angles into [0, pi] by reflection; ``cos`` is left unchanged."""
    a = np.mod(np.asarray(angles, dtype=np.float64), 2.0 * np.pi)
    return np.where(a > np.pi, 2.0 * np.pi - a, a)


@dataclass(frozen=True)
class PathSet:
    """Path gains ``alpha`` (L,) and angles ``[phi_1..phi_L, psi_1..psi_L]``."""

    gains: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=np.complex128).reshape(-1)
        angles = np.asarray(self.angles, dtype=np.float64).reshape(-1)
        if angles.size != 2 * gains.size:
            raise ValueError(
                f"need 2 angles per path, got {angles.size} for {gains.size} paths"
            )
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "angles", angles)

    @classmethod
    def empty(cls) -> "PathSet":
        return cls(np.zeros(0, complex), np.zeros(0))

    @classmethod
    def from_components(cls, gains, aod, aoa) -> "PathSet":
        return cls(gains, np.concatenate([np.atleast_1d(aod), np.atleast_1d(aoa)]))

    @property
    def n_paths(self) -> int:
        return self.gains.size

    @property
    def aod(self) -> np.ndarray:
        return self.angles[: self.n_paths]

    @property
    def aoa(self) -> np.ndarray:
        return self.angles[self.n_paths :]

    def to_text(self) -> str:
        """One path per line: ``Re(alpha) Im(alpha) phi psi``."""
        lines = [
            f"{g.real:.17g} {g.imag:.17g} {phi:.17g} {psi:.17g}"
            for g, phi, psi in zip(self.gains, self.aod, self.aoa)
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "PathSet":
        rows = [line.split() for line in text.splitlines() if line.strip()]
        if not rows:
            return cls.empty()
        arr = np.array(rows, dtype=np.float64)
        if arr.shape[1] != 4:
            raise ValueError("each path record needs 4 fields")
        return cls.from_components(arr[:, 0] + 1j * arr[:, 1], arr[:, 2], arr[:, 3])


def steering_vector_tx(phi: float, n_t: int) -> np.ndarray:
    """Unit-norm ULA response ``(1/sqrt(n)) exp(-j pi k cos phi)``."""
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    k = np.arange(n_t)
    return np.exp(-1j * np.pi * k * np.cos(phi)) / math.sqrt(n_t)


def steering_vector_rx(psi: float, n_r: int) -> np.ndarray:
    return steering_vector_tx(psi, n_r)


def steering_matrix(angles, n: int) -> np.ndarray:
    """Steering vectors for several angles, stacked as columns (n, len(angles))."""
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    k = np.arange(n)[:, None]
    return np.exp(-1j * np.pi * k * np.cos(angles)[None, :]) / math.sqrt(n)


def assemble_channel(paths: PathSet, geom: ArrayGeometry) -> np.ndarray:
    """``H = sum_l alpha_l e_r(psi_l) e_t(phi_l)^H``, shape (n_r, n_t)."""
    if not np.all(np.isfinite(paths.angles)):
        raise ValueError("path angles must be finite")
    Et = steering_matrix(paths.aod, geom.n_t)
    Er = steering_matrix(paths.aoa, geom.n_r)
    return (Er * paths.gains[None, :]) @ Et.conj().T


@dataclass(frozen=True)
class DynamicsConfig:
    """Per-slot dynamics.

    ``sigma_u`` is the per-slot angle-walk standard deviation (rad); rates
    are per second and turn into per-slot Bernoulli probabilities through
    ``slot_duration``.
    """

    sigma_u: float = 0.5 * np.pi / 180
    arrival_rate: float = 500.0
    departure_rate: float = 200.0
    slot_duration: float = 1e-4
    gain_variance: float = 256.0

    def __post_init__(self):
        if min(self.sigma_u, self.arrival_rate, self.departure_rate) < 0:
            raise ValueError("sigma_u and rates must be non-negative")
        if self.slot_duration <= 0 or self.gain_variance <= 0:
            raise ValueError("slot_duration and gain_variance must be positive")
        if self.arrival_probability >= 1 or self.departure_probability >= 1:
            raise ValueError("rate * slot_duration must stay below 1")

    @property
    def arrival_probability(self) -> float:
        return self.arrival_rate * self.slot_duration

    @property
    def departure_probability(self) -> float:
        return self.departure_rate * self.slot_duration

    @classmethod
    def for_geometry(cls, geom: ArrayGeometry, **kw) -> "DynamicsConfig":
        return cls(gain_variance=float(geom.n_t * geom.n_r), **kw)


def random_paths(rng: np.random.Generator, n_paths: int, gain_variance: float) -> PathSet:
    """Fresh paths: gains CN(0, gain_variance), angles uniform on (0, pi)."""
    gains = sample_complex_gaussian(rng, gain_variance, n_paths)
    angles = rng.uniform(0.0, np.pi, 2 * n_paths)
    # uniform() is half-open; exclude the endpoint 0 as well
    angles = np.where(angles == 0.0, np.nextafter(0.0, 1.0), angles)
    return PathSet(gains, angles)


def random_walk(
    angles: np.ndarray,
    rng: np.random.Generator,
    sigma_u: float,
    covariance: np.ndarray | None = None,
) -> np.ndarray:
    """``theta + u`` with ``u ~ N(0, sigma_u^2 I)`` (or ``N(0, covariance)``),
    reflected back into [0, pi]."""
    if angles.size == 0:
        return angles.copy()
    if covariance is not None:
        step = rng.multivariate_normal(np.zeros(angles.size), covariance)
    else:
        step = sigma_u * rng.standard_normal(angles.size)
    return reflect_angles(angles + step)


def evolve_slot(
    paths: PathSet,
    cfg: DynamicsConfig,
    rng: np.random.Generator,
    covariance: np.ndarray | None = None,
) -> tuple[PathSet, bool]:
    """Advance the channel by one slot.

    Draw order (fixed for reproducibility): departures, walk of survivors,
    arrival. Departed paths are removed; a new path is appended at the end.
    Returns the new path set and whether an abrupt change happened.
    """
    L = paths.n_paths
    leave = rng.random(L) < cfg.departure_probability
    stay = ~leave
    gains = paths.gains[stay]
    angles = np.concatenate([paths.aod[stay], paths.aoa[stay]])
    if covariance is not None and leave.any():
        idx = np.concatenate([np.flatnonzero(stay), L + np.flatnonzero(stay)])
        covariance = covariance[np.ix_(idx, idx)]
    angles = random_walk(angles, rng, cfg.sigma_u, covariance)
    arrived = rng.random() < cfg.arrival_probability
    out = PathSet(gains, angles)
    if arrived:
        new = random_paths(rng, 1, cfg.gain_variance)
        out = PathSet.from_components(
            np.concatenate([out.gains, new.gains]),
            np.concatenate([out.aod, new.aod]),
            np.concatenate([out.aoa, new.aoa]),
        )
    return out, bool(leave.any() or arrived)
