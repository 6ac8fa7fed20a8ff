"""Experiment configuration, loadable from YAML."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..channel import ArrayGeometry, DynamicsConfig


def _floats(x) -> list[float]:
    return [float(v) for v in (x if isinstance(x, (list, tuple)) else [x])]


@dataclass
class ExperimentConfig:
    """Everything an experiment run depends on, master seed included.

    Angle-walk speeds are given as ``sigma_u_deg``, the per-slot standard
    deviation in degrees. ``trials`` counts acquisition trials, tracking
    blocks, or integrated runs depending on the experiment; ``slots`` is the
    block length for tracking and the run length for the integrated loop.
    """

    n_t: int = 16
    n_r: int = 16
    m_t: int = 16
    m_r: int = 16
    snr_db: list[float] = field(default_factory=lambda: [20.0])
    sigma_u_deg: list[float] = field(default_factory=lambda: [0.5])
    grid_sizes: list[int] = field(default_factory=lambda: [8, 12, 16, 20, 24])
    n_paths: int = 3
    arrival_rate: float = 500.0
    departure_rate: float = 200.0
    slot_duration: float = 1e-4
    symbol_rate: float = 2e7
    trials: int = 200
    slots: int = 50
    p_fa: float = 0.05
    gamma: float | None = None
    assumed_sigma_u_deg: float = 2.0
    sic_max_paths: int = 5
    gain_snr_floor_db: float = 10.0
    seed: int = 0
    out_dir: str = "results"
    arms: list[str] | None = None

    def __post_init__(self):
        self.snr_db = _floats(self.snr_db)
        self.sigma_u_deg = _floats(self.sigma_u_deg)
        self.grid_sizes = [int(v) for v in self.grid_sizes]
        for name in ("n_t", "n_r", "m_t", "m_r", "n_paths", "trials", "slots", "sic_max_paths"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.snr_db or not self.sigma_u_deg or not self.grid_sizes:
            raise ValueError("parameter grids must be non-empty")
        if not 0 < self.p_fa < 1:
            raise ValueError("p_fa must lie in (0, 1)")

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.n_t, self.n_r)

    @property
    def xi(self) -> float:
        return math.radians(self.assumed_sigma_u_deg) ** 2

    def dynamics(self, sigma_u_deg: float | None = None, abrupt: bool = True) -> DynamicsConfig:
        s = self.sigma_u_deg[0] if sigma_u_deg is None else sigma_u_deg
        return DynamicsConfig(
            sigma_u=math.radians(s),
            arrival_rate=self.arrival_rate if abrupt else 0.0,
            departure_rate=self.departure_rate if abrupt else 0.0,
            slot_duration=self.slot_duration,
            gain_variance=float(self.n_t * self.n_r),
        )

    @property
    def pilot_overhead(self) -> float:
        """Fraction of each slot's symbols spent on the ``m_t * m_r`` pilots."""
        return self.m_t * self.m_r / (self.symbol_rate * self.slot_duration)

    def replace(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        return cls.from_dict(data)
