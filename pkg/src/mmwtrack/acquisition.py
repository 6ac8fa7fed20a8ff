"""Channel acquisition: grid-based successive interference cancellation for a
starting point, then Levenberg-Marquardt on the separable least-squares
residual ``r(theta) = (I - Phi Phi^+) y``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ArrayGeometry, PathSet, reflect_angles
from .numerics import LMConfig, ConvergenceError, lm_minimize, pseudo_inverse
from .sounding import ObservationBatch, PilotGrid, build_phi, phi_and_derivatives


@dataclass(frozen=True)
class ChannelEstimate:
    gains: np.ndarray
    angles: np.ndarray
    residual_norm: float
    # informational markers, e.g. "empty", "merged", "pruned", "lm_failed"
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=np.complex128).reshape(-1)
        angles = np.asarray(self.angles, dtype=np.float64).reshape(-1)
        if angles.size != 2 * gains.size:
            raise ValueError("need 2 angles per estimated path")
        if self.residual_norm < 0:
            raise ValueError("residual_norm must be non-negative")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "angles", angles)

    @property
    def n_paths(self) -> int:
        return self.gains.size

    @property
    def is_empty(self) -> bool:
        return self.n_paths == 0

    def as_paths(self) -> PathSet:
        return PathSet(self.gains, self.angles)

    def to_text(self) -> str:
        return self.as_paths().to_text()


@dataclass(frozen=True)
class SicConfig:
    max_paths: int = 5
    gain_threshold: float = 0.0

    def __post_init__(self):
        if self.max_paths < 1:
            raise ValueError("max_paths must be >= 1")
        if self.gain_threshold < 0:
            raise ValueError("gain_threshold must be >= 0")

    @classmethod
    def for_noise(cls, noise_variance: float, snr_floor_db: float = 10.0, max_paths: int = 5):
        """Threshold at the amplitude whose per-path SNR equals ``snr_floor_db``."""
        thr = math.sqrt(10 ** (snr_floor_db / 10) * noise_variance)
        return cls(max_paths=max_paths, gain_threshold=thr)


def sic_starting_point(
    batch: ObservationBatch,
    grid: PilotGrid,
    geom: ArrayGeometry,
    cfg: SicConfig | None = None,
) -> ChannelEstimate:
    """Peel off on-grid paths one at a time with a matched filter.

    Each round picks the largest residual entry ``(q, p)``, places a path at
    ``(phi_bar_p, psi_bar_q)``, estimates its gain by ``h^H y / h^H h`` and
    subtracts it. A path whose gain magnitude falls below the threshold ends
    the search and is discarded. Grid cells already used are not revisited.
    """
    cfg = cfg or SicConfig.for_noise(batch.noise_variance)
    y = np.array(batch.y, dtype=np.complex128, copy=True)
    if y.size != grid.n_pilots:
        raise ValueError(f"observation length {y.size} != {grid.n_pilots} pilots")
    used = np.zeros(y.size, dtype=bool)
    phis, psis, gains = [], [], []
    while len(gains) < cfg.max_paths and not used.all():
        mag = np.abs(y)
        mag[used] = -1.0
        idx = int(np.argmax(mag))
        q, p = idx % grid.m_r, idx // grid.m_r
        phi, psi = grid.tx_directions[p], grid.rx_directions[q]
        h = build_phi([phi, psi], grid, geom)[:, 0]
        alpha = np.vdot(h, y) / np.vdot(h, h).real
        if abs(alpha) < cfg.gain_threshold or alpha == 0:
            break
        used[idx] = True
        phis.append(phi)
        psis.append(psi)
        gains.append(alpha)
        y -= h * alpha
    flags = () if gains else ("empty",)
    return ChannelEstimate(
        np.array(gains, dtype=np.complex128),
        np.array(phis + psis, dtype=np.float64),
        float(np.linalg.norm(y)),
        flags,
    )


class SeparableProblem:
    """Projection residual and its Jacobian for fixed ``y``.

    Keeps the most recent ``Phi``, ``Phi^+`` so that the residual and the
    Jacobian at the same point share one factorization.
    """

    def __init__(self, batch: ObservationBatch, grid: PilotGrid, geom: ArrayGeometry,
                 rank_tolerance: float = 1e-10):
        self.y = np.asarray(batch.y, dtype=np.complex128)
        self.grid = grid
        self.geom = geom
        self.rank_tolerance = rank_tolerance
        self._key = None
        self._cache = None

    def _terms(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        key = theta.tobytes()
        if key != self._key:
            Phi, D = phi_and_derivatives(theta, self.grid, self.geom)
            pinv = pseudo_inverse(Phi, self.rank_tolerance)
            alpha = pinv @ self.y
            r = self.y - Phi @ alpha
            self._key = key
            self._cache = (Phi, D, pinv, alpha, r)
        return self._cache

    def residual(self, theta) -> np.ndarray:
        return self._terms(theta)[4]

    def gains(self, theta) -> np.ndarray:
        return self._terms(theta)[3]

    def jacobian(self, theta) -> np.ndarray:
        """Complex Jacobian d r / d theta, shape (m_r*m_t, 2L).

        With ``dPhi`` nonzero only in column ``l`` (vector ``d``):

            dr = -(dPhi Phi^+ + Phi dPhi^+) y
            dPhi^+ = -Phi^+ dPhi Phi^+ + Phi^+ Phi^+^H dPhi^H (I - Phi Phi^+)
                     + (I - Phi^+ Phi) dPhi^H Phi^+^H Phi^+

        ``Phi (I - Phi^+ Phi) = 0`` kills the last term, and
        ``Phi Phi^+ Phi^+^H = Phi^+^H``, leaving

            dr = -(I - P) d alpha_l - Phi^+^H[:, l] (d^H r).
        """
        Phi, D, pinv, alpha, r = self._terms(theta)
        L = alpha.size
        if L == 0:
            return np.zeros((self.y.size, 0), dtype=np.complex128)
        cols = np.concatenate([np.arange(L), np.arange(L)])
        A = D * alpha[cols][None, :]
        first = A - Phi @ (pinv @ A)
        second = pinv.conj().T[:, cols] * (D.conj().T @ r)[None, :]
        return -(first + second)

    def stacked_residual(self, theta) -> np.ndarray:
        r = self.residual(theta)
        return np.concatenate([r.real, r.imag])

    def stacked_jacobian(self, theta) -> np.ndarray:
        J = self.jacobian(theta)
        return np.vstack([J.real, J.imag])


def projection_residual(theta, batch: ObservationBatch, grid: PilotGrid,
                        geom: ArrayGeometry) -> np.ndarray:
    """``(I - Phi(theta) Phi(theta)^+) y``."""
    return SeparableProblem(batch, grid, geom).residual(theta)


def residual_jacobian(theta, batch: ObservationBatch, grid: PilotGrid,
                      geom: ArrayGeometry) -> np.ndarray:
    """Real-stacked ``[Re J; Im J]`` of the projection residual, (2*m_r*m_t, 2L)."""
    return SeparableProblem(batch, grid, geom).stacked_jacobian(theta)


def merge_colliding_paths(theta, grid: PilotGrid, geom: ArrayGeometry,
                          threshold: float = 0.999) -> tuple[np.ndarray, bool]:
    """Drop later paths whose gain column is nearly parallel to an earlier one."""
    theta = np.asarray(theta, dtype=np.float64)
    L = theta.size // 2
    if L < 2:
        return theta, False
    Phi = build_phi(theta, grid, geom)
    norms = np.linalg.norm(Phi, axis=0)
    keep: list[int] = []
    for l in range(L):
        if norms[l] == 0:
            continue
        collide = any(
            abs(np.vdot(Phi[:, k], Phi[:, l])) > threshold * norms[k] * norms[l]
            for k in keep
        )
        if not collide:
            keep.append(l)
    if len(keep) == L:
        return theta, False
    keep_idx = np.array(keep, dtype=int)
    return np.concatenate([theta[:L][keep_idx], theta[L:][keep_idx]]), True


def acquire(
    batch: ObservationBatch,
    grid: PilotGrid,
    geom: ArrayGeometry,
    sic_cfg: SicConfig | None = None,
    lm_cfg: LMConfig | None = None,
    gain_snr_floor_db: float | None = 10.0,
    max_rounds: int = 5,
    augment: bool = True,
) -> ChannelEstimate:
    """SIC starting point, LM refinement of the angles, then a final gain solve.

    Refined paths whose ``|alpha_l|^2 / noise_variance`` falls below
    ``gain_snr_floor_db`` are dropped and the remaining gains re-solved.
    ``gain_snr_floor_db=None`` disables the pruning. After a merge or a
    prune, LM runs again on the surviving paths, at most ``max_rounds``
    passes in total.
    """
    start_cfg = sic_cfg or SicConfig.for_noise(batch.noise_variance)
    start = sic_starting_point(batch, grid, geom, start_cfg)
    if start.is_empty:
        return start
    flags: list[str] = []
    problem = SeparableProblem(batch, grid, geom)
    floor = None
    if gain_snr_floor_db is not None and batch.noise_variance > 0:
        floor = 10 ** (gain_snr_floor_db / 10) * batch.noise_variance

    theta = start.angles
    # Each structural change (merge or prune) is followed by another LM pass
    # on the reduced path set; the path count only shrinks, so this ends.
    for _ in range(max_rounds):
        theta = _refine(problem, theta, lm_cfg, flags)
        theta, merged = merge_colliding_paths(theta, grid, geom)
        if merged:
            flags.append("merged")
        alpha = problem.gains(theta)
        keep = np.ones(alpha.size, bool) if floor is None else np.abs(alpha) ** 2 >= floor
        if keep.all() and not merged:
            break
        if not keep.all():
            flags.append("pruned")
            L = alpha.size
            theta = np.concatenate([theta[:L][keep], theta[L:][keep]])
        if theta.size == 0:
            break
    if augment and floor is not None and theta.size:
        theta = _augment(problem, theta, grid, lm_cfg, floor, start_cfg.max_paths, flags)
    alpha = problem.gains(theta)
    if alpha.size == 0:
        flags.append("empty")
    return ChannelEstimate(alpha, theta, float(np.linalg.norm(problem.residual(theta))),
                           tuple(dict.fromkeys(flags)))


def _with_cell(theta, r, grid: PilotGrid, rank: int = 0) -> np.ndarray:
    """Append a path at the grid cell of the ``rank``-th largest residual entry."""
    idx = int(np.argsort(-np.abs(r), kind="stable")[rank])
    q, p = idx % grid.m_r, idx // grid.m_r
    L = theta.size // 2
    return np.concatenate([theta[:L], [grid.tx_directions[p]],
                           theta[L:], [grid.rx_directions[q]]])


def _admissible(problem: SeparableProblem, theta, floor: float):
    """Residual norm of ``theta`` or None if a path collides or falls below the floor."""
    _, merged = merge_colliding_paths(theta, problem.grid, problem.geom)
    if merged or np.any(np.abs(problem.gains(theta)) ** 2 < floor):
        return None
    return float(np.linalg.norm(problem.residual(theta)))


def _augment(problem: SeparableProblem, theta, grid: PilotGrid, lm_cfg, floor: float,
             max_paths: int, flags, candidates: int = 1) -> np.ndarray:
    """Local moves on the refined path set that escape SIC misplacements.

    First, add paths one at a time at the strongest residual cell. Then try to
    relocate each path, weakest first: drop it, refine, re-add at the strongest
    residual cells in turn, refine. A move is kept only when every path still clears the
    gain floor and the residual norm drops.
    """
    current = float(np.linalg.norm(problem.residual(theta)))
    while theta.size // 2 < max_paths:
        trial = _refine(problem, _with_cell(theta, problem.residual(theta), grid), lm_cfg, [])
        cost = _admissible(problem, trial, floor)
        if cost is None or cost >= current:
            break
        theta, current = trial, cost
        flags.append("augmented")

    L = theta.size // 2
    for l in np.argsort(np.abs(problem.gains(theta))):
        if theta.size // 2 != L:
            break
        keep = np.arange(L) != l
        reduced = _refine(problem, np.concatenate([theta[:L][keep], theta[L:][keep]]),
                          lm_cfg, [])
        for rank in range(candidates):
            trial = _refine(problem, _with_cell(reduced, problem.residual(reduced), grid, rank),
                            lm_cfg, [])
            cost = _admissible(problem, trial, floor)
            if cost is not None and cost < current:
                theta, current = trial, cost
                flags.append("relocated")
                break
    return theta


def _refine(problem: SeparableProblem, theta, lm_cfg, flags) -> np.ndarray:
    if theta.size == 0:
        return theta
    try:
        theta = lm_minimize(problem.stacked_residual, problem.stacked_jacobian,
                            theta, lm_cfg).x
    except ConvergenceError as exc:
        theta = exc.result.x
        flags.append("lm_failed")
    return reflect_angles(theta)
