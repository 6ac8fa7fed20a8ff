"""Channel-level metrics: NMSE, SNR bookkeeping and spectral efficiency."""

from __future__ import annotations

import math

import numpy as np

from ..channel import ArrayGeometry

NMSE_FLOOR_DB = -150.0


def nmse_ratio(H_true: np.ndarray, H_est: np.ndarray) -> float:
    """``||H_est - H||_F^2 / ||H||_F^2``."""
    H_true = np.asarray(H_true)
    H_est = np.asarray(H_est)
    if H_true.shape != H_est.shape:
        raise ValueError(f"shape mismatch {H_true.shape} vs {H_est.shape}")
    denom = np.linalg.norm(H_true) ** 2
    if denom == 0:
        raise ValueError("NMSE is undefined for an all-zero true channel")
    return float(np.linalg.norm(H_est - H_true) ** 2 / denom)


def ratio_to_db(ratio: float) -> float:
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return max(10.0 * math.log10(ratio), NMSE_FLOOR_DB)


def nmse_db(H_true: np.ndarray, H_est: np.ndarray) -> float:
    return ratio_to_db(nmse_ratio(H_true, H_est))


def aggregate_nmse_db(ratios) -> float:
    """Mean of per-trial ratios, then dB (expectations sit inside the log)."""
    ratios = np.asarray(list(ratios), dtype=float)
    if ratios.size == 0:
        return float("nan")
    return ratio_to_db(float(ratios.mean()))


def snr_db(noise_variance: float, geom: ArrayGeometry) -> float:
    """``10 log10(n_t n_r / s2)`` with unit transmit power."""
    if noise_variance <= 0:
        raise ValueError("noise_variance must be positive")
    return 10.0 * math.log10(geom.n_t * geom.n_r / noise_variance)


def noise_variance_for_snr(snr: float, geom: ArrayGeometry) -> float:
    return geom.n_t * geom.n_r / 10 ** (snr / 10.0)


def optimal_beams(H_est: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Top left/right singular vectors ``(w, f)`` of ``H_est``.

    The third value is True when ``H_est`` is zero and the first canonical
    beams were substituted.
    """
    n_r, n_t = H_est.shape
    if not np.any(H_est):
        w = np.zeros(n_r, complex)
        f = np.zeros(n_t, complex)
        w[0] = f[0] = 1.0
        return w, f, True
    u, _, vh = np.linalg.svd(H_est)
    return u[:, 0], vh[0].conj(), False


def spectral_efficiency(H_true: np.ndarray, H_est: np.ndarray, noise_variance: float) -> float:
    """``log2(1 + |w^H H f|^2 / s2)`` with ``(w, f)`` taken from ``H_est``."""
    w, f, _ = optimal_beams(H_est)
    gain = abs(np.vdot(w, H_true @ f)) ** 2
    return math.log2(1.0 + gain / noise_variance)


def match_paths(est_angles, true_angles) -> list[tuple[int, int, float]]:
    """Greedy nearest-neighbour pairing of estimated to true paths.

    Distance is Euclidean in ``(cos phi, cos psi)``. Returns ``(est, true,
    distance)`` triples, closest pair first; unmatched paths are left out.
    Diagnostics only: NMSE and rate need no matching.
    """
    est = np.asarray(est_angles, dtype=float).reshape(2, -1)
    tru = np.asarray(true_angles, dtype=float).reshape(2, -1)
    ce, ct = np.cos(est).T, np.cos(tru).T
    if not len(ce) or not len(ct):
        return []
    dist = np.linalg.norm(ce[:, None, :] - ct[None, :, :], axis=2)
    pairs = []
    for _ in range(min(len(ce), len(ct))):
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        pairs.append((int(i), int(j), float(dist[i, j])))
        dist[i, :] = np.inf
        dist[:, j] = np.inf
    return pairs
