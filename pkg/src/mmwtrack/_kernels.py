"""Array-factor kernels behind the gain matrix and its angle derivatives.

Every LM iteration and every Kalman step evaluates the pilot gain matrix and
its 2L derivative columns, so this is where the simulator spends its time.
Two interchangeable backends are provided:

* ``numpy`` -- broadcasting over (antenna, direction, path);
* ``numba`` -- an ``@njit`` loop using a power recurrence for the phasors.

The numba backend is used when numba imports cleanly, unless the environment
variable ``MMWTRACK_DISABLE_NUMBA`` is set to ``1``/``true``/``yes``. The flag
is read once, at import time.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None


def _numba_disabled_by_env() -> bool:
    flag = os.environ.get("MMWTRACK_DISABLE_NUMBA", "")
    return flag.strip().lower() in {"1", "true", "yes", "on"}


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _numba_disabled_by_env()


def _array_factor_numpy(cos_angles, cos_dirs, n, sign):
    # g[m, l] = (1/n) sum_k exp(sign*j*pi*k*(cos_angles[l] - cos_dirs[m]))
    k = np.arange(n, dtype=np.float64)[:, None, None]
    delta = cos_angles[None, :] - cos_dirs[:, None]
    phase = np.exp((sign * 1j * np.pi) * k * delta[None, :, :])
    g = phase.mean(axis=0)
    dg = (sign * 1j * np.pi) * (k * phase).mean(axis=0)
    return g, dg


def gain_terms_numpy(phi, psi, cos_tx_dirs, cos_rx_dirs, n_t, n_r):
    """Pure-numpy gain matrix and derivative columns.

    Returns ``(Phi, D)`` where ``Phi`` is ``(m_r*m_t, L)`` and ``D`` is
    ``(m_r*m_t, 2L)``; column ``l`` of ``D`` is d Phi[:, l] / d phi_l and
    column ``L + l`` is d Phi[:, l] / d psi_l.
    """
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    m_t = cos_tx_dirs.shape[0]
    m_r = cos_rx_dirs.shape[0]
    n_paths = phi.shape[0]
    gt, dgt = _array_factor_numpy(np.cos(phi), cos_tx_dirs, n_t, 1.0)
    gr, dgr = _array_factor_numpy(np.cos(psi), cos_rx_dirs, n_r, -1.0)
    dgt = dgt * (-np.sin(phi))[None, :]
    dgr = dgr * (-np.sin(psi))[None, :]
    # row index q + p*m_r: receive index runs fastest
    rows = m_t * m_r
    Phi = (gt[:, None, :] * gr[None, :, :]).reshape(rows, n_paths)
    D = np.empty((rows, 2 * n_paths), dtype=np.complex128)
    D[:, :n_paths] = (dgt[:, None, :] * gr[None, :, :]).reshape(rows, n_paths)
    D[:, n_paths:] = (gt[:, None, :] * dgr[None, :, :]).reshape(rows, n_paths)
    return Phi, D


def _gain_terms_loop(phi, psi, cos_tx_dirs, cos_rx_dirs, n_t, n_r):
    m_t = cos_tx_dirs.shape[0]
    m_r = cos_rx_dirs.shape[0]
    n_paths = phi.shape[0]
    gt = np.empty((m_t, n_paths), dtype=np.complex128)
    dgt = np.empty((m_t, n_paths), dtype=np.complex128)
    gr = np.empty((m_r, n_paths), dtype=np.complex128)
    dgr = np.empty((m_r, n_paths), dtype=np.complex128)
    for l in range(n_paths):
        c = np.cos(phi[l])
        s = -np.sin(phi[l])
        for p in range(m_t):
            z = np.exp(1j * np.pi * (c - cos_tx_dirs[p]))
            acc = 0.0 + 0.0j
            dacc = 0.0 + 0.0j
            zk = 1.0 + 0.0j
            for k in range(n_t):
                acc += zk
                dacc += k * zk
                zk *= z
            gt[p, l] = acc / n_t
            dgt[p, l] = (1j * np.pi) * dacc / n_t * s
        c = np.cos(psi[l])
        s = -np.sin(psi[l])
        for q in range(m_r):
            z = np.exp(-1j * np.pi * (c - cos_rx_dirs[q]))
            acc = 0.0 + 0.0j
            dacc = 0.0 + 0.0j
            zk = 1.0 + 0.0j
            for k in range(n_r):
                acc += zk
                dacc += k * zk
                zk *= z
            gr[q, l] = acc / n_r
            dgr[q, l] = (-1j * np.pi) * dacc / n_r * s
    rows = m_t * m_r
    Phi = np.empty((rows, n_paths), dtype=np.complex128)
    D = np.empty((rows, 2 * n_paths), dtype=np.complex128)
    for l in range(n_paths):
        for p in range(m_t):
            for q in range(m_r):
                i = q + p * m_r
                Phi[i, l] = gt[p, l] * gr[q, l]
                D[i, l] = dgt[p, l] * gr[q, l]
                D[i, n_paths + l] = gt[p, l] * dgr[q, l]
    return Phi, D


if HAVE_NUMBA:
    _gain_terms_jit = numba.njit(cache=True, fastmath=False)(_gain_terms_loop)

    def gain_terms_numba(phi, psi, cos_tx_dirs, cos_rx_dirs, n_t, n_r):
        """Numba-compiled twin of :func:`gain_terms_numpy`."""
        return _gain_terms_jit(
            np.ascontiguousarray(phi, dtype=np.float64),
            np.ascontiguousarray(psi, dtype=np.float64),
            np.ascontiguousarray(cos_tx_dirs, dtype=np.float64),
            np.ascontiguousarray(cos_rx_dirs, dtype=np.float64),
            int(n_t),
            int(n_r),
        )
else:  # pragma: no cover
    gain_terms_numba = None


gain_terms = gain_terms_numba if USE_NUMBA else gain_terms_numpy
BACKEND = "numba" if USE_NUMBA else "numpy"
