import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmwtrack import _kernels
from mmwtrack.sounding import cosine_bin_centers

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


@needs_numba
@given(st.integers(0, 6), st.integers(1, 24), st.integers(1, 24), st.integers(1, 20),
       st.integers(0, 2**32 - 1))
def test_backends_agree(L, m_t, m_r, n, seed):
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0, math.pi, L)
    psi = rng.uniform(0, math.pi, L)
    args = (phi, psi, cosine_bin_centers(m_t), cosine_bin_centers(m_r), n, n + 1)
    a = _kernels.gain_terms_numpy(*args)
    b = _kernels.gain_terms_numba(*args)
    for x, y in zip(a, b):
        assert x.shape == y.shape
        assert np.allclose(x, y, atol=1e-12)


def test_env_flag_selects_numpy():
    code = "from mmwtrack import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, MMWTRACK_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == "numpy"


@needs_numba
def test_default_backend_is_numba():
    if os.environ.get("MMWTRACK_DISABLE_NUMBA"):
        pytest.skip("numba disabled in this environment")
    assert _kernels.BACKEND == "numba"


def test_selected_kernel_matches_backend():
    expected = _kernels.gain_terms_numba if _kernels.USE_NUMBA else _kernels.gain_terms_numpy
    assert _kernels.gain_terms is expected
