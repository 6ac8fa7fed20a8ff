import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmwtrack.acquisition import ChannelEstimate
from mmwtrack.channel import ArrayGeometry, PathSet, random_paths, random_walk
from mmwtrack.numerics import make_rng
from mmwtrack.sounding import ObservationBatch, build_phi, design_grid, observe_paths
from mmwtrack.tracking import (
    DEFAULT_XI,
    TrackingError,
    linearize_observation,
    tracker_init,
    tracker_log_header,
    tracker_log_row,
    tracker_step,
)

GEOM = ArrayGeometry(16, 16)
GRID = design_grid(16, 16, GEOM)


def estimate_from(paths):
    return ChannelEstimate(paths.gains, paths.angles, 0.0)


def test_default_xi():
    assert DEFAULT_XI == pytest.approx(1.2185e-3, rel=1e-4)


def test_init():
    p = random_paths(make_rng(0), 3, 256.0)
    st_ = tracker_init(estimate_from(p), DEFAULT_XI)
    assert np.array_equal(st_.theta_hat, p.angles)
    assert not st_.M.any() and st_.M.shape == (6, 6)
    assert np.allclose(np.diag(st_.Q_u_assumed), DEFAULT_XI)


def test_init_rejects_empty_and_negative_xi():
    with pytest.raises(ValueError):
        tracker_init(ChannelEstimate([], [], 0.0))
    p = random_paths(make_rng(0), 1, 256.0)
    with pytest.raises(ValueError):
        tracker_init(estimate_from(p), -1.0)


def test_linearization_finite_difference():
    p = random_paths(make_rng(1), 3, 256.0)
    st_ = tracker_init(estimate_from(p))
    C, pred = linearize_observation(st_, GRID, GEOM)
    assert np.allclose(pred, build_phi(p.angles, GRID, GEOM) @ p.gains)
    h = 1e-6
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        d = (build_phi(p.angles + e, GRID, GEOM) - build_phi(p.angles - e, GRID, GEOM)) @ p.gains / (2 * h)
        fd = np.concatenate([d.real, d.imag])
        assert np.linalg.norm(C[:, k] - fd) <= 1e-4 * np.linalg.norm(fd)


def test_linearization_at_beam_center():
    p = PathSet([3.0 + 1.0j], [GRID.tx_directions[7], GRID.rx_directions[4]])
    C, _ = linearize_observation(tracker_init(estimate_from(p)), GRID, GEOM)
    h = 1e-6
    e = np.array([h, 0.0])
    d = (build_phi(p.angles + e, GRID, GEOM) - build_phi(p.angles - e, GRID, GEOM)) @ p.gains / (2 * h)
    fd = np.concatenate([d.real, d.imag])
    assert np.linalg.norm(C[:, 0] - fd) <= 1e-4 * np.linalg.norm(fd)


def test_linearization_zero_gain():
    p = PathSet(np.zeros(2), [0.5, 1.0, 2.0, 2.5])
    C, pred = linearize_observation(tracker_init(estimate_from(p)), GRID, GEOM)
    assert not C.any() and not pred.any()


def test_static_noiseless_fixed_point():
    p = random_paths(make_rng(2), 3, 256.0)
    st_ = tracker_init(estimate_from(p))
    b = observe_paths(p, GRID, GEOM, 1e-12, None)
    for _ in range(100):
        st_ = tracker_step(st_, b, GRID, GEOM)
    assert np.allclose(st_.theta_hat, p.angles, atol=1e-9)


def test_zero_process_noise_freezes_state():
    p = random_paths(make_rng(3), 3, 256.0)
    st_ = tracker_init(estimate_from(p), xi=0.0)
    b = ObservationBatch(make_rng(4).standard_normal(256) * 10 + 0j, 1.0)
    nxt = tracker_step(st_, b, GRID, GEOM)
    assert np.array_equal(nxt.theta_hat, st_.theta_hat)
    assert not nxt.M.any()


def test_zero_gain_is_pure_predictor():
    p = PathSet(np.zeros(2), [0.5, 1.0, 2.0, 2.5])
    st_ = tracker_init(estimate_from(p), xi=1e-3)
    b = observe_paths(random_paths(make_rng(5), 2, 256.0), GRID, GEOM, 1.0, make_rng(6))
    for n in range(1, 6):
        st_ = tracker_step(st_, b, GRID, GEOM)
        assert np.array_equal(st_.theta_hat, p.angles)
        assert np.allclose(st_.M, n * 1e-3 * np.eye(4))


@given(st.integers(0, 2**32 - 1))
def test_posterior_below_prior(seed):
    rng = make_rng(seed)
    p = random_paths(rng, 2, 256.0)
    st_ = tracker_init(estimate_from(p), DEFAULT_XI)
    st_ = replace(st_, M=np.diag(rng.uniform(0, 1e-3, 4)))
    b = observe_paths(PathSet(p.gains, random_walk(p.angles, rng, 0.01)), GRID, GEOM, 2.56, rng)
    prior = st_.M + st_.Q_u_assumed
    post = tracker_step(st_, b, GRID, GEOM).M
    assert np.allclose(post, post.T)
    assert np.linalg.eigvalsh(prior - post).min() >= -1e-12
    assert np.linalg.eigvalsh(post).min() >= -1e-15


def test_solve_failure_surfaces(monkeypatch):
    p = random_paths(make_rng(7), 1, 256.0)
    st_ = tracker_init(estimate_from(p))
    b = observe_paths(p, GRID, GEOM, 1.0, make_rng(8))

    def boom(*a, **k):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(np.linalg, "solve", boom)
    with pytest.raises(TrackingError):
        tracker_step(st_, b, GRID, GEOM)


def test_rejects_zero_noise_variance():
    p = random_paths(make_rng(9), 1, 256.0)
    with pytest.raises(ValueError):
        tracker_step(tracker_init(estimate_from(p)), ObservationBatch(np.zeros(256, complex), 0.0),
                     GRID, GEOM)


def test_angles_stay_in_range():
    p = PathSet([16.0], [0.01, math.pi - 0.01])
    st_ = tracker_init(estimate_from(p), DEFAULT_XI)
    rng = make_rng(10)
    truth = p
    for _ in range(30):
        truth = PathSet(truth.gains, random_walk(truth.angles, rng, math.radians(2)))
        st_ = tracker_step(st_, observe_paths(truth, GRID, GEOM, 2.56, rng), GRID, GEOM)
        assert np.all((st_.theta_hat >= 0) & (st_.theta_hat <= math.pi))


def test_nis_consistency_when_model_matches():
    rng = make_rng(11)
    sigma = math.radians(0.5)
    s2 = 2.56
    nis = []
    while len(nis) < 1000:
        truth = random_paths(rng, 3, 256.0)
        st_ = tracker_init(estimate_from(truth), sigma ** 2)
        for _ in range(50):
            truth = PathSet(truth.gains, random_walk(truth.angles, rng, sigma))
            st_ = tracker_step(st_, observe_paths(truth, GRID, GEOM, s2, rng), GRID, GEOM)
            nis.append(st_.nis_last)
    assert 0.5 * 512 <= np.mean(nis) <= 2 * 512


def test_log_row():
    p = random_paths(make_rng(12), 2, 256.0)
    row = tracker_log_row(3, tracker_init(estimate_from(p)))
    assert len(row) == len(tracker_log_header())
    assert row[0] == 3 and row[1].count(";") == 3
