import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmwtrack.acquisition import ChannelEstimate
from mmwtrack.channel import ArrayGeometry, PathSet, random_paths
from mmwtrack.detection import (
    DetectionDecision,
    DetectorConfig,
    change_statistic,
    detect,
    detector_threshold,
)
from mmwtrack.numerics import make_rng
from mmwtrack.sounding import ObservationBatch, design_grid, observe_paths
from mmwtrack.tracking import tracker_init, tracker_step

GEOM = ArrayGeometry(16, 16)
GRID = design_grid(16, 16, GEOM)
S2 = 2.56
# half of the 30-digit mpmath quantile chi2.isf(0.05, 512)
GAMMA_512 = 0.5 * 565.747584324597668


def test_threshold_dof2():
    assert detector_threshold(0.05, 1, 1) == pytest.approx(2.9957, abs=1e-4)


def test_threshold_nominal_operating_point():
    assert detector_threshold(0.05, 16, 16) == pytest.approx(GAMMA_512, rel=1e-8)


def test_threshold_monotone_in_pfa():
    g = [detector_threshold(p, 16, 16) for p in (0.2, 0.1, 0.05, 0.01)]
    assert all(a < b for a, b in zip(g, g[1:]))


def test_config():
    cfg = DetectorConfig.from_grid(0.05, GRID)
    assert cfg.dof == 512 and cfg.gamma == pytest.approx(GAMMA_512, rel=1e-8)
    assert DetectorConfig.from_grid(0.05, GRID, gamma=300.0).gamma == 300.0
    with pytest.raises(ValueError):
        DetectorConfig(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        DetectorConfig(0.1, 0.0, 2)


def test_statistic_perfect_noiseless():
    p = random_paths(make_rng(0), 3, 256.0)
    b = observe_paths(p, GRID, GEOM, 1e-12, None)
    assert change_statistic(b, p.gains, p.angles, GRID, GEOM) < 1e-6


def test_statistic_formula_and_scaling():
    rng = make_rng(1)
    p = random_paths(rng, 2, 256.0)
    b = observe_paths(p, GRID, GEOM, S2, rng)
    L = change_statistic(b, p.gains, p.angles, GRID, GEOM)
    clean = observe_paths(p, GRID, GEOM, 0.0, None).y
    assert L == pytest.approx(np.sum(np.abs(b.y - clean) ** 2) / S2)
    # doubling the noise variance halves the statistic
    b2 = ObservationBatch(b.y, 2 * S2)
    assert change_statistic(b2, p.gains, p.angles, GRID, GEOM) == pytest.approx(L / 2)


@given(st.floats(0.1, 10.0))
def test_statistic_residual_scaling(c):
    rng = make_rng(2)
    p = random_paths(rng, 2, 256.0)
    b = observe_paths(p, GRID, GEOM, S2, rng)
    clean = observe_paths(p, GRID, GEOM, 0.0, None).y
    L = change_statistic(b, p.gains, p.angles, GRID, GEOM)
    bc = ObservationBatch(clean + c * (b.y - clean), S2)
    assert change_statistic(bc, p.gains, p.angles, GRID, GEOM) == pytest.approx(c * c * L, rel=1e-9)


def test_statistic_needs_noise():
    with pytest.raises(ValueError):
        change_statistic(ObservationBatch(np.zeros(256, complex), 0.0), [], [], GRID, GEOM)


def test_detect_frozen_noiseless():
    p = random_paths(make_rng(3), 3, 256.0)
    st_ = tracker_init(ChannelEstimate(p.gains, p.angles, 0.0))
    cfg = DetectorConfig.from_grid(0.05, GRID)
    b = observe_paths(p, GRID, GEOM, 1e-6, None)
    for _ in range(20):
        st_ = tracker_step(st_, b, GRID, GEOM)
        dec = detect(b, st_, cfg, GRID, GEOM)
        assert isinstance(dec, DetectionDecision)
        assert not dec.changed and dec.changed == (dec.statistic > dec.threshold)


# Detection probabilities from a noncentral chi-squared oracle (scipy ncx2,
# numerically integrated over |alpha|^2 ~ Exp(256) for the random-gain case).
# With m = n the pilot beams are orthonormal, so a new path adds exactly
# 2|alpha|^2/s2 of noncentrality to 2L.
P_DETECT_RANDOM_GAIN = 0.7651320544288566
P_DETECT_FIXED = {0.0: 0.05, 3.0: 0.07782560428187854, 5.0: 0.1514920937753762,
                  7.0: 0.32014309869048413, 10.0: 0.7439693510610543}


def within_3se(rate, p, n):
    return abs(rate - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_new_path_is_detected():
    rng = make_rng(4)
    gamma = detector_threshold(0.05, 16, 16)
    hits = 0
    for _ in range(1000):
        old = random_paths(rng, 3, 256.0)
        new = random_paths(rng, 1, 256.0)
        both = PathSet(np.concatenate([old.gains, new.gains]),
                       np.concatenate([old.aod, new.aod, old.aoa, new.aoa]))
        b = observe_paths(both, GRID, GEOM, S2, rng)
        hits += change_statistic(b, old.gains, old.angles, GRID, GEOM) > gamma
    assert within_3se(hits / 1000, P_DETECT_RANDOM_GAIN, 1000)


def detection_power(gain, trials, rng):
    gamma = detector_threshold(0.05, 16, 16)
    hits = 0
    for _ in range(trials):
        old = random_paths(rng, 2, 256.0)
        phase = np.exp(2j * np.pi * rng.random())
        ang = rng.uniform(0, math.pi, 2)
        both = PathSet(np.concatenate([old.gains, [gain * phase]]),
                       np.concatenate([old.aod, ang[:1], old.aoa, ang[1:]]))
        b = observe_paths(both, GRID, GEOM, S2, rng)
        hits += change_statistic(b, old.gains, old.angles, GRID, GEOM) > gamma
    return hits / trials


def test_power_monotone_in_gain():
    rng = make_rng(5)
    power = {g: detection_power(g, 1000, rng) for g in P_DETECT_FIXED}
    vals = list(power.values())
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    for g, p in P_DETECT_FIXED.items():
        assert within_3se(power[g], p, 1000)


def test_weak_path_changes_are_missed():
    # |alpha|^2 well below s2 * gamma: the change hides in the noise
    assert detection_power(2.0, 500, make_rng(6)) < 1.0
