"""Monte Carlo drivers: acquisition and tracking sweeps, the integrated
acquisition/tracking/detection loop, and detector calibration.

Seeding: every trial draws from ``derived_rng(seed, stream, point, trial)``
where ``stream`` identifies the experiment kind and ``point`` the index on
the swept axis, so any single trial can be regenerated on its own. All arms
of a trial see the same channel and the same pilot observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..acquisition import ChannelEstimate, SicConfig, acquire, sic_starting_point
from ..channel import PathSet, assemble_channel, evolve_slot, random_paths, random_walk
from ..detection import DetectorConfig, change_statistic, detect
from ..numerics import derived_rng, sample_complex_gaussian
from ..sounding import design_grid, observe_paths
from ..tracking import TrackingError, tracker_init, tracker_step
from .config import ExperimentConfig
from .metrics import (
    aggregate_nmse_db,
    nmse_ratio,
    noise_variance_for_snr,
    ratio_to_db,
    spectral_efficiency,
)

STREAMS = {
    "acq_vs_snr": 1,
    "acq_vs_grid": 2,
    "track_vs_snr": 3,
    "track_vs_grid": 4,
    "track_vs_sigma": 5,
    "integrated": 6,
    "calibrate": 7,
}
SWEEP_KINDS = ("acq_vs_snr", "acq_vs_grid", "track_vs_snr", "track_vs_grid", "track_vs_sigma")
ACQ_ARMS = ("search", "lm")
TRACK_ARMS = ("search", "lm", "kalman", "kalman_acq_err")
INTEGRATED_ARMS = ("ideal", "kalman_oracle", "system", "lm", "search")


@dataclass(frozen=True)
class MetricRecord:
    experiment: str
    arm: str
    variable: str
    value: float
    trial: int
    metric: float  # NMSE ratio (linear) for the sweeps

    @property
    def metric_db(self) -> float:
        return ratio_to_db(self.metric)


def summarize(records) -> list[dict]:
    """Per (arm, value) aggregates; NMSE in dB is taken of the mean ratio."""
    groups: dict[tuple, list[float]] = {}
    meta: dict[tuple, MetricRecord] = {}
    for rec in records:
        key = (rec.arm, rec.value)
        groups.setdefault(key, []).append(rec.metric)
        meta.setdefault(key, rec)
    out = []
    for key, vals in groups.items():
        rec = meta[key]
        arr = np.asarray(vals)
        db = np.array([ratio_to_db(v) for v in arr])
        out.append(
            {
                "experiment": rec.experiment,
                "arm": rec.arm,
                "variable": rec.variable,
                "value": rec.value,
                "trials": arr.size,
                "nmse_db": aggregate_nmse_db(arr),
                "mean_trial_db": float(db.mean()),
                "std_trial_db": float(db.std(ddof=1)) if arr.size > 1 else 0.0,
            }
        )
    return out


def _sic_cfg(cfg: ExperimentConfig, noise_variance: float) -> SicConfig:
    return SicConfig.for_noise(noise_variance, cfg.gain_snr_floor_db, cfg.sic_max_paths)


def search_estimate(batch, grid, geom, cfg: ExperimentConfig) -> ChannelEstimate:
    """Grid-search baseline: SIC with a fixed number of paths, no threshold."""
    return sic_starting_point(batch, grid, geom, SicConfig(cfg.sic_max_paths, 0.0))


def lm_estimate(batch, grid, geom, cfg: ExperimentConfig) -> ChannelEstimate:
    return acquire(batch, grid, geom, _sic_cfg(cfg, batch.noise_variance),
                   gain_snr_floor_db=cfg.gain_snr_floor_db)


def _estimate_channel(est, geom) -> np.ndarray:
    if isinstance(est, ChannelEstimate):
        est = est.as_paths()
    return assemble_channel(est, geom)


# --------------------------------------------------------------------------
# acquisition sweeps


def acquisition_trial(cfg: ExperimentConfig, snr: float, m: tuple[int, int],
                      rng: np.random.Generator, arms=ACQ_ARMS) -> dict[str, float]:
    """NMSE ratio per arm for one random ``n_paths``-path channel."""
    geom = cfg.geometry
    grid = design_grid(*m, geom)
    s2 = noise_variance_for_snr(snr, geom)
    truth = random_paths(rng, cfg.n_paths, geom.n_t * geom.n_r)
    H = assemble_channel(truth, geom)
    batch = observe_paths(truth, grid, geom, s2, rng)
    out = {}
    if "search" in arms:
        out["search"] = nmse_ratio(H, _estimate_channel(search_estimate(batch, grid, geom, cfg), geom))
    if "lm" in arms:
        out["lm"] = nmse_ratio(H, _estimate_channel(lm_estimate(batch, grid, geom, cfg), geom))
    return out


def run_acquisition_sweep(cfg: ExperimentConfig, vary: str = "snr") -> Iterator[MetricRecord]:
    kind = f"acq_vs_{vary}"
    arms = tuple(cfg.arms or ACQ_ARMS)
    points = _points(cfg, vary)
    for i, (label, value, snr, m, _sigma) in enumerate(points):
        for k in range(cfg.trials):
            rng = derived_rng(cfg.seed, STREAMS[kind], i, k)
            for arm, ratio in acquisition_trial(cfg, snr, m, rng, arms).items():
                yield MetricRecord(kind, arm, label, value, k, ratio)


def _points(cfg: ExperimentConfig, vary: str):
    """(label, value, snr, (m_t, m_r), sigma_u_deg) for each point on the axis."""
    snr0, sig0, m0 = cfg.snr_db[0], cfg.sigma_u_deg[0], (cfg.m_t, cfg.m_r)
    if vary == "snr":
        return [("snr_db", s, s, m0, sig0) for s in cfg.snr_db]
    if vary == "grid":
        return [("grid_size", float(g), snr0, (g, g), sig0) for g in cfg.grid_sizes]
    if vary == "sigma":
        return [("sigma_u2_rad2", math.radians(s) ** 2, snr0, m0, s) for s in cfg.sigma_u_deg]
    raise ValueError(f"unknown sweep axis {vary!r}")


# --------------------------------------------------------------------------
# tracking sweeps


def tracking_block(cfg: ExperimentConfig, snr: float, m: tuple[int, int], sigma_u_deg: float,
                   rng: np.random.Generator, arms=TRACK_ARMS,
                   err_rng: np.random.Generator | None = None) -> dict[str, float]:
    """Mean NMSE ratio over slots 1..slots-1 of one block, per arm.

    The Kalman arms start from the true angles at slot 0; ``kalman`` also
    uses the true gains, ``kalman_acq_err`` adds CN(0, s2) to each gain.
    The per-slot arms re-estimate from scratch in every slot.
    """
    geom = cfg.geometry
    grid = design_grid(*m, geom)
    s2 = noise_variance_for_snr(snr, geom)
    sigma_u = math.radians(sigma_u_deg)
    truth = random_paths(rng, cfg.n_paths, geom.n_t * geom.n_r)
    trackers = {}
    if "kalman" in arms:
        trackers["kalman"] = tracker_init(ChannelEstimate(truth.gains, truth.angles, 0.0), cfg.xi)
    if "kalman_acq_err" in arms:
        err_rng = err_rng or rng
        noisy = truth.gains + sample_complex_gaussian(err_rng, s2, truth.n_paths)
        trackers["kalman_acq_err"] = tracker_init(ChannelEstimate(noisy, truth.angles, 0.0), cfg.xi)
    sums = {arm: 0.0 for arm in arms}
    for _slot in range(1, cfg.slots):
        truth = PathSet(truth.gains, random_walk(truth.angles, rng, sigma_u))
        H = assemble_channel(truth, geom)
        batch = observe_paths(truth, grid, geom, s2, rng)
        for arm in arms:
            if arm in trackers:
                try:
                    trackers[arm] = tracker_step(trackers[arm], batch, grid, geom)
                except TrackingError:
                    pass
                st = trackers[arm]
                Hhat = assemble_channel(PathSet(st.alpha, st.theta_hat), geom)
            elif arm == "search":
                Hhat = _estimate_channel(search_estimate(batch, grid, geom, cfg), geom)
            elif arm == "lm":
                Hhat = _estimate_channel(lm_estimate(batch, grid, geom, cfg), geom)
            else:
                raise ValueError(f"unknown tracking arm {arm!r}")
            sums[arm] += nmse_ratio(H, Hhat)
    n = max(cfg.slots - 1, 1)
    return {arm: total / n for arm, total in sums.items()}


def run_tracking_sweep(cfg: ExperimentConfig, vary: str = "snr") -> Iterator[MetricRecord]:
    kind = f"track_vs_{vary}"
    arms = tuple(cfg.arms or TRACK_ARMS)
    for i, (label, value, snr, m, sigma) in enumerate(_points(cfg, vary)):
        for k in range(cfg.trials):
            rng = derived_rng(cfg.seed, STREAMS[kind], i, k)
            err_rng = derived_rng(cfg.seed, STREAMS[kind], i, k, 1)
            res = tracking_block(cfg, snr, m, sigma, rng, arms, err_rng)
            for arm, ratio in res.items():
                yield MetricRecord(kind, arm, label, value, k, ratio)


def run_sweep(kind: str, cfg: ExperimentConfig) -> Iterator[MetricRecord]:
    if kind not in SWEEP_KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}; choose from {SWEEP_KINDS}")
    family, _, vary = kind.partition("_vs_")
    if family == "acq":
        return run_acquisition_sweep(cfg, vary)
    return run_tracking_sweep(cfg, vary)


# --------------------------------------------------------------------------
# integrated loop


@dataclass
class SlotRecord:
    run: int
    slot: int
    n_true_paths: int
    true_change: bool
    mode: str  # "acquire", "track", "reacquire" or "outage"
    statistic: float
    threshold: float
    decision: bool
    tested: bool
    # a true change went undetected and no acquisition has happened since
    stale: bool
    n_est_paths: int
    nmse_db: dict[str, float] = field(default_factory=dict)
    rate: dict[str, float] = field(default_factory=dict)


@dataclass
class IntegratedSummary:
    slots: int = 0
    true_changes: int = 0
    detected: int = 0
    missed: int = 0
    false_alarms: int = 0
    delayed_detections: int = 0
    h0_tracked_slots: int = 0
    outage_slots: int = 0

    @property
    def false_alarm_rate(self) -> float:
        return self.false_alarms / self.h0_tracked_slots if self.h0_tracked_slots else float("nan")

    def add(self, rec: SlotRecord):
        self.slots += 1
        if rec.mode == "outage":
            self.outage_slots += 1
        if rec.true_change:
            self.true_changes += 1
            if rec.decision:
                self.detected += 1
            else:
                self.missed += 1
        elif rec.stale:
            if rec.decision:
                self.delayed_detections += 1
        else:
            if rec.decision:
                self.false_alarms += 1
            if rec.tested:
                self.h0_tracked_slots += 1


def run_integrated(cfg: ExperimentConfig, run_index: int = 0) -> Iterator[SlotRecord]:
    """Acquisition -> tracking -> detection over ``cfg.slots`` slots.

    Slot 0 is acquired. Afterwards every slot runs one tracker step and the
    change test on the tracker's posterior; a declared change triggers a
    fresh acquisition on the same slot's pilots. An empty acquisition on a
    non-empty channel is an outage; acquisition is retried next slot.

    Reference arms on the same observations: ideal CSI, a Kalman filter
    re-initialized from the truth at every true change, and per-slot LM and
    grid search.
    """
    geom = cfg.geometry
    grid = design_grid(cfg.m_t, cfg.m_r, geom)
    s2 = noise_variance_for_snr(cfg.snr_db[0], geom)
    dyn = cfg.dynamics(cfg.sigma_u_deg[0], abrupt=True)
    det_cfg = DetectorConfig.from_grid(cfg.p_fa, grid, cfg.gamma)
    arms = tuple(cfg.arms or INTEGRATED_ARMS)
    rng = derived_rng(cfg.seed, STREAMS["integrated"], run_index)

    truth = random_paths(rng, cfg.n_paths, dyn.gain_variance)
    tracker = None
    oracle = None
    stale = False
    for slot in range(cfg.slots):
        changed = False
        if slot > 0:
            truth, changed = evolve_slot(truth, dyn, rng)
        H = assemble_channel(truth, geom)
        batch = observe_paths(truth, grid, geom, s2, rng)

        stat, decision, tested = float("nan"), False, False
        if tracker is None:
            mode = "acquire" if slot == 0 else "reacquire"
            est = lm_estimate(batch, grid, geom, cfg)
            if not est.is_empty:
                tracker = tracker_init(est, cfg.xi)
                stat = change_statistic(batch, tracker.alpha, tracker.theta_hat, grid, geom)
        else:
            mode = "track"
            try:
                tracker = tracker_step(tracker, batch, grid, geom)
            except TrackingError:
                pass
            dec = detect(batch, tracker, det_cfg, grid, geom)
            stat, decision, tested = dec.statistic, dec.changed, True
            if decision:
                mode = "reacquire"
                est = lm_estimate(batch, grid, geom, cfg)
                tracker = None if est.is_empty else tracker_init(est, cfg.xi)
        if tracker is None:
            mode = "outage" if truth.n_paths > 0 else "idle"
        # a slot is under H0 only while the tracked model postdates every change
        stale_now = stale and not changed
        if mode in ("acquire", "reacquire"):
            stale = False
        elif changed:
            stale = True

        H_est = {}
        if "system" in arms:
            H_est["system"] = (
                np.zeros_like(H) if tracker is None
                else assemble_channel(PathSet(tracker.alpha, tracker.theta_hat), geom)
            )
        if "ideal" in arms:
            H_est["ideal"] = H
        if "kalman_oracle" in arms:
            if truth.n_paths == 0:
                oracle = None
            elif oracle is None or changed:
                oracle = tracker_init(ChannelEstimate(truth.gains, truth.angles, 0.0), cfg.xi)
            else:
                try:
                    oracle = tracker_step(oracle, batch, grid, geom)
                except TrackingError:
                    pass
            H_est["kalman_oracle"] = (
                np.zeros_like(H) if oracle is None
                else assemble_channel(PathSet(oracle.alpha, oracle.theta_hat), geom)
            )
        if "lm" in arms:
            H_est["lm"] = _estimate_channel(lm_estimate(batch, grid, geom, cfg), geom)
        if "search" in arms:
            H_est["search"] = _estimate_channel(search_estimate(batch, grid, geom, cfg), geom)

        nmse, rate = {}, {}
        for arm, Hhat in H_est.items():
            nmse[arm] = ratio_to_db(nmse_ratio(H, Hhat)) if truth.n_paths else float("nan")
            rate[arm] = spectral_efficiency(H, Hhat, s2)
        yield SlotRecord(
            run=run_index,
            slot=slot,
            n_true_paths=truth.n_paths,
            true_change=changed,
            mode=mode,
            statistic=stat,
            threshold=det_cfg.gamma,
            decision=decision,
            tested=tested,
            stale=stale_now,
            n_est_paths=0 if tracker is None else tracker.n_paths,
            nmse_db=nmse,
            rate=rate,
        )


# --------------------------------------------------------------------------
# detector calibration


@dataclass
class CalibrationResult:
    p_fa: float
    threshold: float
    slots: int
    false_alarms: int
    statistics: np.ndarray

    @property
    def rate(self) -> float:
        return self.false_alarms / self.slots

    @property
    def binomial_se(self) -> float:
        return math.sqrt(self.p_fa * (1 - self.p_fa) / self.slots)


def calibrate_detector(cfg: ExperimentConfig, slots: int | None = None) -> CalibrationResult:
    """Empirical false-alarm rate under H0 with the true channel as estimate.

    Each slot draws a fresh channel (``n_paths`` paths) and noisy pilots; the
    statistic is evaluated at the true gains and angles.
    """
    geom = cfg.geometry
    grid = design_grid(cfg.m_t, cfg.m_r, geom)
    s2 = noise_variance_for_snr(cfg.snr_db[0], geom)
    det_cfg = DetectorConfig.from_grid(cfg.p_fa, grid, cfg.gamma)
    n = slots or cfg.trials
    rng = derived_rng(cfg.seed, STREAMS["calibrate"], 0)
    stats = np.empty(n)
    for i in range(n):
        truth = random_paths(rng, cfg.n_paths, geom.n_t * geom.n_r)
        batch = observe_paths(truth, grid, geom, s2, rng)
        stats[i] = change_statistic(batch, truth.gains, truth.angles, grid, geom)
    return CalibrationResult(cfg.p_fa, det_cfg.gamma, n, int((stats > det_cfg.gamma).sum()), stats)
