"""Simulation program: the nine benchmark setups, OC-ARL curves, timing, testbed.

Every setup shares ``p = 10``, ``q = 20``, ``m = 5`` and unit Gaussian noise.
The in-control patterns ``(u01, v01)`` are one sphere draw per master seed,
shared by all setups, and replication ``i`` of a given shift level uses the
same seed in every setup, so cross-setup comparisons use common random
numbers.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import baseline, monitor
from .calibration import CalibrationSpec, estimate_arl, find_control_limit
from .model import (ProcessModel, Subgroup, derive_seed, make_perpendicular,
                    process_model, sample_unit_sphere)
from .monitor import MonitorConfig, Sigma0Factors
from .simulation import PathSimulation, make_batched_chart

DEFAULT_S_SQ = (0.5, 1.0, 2.0)
GEOMETRIES = ("none", "parallel", "perpendicular")
METHODS = ("isvd", "baseline")


@dataclass(frozen=True)
class SetupSpec:
    id: int
    J: int = 0
    s01: float | None = None
    oc_geometry: str = "none"
    lam: float = 0.02
    r: int = 5
    s_sq_grid: tuple = DEFAULT_S_SQ
    p: int = 10
    q: int = 20
    m: int = 5

    def __post_init__(self):
        if self.J not in (0, 1):
            raise ValueError("J must be 0 or 1")
        if self.oc_geometry not in GEOMETRIES:
            raise ValueError(f"oc_geometry must be one of {GEOMETRIES}")
        if self.J == 1 and not (self.s01 and self.s01 > 0):
            raise ValueError("J=1 setups need a positive s01")
        if self.J == 0 and self.oc_geometry != "none":
            raise ValueError("parallel/perpendicular geometry needs J=1")
        object.__setattr__(self, "s_sq_grid", tuple(float(s) for s in self.s_sq_grid))
        if not self.s_sq_grid or min(self.s_sq_grid) <= 0:
            raise ValueError("s_sq_grid must hold positive values")

    def config(self) -> MonitorConfig:
        return MonitorConfig(self.lam, self.r, m=self.m)


def table1_setups() -> list[SetupSpec]:
    return [
        SetupSpec(1, lam=0.02, r=5),
        SetupSpec(2, lam=0.01, r=5),
        SetupSpec(3, lam=0.05, r=5),
        SetupSpec(4, lam=0.02, r=2),
        SetupSpec(5, lam=0.02, r=10),
        SetupSpec(6, J=1, s01=0.5, oc_geometry="parallel"),
        SetupSpec(7, J=1, s01=1.0, oc_geometry="parallel"),
        SetupSpec(8, J=1, s01=0.5, oc_geometry="perpendicular"),
        SetupSpec(9, J=1, s01=1.0, oc_geometry="perpendicular"),
    ]


def setup_by_id(setup_id: int) -> SetupSpec:
    for s in table1_setups():
        if s.id == setup_id:
            return s
    raise KeyError(f"no setup with id {setup_id}")


def in_control_model(setup: SetupSpec, seed=0) -> ProcessModel:
    factors = []
    if setup.J:
        rng = np.random.default_rng(derive_seed(seed, "in-control patterns"))
        u01 = sample_unit_sphere(setup.p, rng)
        v01 = sample_unit_sphere(setup.q, rng)
        factors = [(setup.s01, u01, v01)]
    return process_model(setup.p, setup.q, factors)


def oc_factory(setup: SetupSpec, ic_model: ProcessModel, s_sq: float, tau: int = 1):
    """Per-replication out-of-control model: ``rng -> ProcessModel``."""
    geometry = setup.oc_geometry

    def factory(rng):
        if geometry == "parallel":
            u, v = ic_model.U0[:, 0], ic_model.V0[:, 0]
        elif geometry == "perpendicular":
            u = make_perpendicular(ic_model.U0[:, 0], rng)
            v = make_perpendicular(ic_model.V0[:, 0], rng)
        else:
            u = sample_unit_sphere(ic_model.p, rng)
            v = sample_unit_sphere(ic_model.q, rng)
        return ic_model.with_change(s_sq, u, v, tau=tau)

    return factory


@dataclass(frozen=True)
class ExperimentResult:
    setup_id: int
    method: str
    s_sq: float
    oc_arl: float
    std_error: float
    H: float
    replications: int
    seed: int
    censor_fraction: float = 0.0


CSV_COLUMNS = ("setup_id", "method", "s_sq", "oc_arl", "std_error", "H",
               "replications", "seed")


def calibrate_setup(setup: SetupSpec, method: str, spec: CalibrationSpec):
    ic = in_control_model(setup, spec.seed)
    return find_control_limit(ic, setup.config(), spec, method=method)


def oc_arl_curve(setup: SetupSpec, method: str, spec: CalibrationSpec,
                 H: float | None = None) -> list[ExperimentResult]:
    """Zero-state OC ARL (change active from t=1) at each ``s^2`` in the grid."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    ic = in_control_model(setup, spec.seed)
    if H is None:
        H = calibrate_setup(setup, method, spec).H
    cfg = setup.config().with_limit(H)
    out = []
    for s_sq in setup.s_sq_grid:
        est = estimate_arl(oc_factory(setup, ic, s_sq), cfg, spec,
                           sigma0=Sigma0Factors.from_model(ic), method=method,
                           label=f"oc:{s_sq!r}")
        out.append(ExperimentResult(setup.id, method, s_sq, est.mean, est.std_error,
                                    float(H), spec.replications, spec.seed,
                                    est.censor_fraction))
    return out


class ExperimentRunner:
    """Runs setup x method grids, reusing control limits across requests.

    The baseline chart ignores ``r``, so setups differing only in ``r`` share
    one baseline calibration.
    """

    def __init__(self, spec: CalibrationSpec):
        self.spec = spec
        self.limits = {}

    def _key(self, setup, method):
        base = replace(setup, id=0, s_sq_grid=DEFAULT_S_SQ)
        if method == "baseline":
            base = replace(base, r=1)
        return (method, base)

    def limit(self, setup: SetupSpec, method: str) -> float:
        key = self._key(setup, method)
        if key not in self.limits:
            self.limits[key] = calibrate_setup(setup, method, self.spec)
        return self.limits[key].H

    def curve(self, setup: SetupSpec, method: str) -> list[ExperimentResult]:
        return oc_arl_curve(setup, method, self.spec, H=self.limit(setup, method))

    def run(self, setups, methods=("isvd",)) -> list[ExperimentResult]:
        results = []
        for setup in setups:
            for method in methods:
                results.extend(self.curve(setup, method))
        return results


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results_csv(results, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in results:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def write_summary_json(results, spec: CalibrationSpec, path, setups=()):
    doc = {
        "target_arl0": spec.target_arl0,
        "replications": spec.replications,
        "max_run_length": spec.max_run_length,
        "seed": spec.seed,
        "setups": [asdict(s) for s in setups],
        "results": [asdict(r) for r in results],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


# timing

@dataclass(frozen=True)
class TimingRow:
    p: int
    q: int
    r: int
    m: int
    J: int
    method: str
    steps: int
    median_seconds: float


def timing_benchmark(dims, r=5, m=5, J=1, steps=100, seed=0,
                     methods=METHODS, baseline_steps=None) -> list[TimingRow]:
    """Median wall time per chart step for each ``(p, q)`` and method."""
    if steps < 1:
        raise ValueError("steps must be positive")
    rows = []
    for p, q in dims:
        rng = np.random.default_rng(derive_seed(seed, "bench", p * 100003 + q))
        factors = [(1.0, sample_unit_sphere(p, rng), sample_unit_sphere(q, rng))
                   for _ in range(J)]
        model = process_model(p, q, factors)
        sigma0 = Sigma0Factors.from_model(model)
        n = max(steps, baseline_steps or 0)
        xs, ys = model.sample(rng, 1, n, m)
        data = [Subgroup(t + 1, xs[t], ys[t]) for t in range(n)]
        for method in methods:
            count = steps if method == "isvd" else (baseline_steps or steps)
            if method == "isvd":
                state = monitor.init(sigma0, MonitorConfig(0.02, r, m=m), p, q)
                fn = monitor.step
            else:
                state = baseline.dense_init(sigma0, 0.02, math.inf, p, q)
                fn = baseline.dense_step
            times = np.empty(count)
            for t in range(count):
                t0 = time.perf_counter()
                state, _ = fn(state, data[t])
                times[t] = time.perf_counter() - t0
            rows.append(TimingRow(p, q, r, m, J, method, count, float(np.median(times))))
    return rows


def write_timing_csv(rows, path):
    cols = ("p", "q", "r", "m", "J", "method", "steps", "median_seconds")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(getattr(row, c)) for c in cols])


# wafer testbed

def wafer_sites(n: int) -> np.ndarray:
    """``n`` evenly spread points in the unit disc (sunflower spiral)."""
    k = np.arange(n) + 0.5
    rad = np.sqrt(k / n)
    ang = k * math.pi * (3 - math.sqrt(5))
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def _unit(v):
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class Testbed:
    """Overlay map (``2 x n_overlay`` values, all x-errors then all y-errors)
    paired with a thickness map at ``n_thickness`` sites."""

    overlay_sites: np.ndarray
    thickness_sites: np.ndarray
    model: ProcessModel
    tau: int

    @property
    def u(self):
        return self.model.change.u

    @property
    def v(self):
        return self.model.change.v


def build_testbed(s_sq=0.75, n_overlay=25, n_thickness=20, tau=100, slope_angle=math.pi / 6,
                  s01=0.7) -> Testbed:
    """Synthetic overlay/thickness process.

    In control, y-translation of the overlay map co-varies with the mean
    thickness offset. From ``tau`` on, x-translation starts to co-vary with a
    planar thickness slope along ``slope_angle``.
    """
    osites = wafer_sites(n_overlay)
    tsites = wafer_sites(n_thickness)
    p, q = 2 * n_overlay, n_thickness
    u01 = _unit(np.r_[np.zeros(n_overlay), np.ones(n_overlay)])
    v01 = _unit(np.ones(q))
    u = _unit(np.r_[np.ones(n_overlay), np.zeros(n_overlay)])
    xy = tsites - tsites.mean(axis=0)
    v = _unit(xy @ np.array([math.cos(slope_angle), math.sin(slope_angle)]))
    model = process_model(p, q, [(s01, u01, v01)], change=(math.sqrt(s_sq), u, v), tau=tau)
    return Testbed(osites, tsites, model, tau)


@dataclass(frozen=True)
class CaseStudyReport:
    H: float
    tau: int
    s_sq: float
    lam: float
    r: int
    run_lengths: np.ndarray = field(repr=False)
    false_alarm_fraction: float = 0.0
    median_delay: float = math.nan
    censor_fraction: float = 0.0
    example_path: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        rl = self.run_lengths
        return {"H": self.H, "tau": self.tau, "s_sq": self.s_sq, "lambda": self.lam,
                "r": self.r, "replications": int(rl.size),
                "false_alarm_fraction": self.false_alarm_fraction,
                "median_delay": self.median_delay,
                "censor_fraction": self.censor_fraction,
                "run_length_quartiles": [float(x) for x in np.percentile(rl, [25, 50, 75])]}


def case_study_testbed(spec: CalibrationSpec, s_sq=0.75, lam=0.05, r=5, m=5,
                       tau=100, change=True, testbed: Testbed | None = None,
                       H: float | None = None) -> CaseStudyReport:
    """Calibrate on the in-control testbed, then run change-at-``tau`` streams.

    A run alarming before ``tau`` counts as a false alarm; the detection delay
    of the others is ``alarm_time - tau``.
    """
    tb = testbed or build_testbed(s_sq=s_sq, tau=tau)
    ic = tb.model.in_control()
    cfg = MonitorConfig(lam, r, m=m)
    if H is None:
        H = find_control_limit(ic, cfg, spec, label="testbed:calibrate").H
    model = tb.model if change else ic
    sigma0 = Sigma0Factors.from_model(ic)
    chart = make_batched_chart("isvd", spec.replications, ic.p, ic.q, lam, r, sigma0)
    sim = PathSimulation(chart, model, m, spec.replications, spec.max_run_length,
                         spec.seed, "testbed:run").advance(H)
    lengths, censored = sim.run_lengths(H)
    false = lengths < tb.tau
    delays = lengths[~false & ~censored] - tb.tau
    median_delay = float(np.median(delays)) if delays.size else math.inf
    ok = np.flatnonzero(~false)
    i = int(ok[0]) if ok.size else 0
    return CaseStudyReport(float(H), tb.tau, float(s_sq), lam, r, lengths,
                           float(false.mean()), median_delay, float(censored.mean()),
                           example_path=sim.paths[i, :lengths[i]].copy())
