"""Sigma0 estimation, Monte Carlo ARL estimation and control-limit search.

All run lengths are zero-state: every replication starts from ``D_0 = 0``.
Runs that never alarm are censored at ``max_run_length`` and counted at that
horizon, which biases the ARL estimate downward; the censored fraction is
always reported.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import baseline, monitor
from .model import derive_seed
from .monitor import MonitorConfig, Sigma0Factors
from .simulation import (PathSimulation, ReplicationSource, make_batched_chart,
                         replication_stream)

log = logging.getLogger(__name__)

MAX_CENSOR_FRACTION = 0.01


class CalibrationError(RuntimeError):
    """Control-limit search could not bracket or meet its target."""


@dataclass(frozen=True)
class CalibrationSpec:
    target_arl0: float = 200.0
    tolerance: float = 0.02
    replications: int = 2000
    max_run_length: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.target_arl0 > 0:
            raise ValueError(f"target_arl0 must be positive, got {self.target_arl0}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ValueError("replications must be a positive integer")
        if self.max_run_length is None:
            object.__setattr__(self, "max_run_length", int(math.ceil(10 * self.target_arl0)))
        if self.max_run_length < 10 * self.target_arl0:
            raise ValueError("max_run_length must be at least 10 x target_arl0")


class RunLength(NamedTuple):
    length: int
    censored: bool


@dataclass(frozen=True)
class ARLEstimate:
    mean: float
    std_error: float
    censor_fraction: float
    replications: int
    run_lengths: np.ndarray = field(repr=False)

    @classmethod
    def from_lengths(cls, lengths, censored):
        lengths = np.asarray(lengths, dtype=float)
        n = lengths.size
        se = float(lengths.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(lengths.mean()), se, float(np.mean(censored)), n, lengths)


@dataclass(frozen=True)
class CalibrationResult:
    H: float
    target_arl0: float
    achieved_arl: float
    std_error: float
    censor_fraction: float
    replications: int
    seed: int

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("H", "target_arl0", "achieved_arl", "std_error",
                 "censor_fraction", "replications", "seed")}


def noise_edge(xs, ys) -> float:
    """Typical top singular value of the sample cross-covariance of N
    independent pairs with the same marginal variances: ``(sqrt(p) + sqrt(q))
    * rms_sd(x) * rms_sd(y) / sqrt(N)``."""
    N, p = xs.shape
    q = ys.shape[1]
    sx = np.sqrt(np.mean(xs * xs))
    sy = np.sqrt(np.mean(ys * ys))
    return (np.sqrt(p) + np.sqrt(q)) * sx * sy / np.sqrt(N)


def estimate_sigma0(xs, ys, J="auto", center: bool = False,
                    edge_factor: float = 1.5) -> Sigma0Factors:
    """Factored sample cross-covariance of paired historical data.

    Keeps the ``J`` leading components. With ``J="auto"`` a component is kept
    when its singular value exceeds ``edge_factor`` times :func:`noise_edge`,
    so pure sampling noise is not subtracted as if it were structure.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 2 or ys.ndim != 2 or xs.shape[0] != ys.shape[0]:
        raise ValueError("xs and ys must be (N, p) and (N, q) with matching N")
    N = xs.shape[0]
    if N < 2:
        raise ValueError("need at least two historical pairs")
    if center:
        xs = xs - xs.mean(axis=0)
        ys = ys - ys.mean(axis=0)
    U, s, Vt = np.linalg.svd(xs.T @ ys / N, full_matrices=False)
    s_pos = s[s > 1e-14 * max(s[0], 1.0)] if s.size else s
    if J == "auto":
        if not edge_factor > 0:
            raise ValueError("edge_factor must be positive")
        J = int(np.count_nonzero(s_pos > edge_factor * noise_edge(xs, ys)))
    J = int(J)
    if J < 0:
        raise ValueError("J must be nonnegative")
    J = min(J, s_pos.size)
    return Sigma0Factors(s[:J], U[:, :J], Vt[:J].T)


def run_length(chart_init, stream, max_len: int) -> RunLength:
    """First alarm time of a sequential chart on ``stream``, or censored."""
    if isinstance(chart_init, baseline.DenseChartState):
        step = baseline.dense_step
    else:
        step = monitor.step
    state = chart_init
    for _, sg in zip(range(max_len), stream):
        state, point = step(state, sg)
        if point.alarm:
            return RunLength(point.t, False)
    return RunLength(max_len, True)


def _paths(model_or_factory, p, q, config, sigma0, spec, method, label, n=None):
    n = spec.replications if n is None else n
    chart = make_batched_chart(method, n, p, q, config.lam, config.r, sigma0)
    return PathSimulation(chart, model_or_factory, config.m, n,
                          spec.max_run_length, spec.seed, label)


def estimate_arl(model, config: MonitorConfig, spec: CalibrationSpec, *,
                 sigma0: Sigma0Factors | None = None, method: str = "isvd",
                 label: str = "arl", engine: str = "batched") -> ARLEstimate:
    """Monte Carlo ARL of the chart at ``config.H`` under ``model``.

    ``model`` may be a fitted model or a factory ``rng -> model`` that draws a
    fresh model per replication. ``sigma0`` defaults to the model's own
    in-control factors. ``engine="sequential"`` replays each replication
    through the one-subgroup-at-a-time charts (slow; for cross-checks).
    """
    p, q, sigma0 = _resolve(model, sigma0, spec)
    if math.isinf(config.H):
        n = spec.replications
        return ARLEstimate.from_lengths(np.full(n, spec.max_run_length), np.ones(n, bool))
    if engine == "batched":
        sim = _paths(model, p, q, config, sigma0, spec, method, label)
        sim.advance(config.H)
        return ARLEstimate.from_lengths(*sim.run_lengths(config.H))
    if engine != "sequential":
        raise ValueError(f"unknown engine {engine!r}")
    out = []
    for i in range(spec.replications):
        if method == "isvd":
            init = monitor.init(sigma0, config, p, q)
        else:
            init = baseline.dense_init(sigma0, config.lam, config.H, p, q)
        stream = replication_stream(model, config.m, spec.seed, label, i)
        out.append(run_length(init, stream, spec.max_run_length))
    return ARLEstimate.from_lengths([o.length for o in out], [o.censored for o in out])


def _resolve(model, sigma0, spec):
    probe = ReplicationSource(model, 1, derive_seed(spec.seed, "probe", 0)).model
    if sigma0 is None:
        sigma0 = Sigma0Factors.from_model(probe) if hasattr(probe, "scales") \
            else Sigma0Factors.none(probe.p, probe.q)
    return probe.p, probe.q, sigma0


def find_control_limit(model, config: MonitorConfig, spec: CalibrationSpec, *,
                       sigma0: Sigma0Factors | None = None, method: str = "isvd",
                       label: str = "calibrate", growth: float = 1.1,
                       max_expansions: int = 400) -> CalibrationResult:
    """Control limit whose in-control ARL matches ``spec.target_arl0``.

    Statistic paths are simulated once and extended only as far as the
    current upper bracket needs. Bisection then runs on the stored paths,
    where the ARL is an exactly nondecreasing function of ``H``.
    """
    if getattr(model, "change", None) is not None and math.isfinite(model.tau):
        raise ValueError("calibration needs an in-control model")
    p, q, sigma0 = _resolve(model, sigma0, spec)
    sim = _paths(model, p, q, config, sigma0, spec, method, label)
    target = spec.target_arl0

    def arl(H):
        lengths, _ = sim.run_lengths(H)
        return float(np.mean(lengths))

    sim.advance(0.0)
    lo = 0.0
    hi = float(np.median(sim.paths[:, 0]))
    if not hi > 0:
        raise CalibrationError("statistic is identically zero at t=1")
    for _ in range(max_expansions):
        sim.advance(hi)
        if arl(hi) >= target:
            break
        lo, hi = hi, hi * growth
    else:
        raise CalibrationError(
            f"no bracket for ARL {target} after {max_expansions} expansions "
            f"(last H={hi}, ARL={arl(hi):.1f})")

    tol = spec.tolerance * target
    best_H, best_gap = hi, abs(arl(hi) - target)
    for _ in range(200):
        if best_gap <= tol / 4 or hi - lo <= 1e-12 * hi:
            break
        mid = 0.5 * (lo + hi)
        a = arl(mid)
        if abs(a - target) < best_gap:
            best_H, best_gap = mid, abs(a - target)
        if a < target:
            lo = mid
        else:
            hi = mid
    H = best_H
    est = ARLEstimate.from_lengths(*sim.run_lengths(H))
    if best_gap > tol:
        # ARL(H) is a step function over finitely many paths
        log.warning("achieved ARL %.2f misses target %s by more than %.1f%%; "
                    "increase replications", est.mean, target, 100 * spec.tolerance)
    if est.censor_fraction > MAX_CENSOR_FRACTION:
        raise CalibrationError(
            f"censoring fraction {est.censor_fraction:.3f} at H={H:.4g} exceeds "
            f"{MAX_CENSOR_FRACTION}; raise max_run_length")
    return CalibrationResult(float(H), float(target), est.mean, est.std_error,
                             est.censor_fraction, spec.replications, spec.seed)
