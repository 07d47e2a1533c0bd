"""ISVD control chart for emerging cross-covariance patterns.

The chart tracks ``D_t = (1 - lam) D_{t-1} + lam (Sigma_hat_t - Sigma0)``, where
``Sigma_hat_t`` is the average of ``x y^T`` over the subgroup, as a thin SVD
truncated to rank ``r``. Each subgroup costs ``m + J`` rank-one updates. The
statistic is the largest singular value of ``D_t``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import factored as fsvd
from .factored import FactoredMatrix
from .model import ProcessModel, Subgroup


@dataclass(frozen=True)
class MonitorConfig:
    lam: float
    r: int
    H: float = np.inf
    m: int = 5

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"r must be a positive integer, got {self.r}")
        if not self.H > 0:
            raise ValueError(f"control limit must be positive, got {self.H}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")

    def with_limit(self, H: float) -> "MonitorConfig":
        return replace(self, H=H)


@dataclass(frozen=True, eq=False)
class Sigma0Factors:
    """Factored in-control cross-covariance ``sum_j s0j_sq u0j v0j^T``."""

    s0_sq: np.ndarray
    U0: np.ndarray
    V0: np.ndarray

    def __post_init__(self):
        s0_sq = np.asarray(self.s0_sq, float).ravel()
        J = s0_sq.size
        U0 = np.asarray(self.U0, float).reshape(-1, J) if J else np.asarray(self.U0, float)
        V0 = np.asarray(self.V0, float).reshape(-1, J) if J else np.asarray(self.V0, float)
        if U0.ndim != 2 or V0.ndim != 2 or U0.shape[1] != J or V0.shape[1] != J:
            raise ValueError("pattern matrices must have one column per component")
        if np.any(s0_sq <= 0):
            raise ValueError("component weights must be positive")
        if J and not (np.allclose(np.linalg.norm(U0, axis=0), 1, atol=1e-8)
                      and np.allclose(np.linalg.norm(V0, axis=0), 1, atol=1e-8)):
            raise ValueError("pattern vectors must have unit norm")
        object.__setattr__(self, "s0_sq", s0_sq)
        object.__setattr__(self, "U0", U0)
        object.__setattr__(self, "V0", V0)

    @classmethod
    def none(cls, p: int, q: int) -> "Sigma0Factors":
        return cls(np.zeros(0), np.zeros((p, 0)), np.zeros((q, 0)))

    @classmethod
    def from_model(cls, model: ProcessModel) -> "Sigma0Factors":
        return cls(model.scales ** 2, model.U0, model.V0)

    @property
    def J(self) -> int:
        return self.s0_sq.size

    @property
    def p(self) -> int:
        return self.U0.shape[0]

    @property
    def q(self) -> int:
        return self.V0.shape[0]

    def dense(self) -> np.ndarray:
        return (self.U0 * self.s0_sq) @ self.V0.T

    def __eq__(self, other):
        if not isinstance(other, Sigma0Factors):
            return NotImplemented
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in
                   ((self.s0_sq, other.s0_sq), (self.U0, other.U0), (self.V0, other.V0)))


@dataclass(frozen=True)
class ChartPoint:
    t: int
    statistic: float
    alarm: bool


@dataclass(frozen=True)
class MonitorState:
    t: int
    D: FactoredMatrix
    config: MonitorConfig
    sigma0: Sigma0Factors
    update_count: int = 0

    @property
    def p(self) -> int:
        return self.D.p

    @property
    def q(self) -> int:
        return self.D.q


def init(sigma0: Sigma0Factors, config: MonitorConfig, p: int, q: int) -> MonitorState:
    """Fresh chart with ``D_0 = 0``."""
    D = fsvd.empty(p, q)
    if sigma0.J and (sigma0.p != p or sigma0.q != q):
        raise ValueError(
            f"Sigma0 patterns are {sigma0.p}x{sigma0.q}, chart is {p}x{q}")
    if not sigma0.J:
        sigma0 = Sigma0Factors.none(p, q)
    return MonitorState(0, D, config, sigma0)


def statistic(state: MonitorState) -> float:
    """Largest singular value of ``D_t`` (0 at rank 0)."""
    return float(state.D.S[0]) if state.D.k else 0.0


def step(state: MonitorState, subgroup: Subgroup):
    """Consume one subgroup; return ``(new_state, ChartPoint)``.

    The running factorization is threaded through all ``m`` sample updates.
    The subgroup's own size is used in place of ``config.m`` so ragged
    subgroups still follow the EWMA recursion exactly.
    """
    xs, ys = subgroup.xs, subgroup.ys
    if xs.shape[1] != state.p or ys.shape[1] != state.q:
        raise ValueError(
            f"subgroup at t={subgroup.t} has dims {xs.shape[1]}x{ys.shape[1]}, "
            f"chart expects {state.p}x{state.q}")
    cfg, sig0 = state.config, state.sigma0
    m = xs.shape[0]
    lam = cfg.lam

    if lam == 1.0:
        D = fsvd.empty(state.p, state.q)
    else:
        D = state.D
        if D.k:
            D = fsvd.scale(D, m * (1 - lam) / lam)
    for i in range(m):
        D = fsvd.rank_one_update(D, xs[i], ys[i])
    if D.k:
        D = fsvd.scale(D, 1.0 / m)
    s0 = np.sqrt(sig0.s0_sq)
    for j in range(sig0.J):
        D = fsvd.rank_one_update(D, s0[j] * sig0.U0[:, j], -s0[j] * sig0.V0[:, j])
    if D.k:
        D = fsvd.scale(D, lam)
    D = fsvd.truncate(D, cfg.r)

    count = state.update_count + m + sig0.J
    if count >= fsvd.REORTH_EVERY or fsvd.orthogonality_drift(D) > fsvd.DRIFT_TOL:
        D = fsvd.reorthonormalize(D)
        count = 0

    new = MonitorState(state.t + 1, D, cfg, sig0, count)
    T = statistic(new)
    return new, ChartPoint(new.t, T, bool(T > cfg.H))


def run(state: MonitorState, subgroups):
    """Apply ``step`` over an iterable; yields ``(state, point)`` pairs."""
    for sg in subgroups:
        state, point = step(state, sg)
        yield state, point
