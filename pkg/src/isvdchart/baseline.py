"""Dense benchmark chart: same EWMA recursion, full SVD every step, no truncation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Subgroup
from .monitor import ChartPoint, Sigma0Factors


@dataclass(frozen=True, eq=False)
class DenseChartState:
    t: int
    D: np.ndarray
    lam: float
    H: float
    sigma0_dense: np.ndarray

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.D.shape != self.sigma0_dense.shape:
            raise ValueError("D and Sigma0 shapes differ")


def dense_init(sigma0: Sigma0Factors, lam: float, H: float, p: int, q: int) -> DenseChartState:
    S0 = sigma0.dense() if sigma0.J else np.zeros((p, q))
    if S0.shape != (p, q):
        raise ValueError(f"Sigma0 is {S0.shape}, chart is {(p, q)}")
    return DenseChartState(0, np.zeros((p, q)), float(lam), float(H), S0)


def largest_singular_value(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])


def dense_step(state: DenseChartState, subgroup: Subgroup):
    if subgroup.xs.shape[1] != state.D.shape[0] or subgroup.ys.shape[1] != state.D.shape[1]:
        raise ValueError(
            f"subgroup at t={subgroup.t} has dims "
            f"{subgroup.xs.shape[1]}x{subgroup.ys.shape[1]}, chart expects "
            f"{state.D.shape[0]}x{state.D.shape[1]}")
    lam = state.lam
    sample = subgroup.xs.T @ subgroup.ys / subgroup.m
    D = (1 - lam) * state.D + lam * (sample - state.sigma0_dense)
    T = largest_singular_value(D)
    new = DenseChartState(state.t + 1, D, lam, state.H, state.sigma0_dense)
    return new, ChartPoint(new.t, T, bool(T > state.H))
