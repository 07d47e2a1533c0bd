"""Vectorized Monte Carlo over many independent replications of a chart.

Each replication owns a generator seeded by ``derive_seed(seed, label, i)``,
so its data does not depend on how many other replications run or on when
they stop. :func:`replication_stream` replays replication ``i`` one subgroup
at a time for the sequential charts.

:class:`BatchedISVD` advances many truncated-EWMA states at once. Per step it
writes the new ``D_t`` as ``A B^T`` with

    A = [U diag((1-lam) S), (lam/m) X^T, -lam U0 diag(s0^2)],  B = [V, Y^T, V0],

takes QR factors of ``A`` and ``B`` and an SVD of the small core
``Ra Rb^T``, and keeps the leading ``r`` triplets. Lines 3-8 of the sequential
chart are exact, so the truncated result is the same matrix the chain of
rank-one updates produces; this just batches it through LAPACK.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .model import Subgroup, derive_seed
from .monitor import Sigma0Factors

CHUNK = 16


def _source_model(model_or_factory, rng):
    if callable(model_or_factory) and not hasattr(model_or_factory, "sample"):
        return model_or_factory(rng)
    return model_or_factory


class ReplicationSource:
    """Subgroup generator for one replication, drawing in chunks."""

    def __init__(self, model_or_factory, m: int, seed: int):
        self.rng = np.random.default_rng(seed)
        self.model = _source_model(model_or_factory, self.rng)
        self.m = m
        self.t = 1

    def draw(self, count: int):
        xs, ys = self.model.sample(self.rng, self.t, count, self.m)
        self.t += count
        return xs, ys


def replication_stream(model_or_factory, m: int, seed, label: str, index: int,
                       chunk: int = CHUNK):
    """Yield the subgroups of replication ``index`` in order, forever."""
    src = ReplicationSource(model_or_factory, m, derive_seed(seed, label, index))
    t = 1
    while True:
        xs, ys = src.draw(chunk)
        for i in range(chunk):
            yield Subgroup(t, xs[i], ys[i])
            t += 1


class BatchedISVD:
    """Truncated EWMA cross-covariance charts for ``n`` replications."""

    def __init__(self, n: int, p: int, q: int, lam: float, r: int, sigma0: Sigma0Factors):
        self.lam = float(lam)
        self.r = min(int(r), p, q)
        self.U = np.zeros((n, p, self.r))
        self.S = np.zeros((n, self.r))
        self.V = np.zeros((n, q, self.r))
        self._A0 = -self.lam * sigma0.U0 * sigma0.s0_sq if sigma0.J else np.zeros((p, 0))
        self._B0 = sigma0.V0 if sigma0.J else np.zeros((q, 0))

    def step(self, idx, xs, ys) -> np.ndarray:
        """Advance replications ``idx`` with subgroups ``xs (k,m,p)``, ``ys (k,m,q)``."""
        lam, r = self.lam, self.r
        k, m, _ = xs.shape
        U, S, V = self.U[idx], self.S[idx], self.V[idx]
        A = np.concatenate([
            U * ((1 - lam) * S)[:, None, :],
            (lam / m) * xs.transpose(0, 2, 1),
            np.broadcast_to(self._A0, (k,) + self._A0.shape)], axis=2)
        B = np.concatenate([
            V, ys.transpose(0, 2, 1),
            np.broadcast_to(self._B0, (k,) + self._B0.shape)], axis=2)
        Qa, Ra = np.linalg.qr(A)
        Qb, Rb = np.linalg.qr(B)
        Uc, s, Vct = np.linalg.svd(Ra @ Rb.transpose(0, 2, 1))
        self.U[idx] = Qa @ Uc[:, :, :r]
        self.S[idx] = s[:, :r]
        self.V[idx] = Qb @ Vct[:, :r, :].transpose(0, 2, 1)
        return s[:, 0]


class BatchedDense:
    """Untruncated dense EWMA charts for ``n`` replications."""

    def __init__(self, n: int, p: int, q: int, lam: float, sigma0: Sigma0Factors):
        self.lam = float(lam)
        self.D = np.zeros((n, p, q))
        self._S0 = sigma0.dense() if sigma0.J else np.zeros((p, q))

    def step(self, idx, xs, ys) -> np.ndarray:
        lam = self.lam
        m = xs.shape[1]
        sample = np.einsum("kip,kiq->kpq", xs, ys) / m
        D = (1 - lam) * self.D[idx] + lam * (sample - self._S0)
        self.D[idx] = D
        return np.linalg.svd(D, compute_uv=False)[:, 0]


def make_batched_chart(method: str, n, p, q, lam, r, sigma0):
    if method == "isvd":
        return BatchedISVD(n, p, q, lam, r, sigma0)
    if method == "baseline":
        return BatchedDense(n, p, q, lam, sigma0)
    raise ValueError(f"unknown method {method!r}")


class PathSimulation:
    """Statistic paths of ``n`` replications, advanced on demand.

    ``advance(cap)`` runs every replication until its statistic first exceeds
    ``cap`` or it reaches ``horizon``. Because the statistic path does not
    depend on the control limit, the stored paths give exact run lengths for
    every ``H <= cap`` at once, and raising ``cap`` later resumes where each
    replication stopped.
    """

    def __init__(self, chart, model_or_factory: Callable | object, m: int, n: int,
                 horizon: int, seed, label: str):
        self.chart = chart
        self.horizon = int(horizon)
        self.n = n
        self.sources = [ReplicationSource(model_or_factory, m, derive_seed(seed, label, i))
                        for i in range(n)]
        p, q = self.sources[0].model.p, self.sources[0].model.q
        self.buf_x = np.empty((n, CHUNK, m, p))
        self.buf_y = np.empty((n, CHUNK, m, q))
        self.pos = np.full(n, CHUNK)
        self.t = np.zeros(n, dtype=int)
        self.paths = np.full((n, self.horizon), np.nan)
        self.runmax = np.full(n, -np.inf)
        self.cap = -np.inf
        self._rm = None

    def _fetch(self, idx):
        for i in idx[self.pos[idx] >= CHUNK]:
            self.buf_x[i], self.buf_y[i] = self.sources[i].draw(CHUNK)
            self.pos[i] = 0
        xs = self.buf_x[idx, self.pos[idx]]
        ys = self.buf_y[idx, self.pos[idx]]
        self.pos[idx] += 1
        return xs, ys

    def advance(self, cap: float):
        self.cap = max(self.cap, cap)
        self._rm = None
        active = np.flatnonzero((self.runmax <= cap) & (self.t < self.horizon))
        while active.size:
            xs, ys = self._fetch(active)
            T = self.chart.step(active, xs, ys)
            self.paths[active, self.t[active]] = T
            self.t[active] += 1
            self.runmax[active] = np.maximum(self.runmax[active], T)
            keep = (self.runmax[active] <= cap) & (self.t[active] < self.horizon)
            active = active[keep]
        return self

    def run_lengths(self, H: float):
        """``(lengths, censored)`` for limit ``H``; needs ``H <= cap``."""
        if H > self.cap:
            raise ValueError(f"paths only resolve limits up to {self.cap}, asked {H}")
        below = (self.running_max() <= H).sum(axis=1)
        censored = below == self.horizon
        return np.minimum(below + 1, self.horizon), censored

    def running_max(self):
        if self._rm is None:
            filled = np.where(np.isnan(self.paths), -np.inf, self.paths)
            self._rm = np.maximum.accumulate(filled, axis=1)
        return self._rm
