"""Generative model for two coupled data streams.

In control, each paired observation is

    x = mu_x + sum_j z_j u0j + eps_x,    y = mu_y + sum_j z_j v0j + eps_y,

with shared latent factors ``z_j ~ N(0, s0j^2)``. From the change time ``tau``
on, one more latent ``z ~ N(0, s^2)`` adds ``z u`` to ``x`` and ``z v`` to
``y``, so the cross-covariance moves from ``Sigma0`` to ``Sigma0 + s^2 u v^T``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

_UNIT_TOL = 1e-8


def derive_seed(parent, label: str, index: int = 0) -> int:
    """Child seed as a stable hash of ``(parent, label, index)``.

    Independent of process, platform and ``PYTHONHASHSEED``.
    """
    digest = hashlib.blake2b(f"{parent}|{label}|{index}".encode(),
                             digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def sample_unit_sphere(dim: int, rng_seed=None) -> np.ndarray:
    """Uniform draw from the unit sphere in ``R^dim`` (normalized Gaussian)."""
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim}")
    rng = _rng(rng_seed)
    while True:
        g = rng.standard_normal(int(dim))
        n = np.linalg.norm(g)
        if n > 0:
            return g / n


def make_perpendicular(w, rng_seed=None) -> np.ndarray:
    """Uniform unit vector on the subsphere orthogonal to unit vector ``w``."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError("w must be a vector")
    if w.size < 2:
        raise ValueError("no direction orthogonal to a 1-d vector")
    if abs(np.linalg.norm(w) - 1.0) > _UNIT_TOL:
        raise ValueError("w must have unit norm")
    rng = _rng(rng_seed)
    while True:
        g = sample_unit_sphere(w.size, rng)
        g -= (g @ w) * w
        g -= (g @ w) * w
        n = np.linalg.norm(g)
        if n > 1e-8:
            return g / n


def _unit(vec, dim, name):
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (dim,):
        raise ValueError(f"{name} must have shape ({dim},), got {vec.shape}")
    if abs(np.linalg.norm(vec) - 1.0) > _UNIT_TOL:
        raise ValueError(f"{name} must have unit norm")
    return vec


@dataclass(frozen=True)
class Change:
    """Emerging factor: scale ``s`` and unit patterns ``u`` (in x), ``v`` (in y)."""

    s: float
    u: np.ndarray
    v: np.ndarray

    @property
    def s_sq(self) -> float:
        return self.s ** 2


@dataclass(frozen=True, eq=False)
class ProcessModel:
    """Latent-factor model of paired ``(x, y)`` observations.

    ``scales``, ``U0`` and ``V0`` hold the ``J`` in-control factors column-wise:
    factor ``j`` has standard deviation ``scales[j]`` and patterns
    ``U0[:, j]``, ``V0[:, j]``. Subgroups with ``t >= tau`` include ``change``.
    """

    p: int
    q: int
    scales: np.ndarray = field(default=None)
    U0: np.ndarray = field(default=None)
    V0: np.ndarray = field(default=None)
    mu_x: np.ndarray = field(default=None)
    mu_y: np.ndarray = field(default=None)
    noise_sd_x: float = 1.0
    noise_sd_y: float = 1.0
    change: Change | None = None
    tau: float = math.inf

    def __post_init__(self):
        p, q = self.p, self.q
        if int(p) != p or int(q) != q or p < 1 or q < 1:
            raise ValueError("p and q must be positive integers")
        scales = np.zeros(0) if self.scales is None else np.asarray(self.scales, float).ravel()
        J = scales.size
        U0 = np.zeros((p, 0)) if self.U0 is None else np.asarray(self.U0, float).reshape(p, J)
        V0 = np.zeros((q, 0)) if self.V0 is None else np.asarray(self.V0, float).reshape(q, J)
        if np.any(scales <= 0):
            raise ValueError("factor scales must be strictly positive")
        for j in range(J):
            _unit(U0[:, j], p, f"u0[{j}]")
            _unit(V0[:, j], q, f"v0[{j}]")
        mu_x = np.zeros(p) if self.mu_x is None else np.asarray(self.mu_x, float)
        mu_y = np.zeros(q) if self.mu_y is None else np.asarray(self.mu_y, float)
        if mu_x.shape != (p,) or mu_y.shape != (q,):
            raise ValueError("mean vectors have wrong shape")
        if self.noise_sd_x <= 0 or self.noise_sd_y <= 0:
            raise ValueError("noise standard deviations must be positive")
        if self.change is not None:
            if not self.change.s > 0:
                raise ValueError("change scale must be positive")
            object.__setattr__(self, "change", Change(
                float(self.change.s), _unit(self.change.u, p, "u"),
                _unit(self.change.v, q, "v")))
        if not (self.tau == math.inf or (int(self.tau) == self.tau and self.tau >= 1)):
            raise ValueError("tau must be a positive integer or infinity")
        for name, val in (("scales", scales), ("U0", U0), ("V0", V0),
                          ("mu_x", mu_x), ("mu_y", mu_y)):
            object.__setattr__(self, name, val)

    @property
    def J(self) -> int:
        return self.scales.size

    def with_change(self, s_sq: float, u, v, tau=1) -> "ProcessModel":
        return replace(self, change=Change(math.sqrt(s_sq), u, v), tau=tau)

    def in_control(self) -> "ProcessModel":
        return replace(self, change=None, tau=math.inf)

    def sample(self, rng: np.random.Generator, t0: int, count: int, m: int):
        """Draw subgroups for times ``t0 .. t0 + count - 1``.

        Returns ``(xs, ys)`` of shapes ``(count, m, p)`` and ``(count, m, q)``.
        The emerging latent is drawn whether or not it is active so the random
        stream does not depend on ``tau``.
        """
        p, q, J = self.p, self.q, self.J
        g = rng.standard_normal((count, m, J + 1 + p + q))
        z0 = g[..., :J] * self.scales
        xs = z0 @ self.U0.T + self.noise_sd_x * g[..., J + 1:J + 1 + p] + self.mu_x
        ys = z0 @ self.V0.T + self.noise_sd_y * g[..., J + 1 + p:] + self.mu_y
        if self.change is not None:
            t = np.arange(t0, t0 + count)
            active = (t >= self.tau)[:, None]
            z = np.where(active, g[..., J] * self.change.s, 0.0)[..., None]
            xs = xs + z * self.change.u
            ys = ys + z * self.change.v
        return xs, ys


def process_model(p, q, factors=(), change=None, tau=math.inf, **kwargs) -> ProcessModel:
    """Build a model from ``factors = [(s0j, u0j, v0j), ...]``.

    ``change`` is ``(s, u, v)`` with ``s`` the standard deviation of the
    emerging latent (so the cross-covariance shift is ``s^2 u v^T``).
    """
    factors = list(factors)
    scales = np.array([f[0] for f in factors], dtype=float)
    U0 = np.column_stack([f[1] for f in factors]) if factors else None
    V0 = np.column_stack([f[2] for f in factors]) if factors else None
    if change is not None and not isinstance(change, Change):
        change = Change(*change)
    return ProcessModel(p, q, scales, U0, V0, change=change, tau=tau, **kwargs)


@dataclass(frozen=True, eq=False)
class EmpiricalModel:
    """In-control stream that resamples historical pairs with replacement."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, float))
        ys = np.atleast_2d(np.asarray(self.ys, float))
        if xs.shape[0] != ys.shape[0] or xs.shape[0] < 1:
            raise ValueError("historical xs and ys must pair up")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def p(self) -> int:
        return self.xs.shape[1]

    @property
    def q(self) -> int:
        return self.ys.shape[1]

    def sample(self, rng, t0, count, m):
        idx = rng.integers(0, self.xs.shape[0], size=(count, m))
        return self.xs[idx], self.ys[idx]


@dataclass(frozen=True, eq=False)
class Subgroup:
    """``m`` paired observations collected at time ``t``."""

    t: int
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        ys = np.atleast_2d(np.asarray(self.ys, dtype=float))
        if xs.ndim != 2 or ys.ndim != 2:
            raise ValueError("xs and ys must be (m, p) and (m, q) arrays")
        if xs.shape[0] != ys.shape[0]:
            raise ValueError(f"unequal pair counts: {xs.shape[0]} x vs {ys.shape[0]} y")
        if xs.shape[0] < 1:
            raise ValueError("empty subgroup")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def m(self) -> int:
        return self.xs.shape[0]


def sample_subgroup(model, t: int, m: int, rng_seed=None) -> Subgroup:
    """One subgroup of ``m`` independent pairs at time ``t``."""
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    if int(t) != t or t < 1:
        raise ValueError("t must be a positive integer")
    xs, ys = model.sample(_rng(rng_seed), int(t), 1, int(m))
    return Subgroup(int(t), xs[0], ys[0])


def true_cross_covariance(model: ProcessModel, post_change: bool = False) -> np.ndarray:
    """``sum_j s0j^2 u0j v0j^T``, plus ``s^2 u v^T`` when ``post_change``."""
    sigma = (model.U0 * model.scales ** 2) @ model.V0.T
    if post_change:
        if model.change is None:
            raise ValueError("model has no change component")
        sigma = sigma + model.change.s_sq * np.outer(model.change.u, model.change.v)
    return sigma
