"""Thin SVD of a p x q matrix maintained under rank-one modifications.

A :class:`FactoredMatrix` stores ``U @ diag(S) @ V.T`` with orthonormal
columns in ``U`` and ``V`` and nonincreasing ``S``. Every operation returns a
new value; inputs are never mutated.

The rank-one update follows Brand's construction: project the update vectors
onto the current subspaces, append the normalized orthogonal residuals to the
bases, and rotate by the SVD of a small ``(k+1) x (k+1)`` core matrix. Cost is
``O((p + q) k^2 + k^3)`` per update instead of the ``O(pq min(p, q))`` of a
fresh decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# ||eta|| <= RESIDUAL_RTOL * ||a|| means a already lies in span(U).
RESIDUAL_RTOL = 1e-12
# Singular values <= SV_FLOOR * max(S[0], 1) are dropped after an update.
SV_FLOOR = 1e-14
# Reorthonormalize after this many updates, or sooner if drift exceeds DRIFT_TOL.
REORTH_EVERY = 128
DRIFT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FactoredMatrix:
    """Thin SVD triple representing a ``p x q`` matrix at rank ``k``."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U, S, V = self.U, self.S, self.V
        if U.ndim != 2 or V.ndim != 2 or S.ndim != 1:
            raise ValueError("U and V must be 2-d and S 1-d")
        if not (U.shape[1] == S.shape[0] == V.shape[1]):
            raise ValueError(
                f"rank mismatch: U {U.shape}, S {S.shape}, V {V.shape}")
        if U.shape[0] < 1 or V.shape[0] < 1:
            raise ValueError("dimensions must be positive")

    @property
    def p(self) -> int:
        return self.U.shape[0]

    @property
    def q(self) -> int:
        return self.V.shape[0]

    @property
    def k(self) -> int:
        return self.S.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.p, self.q)

    def __eq__(self, other):
        if not isinstance(other, FactoredMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.U, other.U)
                and np.array_equal(self.S, other.S)
                and np.array_equal(self.V, other.V))

    def __repr__(self):
        return f"FactoredMatrix(p={self.p}, q={self.q}, k={self.k})"


def empty(p: int, q: int) -> FactoredMatrix:
    """Rank-0 factorization of the ``p x q`` zero matrix."""
    if int(p) != p or int(q) != q or p < 1 or q < 1:
        raise ValueError(f"dimensions must be positive integers, got ({p}, {q})")
    p, q = int(p), int(q)
    return FactoredMatrix(np.zeros((p, 0)), np.zeros(0), np.zeros((q, 0)))


def from_dense(M) -> FactoredMatrix:
    """Factor a dense matrix with a full SVD, dropping numerically zero components."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return _finalize(U, s, Vt.T)


def reconstruct(F: FactoredMatrix) -> np.ndarray:
    """Dense ``U @ diag(S) @ V.T``."""
    return (F.U * F.S) @ F.V.T


def _canonical_signs(U, V):
    # first nonzero entry of each U column made nonnegative; V follows
    if U.shape[1] == 0:
        return U, V
    mags = np.abs(U)
    thresh = 1e-12 * mags.max(axis=0, keepdims=True)
    first = np.argmax(mags > thresh, axis=0)
    signs = np.sign(U[first, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def _finalize(U, s, V):
    """Drop negligible singular values and fix signs."""
    if s.size:
        keep = s > SV_FLOOR * max(s[0], 1.0)
        U, s, V = U[:, keep], s[keep], V[:, keep]
    U, V = _canonical_signs(U, V)
    return FactoredMatrix(np.ascontiguousarray(U), s.copy(), np.ascontiguousarray(V))


def _residual(B, a):
    """Coefficients of ``a`` in span(B) and the orthogonal remainder.

    Two Gram-Schmidt passes keep the remainder orthogonal to working precision
    even when ``a`` is nearly inside the span.
    """
    coef = B.T @ a
    res = a - B @ coef
    extra = B.T @ res
    res -= B @ extra
    return coef + extra, res


def update_core(F: FactoredMatrix, a, b):
    """Build Brand's core pieces for ``F + a b^T``.

    Returns ``(ua, eta, vb, xi, K)`` where ``ua = U^T a``, ``eta`` is the part
    of ``a`` orthogonal to span(U) (likewise ``vb``, ``xi`` for ``b``), and
    ``K = [[diag(S), 0], [0, 0]] + [ua; |eta|] [vb; |xi|]^T``. A residual below
    ``RESIDUAL_RTOL`` relative to its vector is zeroed, and the matching row or
    column of ``K`` is omitted, so ``K`` may be ``k x (k+1)`` etc.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ua, eta = _residual(F.U, a)
    vb, xi = _residual(F.V, b)
    ne, nx = np.linalg.norm(eta), np.linalg.norm(xi)
    if ne <= RESIDUAL_RTOL * np.linalg.norm(a):
        ne = 0.0
        eta = np.zeros_like(eta)
    if nx <= RESIDUAL_RTOL * np.linalg.norm(b):
        nx = 0.0
        xi = np.zeros_like(xi)
    k = F.k
    left = np.concatenate([ua, [ne]]) if ne > 0 else ua
    right = np.concatenate([vb, [nx]]) if nx > 0 else vb
    K = np.zeros((left.size, right.size))
    K[np.arange(k), np.arange(k)] = F.S
    K += np.outer(left, right)
    return ua, eta, vb, xi, K


def rank_one_update(F: FactoredMatrix, a, b) -> FactoredMatrix:
    """Thin SVD of ``reconstruct(F) + outer(a, b)``.

    The result has rank at most ``F.k + 1``. When ``a`` lies in span(U) and
    ``b`` in span(V) the rank does not grow. A zero ``a`` or ``b`` returns
    ``F`` unchanged.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (F.p,) or b.shape != (F.q,):
        raise ValueError(
            f"update vectors must have shapes ({F.p},) and ({F.q},), "
            f"got {a.shape} and {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("update vectors must be finite")
    if not a.any() or not b.any():
        return F

    _, eta, _, xi, K = update_core(F, a, b)
    Ub, Vb = F.U, F.V
    if K.shape[0] > F.k:
        Ub = np.column_stack([Ub, eta / np.linalg.norm(eta)])
    if K.shape[1] > F.k:
        Vb = np.column_stack([Vb, xi / np.linalg.norm(xi)])
    Uk, s, Vkt = np.linalg.svd(K, full_matrices=False)
    return _finalize(Ub @ Uk, s, Vb @ Vkt.T)


def scale(F: FactoredMatrix, c: float) -> FactoredMatrix:
    """Multiply the represented matrix by a positive scalar."""
    c = float(c)
    if not np.isfinite(c) or c <= 0:
        raise ValueError(f"scale factor must be positive and finite, got {c}")
    if c == 1.0:
        return F
    return FactoredMatrix(F.U, F.S * c, F.V)


def truncate(F: FactoredMatrix, r: int) -> FactoredMatrix:
    """Keep the leading ``min(r, k)`` singular triplets."""
    if int(r) != r or r < 1:
        raise ValueError(f"truncation rank must be a positive integer, got {r}")
    r = int(r)
    if F.k <= r:
        return F
    return FactoredMatrix(np.ascontiguousarray(F.U[:, :r]), F.S[:r].copy(),
                          np.ascontiguousarray(F.V[:, :r]))


def orthogonality_drift(F: FactoredMatrix) -> float:
    """Largest entry of ``|U^T U - I|`` and ``|V^T V - I|``."""
    if F.k == 0:
        return 0.0
    eye = np.eye(F.k)
    return float(max(np.abs(F.U.T @ F.U - eye).max(),
                     np.abs(F.V.T @ F.V - eye).max()))


def reorthonormalize(F: FactoredMatrix) -> FactoredMatrix:
    """Restore orthonormal bases without changing the represented matrix.

    QR of each basis, then the SVD of ``Ru diag(S) Rv^T`` folds the triangular
    factors back into the singular values.
    """
    if F.k == 0:
        return F
    Qu, Ru = np.linalg.qr(F.U)
    Qv, Rv = np.linalg.qr(F.V)
    Uc, s, Vct = np.linalg.svd((Ru * F.S) @ Rv.T)
    return _finalize(Qu @ Uc, s, Qv @ Vct.T)


def leading_triplet(F: FactoredMatrix):
    """``(sigma_1, u_1, v_1)``, or ``(0.0, None, None)`` for the zero matrix."""
    if F.k == 0:
        return 0.0, None, None
    return float(F.S[0]), F.U[:, 0].copy(), F.V[:, 0].copy()
