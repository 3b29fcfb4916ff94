"""Tolerance-aware subspace arithmetic over R^n.

Subspaces are stored as orthonormal column bases.  Every rank decision goes
through singular values against a relative threshold (with an absolute floor
so the zero matrix behaves sensibly), which keeps kernel/image/intersection
results deterministic for a fixed tolerance.  All operations are pure and
Subspace values are immutable.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "REL_TOL",
    "ABS_FLOOR",
    "as_matrix",
    "Subspace",
    "kernel",
    "image",
    "preimage",
]

# Singular values below REL_TOL * sigma_max count as zero; the threshold
# never drops below ABS_FLOOR.
REL_TOL = 1e-9
ABS_FLOOR = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float64 array.

    1-D input becomes a single row.  Raises ``ValueError`` on NaN/Inf
    entries or ndim > 2.
    """
    M = np.asarray(a, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    if M.size and not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def _rank_threshold(s: np.ndarray, tol: float) -> float:
    smax = float(s[0]) if s.size else 0.0
    return max(tol * smax, ABS_FLOOR)


def _frozen(M: np.ndarray) -> np.ndarray:
    out = np.array(M, dtype=float)
    out.setflags(write=False)
    return out


class Subspace:
    """A linear subspace of R^n held as an orthonormal basis (columns).

    Parameters
    ----------
    ambient_dim : int
        Dimension n of the surrounding space.
    basis : (n, k) array or None
        Orthonormal columns spanning the subspace; ``None`` gives {0}.
    tol : float
        Relative rank tolerance carried into derived operations.
    """

    __slots__ = ("ambient_dim", "basis", "tol")

    def __init__(self, ambient_dim: int, basis=None, tol: float = REL_TOL):
        n = int(ambient_dim)
        if n < 0:
            raise ValueError("ambient dimension must be >= 0")
        if basis is None:
            B = np.zeros((n, 0))
        else:
            B = np.asarray(basis, dtype=float)
            if B.ndim == 1:
                B = B.reshape(-1, 1)
        if B.shape[0] != n:
            raise ValueError(f"basis rows {B.shape[0]} != ambient dim {n}")
        if B.size and not np.all(np.isfinite(B)):
            raise ValueError("basis contains non-finite entries")
        if B.shape[1]:
            gram = B.T @ B
            if not np.allclose(gram, np.eye(B.shape[1]), atol=1e-7):
                raise ValueError("basis columns are not orthonormal")
        object.__setattr__(self, "ambient_dim", n)
        object.__setattr__(self, "basis", _frozen(B))
        object.__setattr__(self, "tol", float(tol))

    def __setattr__(self, name, value):
        raise AttributeError("Subspace is immutable")

    # -- constructors ------------------------------------------------

    @classmethod
    def zero(cls, ambient_dim: int, tol: float = REL_TOL) -> "Subspace":
        return cls(ambient_dim, None, tol)

    @classmethod
    def full(cls, ambient_dim: int, tol: float = REL_TOL) -> "Subspace":
        return cls(ambient_dim, np.eye(ambient_dim), tol)

    @classmethod
    def from_span(cls, M, tol: float = REL_TOL) -> "Subspace":
        """Subspace spanned by the columns of ``M`` (orthonormalized)."""
        return image(M, tol)

    # -- basic queries -----------------------------------------------

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def is_zero(self) -> bool:
        return self.dim == 0

    def is_full(self) -> bool:
        return self.dim == self.ambient_dim

    def _atol(self, scale: float = 1.0) -> float:
        return max(10.0 * self.tol * scale, ABS_FLOOR)

    # -- geometry ----------------------------------------------------

    def projector(self) -> np.ndarray:
        """Orthogonal projector onto the subspace (n x n, idempotent)."""
        return self.basis @ self.basis.T

    def complement(self) -> "Subspace":
        """Orthogonal complement."""
        if self.dim == 0:
            return Subspace.full(self.ambient_dim, self.tol)
        return kernel(self.basis.T, self.tol)

    def project(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape[0] != self.ambient_dim:
            raise ValueError("vector dimension mismatch")
        return self.basis @ (self.basis.T @ v)

    def distance(self, v) -> float:
        """Euclidean distance from ``v`` to the subspace."""
        v = np.asarray(v, dtype=float).reshape(-1)
        return float(np.linalg.norm(v - self.project(v)))

    def contains_vector(self, v) -> bool:
        v = np.asarray(v, dtype=float).reshape(-1)
        return self.distance(v) <= self._atol(float(np.linalg.norm(v)))

    def contains(self, other: "Subspace") -> bool:
        """True iff every basis vector of ``other`` lies in self (within tol)."""
        self._check_ambient(other)
        if other.dim == 0:
            return True
        resid = other.basis - self.basis @ (self.basis.T @ other.basis)
        return float(np.linalg.norm(resid, axis=0).max()) <= self._atol(1.0)

    def equals(self, other: "Subspace") -> bool:
        return self.dim == other.dim and self.contains(other)

    # -- lattice operations ------------------------------------------

    def sum(self, other: "Subspace") -> "Subspace":
        """Smallest subspace containing both operands."""
        self._check_ambient(other)
        tol = max(self.tol, other.tol)
        if self.dim == 0:
            return Subspace(self.ambient_dim, other.basis, tol)
        if other.dim == 0:
            return Subspace(self.ambient_dim, self.basis, tol)
        return image(np.hstack([self.basis, other.basis]), tol)

    def intersect(self, other: "Subspace") -> "Subspace":
        """Intersection, computed as the complement of the sum of complements."""
        self._check_ambient(other)
        tol = max(self.tol, other.tol)
        if self.is_full():
            return Subspace(self.ambient_dim, other.basis, tol)
        if other.is_full():
            return Subspace(self.ambient_dim, self.basis, tol)
        return self.complement().sum(other.complement()).complement()

    def _check_ambient(self, other: "Subspace") -> None:
        if not isinstance(other, Subspace):
            raise TypeError("expected a Subspace")
        if other.ambient_dim != self.ambient_dim:
            raise ValueError(
                f"ambient dimension mismatch: {self.ambient_dim} vs {other.ambient_dim}"
            )

    def __repr__(self) -> str:
        return f"Subspace(dim {self.dim} of R^{self.ambient_dim})"


def kernel(M, tol: float = REL_TOL) -> Subspace:
    """Null space of ``M`` as a Subspace of R^cols.

    An empty or zero-row matrix has the full ambient space as kernel.
    """
    M = as_matrix(M, "kernel operand")
    rows, cols = M.shape
    if rows == 0 or cols == 0:
        return Subspace.full(cols, tol)
    _, s, Vt = np.linalg.svd(M)
    thr = _rank_threshold(s, tol)
    rank = int(np.sum(s > thr))
    return Subspace(cols, Vt[rank:].T, tol)


def image(M, tol: float = REL_TOL) -> Subspace:
    """Column space of ``M`` as a Subspace of R^rows."""
    M = as_matrix(M, "image operand")
    rows, cols = M.shape
    if rows == 0 or cols == 0:
        return Subspace.zero(rows, tol)
    U, s, _ = np.linalg.svd(M)
    thr = _rank_threshold(s, tol)
    rank = int(np.sum(s > thr))
    return Subspace(rows, U[:, :rank], tol)


def preimage(M, S: Subspace, tol: float | None = None) -> Subspace:
    """Inverse image {x : M x in S} as a Subspace of R^cols.

    Always contains kernel(M); equals it when S = {0}.
    """
    M = as_matrix(M, "preimage operand")
    if M.shape[0] != S.ambient_dim:
        raise ValueError("matrix rows must match the target ambient dimension")
    tol = S.tol if tol is None else tol
    comp = S.complement()
    if comp.dim == 0:
        return Subspace.full(M.shape[1], tol)
    # M x in S  <=>  (basis of S-perp)^T M x = 0
    return kernel(comp.basis.T @ M, tol)
