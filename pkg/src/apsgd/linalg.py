"""Dense small-matrix helpers: projections, eigendecompositions, pseudoinverses.

Everything here operates on plain numpy arrays of modest dimension (parameter
spaces in the single digits) and is a pure function of its inputs.  Matrix
norms in tolerance checks are spectral norms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimensionError,
    DomainError,
    InfeasibleConstraintError,
    NumericalError,
    RankDeficiencyError,
)

#: Relative eigenvalue floor below which a truncated pseudoinverse refuses to invert.
EIGEN_FLOOR = 1e-10

#: Relative singular-value threshold defining the numerical rank of a constraint matrix.
RANK_THRESHOLD = 1e-10

#: Relative tolerance on the symmetry defect accepted by ``symmetric_eigen``.
SYMMETRY_TOL = 1e-8


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def _as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class EigenDecomposition:
    """Spectral factorisation of a symmetric matrix.

    Attributes
    ----------
    eigenvalues : ndarray, shape (p,)
        Sorted in descending order.
    eigenvectors : ndarray, shape (p, p)
        Orthonormal columns; column ``i`` pairs with ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def symmetric_eigen(a) -> EigenDecomposition:
    """Eigendecomposition of a (numerically) symmetric matrix.

    The input is symmetrised as ``(a + a.T) / 2`` before factorisation, but a
    symmetry defect larger than ``SYMMETRY_TOL`` relative to the matrix norm
    is rejected rather than silently averaged away.
    """
    a = _as_matrix(a)
    n, m = a.shape
    if n != m:
        raise DimensionError(f"matrix must be square, got {n}x{m}")
    scale = max(1.0, np.linalg.norm(a, 2)) if n else 1.0
    if n and np.linalg.norm(a - a.T, 2) > SYMMETRY_TOL * scale:
        raise DomainError("matrix is not symmetric within tolerance")
    sym = 0.5 * (a + a.T)
    try:
        vals, vecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:  # LAPACK non-convergence
        raise NumericalError(f"eigendecomposition failed to converge: {exc}") from exc
    return EigenDecomposition(vals[::-1].copy(), vecs[:, ::-1].copy())


def pinv_truncated(a, rank: int) -> np.ndarray:
    """Moore-Penrose pseudoinverse truncated at a caller-supplied rank.

    Returns ``sum_{i<rank} eigenvalue_i^{-1} u_i u_i^T`` from the descending
    eigendecomposition of ``a``.  The ``rank`` largest eigenvalues must be
    strictly positive, checked against the floor ``EIGEN_FLOOR * lambda_max``.

    Raises
    ------
    RankDeficiencyError
        If the requested rank exceeds the numerical rank of ``a``.
    """
    eig = symmetric_eigen(a)
    p = eig.eigenvalues.shape[0]
    if not 0 <= rank <= p:
        raise DimensionError(f"rank must be in [0, {p}], got {rank}")
    if rank == 0:
        return np.zeros((p, p))
    lam = eig.eigenvalues
    lam_max = max(lam[0], 0.0)
    floor = EIGEN_FLOOR * lam_max
    if lam_max <= 0.0 or lam[rank - 1] <= floor:
        raise RankDeficiencyError(
            f"requested rank {rank} but eigenvalue {rank - 1} is "
            f"{lam[rank - 1]:.6e} against floor {floor:.6e} "
            f"(largest eigenvalue {lam_max:.6e})"
        )
    u = eig.eigenvectors[:, :rank]
    out = (u / lam[:rank]) @ u.T
    return 0.5 * (out + out.T)


def build_projection(B, b) -> tuple[np.ndarray, np.ndarray, int]:
    """Projection machinery for the affine set ``{theta : B theta = b}``.

    Returns
    -------
    P : ndarray, shape (p, p)
        Orthogonal projection onto the kernel of ``B``.
    c : ndarray, shape (p,)
        Minimum-norm solution of ``B c = b``.
    d : int
        Rank of ``P``, i.e. ``p`` minus the numerical rank of ``B``.

    A matrix with zero rows (no constraints) yields ``P = I``, ``c = 0`` and
    ``d = p``.  An inconsistent system raises ``InfeasibleConstraintError``.
    """
    B = _as_matrix(B, "B")
    b = _as_vector(b, "b")
    m, p = B.shape
    if b.shape[0] != m:
        raise DimensionError(f"b has dimension {b.shape[0]}, expected {m} (rows of B)")
    if m == 0:
        return np.eye(p), np.zeros(p), p

    u, s, vt = np.linalg.svd(B, full_matrices=False)
    rank = int(np.sum(s > RANK_THRESHOLD * s[0])) if s.size and s[0] > 0.0 else 0
    if rank == 0:
        P = np.eye(p)
        c = np.zeros(p)
        d = p
    else:
        vr = vt[:rank].T
        c = vr @ ((u[:, :rank].T @ b) / s[:rank])
        P = np.eye(p) - vr @ vr.T
        P = 0.5 * (P + P.T)
        d = p - rank

    residual = np.linalg.norm(B @ c - b)
    if residual > 1e-8 * max(1.0, np.linalg.norm(b)):
        raise InfeasibleConstraintError(
            f"system B theta = b is inconsistent (residual {residual:.6e})"
        )
    return P, c, d


@dataclass(frozen=True)
class Constraint:
    """The affine feasible set ``{theta : B theta = b}`` and its geometry.

    Carries the raw equality system together with the derived projection
    matrix ``P``, a feasible point ``c`` (minimum norm) and the kernel
    dimension ``d = rank(P)``.
    """

    B: np.ndarray
    b: np.ndarray
    P: np.ndarray
    c: np.ndarray
    d: int

    @classmethod
    def from_equalities(cls, B, b) -> "Constraint":
        """Build from an equality system; see ``build_projection``."""
        B = _as_matrix(B, "B")
        b = _as_vector(b, "b")
        P, c, d = build_projection(B, b)
        return cls(B=B, b=b, P=P, c=c, d=d)

    @classmethod
    def unconstrained(cls, p: int) -> "Constraint":
        """The trivial constraint on R^p (``P = I``, ``c = 0``, ``d = p``)."""
        return cls(
            B=np.zeros((0, p)), b=np.zeros(0), P=np.eye(p), c=np.zeros(p), d=p
        )

    @property
    def p(self) -> int:
        return self.P.shape[0]

    def project(self, theta: np.ndarray) -> np.ndarray:
        """Orthogonal projection of ``theta`` onto the feasible set."""
        return self.c + self.P @ (theta - self.c)

    def violation(self, theta: np.ndarray) -> float:
        """Euclidean norm of ``B theta - b`` (0.0 when there are no rows)."""
        if self.B.shape[0] == 0:
            return 0.0
        return float(np.linalg.norm(self.B @ theta - self.b))
