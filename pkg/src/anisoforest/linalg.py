"""Dense symmetric linear algebra for covariance handling.

Covers the needs of normal-vector sampling and sensitivity analysis:
Cholesky factorization, symmetric eigendecomposition, quadratic forms, and
spectral normalization. Sized for small dense matrices (dimension up to a
few hundred); numpy provides array storage and BLAS products, while the
factorizations are implemented here so pivot thresholds and convergence
behavior stay under local control. All values are float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NotPositiveDefinite,
    ValidationError,
    ZeroMatrix,
)

# Absolute tolerance when validating symmetry of user-supplied matrices.
SYMMETRY_TOL = 1e-9
# Cholesky pivots at or below this value mean "not positive definite".
PIVOT_MIN = 1e-12
# Jacobi sweep budget and off-diagonal convergence threshold (relative to
# the Frobenius norm of the input).
JACOBI_MAX_SWEEPS = 100
JACOBI_OFF_TOL = 1e-12


class SymMatrix:
    """Symmetric real matrix with cached factorizations.

    Input is validated to be symmetric within ``SYMMETRY_TOL`` (absolute)
    and then symmetrized exactly as (A + A') / 2, so ``entries[i][j] ==
    entries[j][i]`` holds bitwise afterwards. Instances are immutable; the
    Cholesky factor, eigendecomposition, and spectral radius are computed
    lazily and cached.
    """

    __slots__ = ("_a", "_chol", "_eig", "_spectral")

    def __init__(self, entries) -> None:
        a = np.asarray(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValidationError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("matrix entries must be finite")
        asym = float(np.max(np.abs(a - a.T)))
        if asym > SYMMETRY_TOL:
            raise ValidationError(
                f"matrix is not symmetric (max |A - A'| = {asym:.3e} > {SYMMETRY_TOL})"
            )
        sym = (a + a.T) / 2.0
        sym.flags.writeable = False
        self._a = sym
        self._chol: CholeskyFactor | None = None
        self._eig: EigenDecomposition | None = None
        self._spectral: float | None = None

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    @property
    def array(self) -> np.ndarray:
        """Read-only float64 view of the entries."""
        return self._a

    @classmethod
    def identity(cls, dim: int) -> SymMatrix:
        return cls(np.eye(dim))

    @classmethod
    def diagonal(cls, values) -> SymMatrix:
        return cls(np.diag(np.asarray(values, dtype=float)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return self._a.shape == other._a.shape and bool(np.all(self._a == other._a))

    __hash__ = None  # defines __eq__, so not hashable

    def __repr__(self) -> str:
        return f"SymMatrix({self._a.tolist()!r})"


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L @ L.T reconstructing the source."""

    dim: int
    lower: np.ndarray


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order; unit eigenvectors as matching columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def cholesky(a: SymMatrix) -> CholeskyFactor:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises NotPositiveDefinite if any pivot is <= 1e-12, which doubles as
    the package-wide positive-definiteness check for covariance matrices.
    """
    if a._chol is not None:
        return a._chol
    m = a.array
    d = a.dim
    lower = np.zeros((d, d))
    for j in range(d):
        pivot = m[j, j] - lower[j, :j] @ lower[j, :j]
        if not pivot > PIVOT_MIN:
            raise NotPositiveDefinite(
                f"pivot {pivot:.3e} at column {j} (must exceed {PIVOT_MIN})"
            )
        ljj = np.sqrt(pivot)
        lower[j, j] = ljj
        if j + 1 < d:
            lower[j + 1 :, j] = (m[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / ljj
    lower.flags.writeable = False
    factor = CholeskyFactor(d, lower)
    a._chol = factor
    return factor


def _jacobi(m: np.ndarray, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi rotations on a symmetric matrix.

    Returns (eigenvalues, eigenvector columns), unsorted. Convergence is
    declared when the off-diagonal Frobenius norm drops below
    JACOBI_OFF_TOL times the Frobenius norm of the input.
    """
    b = np.array(m, dtype=float)
    d = b.shape[0]
    v = np.eye(d)
    norm = float(np.linalg.norm(b))
    if norm == 0.0 or d == 1:
        return np.diag(b).copy(), v
    tol = JACOBI_OFF_TOL * norm
    skip = tol / d
    for _ in range(max_sweeps):
        off = float(np.sqrt(max(np.sum(b * b) - np.sum(np.diag(b) ** 2), 0.0)))
        if off <= tol:
            return np.diag(b).copy(), v
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = b[p, q]
                if abs(apq) <= skip:
                    continue
                tau = (b[q, q] - b[p, p]) / (2.0 * apq)
                if abs(tau) > 1e12:
                    t = 1.0 / (2.0 * tau)
                else:
                    sign = 1.0 if tau >= 0.0 else -1.0
                    t = sign / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                bp = b[p, :].copy()
                bq = b[q, :].copy()
                b[p, :] = c * bp - s * bq
                b[q, :] = s * bp + c * bq
                bp = b[:, p].copy()
                bq = b[:, q].copy()
                b[:, p] = c * bp - s * bq
                b[:, q] = s * bp + c * bq
                b[p, q] = b[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    off = float(np.sqrt(max(np.sum(b * b) - np.sum(np.diag(b) ** 2), 0.0)))
    if off <= tol:
        return np.diag(b).copy(), v
    raise ConvergenceFailure(
        f"jacobi eigendecomposition did not converge in {max_sweeps} sweeps "
        f"(off-diagonal norm {off:.3e}, tolerance {tol:.3e})"
    )


def eigh(a: SymMatrix) -> EigenDecomposition:
    """Full eigendecomposition, eigenvalues descending.

    Eigenvector signs are canonicalized (largest-magnitude component
    positive) so results are deterministic.
    """
    if a._eig is not None:
        return a._eig
    evals, evecs = _jacobi(a.array)
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order].copy()
    for i in range(evecs.shape[1]):
        col = evecs[:, i]
        if col[np.argmax(np.abs(col))] < 0.0:
            evecs[:, i] = -col
    evals.flags.writeable = False
    evecs.flags.writeable = False
    decomp = EigenDecomposition(evals, evecs)
    a._eig = decomp
    return decomp


def quadratic_form(n, a: SymMatrix) -> float:
    """n' A n as a double contraction."""
    vec = np.asarray(n, dtype=float)
    if vec.shape != (a.dim,):
        raise DimensionMismatch(
            f"vector of length {vec.shape} does not match matrix dimension {a.dim}"
        )
    return float(vec @ a.array @ vec)


def spectral_radius(a: SymMatrix) -> float:
    """Largest eigenvalue (non-negative for positive semi-definite input)."""
    if a._spectral is None:
        a._spectral = float(eigh(a).eigenvalues[0])
    return a._spectral


def normalize_spectral(a: SymMatrix) -> SymMatrix:
    """Scale a matrix so its spectral radius is 1."""
    r = spectral_radius(a)
    if r <= PIVOT_MIN:
        raise ZeroMatrix(f"spectral radius {r:.3e} is too small to normalize")
    return SymMatrix(a.array / r)
