"""Dense symmetric linear algebra.

Everything here works on small symmetric positive semi-definite matrices
(p of order 10). Eigendecompositions carry a fixed sign convention so that
downstream estimates are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg

EPS = np.finfo(float).eps


class NotPSDError(ValueError):
    """Raised when a matrix expected to be positive semi-definite is not."""


class EigenConvergenceError(np.linalg.LinAlgError):
    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


def as_sym(m, *, check: bool = True, atol: float = 1e-10) -> np.ndarray:
    """Return a symmetric float copy of ``m``.

    With ``check=True`` asymmetry beyond ``atol`` (relative to the largest
    entry) raises; the returned matrix is exactly symmetric in either case.
    """
    a = np.array(m, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    if check:
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.T)) > atol * scale:
            raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def default_rank_tol(p: int) -> float:
    """Relative cutoff ``p * eps``; multiply by the largest eigenvalue."""
    return p * EPS


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigenvalues in descending order and matching orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self, values: Optional[np.ndarray] = None) -> np.ndarray:
        s = self.eigenvalues if values is None else np.asarray(values, dtype=float)
        P = self.eigenvectors
        return as_sym((P * s) @ P.T, check=False)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def threshold(self, rank_tol: Optional[float] = None) -> float:
        rel = default_rank_tol(self.dim) if rank_tol is None else rank_tol
        return rel * max(float(self.eigenvalues[0]), 0.0)

    def rank(self, rank_tol: Optional[float] = None) -> int:
        thr = self.threshold(rank_tol)
        return int(np.sum(self.eigenvalues > thr))


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # largest |entry| of each column positive; argmax picks the lowest index on ties
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def eig_sym(m) -> SpectralDecomp:
    """Symmetric eigendecomposition with descending eigenvalues.

    Eigenvector signs are fixed so that the largest-magnitude entry of each
    column is positive (ties go to the lowest index).
    """
    a = as_sym(m)
    try:
        w, v = scipy.linalg.eigh(a, driver="evr")
    except np.linalg.LinAlgError as exc:  # LAPACK reports failure through info
        raise EigenConvergenceError(f"symmetric eigensolver failed: {exc}", a.shape[0] * 30) from exc
    order = np.argsort(w, kind="stable")[::-1]
    w = w[order]
    v = _fix_signs(v[:, order])
    w.setflags(write=False)
    v.setflags(write=False)
    return SpectralDecomp(w, v)


def pinv(m, rank_tol: Optional[float] = None) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric PSD matrix.

    Eigenvalues at or below ``rank_tol * sigma_max`` count as zero
    (default ``rank_tol = p * eps``).
    """
    d = eig_sym(m)
    thr = d.threshold(rank_tol)
    s = d.eigenvalues
    inv = np.zeros_like(s)
    keep = s > thr
    inv[keep] = 1.0 / s[keep]
    return d.reconstruct(inv)


def range_projector(m, rank_tol: Optional[float] = None) -> np.ndarray:
    """Orthogonal projector ``M M^+`` onto the range of ``m``."""
    d = eig_sym(m)
    keep = d.eigenvalues > d.threshold(rank_tol)
    P = d.eigenvectors[:, keep]
    return as_sym(P @ P.T, check=False)


def psd_sqrt(m, rank_tol: Optional[float] = None) -> np.ndarray:
    """Symmetric square root ``S`` with ``S @ S.T == m``.

    Eigenvalues with magnitude within the rank tolerance are set to zero, so the
    root of a singular matrix has exactly the same range.
    """
    d = eig_sym(m)
    thr = d.threshold(rank_tol)
    s = d.eigenvalues
    if s[-1] < -thr:
        raise NotPSDError(f"not PSD: smallest eigenvalue {s[-1]:.3e} below -{thr:.3e}")
    root = np.where(s > thr, np.sqrt(np.clip(s, 0.0, None)), 0.0)
    return d.reconstruct(root)


def is_psd(m, rank_tol: Optional[float] = None) -> bool:
    d = eig_sym(m)
    scale = max(abs(float(d.eigenvalues[0])), abs(float(d.eigenvalues[-1])))
    rel = default_rank_tol(d.dim) if rank_tol is None else rank_tol
    return bool(d.eigenvalues[-1] >= -max(rel * scale, 10 * EPS))


class WeightMatrix:
    """Symmetric positive definite matrix defining the inner product ``<x, y>_W = x' W y``.

    The Cholesky factor is computed once on construction.
    """

    def __init__(self, matrix):
        a = as_sym(matrix)
        ev = scipy.linalg.eigvalsh(a)
        lo, hi = float(ev[0]), float(ev[-1])
        if not (hi > 0 and lo > a.shape[0] * EPS * hi):
            raise NotPSDError(
                f"weight matrix must be positive definite (eigenvalues in [{lo:.3e}, {hi:.3e}])"
            )
        self._matrix = a
        self._matrix.setflags(write=False)
        self._factor = np.linalg.cholesky(a)
        self._factor.setflags(write=False)
        self._sigma_max = hi
        off = a - np.diag(np.diag(a))
        self._diag = not np.any(off)

    @classmethod
    def identity(cls, p: int) -> "WeightMatrix":
        return cls(np.eye(p))

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def factor(self) -> np.ndarray:
        """Lower-triangular ``L`` with ``L @ L.T == matrix``."""
        return self._factor

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self._diag

    @property
    def sigma_max(self) -> float:
        return self._sigma_max

    @cached_property
    def inverse(self) -> np.ndarray:
        return scipy.linalg.cho_solve((self._factor, True), np.eye(self.dim))

    def inner(self, x, y) -> float:
        return float(np.asarray(x) @ self._matrix @ np.asarray(y))

    def __matmul__(self, x):
        return self._matrix @ x

    def __repr__(self) -> str:
        return f"WeightMatrix(dim={self.dim}, diagonal={self._diag})"


def weighted_norm(x, w: WeightMatrix) -> float:
    """``sqrt(x' W x)``, computed as ``||L' x||_2`` for numerical safety."""
    x = np.asarray(x, dtype=float)
    if x.shape != (w.dim,):
        raise ValueError(f"dimension mismatch: vector {x.shape} vs weight matrix {w.dim}")
    return float(np.linalg.norm(w.factor.T @ x))
