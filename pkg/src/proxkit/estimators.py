"""Initial and proximal estimators for linear regression.

The Ridgeless estimator ``Q_n^+ X'y/n`` is the minimum-norm least-squares
solution. Under a nearly singular design it is not root-n consistent, so the
modified Ridgeless estimator first soft-thresholds the spectrum of
``Q_n = X'X/n`` at ``mu_n`` and drops every eigenvalue that the threshold
kills before inverting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .linalg import SpectralDecomp, WeightMatrix, as_sym, eig_sym, pinv, range_projector
from .penalty import AdaptiveLasso, Penalty, adaptive_weights
from .prox import DEFAULT_OPTIONS, ProxOptions, ProxResult, prox

__all__ = [
    "Dataset",
    "DatasetError",
    "EstimateReport",
    "ModifiedDesign",
    "adaptive_weights",
    "default_mu",
    "modified_design",
    "modified_ridgeless",
    "proximal_estimate",
    "ridge_initial",
    "ridgeless",
    "spectrum_prox",
    "weight_from_design",
]


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DatasetError(f"design must be a non-empty n x p matrix, got shape {x.shape}")
        if y.shape[0] != x.shape[0]:
            raise DatasetError(f"{y.shape[0]} responses for {x.shape[0]} rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DatasetError("dataset contains NaN or infinite entries")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def gram(self) -> np.ndarray:
        """``Q_n = X'X/n``."""
        return as_sym(self.x.T @ self.x / self.n, check=False)

    def moment(self) -> np.ndarray:
        """``X'y/n``."""
        return self.x.T @ self.y / self.n

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        """Read a CSV with header ``y, x1, ..., xp`` (one observation per row)."""
        path = Path(path)
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DatasetError(f"{path}: line 1: empty file") from None
            p = len(header) - 1
            expected = ["y"] + [f"x{j}" for j in range(1, p + 1)]
            if p < 1 or header != expected:
                raise DatasetError(
                    f"{path}: line 1: header must be {','.join(expected[:3])},...,xp; got {','.join(header)}"
                )
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != p + 1:
                    raise DatasetError(f"{path}: line {lineno}: expected {p + 1} fields, got {len(row)}")
                try:
                    vals = [float(v) for v in row]
                except ValueError as exc:
                    raise DatasetError(f"{path}: line {lineno}: {exc}") from None
                if not all(np.isfinite(vals)):
                    raise DatasetError(f"{path}: line {lineno}: non-finite value")
                rows.append(vals)
        if not rows:
            raise DatasetError(f"{path}: no observations")
        data = np.array(rows)
        return cls(data[:, 1:], data[:, 0])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["y"] + [f"x{j}" for j in range(1, self.p + 1)])
            for yi, xi in zip(self.y, self.x):
                writer.writerow([repr(float(yi))] + [repr(float(v)) for v in xi])


def default_mu(n: int, exponent: float = 3 / 8) -> float:
    """Spectrum threshold ``n^{-exponent}``; admissible exponents lie in [3/8, 1/2)."""
    return float(n) ** (-exponent)


def ridgeless(d: Dataset, rank_tol: Optional[float] = None) -> np.ndarray:
    """Minimum-norm least-squares solution ``Q_n^+ X'y/n``."""
    return pinv(d.gram(), rank_tol) @ d.moment()


def ridge_initial(d: Dataset, lam2: float) -> np.ndarray:
    """``(lam2 I + Q_n)^{-1} X'y/n``."""
    if lam2 <= 0:
        raise ValueError("ridge parameter must be positive")
    a = d.gram() + lam2 * np.eye(d.p)
    return np.linalg.solve(a, d.moment())


def spectrum_prox(sigma, mu: float) -> np.ndarray:
    """Lasso prox of the spectrum: ``max(sigma_j - mu, 0)``."""
    sigma = np.asarray(sigma, dtype=float)
    if mu <= 0:
        raise ValueError("mu must be positive")
    if np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
        raise ValueError("spectrum must be non-negative and descending")
    return np.maximum(sigma - mu, 0.0)


@dataclass(frozen=True)
class ModifiedDesign:
    q_check: np.ndarray
    q_check_pinv: np.ndarray
    w_bar: WeightMatrix
    kept: np.ndarray
    sigma_hat: np.ndarray
    sigma_check: np.ndarray
    decomposition: SpectralDecomp

    @property
    def rank(self) -> int:
        return int(np.sum(self.kept))


def modified_design(q_n, mu: float, rank_tol: Optional[float] = None) -> ModifiedDesign:
    """Range-consistent design estimate.

    Eigenvalues that survive soft-thresholding at ``mu`` are kept verbatim,
    the rest are set to zero. ``w_bar = Q + I - Q Q^+`` of the result is
    positive definite by construction.
    """
    dec = eig_sym(q_n)
    sigma = dec.eigenvalues
    clipped = np.maximum(sigma, 0.0)  # tiny negative round-off on singular designs
    sigma_hat = spectrum_prox(clipped, mu)
    kept = (sigma_hat > 0) & (sigma > dec.threshold(rank_tol))
    sigma_check = np.where(kept, sigma, 0.0)
    q_check = dec.reconstruct(sigma_check)
    inv = np.zeros_like(sigma)
    inv[kept] = 1.0 / sigma[kept]
    q_check_pinv = dec.reconstruct(inv)
    # eigenvalues of w_bar: sigma on kept coordinates, 1 on dropped ones
    w_bar = WeightMatrix(dec.reconstruct(np.where(kept, sigma, 1.0)))
    return ModifiedDesign(q_check, q_check_pinv, w_bar, kept, sigma_hat, sigma_check, dec)


def modified_ridgeless(d: Dataset, mu: float, rank_tol: Optional[float] = None):
    """``Q_check^+ X'y/n`` together with the :class:`ModifiedDesign` it used."""
    md = modified_design(d.gram(), mu, rank_tol)
    return md.q_check_pinv @ d.moment(), md


def weight_from_design(q, rank_tol: Optional[float] = None) -> WeightMatrix:
    """``Q + I - Q Q^+`` for a PSD matrix Q."""
    q = as_sym(q)
    return WeightMatrix(q + np.eye(q.shape[0]) - range_projector(q, rank_tol))


class KKTViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimateReport:
    beta: np.ndarray
    active_set: np.ndarray
    v_opt: np.ndarray
    initial_beta: np.ndarray
    w_used: WeightMatrix
    solver: ProxResult
    lam: float = 0.0


def proximal_estimate(initial, w: WeightMatrix, f: Penalty, lam: float,
                      opts: ProxOptions = DEFAULT_OPTIONS) -> EstimateReport:
    """Apply ``prox_{lam f}^W`` to an initial estimate and certify the result.

    ``v_opt = W (initial - beta)`` is the optimal penalty subgradient; it is
    checked to lie in ``lam * df(beta)`` (Euclidean) within ``opts.kkt_tol``.
    """
    initial = np.asarray(initial, dtype=float)
    res = prox(f, lam, w, initial, opts)
    beta = res.point
    v_opt = w.matrix @ (initial - beta)
    if lam > 0:
        resid = f.subgradient_distance(v_opt, beta, lam)
        if resid > opts.kkt_tol and res.stop_reason != "rel_change":
            raise KKTViolation(f"optimal subgradient off by {resid:.3e} (tolerance {opts.kkt_tol:.1e})")
    return EstimateReport(
        beta=beta,
        active_set=np.flatnonzero(beta != 0),
        v_opt=v_opt,
        initial_beta=initial,
        w_used=w,
        solver=res,
        lam=float(lam),
    )


def adaptive_lasso_estimate(initial, w: WeightMatrix, lam: float,
                            opts: ProxOptions = DEFAULT_OPTIONS) -> EstimateReport:
    """Adaptive lasso with weights ``1/|initial|`` applied to ``initial`` itself."""
    return proximal_estimate(initial, w, AdaptiveLasso(adaptive_weights(initial)), lam, opts)
