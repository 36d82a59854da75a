"""Limit laws of proximal estimators, used to check Monte Carlo output against theory.

The initial estimator satisfies ``sqrt(n)(b_n - b_0) -> eta = Q0^+ Z`` with
``Z ~ N(0, Omega0)``. For the adaptive lasso in the vanishing-``lambda sqrt(n)``
regime the proximal estimator's limit is the ``W0``-orthogonal projection of
``eta`` onto the coordinates of the active set; with homoskedastic errors its
active block has covariance ``sigma^2 [(Q0)_A]^+``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import WeightMatrix, as_sym, pinv, psd_sqrt, range_projector
from .penalty import Penalty, _weighted_l1_distance, _weighted_l1_polish, soft_threshold
from .prox import DEFAULT_OPTIONS, ProxOptions, prox


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class LimitLaw:
    q0: np.ndarray
    omega0: np.ndarray
    w0: WeightMatrix
    support: np.ndarray
    sigma2: Optional[float] = None

    @classmethod
    def homoskedastic(cls, q0, sigma2: float, support) -> "LimitLaw":
        """``Omega0 = sigma2 * Q0`` and ``W0 = Q0 + I - Q0 Q0^+``."""
        q0 = as_sym(q0)
        w0 = WeightMatrix(q0 + np.eye(q0.shape[0]) - range_projector(q0))
        return cls(q0, sigma2 * q0, w0, np.asarray(sorted(support), dtype=int), float(sigma2))

    @property
    def dim(self) -> int:
        return self.q0.shape[0]


def sample_eta(law: LimitLaw, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Draw ``eta = Q0^+ Z`` with ``Z ~ N(0, Omega0)``; ``size`` rows if given."""
    root = psd_sqrt(law.omega0)
    q_pinv = pinv(law.q0)
    g = rng.standard_normal((1 if size is None else size, law.dim))
    eta = g @ (q_pinv @ root).T
    return eta[0] if size is None else eta


def limit_adaptive_projection(eta, law: LimitLaw) -> np.ndarray:
    """W0-orthogonal projection of ``eta`` (a vector or rows of one) onto ``span{e_j : j in A}``."""
    eta = np.asarray(eta, dtype=float)
    A = law.support
    out = np.zeros_like(eta)
    if A.size == 0:
        return out
    W = law.w0.matrix
    block = W[np.ix_(A, A)]
    rhs = (eta @ W)[..., A]  # W symmetric: (W eta)_A, row-wise
    out[..., A] = np.linalg.solve(block, rhs.T).T if eta.ndim == 2 else np.linalg.solve(block, rhs)
    return out


def oracle_covariance(law: LimitLaw, sigma2: Optional[float] = None) -> np.ndarray:
    """``sigma^2 [(Q0)_A]^+``: the efficient covariance of the active block."""
    s2 = law.sigma2 if sigma2 is None else sigma2
    if s2 is None:
        raise ValueError("sigma^2 is required for a law not built as homoskedastic")
    A = law.support
    return s2 * pinv(law.q0[np.ix_(A, A)]) if A.size else np.zeros((0, 0))


class _PartialL1(Penalty):
    """``sum_{j in mask} |b_j|``: an l1 norm acting on a subset of coordinates only."""

    kind = "partial_l1"
    sublinear = True

    def __init__(self, mask):
        self.mask = np.asarray(mask, dtype=float)

    def value(self, beta):
        return float(np.sum(self.mask * np.abs(beta)))

    def prox(self, t, x):
        return soft_threshold(x, np.asarray(t) * self.mask)

    def subgradient_distance(self, v, beta, lam):
        return float(np.linalg.norm(_weighted_l1_distance(np.asarray(v), np.asarray(beta), lam * self.mask)))

    def polish(self, h, b, lam, beta):
        return _weighted_l1_polish(h, b, lam, np.asarray(beta), self.mask)


def limit_lasso_prox(eta, law: LimitLaw, beta0, lambda0: float,
                     opts: ProxOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Lasso limit for ``lambda_n sqrt(n) -> lambda0 > 0``.

    Minimises ``0.5 ||eta - b||_W0^2 + lambda0 * rho(b)`` where the directional
    derivative ``rho(b) = sum_A sign(beta0_j) b_j + sum_{A^c} |b_j|``. The linear
    part is absorbed by shifting ``eta`` by ``lambda0 W0^{-1} s``.
    """
    beta0 = np.asarray(beta0, dtype=float)
    active = beta0 != 0
    s = np.where(active, np.sign(beta0), 0.0)
    shifted = np.asarray(eta, dtype=float) - lambda0 * (law.w0.inverse @ s)
    return prox(_PartialL1(~active), lambda0, law.w0, shifted, opts).point


def oracle_necessary_probability(law: LimitLaw, beta0, rng: np.random.Generator, draws: int = 1000,
                                 limit: str = "adaptive", lambda0: float = 1.0, tol: float = 1e-9) -> float:
    """Monte Carlo estimate of ``P(eta_{A^c} == (P_B0 eta)_{A^c})``.

    By the Moreau identity ``P_B0 eta = eta - L(eta)`` for the limit estimator
    ``L``, so the event is ``|L(eta)_j| <= tol`` on every inactive coordinate.
    """
    beta0 = np.asarray(beta0, dtype=float)
    inactive = beta0 == 0
    eta = sample_eta(law, rng, size=draws)
    if limit == "adaptive":
        lim = limit_adaptive_projection(eta, law)
    elif limit == "lasso":
        lim = np.array([limit_lasso_prox(e, law, beta0, lambda0) for e in eta])
    else:
        raise ValueError(f"unknown limit {limit!r}")
    proj = eta - lim
    ok = np.all(np.abs(eta[:, inactive] - proj[:, inactive]) <= tol, axis=1)
    return float(np.mean(ok))


@dataclass(frozen=True)
class SampleComparison:
    quantiles: tuple
    discrepancy: np.ndarray  # (len(quantiles), p): quantile of a minus quantile of b
    discrepancy_se: np.ndarray
    cov_diff: float  # max |cov(a) - cov(b)|
    cov_diff_se: float
    extras: dict = field(default_factory=dict)


def compare_samples(a, b, n_boot: int = 200, rng: Optional[np.random.Generator] = None,
                    quantiles=(0.25, 0.5, 0.75)) -> SampleComparison:
    """Quantile and covariance discrepancies between two samples, with bootstrap SEs."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("samples must have the same number of columns")
    if min(a.shape[0], b.shape[0]) < 100:
        raise InsufficientSamplesError("insufficient samples: need at least 100 rows in each sample")
    rng = np.random.default_rng(0) if rng is None else rng
    qs = np.asarray(quantiles)

    def stats(x, y):
        disc = np.quantile(x, qs, axis=0) - np.quantile(y, qs, axis=0)
        cd = np.max(np.abs(np.atleast_2d(np.cov(x, rowvar=False)) - np.atleast_2d(np.cov(y, rowvar=False))))
        return disc, cd

    disc, cd = stats(a, b)
    boot_d = np.empty((n_boot,) + disc.shape)
    boot_c = np.empty(n_boot)
    for k in range(n_boot):
        ia = rng.integers(0, a.shape[0], a.shape[0])
        ib = rng.integers(0, b.shape[0], b.shape[0])
        boot_d[k], boot_c[k] = stats(a[ia], b[ib])
    return SampleComparison(tuple(quantiles), disc, boot_d.std(axis=0, ddof=1), float(cd),
                            float(boot_c.std(ddof=1)))
