"""Weighted proximal operators and the penalized least-squares solver.

Both problems share one form,

    minimize  0.5 * b' H b - r' b + lam * f(b),

with ``H = W, r = W x`` for the weighted prox of ``x`` and
``H = X'X/n, r = X'y/n`` for penalized least squares. The solver is an
accelerated proximal-gradient iteration (fixed step ``1/sigma_max(H)``,
monotone restart) whose backward step is the Euclidean prox of ``f``, so
zeros in the output are exact. Once the support stabilises the penalty's
``polish`` method solves the optimality system on that support; the result
is accepted only if it passes the same KKT test.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .linalg import WeightMatrix, as_sym, eig_sym, is_psd, pinv
from .penalty import AdaptiveLasso, BoxIndicator, Penalty, PolyhedronSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProxOptions:
    kkt_tol: float = 1e-10
    rel_change_tol: float = 1e-12
    max_iters: int = 50_000

    def __post_init__(self):
        if not (self.kkt_tol > 0 and self.rel_change_tol > 0 and self.max_iters > 0):
            raise ValueError("ProxOptions fields must be strictly positive")


DEFAULT_OPTIONS = ProxOptions()


@dataclass(frozen=True)
class ProxResult:
    point: np.ndarray
    iterations: int
    kkt_residual: float
    path: str  # "closed_form" | "iterative"
    stop_reason: str = "kkt"  # "kkt" | "rel_change" | "exact"


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, last_iterate: np.ndarray, residual: float, iterations: int):
        super().__init__(f"{message}: KKT residual {residual:.3e} after {iterations} iterations")
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


class UnboundedProblemError(ValueError):
    """The unpenalized least-squares problem has no unique minimiser."""


def _pattern(f: Penalty, beta: np.ndarray) -> bytes:
    if isinstance(f, BoxIndicator):
        code = np.sign(beta) + 3 * (beta == f.lower) + 6 * (beta == f.upper)
        return code.astype(np.int8).tobytes()
    return np.sign(beta).astype(np.int8).tobytes()


def kkt_residual(h, r, f: Penalty, lam: float, beta) -> float:
    """Distance of ``r - H beta`` to ``lam * df(beta)``."""
    beta = np.asarray(beta, dtype=float)
    if lam == 0:
        return float(np.linalg.norm(r - h @ beta))
    return f.subgradient_distance(r - h @ beta, beta, lam)


_STALL_ITERS = 200


def _minimize(h, r, f: Penalty, lam: float, x0, opts: ProxOptions, sigma_max: float) -> ProxResult:
    step = 1.0 / sigma_max
    t = lam * step

    def objective(b):
        return 0.5 * float(b @ h @ b) - float(r @ b) + lam * f.value(b)

    def kkt(b):
        return f.subgradient_distance(r - h @ b, b, lam)

    beta = f.prox(t, x0 - step * (h @ x0 - r))
    obj = objective(beta)
    y = beta
    tk = 1.0
    prev_pattern = None
    failed_pattern = None
    res = kkt(beta)
    if res <= opts.kkt_tol:
        return ProxResult(beta, 1, res, "iterative")
    best_res, best_it = res, 1

    for it in range(2, opts.max_iters + 1):
        cand = f.prox(t, y - step * (h @ y - r))
        cand_obj = objective(cand)
        if cand_obj > obj:
            # momentum overshoot: restart from a plain proximal-gradient step
            tk = 1.0
            cand = f.prox(t, beta - step * (h @ beta - r))
            cand_obj = objective(cand)
        tnext = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        y = cand + ((tk - 1.0) / tnext) * (cand - beta)
        delta = float(np.linalg.norm(cand - beta))
        scale = max(float(np.linalg.norm(cand)), np.finfo(float).tiny)
        beta, obj, tk = cand, cand_obj, tnext

        res = kkt(beta)
        if res <= opts.kkt_tol:
            return ProxResult(beta, it, res, "iterative")
        if res < 0.9 * best_res:
            best_res, best_it = res, it

        pat = _pattern(f, beta)
        if pat == prev_pattern and (pat != failed_pattern or it % 50 == 0):
            polished = f.polish(h, r, lam, beta)
            if polished is not None:
                pres = kkt(polished)
                if pres <= opts.kkt_tol:
                    return ProxResult(polished, it, pres, "iterative")
                failed_pattern = pat
        prev_pattern = pat

        # small steps alone are not enough: the KKT residual must also have stalled
        if delta <= opts.rel_change_tol * scale and it - best_it >= _STALL_ITERS:
            log.debug("stopping on relative change at iteration %d (KKT %.3e)", it, res)
            return ProxResult(beta, it, res, "iterative", "rel_change")

    raise NonConvergenceError("proximal-gradient iteration did not converge", beta, res, opts.max_iters)


def prox(f: Penalty, lam: float, w: WeightMatrix, x, opts: ProxOptions = DEFAULT_OPTIONS) -> ProxResult:
    """``argmin_b 0.5 ||x - b||_W^2 + lam f(b)``.

    Closed form when ``lam == 0``, or when W is diagonal and ``f`` separable
    (each coordinate then uses scale ``lam / W_jj``), or when W is a multiple
    of the identity. Otherwise the accelerated proximal-gradient solver runs.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (w.dim,):
        raise ValueError(f"dimension mismatch: x has shape {x.shape}, W is {w.dim}x{w.dim}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    f.check_dim(w.dim)
    if lam == 0:
        return ProxResult(x.copy(), 0, 0.0, "closed_form", "exact")

    W = w.matrix
    if w.is_diagonal:
        d = np.diag(W)
        scalar = bool(np.all(d == d[0]))
        if f.separable or scalar:
            scale = lam / d[0] if scalar else lam / d
            point = f.prox(scale, x)
            res = f.subgradient_distance(W @ (x - point), point, lam)
            return ProxResult(point, 0, res, "closed_form", "exact")

    return _minimize(W, W @ x, f, lam, x, opts, w.sigma_max)


def conjugate_prox(f: Penalty, lam: float, w: WeightMatrix, x, opts: ProxOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """``x - prox(x)``, i.e. the W-prox of the conjugate of ``lam * f``."""
    x = np.asarray(x, dtype=float)
    return x - prox(f, lam, w, x, opts).point


def project_polyhedron(c: PolyhedronSpec, w: WeightMatrix, x, opts: ProxOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """W-projection of ``x`` onto ``{theta : |(W theta)_j| <= c_j}``.

    Computed as the residual ``x - prox`` of the weighted l1 penalty with
    weights ``c`` (its conjugate is the indicator of the set).
    """
    if c.w is not w and not np.array_equal(c.w.matrix, w.matrix):
        raise ValueError("polyhedron was built under a different weight matrix")
    return conjugate_prox(AdaptiveLasso(c.bounds), 1.0, w, x, opts)


def plse_solve(x_mat, y, f: Penalty, lam: float, opts: ProxOptions = DEFAULT_OPTIONS,
               rank_tol: Optional[float] = None) -> ProxResult:
    """Penalized least squares ``argmin 0.5/n ||y - X b||^2 + lam f(b)``."""
    X = np.asarray(x_mat, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("response length does not match the number of rows")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    f.check_dim(p)
    q = as_sym(X.T @ X / n, check=False)
    r = X.T @ y / n
    spec = eig_sym(q)
    if lam == 0:
        if spec.rank(rank_tol) < p:
            raise UnboundedProblemError(
                "lambda = 0 with a rank-deficient design has no unique solution; "
                "use ridgeless mode for the minimum-norm least-squares estimate"
            )
        point = scipy.linalg.solve(q, r, assume_a="pos")
        return ProxResult(point, 0, float(np.linalg.norm(r - q @ point)), "closed_form", "exact")
    sigma_max = float(spec.eigenvalues[0])
    if sigma_max <= 0:
        # zero design: only the penalty matters
        point = f.prox(1.0, np.zeros(p))
        return ProxResult(point, 0, kkt_residual(q, r, f, lam, point), "closed_form", "exact")
    x0 = pinv(q, rank_tol) @ r
    return _minimize(q, r, f, lam, x0, opts, sigma_max)


def extended_penalty(f: Penalty, lam: float, w_bar, q) -> Callable[[np.ndarray], float]:
    """``b -> f(b) + b'(W_bar - Q) b / (2 lam)``; requires ``W_bar - Q`` PSD."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    wb = w_bar.matrix if isinstance(w_bar, WeightMatrix) else as_sym(w_bar)
    gap = as_sym(wb - as_sym(q), check=False)
    if not is_psd(gap, rank_tol=1e-10):
        raise ValueError("extended penalty not convex: W_bar - Q is not positive semi-definite")

    def fbar(beta) -> float:
        beta = np.asarray(beta, dtype=float)
        return f.value(beta) + float(beta @ gap @ beta) / (2.0 * lam)

    return fbar


def kernel_condition(a, q, rank_tol: Optional[float] = None) -> bool:
    """True iff every null eigenvector of ``a`` is annihilated by ``q`` (``ker a`` within ``ker q``)."""
    qm = as_sym(q)
    d = eig_sym(a)
    null = d.eigenvalues <= d.threshold(rank_tol)
    if not np.any(null):
        return True
    scale = max(1.0, float(np.max(np.abs(qm))))
    return bool(np.max(np.abs(qm @ d.eigenvectors[:, null])) <= 1e-9 * scale)

