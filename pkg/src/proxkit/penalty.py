"""Penalty functions, their Euclidean proximal maps and subgradient sets.

A penalty never carries the tuning parameter: every operation that needs
``lambda`` takes it as an argument, so one object serves a whole tuning grid.

Six kinds are supported: ``Ridge``, ``Lasso``, ``AdaptiveLasso``,
``GroupLasso``, ``ElasticNet`` and ``BoxIndicator``. Each class implements

* ``value(beta)``            -- the (extended real) penalty value,
* ``prox(t, x)``             -- ``argmin 0.5*||x - b||^2 + t*f(b)`` in closed form,
* ``subgradient_distance``   -- Euclidean distance of a vector to ``lam * df(beta)``,
* ``polish``                 -- exact solve of a quadratic model on a fixed support,

which is everything the solvers in :mod:`proxkit.prox` need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Optional, Sequence

import numpy as np

from .linalg import WeightMatrix

#: Auxiliary estimates below this magnitude get an infinite adaptive weight.
ZERO_AUX_THRESHOLD = 1e-12


class PenaltyError(ValueError):
    pass


def soft_threshold(x, t):
    """``sign(x) * max(|x| - t, 0)`` with literal zeros below the threshold.

    ``t`` may be a scalar or an array and may contain ``inf``.
    """
    x = np.asarray(x, dtype=float)
    mag = np.abs(x) - t
    out = np.where(mag > 0, np.sign(x) * np.where(mag > 0, mag, 0.0), 0.0)
    return out + 0.0  # normalise -0.0


def _solve_block(h: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(h, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(h, rhs, rcond=None)[0]


class Penalty:
    """Base class; concrete penalties are frozen dataclasses below."""

    kind: ClassVar[str] = ""
    separable: ClassVar[bool] = True
    sublinear: ClassVar[bool] = False

    def check_dim(self, p: int) -> None:
        pass

    def value(self, beta) -> float:
        raise NotImplementedError

    def prox(self, t, x) -> np.ndarray:
        raise NotImplementedError

    def subgradient_distance(self, v, beta, lam: float) -> float:
        raise NotImplementedError

    def polish(self, h, b, lam: float, beta) -> Optional[np.ndarray]:
        """Minimiser of ``0.5 b'Hb - b'x + lam f`` assuming the support/sign pattern of ``beta``.

        Returns ``None`` when the penalty has no linear optimality system.
        """
        return None

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class Ridge(Penalty):
    """``0.5 * ||beta||_2^2``."""

    kind: ClassVar[str] = "ridge"

    def value(self, beta) -> float:
        beta = np.asarray(beta, dtype=float)
        return 0.5 * float(beta @ beta)

    def prox(self, t, x):
        return np.asarray(x, dtype=float) / (1.0 + np.asarray(t, dtype=float))

    def subgradient_distance(self, v, beta, lam):
        return float(np.linalg.norm(np.asarray(v) - lam * np.asarray(beta)))

    def polish(self, h, b, lam, beta):
        return _solve_block(h + lam * np.eye(h.shape[0]), b)


def _weighted_l1_distance(v, beta, c) -> np.ndarray:
    # per-coordinate distance of v to the subdifferential of sum_j c_j |beta_j|
    active = beta != 0
    inf = np.isinf(c)
    cf = np.where(inf, 0.0, c)
    d = np.where(active, np.abs(v - cf * np.sign(beta)), np.maximum(np.abs(v) - cf, 0.0))
    d = np.where(active & inf, np.inf, d)
    return np.where(~active & inf, 0.0, d)


def _weighted_l1_polish(h, b, lam, beta, weights, ridge=0.0):
    S = np.flatnonzero((beta != 0) & np.isfinite(weights))
    out = np.zeros_like(beta, dtype=float)
    if S.size:
        hs = h[np.ix_(S, S)] + ridge * np.eye(S.size)
        out[S] = _solve_block(hs, b[S] - lam * weights[S] * np.sign(beta[S]))
    return out


@dataclass(frozen=True)
class Lasso(Penalty):
    """``||beta||_1``."""

    kind: ClassVar[str] = "lasso"
    sublinear: ClassVar[bool] = True

    def value(self, beta):
        return float(np.sum(np.abs(beta)))

    def prox(self, t, x):
        return soft_threshold(x, t)

    def subgradient_distance(self, v, beta, lam):
        beta = np.asarray(beta, dtype=float)
        c = np.full(beta.shape, float(lam))
        return float(np.linalg.norm(_weighted_l1_distance(np.asarray(v), beta, c)))

    def polish(self, h, b, lam, beta):
        return _weighted_l1_polish(h, b, lam, np.asarray(beta), np.ones(len(beta)))


@dataclass(frozen=True)
class AdaptiveLasso(Penalty):
    """``sum_j weights_j * |beta_j|``; an infinite weight pins the coordinate to 0."""

    kind: ClassVar[str] = "adaptive_lasso"
    sublinear: ClassVar[bool] = True
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise PenaltyError("adaptive lasso weights must be a non-empty vector")
        if np.any(np.isnan(w)) or np.any(w <= 0):
            raise PenaltyError("adaptive lasso weights must be > 0 (inf allowed)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_auxiliary(cls, aux) -> "AdaptiveLasso":
        return cls(adaptive_weights(aux))

    def check_dim(self, p):
        if self.weights.shape != (p,):
            raise PenaltyError(f"adaptive lasso has {self.weights.size} weights, expected {p}")

    def _scaled(self, lam):
        return np.where(np.isinf(self.weights), np.inf, lam * self.weights)

    def value(self, beta):
        beta = np.asarray(beta, dtype=float)
        nz = beta != 0
        if np.any(nz & np.isinf(self.weights)):
            return math.inf
        return float(np.sum(self.weights[nz] * np.abs(beta[nz])))

    def prox(self, t, x):
        return soft_threshold(x, np.asarray(t) * self.weights)

    def subgradient_distance(self, v, beta, lam):
        d = _weighted_l1_distance(np.asarray(v), np.asarray(beta, dtype=float), self._scaled(lam))
        return float(np.linalg.norm(d))

    def polish(self, h, b, lam, beta):
        return _weighted_l1_polish(h, b, lam, np.asarray(beta), self.weights)

    def to_dict(self):
        return {"kind": self.kind, "weights": [_encode_float(x) for x in self.weights]}

    def __eq__(self, other):
        return isinstance(other, AdaptiveLasso) and np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True)
class GroupLasso(Penalty):
    """``sum_k ||beta_{g_k}||_2`` over a partition of the coordinates (0-based indices)."""

    kind: ClassVar[str] = "group_lasso"
    separable: ClassVar[bool] = False
    sublinear: ClassVar[bool] = True
    groups: tuple = ()

    def __post_init__(self):
        groups = tuple(tuple(int(j) for j in g) for g in self.groups)
        if not groups or any(len(g) == 0 for g in groups):
            raise PenaltyError("group lasso needs non-empty groups")
        flat = sorted(j for g in groups for j in g)
        if flat != list(range(len(flat))):
            raise PenaltyError("groups must partition {0, ..., p-1} exactly")
        object.__setattr__(self, "groups", groups)

    def check_dim(self, p):
        n = sum(len(g) for g in self.groups)
        if n != p:
            raise PenaltyError(f"groups cover {n} coordinates, expected {p}")

    def _blocks(self):
        return [np.asarray(g) for g in self.groups]

    def value(self, beta):
        beta = np.asarray(beta, dtype=float)
        return float(sum(np.linalg.norm(beta[g]) for g in self._blocks()))

    def prox(self, t, x):
        t = float(np.asarray(t))
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for g in self._blocks():
            nrm = np.linalg.norm(x[g])
            if nrm > t:
                out[g] = (1.0 - t / nrm) * x[g]
        return out

    def subgradient_distance(self, v, beta, lam):
        v = np.asarray(v, dtype=float)
        beta = np.asarray(beta, dtype=float)
        total = 0.0
        for g in self._blocks():
            nrm = np.linalg.norm(beta[g])
            if nrm > 0:
                total += float(np.sum((v[g] - lam * beta[g] / nrm) ** 2))
            else:
                total += max(float(np.linalg.norm(v[g])) - lam, 0.0) ** 2
        return math.sqrt(total)

    def to_dict(self):
        return {"kind": self.kind, "groups": [[j + 1 for j in g] for g in self.groups]}


@dataclass(frozen=True)
class ElasticNet(Penalty):
    """``w ||beta||_1 + (1 - w)/2 ||beta||_2^2`` with ``0 < w < 1``.

    Euclidean prox at scale t: the stationarity condition
    ``b (1 + t(1-w)) = x - t w sign(b)`` gives
    ``soft_threshold(x, t w) / (1 + t (1 - w))``.
    """

    kind: ClassVar[str] = "elastic_net"
    w: float = 0.5

    def __post_init__(self):
        if not 0.0 < float(self.w) < 1.0:
            raise PenaltyError("elastic net mixing weight must lie in (0, 1)")

    def value(self, beta):
        beta = np.asarray(beta, dtype=float)
        return self.w * float(np.sum(np.abs(beta))) + 0.5 * (1 - self.w) * float(beta @ beta)

    def prox(self, t, x):
        t = np.asarray(t, dtype=float)
        return soft_threshold(x, t * self.w) / (1.0 + t * (1.0 - self.w))

    def subgradient_distance(self, v, beta, lam):
        beta = np.asarray(beta, dtype=float)
        r = np.asarray(v) - lam * (1 - self.w) * beta
        c = np.full(beta.shape, lam * self.w)
        return float(np.linalg.norm(_weighted_l1_distance(r, beta, c)))

    def polish(self, h, b, lam, beta):
        beta = np.asarray(beta)
        return _weighted_l1_polish(
            h, b, lam * self.w, beta, np.ones(len(beta)), ridge=lam * (1 - self.w)
        )

    def to_dict(self):
        return {"kind": self.kind, "w": self.w}


@dataclass(frozen=True)
class BoxIndicator(Penalty):
    """Indicator of ``{beta : lower <= beta <= upper}`` (bounds may be infinite)."""

    kind: ClassVar[str] = "box"
    lower: np.ndarray = field(default=None)
    upper: np.ndarray = field(default=None)

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise PenaltyError("box bounds must be vectors of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise PenaltyError("box bounds need lower <= upper componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def check_dim(self, p):
        if self.lower.shape != (p,):
            raise PenaltyError(f"box has dimension {self.lower.size}, expected {p}")

    def value(self, beta):
        beta = np.asarray(beta, dtype=float)
        inside = np.all((beta >= self.lower) & (beta <= self.upper))
        return 0.0 if inside else math.inf

    def prox(self, t, x):
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def subgradient_distance(self, v, beta, lam):
        v = np.asarray(v, dtype=float)
        beta = np.asarray(beta, dtype=float)
        if self.value(beta) == math.inf:
            return math.inf
        at_lo = beta == self.lower
        at_hi = beta == self.upper
        d = np.abs(v)
        d = np.where(at_lo, np.maximum(v, 0.0), d)
        d = np.where(at_hi, np.maximum(-v, 0.0), d)
        d = np.where(at_lo & at_hi, 0.0, d)
        return float(np.linalg.norm(d))

    def polish(self, h, b, lam, beta):
        beta = np.asarray(beta, dtype=float)
        bound = (beta == self.lower) | (beta == self.upper)
        F = np.flatnonzero(~bound)
        B = np.flatnonzero(bound)
        out = beta.copy()
        if F.size:
            rhs = b[F] - h[np.ix_(F, B)] @ beta[B]
            out[F] = _solve_block(h[np.ix_(F, F)], rhs)
        return out

    def to_dict(self):
        return {
            "kind": self.kind,
            "lower": [_encode_float(x) for x in self.lower],
            "upper": [_encode_float(x) for x in self.upper],
        }

    def __eq__(self, other):
        return (
            isinstance(other, BoxIndicator)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    __hash__ = None


KINDS = {cls.kind: cls for cls in (Ridge, Lasso, AdaptiveLasso, GroupLasso, ElasticNet, BoxIndicator)}


# --- serialization -----------------------------------------------------------

def _encode_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def _decode_float(x) -> float:
    if x is None:
        return math.inf
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        if x.strip().lower() in ("-inf", "-infinity"):
            return -math.inf
        raise PenaltyError(f"cannot parse number {x!r}")
    return float(x)


_ALLOWED_KEYS = {
    "ridge": set(),
    "lasso": set(),
    "adaptive_lasso": {"weights"},
    "group_lasso": {"groups"},
    "elastic_net": {"w"},
    "box": {"lower", "upper"},
}


def penalty_from_dict(d: dict, *, allow_missing_weights: bool = False) -> Optional[Penalty]:
    """Build a penalty from its JSON form; unknown keys are rejected.

    Group indices in JSON are 1-based. With ``allow_missing_weights`` an
    adaptive lasso without weights returns ``None`` so that the caller can
    derive the weights from an initial estimate.
    """
    if not isinstance(d, dict) or "kind" not in d:
        raise PenaltyError("penalty must be a JSON object with a 'kind' field")
    kind = d["kind"]
    if kind not in _ALLOWED_KEYS:
        raise PenaltyError(f"unknown penalty kind {kind!r}; expected one of {sorted(_ALLOWED_KEYS)}")
    extra = set(d) - {"kind"} - _ALLOWED_KEYS[kind]
    if extra:
        raise PenaltyError(f"unknown key(s) for {kind}: {sorted(extra)}")
    if kind == "adaptive_lasso":
        if "weights" not in d:
            if allow_missing_weights:
                return None
            raise PenaltyError("adaptive_lasso needs 'weights'")
        return AdaptiveLasso([_decode_float(x) for x in d["weights"]])
    if kind == "group_lasso":
        return GroupLasso(tuple(tuple(int(j) - 1 for j in g) for g in d["groups"]))
    if kind == "elastic_net":
        return ElasticNet(float(d.get("w", 0.5)))
    if kind == "box":
        return BoxIndicator([_decode_float(x) for x in d["lower"]], [_decode_float(x) for x in d["upper"]])
    return KINDS[kind]()


# --- module-level operations --------------------------------------------------

def evaluate(f: Penalty, beta) -> float:
    return f.value(np.asarray(beta, dtype=float))


def euclidean_prox(f: Penalty, t, x) -> np.ndarray:
    """Closed-form ``argmin_b 0.5 ||x - b||_2^2 + t f(b)``.

    ``t`` may be a per-coordinate array for separable penalties.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise PenaltyError("prox scale must be positive")
    if t_arr.ndim and not f.separable:
        raise PenaltyError(f"{f.kind} prox needs a scalar scale")
    return f.prox(t_arr, np.asarray(x, dtype=float))


def adaptive_weights(aux) -> np.ndarray:
    """``1/|aux_j|``, infinite where ``|aux_j| < 1e-12``."""
    aux = np.abs(np.asarray(aux, dtype=float))
    small = aux < ZERO_AUX_THRESHOLD
    with np.errstate(divide="ignore"):
        return np.where(small, np.inf, 1.0 / np.where(small, 1.0, aux))


@dataclass(frozen=True)
class PolyhedronSpec:
    """``C = {theta : |<e_j, theta>_W| <= bounds_j for all j}``; ``inf`` leaves a coordinate free."""

    bounds: np.ndarray
    w: WeightMatrix

    def __post_init__(self):
        c = np.array(self.bounds, dtype=float)
        if np.any(np.isnan(c)) or np.any(c <= 0):
            raise PenaltyError("polyhedron bounds must be > 0 (inf allowed)")
        if c.shape != (self.w.dim,):
            raise PenaltyError("polyhedron bounds do not match the weight matrix dimension")
        c.setflags(write=False)
        object.__setattr__(self, "bounds", c)

    def violation(self, theta) -> float:
        """Largest constraint violation ``max_j (|(W theta)_j| - c_j)_+``."""
        u = np.abs(self.w.matrix @ np.asarray(theta, dtype=float))
        excess = np.where(np.isinf(self.bounds), 0.0, u - self.bounds)
        return float(max(0.0, np.max(excess)))

    def contains(self, theta, tol: float = 1e-9) -> bool:
        return self.violation(theta) <= tol

    def scaled(self, c: float) -> "PolyhedronSpec":
        return PolyhedronSpec(self.bounds * c, self.w)


def conjugate_polyhedron(f: Penalty, lam: float, w: WeightMatrix, aux=None) -> PolyhedronSpec:
    """The set whose W-projection is the conjugate prox of a sublinear ``lam * f``.

    Lasso gives ``c_j = lam``; the adaptive lasso gives ``c_j = lam/|aux_j|``
    (or ``lam * weights_j`` when no auxiliary estimate is passed).
    """
    if lam <= 0:
        raise PenaltyError("lambda must be positive")
    if isinstance(f, Lasso):
        c = np.full(w.dim, float(lam))
    elif isinstance(f, AdaptiveLasso):
        weights = f.weights if aux is None else adaptive_weights(aux)
        c = np.where(np.isinf(weights), np.inf, lam * weights)
    else:
        raise PenaltyError(f"not sublinear with a polyhedral conjugate set: {f.kind}")
    return PolyhedronSpec(c, w)


# --- limit objects -------------------------------------------------------------

def limit_domain(f: Penalty, beta0) -> np.ndarray:
    """Support of ``beta0``: the coordinates spanning the adaptive lasso limit domain."""
    if not isinstance(f, AdaptiveLasso):
        raise PenaltyError("limit domain is defined for the adaptive lasso only")
    return np.flatnonzero(np.asarray(beta0) != 0)


@dataclass(frozen=True)
class AffineSpan:
    """``point + span(directions)``; ``directions`` is a p x k matrix (k may be 0)."""

    point: np.ndarray
    directions: np.ndarray

    def contains(self, t, tol: float = 1e-12) -> bool:
        r = np.asarray(t, dtype=float) - self.point
        if self.directions.shape[1]:
            coef = np.linalg.lstsq(self.directions, r, rcond=None)[0]
            r = r - self.directions @ coef
        return bool(np.max(np.abs(r), initial=0.0) <= tol)


@dataclass(frozen=True)
class BoxProduct:
    """Cartesian product of intervals; coordinates with ``lower == upper`` are fixed."""

    lower: np.ndarray
    upper: np.ndarray

    @property
    def fixed(self) -> np.ndarray:
        return np.flatnonzero(self.lower == self.upper)

    def contains(self, t, tol: float = 1e-12) -> bool:
        t = np.asarray(t, dtype=float)
        return bool(np.all(t >= self.lower - tol) and np.all(t <= self.upper + tol))


@dataclass(frozen=True)
class NormalConeOfSpan:
    """Normal cone of ``span{e_j : j in support}``: every vector vanishing on the support."""

    support: np.ndarray

    def contains(self, t, tol: float = 1e-12) -> bool:
        t = np.asarray(t, dtype=float)
        return bool(np.max(np.abs(t[self.support]), initial=0.0) <= tol)


def limit_subgradient(f: Penalty, beta0):
    """Subgradient set of the limit penalty at ``beta0`` (Euclidean convention)."""
    beta0 = np.asarray(beta0, dtype=float)
    p = beta0.size
    active = beta0 != 0
    if isinstance(f, Ridge):
        return AffineSpan(beta0.copy(), np.zeros((p, 0)))
    if isinstance(f, Lasso):
        s = np.sign(beta0)
        return BoxProduct(np.where(active, s, -1.0), np.where(active, s, 1.0))
    if isinstance(f, AdaptiveLasso):
        point = np.zeros(p)
        point[active] = 1.0 / beta0[active]
        return AffineSpan(point, np.eye(p)[:, ~active])
    raise PenaltyError(f"limit subgradient not available for {f.kind}")


def normal_cone_of_domain(f: Penalty, beta0) -> NormalConeOfSpan:
    return NormalConeOfSpan(limit_domain(f, beta0))
