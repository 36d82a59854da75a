"""Simulation study under regular, singular and nearly singular designs.

Designs
    regular          Q_r with entries 0.5^|j-k|
    singular         Q_s = M Q_r M', M the identity with row 5 replaced by a e_2 + b e_3
    nearly_singular  (1/sqrt(n)) Q_r + (1 - 1/sqrt(n)) Q_s

Estimators recorded per replication
    RL     Ridgeless  Q_n^+ X'y/n
    MRL    modified Ridgeless with mu_n = n^{-mu_exponent}
    RLAL   adaptive lasso prox of RL under Q_n + I - Q_n Q_n^+, lambda_n = n^{-alpha}
    MRLAL  adaptive lasso prox of MRL under the modified design's W_bar

Reproducibility: each (n, rep) gets its own PCG64 stream seeded with
``replication_seed(base_seed, n, rep)`` (a splitmix64 chain), so the output
does not depend on how replications are spread over worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .estimators import (
    Dataset,
    adaptive_lasso_estimate,
    default_mu,
    modified_ridgeless,
    ridgeless,
    weight_from_design,
)
from .linalg import as_sym, eig_sym, psd_sqrt, range_projector

log = logging.getLogger(__name__)

DESIGNS = ("regular", "singular", "nearly_singular")
ESTIMATORS = ("RL", "MRL", "RLAL", "MRLAL")
STUDY_BETA0 = (3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0)
STUDY_SIGMA2 = 2.0
QS_COEF = 1.0 / math.sqrt(3.0)

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the splitmix64 finaliser (Steele, Lea & Flood constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def replication_seed(base_seed: int, n: int, rep: int) -> int:
    h = splitmix64(base_seed & _MASK64)
    h = splitmix64(h ^ (n & _MASK64))
    return splitmix64(h ^ (rep & _MASK64))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# --- designs --------------------------------------------------------------------

def build_qr(p: int) -> np.ndarray:
    if p < 1:
        raise ValueError("p must be positive")
    idx = np.arange(p)
    return 0.5 ** np.abs(np.subtract.outer(idx, idx))


def build_qs(qr, a: float = QS_COEF, b: float = QS_COEF) -> np.ndarray:
    """Replace variable 5 by ``a x_2 + b x_3``; kernel spanned by ``a e_2 + b e_3 - e_5``."""
    qr = as_sym(qr)
    p = qr.shape[0]
    if p < 5:
        raise ValueError("the singular design needs p >= 5")
    m = np.eye(p)
    m[4] = 0.0
    m[4, 1] = a
    m[4, 2] = b
    return as_sym(m @ qr @ m.T, check=False)


@dataclass(frozen=True)
class DesignSpec:
    kind: str = "regular"
    p: int = 8
    a: float = QS_COEF
    b: float = QS_COEF

    def __post_init__(self):
        if self.kind not in DESIGNS:
            raise ValueError(f"unknown design {self.kind!r}; expected one of {DESIGNS}")
        if self.p < 2 or (self.kind != "regular" and self.p < 5):
            raise ValueError("design dimension too small")

    def qr(self) -> np.ndarray:
        return build_qr(self.p)

    def qs(self) -> np.ndarray:
        return build_qs(self.qr(), self.a, self.b)

    def limit(self) -> np.ndarray:
        """Population limit Q_0."""
        return self.qr() if self.kind == "regular" else self.qs()


def population_design(spec: DesignSpec, n: float) -> np.ndarray:
    """``Q_{0n}``: the population design at sample size n."""
    if spec.kind == "regular":
        return spec.qr()
    if spec.kind == "singular":
        return spec.qs()
    mix = 1.0 / math.sqrt(n)
    return as_sym(mix * spec.qr() + (1.0 - mix) * spec.qs(), check=False)


def beta0_plus(spec: DesignSpec, beta0) -> np.ndarray:
    """Minimum-norm population parameter ``Q_0 Q_0^+ beta0``.

    Equal to ``beta0`` under the regular design. Entries below ``1e-12 * max|beta0|``
    are set to zero so that the population active set is exact.
    """
    beta0 = np.asarray(beta0, dtype=float)
    if spec.kind == "regular":
        return beta0.copy()
    bp = range_projector(spec.limit()) @ beta0
    bp[np.abs(bp) <= 1e-12 * np.max(np.abs(beta0), initial=1.0)] = 0.0
    return bp


def generate_sample(spec: DesignSpec, n: int, beta0, sigma2: float, rng: np.random.Generator,
                    root: Optional[np.ndarray] = None) -> Dataset:
    """Rows ``X_i = S g_i`` with ``S`` the PSD root of ``Q_{0n}``; ``y = X beta0 + eps``."""
    beta0 = np.asarray(beta0, dtype=float)
    s = psd_sqrt(population_design(spec, n)) if root is None else root
    g = rng.standard_normal((n, spec.p))
    x = g @ s  # s symmetric
    eps = math.sqrt(sigma2) * rng.standard_normal(n)
    return Dataset(x, x @ beta0 + eps)


# --- configuration ----------------------------------------------------------------

@dataclass(frozen=True)
class McConfig:
    design: DesignSpec = field(default_factory=DesignSpec)
    n_grid: tuple = (100, 200)
    reps: int = 500
    base_seed: int = 20210301
    mu_exponent: float = 3 / 8
    alpha_grid: tuple = (0.55, 0.65, 0.75, 0.85, 0.95)
    estimators: tuple = ESTIMATORS
    sigma2: float = STUDY_SIGMA2
    beta0: tuple = STUDY_BETA0

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "beta0", tuple(float(b) for b in self.beta0))
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.n_grid or min(self.n_grid) < 1:
            raise ValueError("n_grid must contain positive sample sizes")
        if not all(0.5 < a < 1 for a in self.alpha_grid):
            raise ValueError("lambda exponents must lie in (0.5, 1)")
        if not 3 / 8 <= self.mu_exponent < 0.5:
            raise ValueError("mu exponent must lie in [3/8, 1/2)")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad or not self.estimators:
            raise ValueError(f"unknown estimators {sorted(bad)}; choose from {ESTIMATORS}")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if len(self.beta0) != self.design.p:
            raise ValueError("beta0 length does not match the design dimension")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_grid"] = list(self.n_grid)
        d["alpha_grid"] = list(self.alpha_grid)
        d["estimators"] = list(self.estimators)
        d["beta0"] = list(self.beta0)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config key(s): {sorted(extra)}")
        d = dict(d)
        if "design" in d:
            des = d["design"]
            if isinstance(des, str):
                des = {"kind": des}
            extra = set(des) - set(DesignSpec.__dataclass_fields__)
            if extra:
                raise ValueError(f"unknown design key(s): {sorted(extra)}")
            d["design"] = DesignSpec(**des)
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


PRESETS = {
    "paper-regular": McConfig(design=DesignSpec("regular")),
    "paper-singular": McConfig(design=DesignSpec("singular")),
    "paper-nearly-singular": McConfig(design=DesignSpec("nearly_singular")),
}


# --- replications -------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    estimator: str
    n: int
    alpha: Optional[float]
    rep: int
    seed: int
    sq_err: float
    norm_sq_err: float
    detect: bool
    include: bool
    design_rank: int
    status: str
    beta: tuple


def _record(name, n, alpha, rep, seed, beta, target, active, rank, status="ok"):
    if beta is None:
        p = target.size
        return Record(name, n, alpha, rep, seed, math.nan, math.nan, False, False, rank, status,
                      (math.nan,) * p)
    err = float(np.sum((beta - target) ** 2))
    est_active = frozenset(np.flatnonzero(beta != 0).tolist())
    return Record(name, n, alpha, rep, seed, err, n * err, est_active == active,
                  est_active >= active, rank, status, tuple(float(b) for b in beta))


def run_replication(cfg: McConfig, n: int, rep: int) -> list:
    """All records for one (n, rep) cell, in a fixed estimator/alpha order."""
    seed = replication_seed(cfg.base_seed, n, rep)
    rng = make_rng(seed)
    beta0 = np.asarray(cfg.beta0)
    target = beta0_plus(cfg.design, beta0)
    active = frozenset(np.flatnonzero(target != 0).tolist())
    data = generate_sample(cfg.design, n, beta0, cfg.sigma2, rng)
    want = set(cfg.estimators)
    out = []

    q = data.gram()
    rl = ridgeless(data)
    rank_q = eig_sym(q).rank()
    if "RL" in want:
        out.append(_record("RL", n, None, rep, seed, rl, target, active, rank_q))
    mrl, md = modified_ridgeless(data, default_mu(n, cfg.mu_exponent))
    if "MRL" in want:
        out.append(_record("MRL", n, None, rep, seed, mrl, target, active, md.rank))

    w_rl = weight_from_design(q) if "RLAL" in want else None
    for alpha in cfg.alpha_grid:
        lam = float(n) ** (-alpha)
        for name, init, w, rank in (("RLAL", rl, w_rl, rank_q), ("MRLAL", mrl, md.w_bar, md.rank)):
            if name not in want:
                continue
            try:
                beta = adaptive_lasso_estimate(init, w, lam).beta
                out.append(_record(name, n, alpha, rep, seed, beta, target, active, rank))
            except Exception as exc:  # recorded, never fatal
                log.warning("%s failed at n=%d rep=%d alpha=%g: %s", name, n, rep, alpha, exc)
                out.append(_record(name, n, alpha, rep, seed, None, target, active, rank,
                                   status=f"error: {type(exc).__name__}"))
    return out


def _run_cell(args):
    cfg, n, rep = args
    return run_replication(cfg, n, rep)


@dataclass
class McReport:
    config: McConfig
    records: list
    metadata: dict

    @property
    def failures(self) -> int:
        return sum(r.status != "ok" for r in self.records)

    def csv_text(self) -> str:
        p = len(self.config.beta0)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(CSV_COLUMNS) + [f"b{j}" for j in range(1, p + 1)])
        for r in self.records:
            writer.writerow([
                r.estimator, r.n, "" if r.alpha is None else repr(r.alpha), r.rep, r.seed,
                repr(r.sq_err), repr(r.norm_sq_err), int(r.detect), int(r.include),
                r.design_rank, r.status,
            ] + [repr(b) for b in r.beta])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text())


CSV_COLUMNS = ("estimator", "n", "alpha", "rep", "seed", "sq_err", "norm_sq_err", "detect",
               "include", "design_rank", "status")


def run_experiment(cfg: McConfig, workers: Optional[int] = 1) -> McReport:
    """Run every (n, rep) cell; results are reduced in (n, rep) order whatever ``workers`` is."""
    cells = [(cfg, n, rep) for n in cfg.n_grid for rep in range(cfg.reps)]
    if workers is None:
        workers = os.cpu_count() or 1
    workers = max(1, int(workers))
    if workers == 1:
        chunks = [_run_cell(c) for c in cells]
    else:
        chunksize = max(1, len(cells) // (8 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, cells, chunksize=chunksize))
    records = [r for chunk in chunks for r in chunk]
    meta = {
        "config_hash": cfg.config_hash(),
        "base_seed": cfg.base_seed,
        "version": __version__,
        "rng": "numpy PCG64, per-replication seed splitmix64(base_seed, n, rep)",
        "beta0_plus": beta0_plus(cfg.design, cfg.beta0).tolist(),
    }
    return McReport(cfg, records, meta)


# --- aggregation ----------------------------------------------------------------------

QUARTILE_METHOD = "median_unbiased"


def quartiles(values) -> tuple:
    """Quartiles with the median-unbiased order-statistic rule (Hyndman-Fan type 8)."""
    return tuple(float(q) for q in np.quantile(np.asarray(values, dtype=float), (0.25, 0.5, 0.75),
                                               method=QUARTILE_METHOD))


def proportion(flags) -> tuple:
    """Sample proportion and its binomial standard error ``sqrt(p(1-p)/m)``."""
    flags = np.asarray(flags, dtype=float)
    m = flags.size
    p = float(flags.mean())
    return p, math.sqrt(p * (1 - p) / m)


def summarize(report: McReport) -> list:
    """One aggregate row per (estimator, n, alpha) in first-appearance order."""
    if not report.records:
        raise ValueError("empty report")
    groups: dict = {}
    for r in report.records:
        groups.setdefault((r.estimator, r.n, r.alpha), []).append(r)
    rows = []
    for (est, n, alpha), recs in groups.items():
        ok = [r for r in recs if r.status == "ok"]
        row = {"estimator": est, "n": n, "alpha": alpha, "reps": len(recs),
               "failures": len(recs) - len(ok)}
        if ok:
            sq = quartiles([r.sq_err for r in ok])
            nsq = quartiles([r.norm_sq_err for r in ok])
            pd_, sd = proportion([r.detect for r in ok])
            pi, si = proportion([r.include for r in ok])
            row.update({
                "sq_err_q1": sq[0], "sq_err_median": sq[1], "sq_err_q3": sq[2],
                "norm_sq_err_q1": nsq[0], "norm_sq_err_median": nsq[1], "norm_sq_err_q3": nsq[2],
                "p_detect": pd_, "se_detect": sd, "p_include": pi, "se_include": si,
            })
        rows.append(row)
    return rows


def aggregates_document(report: McReport, csv_sha256: Optional[str] = None) -> dict:
    meta = dict(report.metadata)
    if csv_sha256 is not None:
        meta["report_csv_sha256"] = csv_sha256
    return {"metadata": meta, "config": report.config.to_dict(), "aggregates": summarize(report)}


def format_summary(rows: Sequence[dict]) -> str:
    head = f"{'estimator':<8}{'n':>6}{'alpha':>7}{'median SE':>12}{'median nSE':>12}{'P(A=A)':>9}{'P(A>=A)':>9}"
    lines = [head, "-" * len(head)]
    for r in rows:
        alpha = "" if r["alpha"] is None else f"{r['alpha']:.2f}"
        if "sq_err_median" not in r:
            lines.append(f"{r['estimator']:<8}{r['n']:>6}{alpha:>7}  all {r['reps']} replications failed")
            continue
        lines.append(
            f"{r['estimator']:<8}{r['n']:>6}{alpha:>7}{r['sq_err_median']:>12.4g}"
            f"{r['norm_sq_err_median']:>12.4g}{r['p_detect']:>9.3f}{r['p_include']:>9.3f}"
        )
    return "\n".join(lines)
