"""Self-check suite run by ``proxkit check``.

Each check draws small random instances from a fixed seed and verifies an
identity that the library relies on. ``fault`` perturbs one result so the
failure path can be exercised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import WeightMatrix, pinv
from .montecarlo import STUDY_BETA0, DesignSpec, beta0_plus
from .penalty import AdaptiveLasso, Lasso, conjugate_polyhedron
from .prox import conjugate_prox, plse_solve, prox

# printed to three decimals in the reference study
REFERENCE_BETA0_PLUS = (3.0, 1.893, 0.393, 0.0, 1.32, 0.0, 0.0, 0.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: list = field(default_factory=list)


def random_pd(rng: np.random.Generator, p: int, cond: float = 1e3) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    ev = np.exp(rng.uniform(0.0, np.log(cond), p))
    return (q * ev) @ q.T


def random_psd(rng: np.random.Generator, p: int, rank: int) -> np.ndarray:
    """PSD matrix of the given rank; non-zero eigenvalues span two decades."""
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    s = np.zeros(p)
    s[:rank] = np.exp(rng.uniform(np.log(1e-2), 0.0, rank))
    return (q * s) @ q.T


# inside the spectral gap of random_psd output; the default cutoff p*eps can
# sit below the round-off eigenvalues of a reconstructed singular matrix
PENROSE_RANK_TOL = 1e-10


def check_moreau(rng, instances: int = 200, fault: bool = False) -> CheckResult:
    worst_sum = worst_viol = worst_comp = 0.0
    for k in range(instances):
        p = int(rng.integers(1, 7))
        w = WeightMatrix(random_pd(rng, p))
        lam = float(10 ** rng.uniform(-3, 1))
        f = Lasso() if k % 2 == 0 else AdaptiveLasso(rng.uniform(0.2, 5.0, p))
        x = rng.standard_normal(p) * 3
        beta = prox(f, lam, w, x).point
        theta = conjugate_prox(f, lam, w, x)
        if fault and k == 0:
            theta = theta + 1e-3
        c = conjugate_polyhedron(f, lam, w)
        u = w.matrix @ theta
        worst_sum = max(worst_sum, float(np.max(np.abs(beta + theta - x))))
        worst_viol = max(worst_viol, c.violation(theta))
        # x - theta must lie in the normal cone of the polyhedron at theta
        on = beta != 0
        comp = np.abs(u[on] - c.bounds[on] * np.sign(beta[on]))
        worst_comp = max(worst_comp, float(comp.max()) if comp.size else 0.0)
    ok = worst_sum <= 1e-12 and worst_viol <= 1e-9 and worst_comp <= 1e-9
    return CheckResult("moreau-identity", ok, [
        f"instances={instances} max|prox+conj-x|={worst_sum:.2e} "
        f"max constraint violation={worst_viol:.2e} max complementarity gap={worst_comp:.2e}"
    ])


def check_penrose(rng, instances: int = 200, fault: bool = False) -> CheckResult:
    worst = 0.0
    for k in range(instances):
        p = int(rng.integers(1, 13))
        a = random_psd(rng, p, int(rng.integers(0, p + 1)))
        g = pinv(a, PENROSE_RANK_TOL)
        if fault and k == 0:
            g = g + 1e-3
        errs = (
            np.abs(a @ g @ a - a).max(),
            np.abs(g @ a @ g - g).max(),
            np.abs((a @ g).T - a @ g).max(),
            np.abs((g @ a).T - g @ a).max(),
        )
        scale = max(1.0, float(np.abs(a).max()), float(np.abs(g).max()))
        worst = max(worst, max(errs) / scale)
    return CheckResult("penrose", worst <= 1e-9, [f"instances={instances} max relative residual={worst:.2e}"])


def check_plse_equivalence(rng, instances: int = 20, fault: bool = False) -> CheckResult:
    worst = 0.0
    n, p = 50, 8
    for k in range(instances):
        x = rng.standard_normal((n, p))
        y = x @ rng.standard_normal(p) + rng.standard_normal(n)
        lam = float(10 ** rng.uniform(-2, 0))
        q = x.T @ x / n
        rl = np.linalg.solve(q, x.T @ y / n)
        f = Lasso() if k % 2 == 0 else AdaptiveLasso.from_auxiliary(rl)
        direct = plse_solve(x, y, f, lam).point
        via_prox = prox(f, lam, WeightMatrix(q), rl).point
        if fault and k == 0:
            direct = direct + 1e-3
        worst = max(worst, float(np.max(np.abs(direct - via_prox))))
    return CheckResult("plse-equivalence", worst < 1e-6, [f"instances={instances} max|plse - prox|={worst:.2e}"])


def check_beta0_plus(rng=None, fault: bool = False) -> CheckResult:
    computed = beta0_plus(DesignSpec("singular"), STUDY_BETA0)
    if fault:
        computed = computed + 1e-2
    ref = np.asarray(REFERENCE_BETA0_PLUS)
    dev = float(np.max(np.abs(computed - ref)))
    fmt = ", ".join(f"{v:.4f}" for v in computed)
    return CheckResult("beta0-plus", dev <= 5e-4, [
        f"computed  = ({fmt})",
        f"reference = ({', '.join(f'{v:g}' for v in ref)})",
        f"max abs deviation = {dev:.2e}",
    ])


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "moreau-identity": check_moreau,
    "penrose": check_penrose,
    "plse-equivalence": check_plse_equivalence,
    "beta0-plus": check_beta0_plus,
}


def run_checks(seed: int = 0, fault: bool = False) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    # the fault is injected into the first check only
    return [fn(rng, fault=fault and i == 0) for i, fn in enumerate(CHECKS.values())]
