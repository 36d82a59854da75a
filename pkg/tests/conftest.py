import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line; shown in the terminal summary."""

    def record(label: str, passed: bool, detail: str = "") -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {label}" + (f" | {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, p, cond=1e3):
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    ev = np.exp(rng.uniform(0.0, np.log(cond), p))
    return (q * ev) @ q.T


def box_qp_projection(w, c, x):
    """W-projection of x onto {theta : |(W theta)_j| <= c_j} by active-set enumeration.

    Works in u = W theta, where the problem is min (u - Wx)' W^{-1} (u - Wx)
    over a box. Every pattern (lower, free, upper) per coordinate is solved
    at once as a batched linear system; the KKT-feasible pattern with the
    smallest objective is returned. Exponential in p, so only for p <= 7.
    """
    import itertools

    p = w.shape[0]
    m = np.linalg.inv(w)
    m = 0.5 * (m + m.T)
    a = w @ x
    choices = [(-1, 0, 1) if np.isfinite(cj) else (0,) for cj in c]
    pats = np.array(list(itertools.product(*choices)), dtype=float).reshape(-1, p)
    cf = np.where(np.isfinite(c), c, 0.0)
    k = pats.shape[0]
    free = pats == 0
    lhs = np.where(free[:, :, None], m[None, :, :], np.eye(p)[None, :, :])
    rhs = np.where(free, (m @ a)[None, :], pats * cf[None, :])
    u = np.linalg.solve(lhs, rhs[..., None])[..., 0]
    g = (u - a[None, :]) @ m  # gradient rows
    tol = 1e-9 * (1.0 + np.abs(cf).max() + np.abs(a).max())
    inside = np.all(~free | (np.abs(u) <= cf + tol) | ~np.isfinite(c)[None, :], axis=1)
    upper_ok = np.all((pats != 1) | (g <= tol), axis=1)
    lower_ok = np.all((pats != -1) | (g >= -tol), axis=1)
    ok = inside & upper_ok & lower_ok
    if not ok.any():
        raise AssertionError("no KKT pattern found")
    obj = 0.5 * np.einsum("ki,ij,kj->k", u - a, m, u - a)
    best = np.flatnonzero(ok)[np.argmin(obj[ok])]
    return m @ u[best]
