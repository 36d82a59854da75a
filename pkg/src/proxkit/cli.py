"""``proxkit`` command line: estimate, simulate, check.

Exit codes: 0 success, 1 a self-check failed, 2 malformed input or config,
3 the solver could not produce an estimate.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .checks import run_checks
from .estimators import (
    Dataset,
    DatasetError,
    KKTViolation,
    default_mu,
    modified_ridgeless,
    proximal_estimate,
    ridgeless,
    weight_from_design,
)
from .penalty import AdaptiveLasso, PenaltyError, _encode_float, adaptive_weights, penalty_from_dict
from .prox import NonConvergenceError, ProxOptions, UnboundedProblemError, kkt_residual, plse_solve
from .montecarlo import PRESETS, McConfig, aggregates_document, format_summary, run_experiment, summarize

log = logging.getLogger("proxkit")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3
MODES = ("ridgeless", "modified-ridgeless", "plse", "proximal")
ESTIMATE_KEYS = {"mode", "penalty", "lambda", "mu", "mu_exponent", "initial", "kkt_tol", "max_iters", "seed"}


class InputError(Exception):
    """Malformed user input; reported with exit code 2."""


def _setup_logging() -> None:
    level = os.environ.get("PROXKIT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: line 1: top-level value must be a JSON object")
    return data


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _out_dir(path: Optional[str]) -> Path:
    out = Path(path or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {out} is not writable")
    return out


def _canonical_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _vec(v) -> list:
    return [float(x) for x in np.asarray(v, dtype=float)]


# --- estimate -------------------------------------------------------------------------

def _estimate_settings(args) -> dict:
    cfg = _load_json(args.config) if args.config else {}
    extra = set(cfg) - ESTIMATE_KEYS
    if extra:
        raise InputError(f"{args.config}: unknown config key(s): {sorted(extra)}")
    for key, val in (("mode", args.mode), ("lambda", args.lam), ("mu", args.mu),
                     ("mu_exponent", args.mu_exponent), ("initial", args.initial), ("seed", args.seed)):
        if val is not None:
            cfg[key] = val
    if args.penalty is not None:
        try:
            cfg["penalty"] = json.loads(args.penalty)
        except json.JSONDecodeError as exc:
            raise InputError(f"--penalty: {exc.msg}") from None
    cfg.setdefault("mode", "proximal")
    cfg.setdefault("mu", "auto")
    cfg.setdefault("mu_exponent", 3 / 8)
    cfg.setdefault("initial", "modified-ridgeless")
    cfg.setdefault("seed", 0)
    if cfg["mode"] not in MODES:
        raise InputError(f"unknown mode {cfg['mode']!r}; expected one of {MODES}")
    if cfg["initial"] not in ("ridgeless", "modified-ridgeless"):
        raise InputError("initial must be 'ridgeless' or 'modified-ridgeless'")
    if cfg["mode"] in ("plse", "proximal"):
        if "lambda" not in cfg:
            raise InputError(f"mode {cfg['mode']} needs a lambda (--lambda or config key 'lambda')")
        try:
            cfg["lambda"] = float(cfg["lambda"])
        except (TypeError, ValueError):
            raise InputError(f"lambda must be a number, got {cfg['lambda']!r}") from None
        if not cfg["lambda"] >= 0:
            raise InputError("lambda must be non-negative")
        cfg.setdefault("penalty", {"kind": "adaptive_lasso"} if cfg["mode"] == "proximal" else {"kind": "lasso"})
    return cfg


def _resolve_mu(cfg: dict, n: int) -> float:
    mu = cfg["mu"]
    if mu == "auto":
        exponent = float(cfg["mu_exponent"])
        if not 3 / 8 <= exponent < 0.5:
            raise InputError("mu exponent must lie in [3/8, 1/2)")
        return default_mu(n, exponent)
    try:
        mu = float(mu)
    except (TypeError, ValueError):
        raise InputError(f"mu must be 'auto' or a positive number, got {mu!r}") from None
    if not mu > 0:
        raise InputError("mu must be positive")
    return mu


def cmd_estimate(args) -> int:
    cfg = _estimate_settings(args)
    try:
        opts = ProxOptions(**{k: cfg[k] for k in ("kkt_tol", "max_iters") if k in cfg})
    except (TypeError, ValueError) as exc:
        raise InputError(f"solver options: {exc}") from None
    data = Dataset.from_csv(args.data)
    out = _out_dir(args.out)
    mode = cfg["mode"]
    metadata = {"config_hash": _canonical_hash(cfg), "seed": cfg["seed"], "version": __version__,
                "mode": mode, "n": data.n, "p": data.p}
    diagnostics = {}
    penalty = None
    if cfg.get("penalty") is not None:
        penalty = penalty_from_dict(cfg["penalty"], allow_missing_weights=(mode == "proximal"))
        if penalty is not None:
            penalty.check_dim(data.p)

    if mode == "ridgeless":
        beta = ridgeless(data)
        v_opt = data.moment() - data.gram() @ beta
    elif mode == "modified-ridgeless":
        mu = _resolve_mu(cfg, data.n)
        beta, md = modified_ridgeless(data, mu)
        metadata["mu"] = mu
        diagnostics["q_check_rank"] = md.rank
        v_opt = data.moment() - data.gram() @ beta
    elif mode == "plse":
        res = plse_solve(data.x, data.y, penalty, cfg["lambda"], opts)
        beta = res.point
        v_opt = data.moment() - data.gram() @ beta
        diagnostics.update(iterations=res.iterations, kkt_residual=res.kkt_residual,
                           path=res.path, stop_reason=res.stop_reason)
    else:
        if cfg["initial"] == "modified-ridgeless":
            mu = _resolve_mu(cfg, data.n)
            initial, md = modified_ridgeless(data, mu)
            w = md.w_bar
            metadata["mu"] = mu
            diagnostics["q_check_rank"] = md.rank
        else:
            initial = ridgeless(data)
            w = weight_from_design(data.gram())
        if penalty is None:
            penalty = AdaptiveLasso(adaptive_weights(initial))
        rep = proximal_estimate(initial, w, penalty, cfg["lambda"], opts)
        beta, v_opt = rep.beta, rep.v_opt
        diagnostics.update(iterations=rep.solver.iterations, kkt_residual=rep.solver.kkt_residual,
                           path=rep.solver.path, stop_reason=rep.solver.stop_reason,
                           initial_beta=_vec(initial))
    if penalty is not None:
        metadata["penalty"] = penalty.to_dict()
        metadata["lambda"] = cfg["lambda"]

    doc = {
        "beta": _vec(beta),
        "active_set": [int(j) + 1 for j in np.flatnonzero(beta != 0)],
        "v_opt": _vec(v_opt),
        "diagnostics": diagnostics,
        "metadata": metadata,
    }
    path = out / "estimate.json"
    path.write_text(json.dumps(doc, indent=2, default=_encode_float) + "\n", encoding="utf-8")
    print(f"wrote {path}")
    return EXIT_OK


# --- simulate -------------------------------------------------------------------------

def _simulate_config(args) -> McConfig:
    if args.config and args.preset:
        raise InputError("give either --config or --preset, not both")
    if args.preset:
        if args.preset not in PRESETS:
            raise InputError(f"unknown preset {args.preset!r}; expected one of {sorted(PRESETS)}")
        base = PRESETS[args.preset].to_dict()
    elif args.config:
        base = _load_json(args.config)
        try:
            McConfig.from_dict(base)
        except (TypeError, ValueError) as exc:
            raise InputError(f"{args.config}: {exc}") from None
    else:
        base = McConfig().to_dict()
    for key, val in (("reps", args.reps), ("base_seed", args.seed), ("n_grid", args.n_grid),
                     ("alpha_grid", args.alpha_grid), ("mu_exponent", args.mu_exponent)):
        if val is not None:
            base[key] = val
    try:
        return McConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = _simulate_config(args)
    out = _out_dir(args.out)
    report = run_experiment(cfg, workers=args.workers)
    text = report.csv_text()
    csv_path = out / "report.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    digest = hashlib.sha256(text.encode()).hexdigest()
    doc = aggregates_document(report, digest)
    (out / "aggregates.json").write_text(json.dumps(doc, indent=2, default=_encode_float) + "\n",
                                         encoding="utf-8")
    print(format_summary(summarize(report)))
    if report.failures:
        print(f"{report.failures} estimator evaluations failed; see the status column", file=sys.stderr)
    print(f"wrote {csv_path} and {out / 'aggregates.json'}")
    return EXIT_OK


# --- check ----------------------------------------------------------------------------

def cmd_check(args) -> int:
    results = run_checks(seed=args.seed or 0, fault=args.inject_fault)
    for r in results:
        print(f"{r.name}: {'PASS' if r.passed else 'FAIL'}")
        for line in r.details:
            print(f"    {line}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


# --- entry point ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxkit", description="Proximal estimation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate coefficients from a CSV dataset")
    est.add_argument("--data", required=True, help="CSV with header y,x1,...,xp")
    est.add_argument("--config", help="JSON file with estimation settings")
    est.add_argument("--out", help="output directory (default: current)")
    est.add_argument("--mode", choices=MODES)
    est.add_argument("--penalty", help='penalty as JSON, e.g. \'{"kind": "lasso"}\'')
    est.add_argument("--lambda", dest="lam", type=float)
    est.add_argument("--mu", help="'auto' (n^-exponent) or a positive number")
    est.add_argument("--mu-exponent", type=float)
    est.add_argument("--initial", choices=("ridgeless", "modified-ridgeless"))
    est.add_argument("--seed", type=_u64)
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run the Monte Carlo study")
    sim.add_argument("--config", help="JSON file with Monte Carlo settings")
    sim.add_argument("--preset", help=f"one of {', '.join(sorted(PRESETS))}")
    sim.add_argument("--out", help="output directory (default: current)")
    sim.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    sim.add_argument("--seed", type=_u64, help="base seed")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--n-grid", type=_int_list)
    sim.add_argument("--alpha-grid", type=_float_list)
    sim.add_argument("--mu-exponent", type=float)
    sim.set_defaults(func=cmd_simulate)

    chk = sub.add_parser("check", help="run the built-in invariant checks")
    chk.add_argument("--seed", type=_u64)
    chk.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    chk.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (InputError, DatasetError, PenaltyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (UnboundedProblemError, NonConvergenceError, KKTViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
