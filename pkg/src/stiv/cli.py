"""Command-line interface.

Subcommands: inspect, estimate, sensitivity, ci, select, nv, simulate.
Results are emitted as a single JSON document together with a run manifest
(argv, input digests, package version, seed, timing).  Infinities are
serialized as the strings "inf"/"-inf".

Exit codes: 0 success, 2 usage, 3 validation, 4 solver failure,
5 numerical failure, 6 parse error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .conic import Tolerances
from .errors import (
    NumericalError,
    ParseError,
    SolverFailureError,
    StivError,
    ValidationError,
)
from .estimators import (
    StivConfig,
    TwoStageConfig,
    stiv_fit,
    stiv_nonpivotal,
    stiv_two_stage,
)
from .inference import CiSpec, confidence_intervals, support_estimate, threshold_select, thresholds
from .model import MAXABS, RMS, Dataset, RateConfig, load_dataset, rate_r, scale_design
from .nonvalid import NvConfig, nv_fit, nv_select_auto
from .sensitivity import (
    SINGLE_ENDO_REMARK,
    STANDARD,
    ConeSpec,
    coherence_bound,
    kappa_block,
    kappa_block_cert,
    kappa_coord,
    kappa_coord_cert,
    sensitivity_set,
)
from .sim import PRESETS, preset_study

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_SOLVER = 4
EXIT_NUMERICAL = 5
EXIT_PARSE = 6

SCHEMA_VERSION = 1


def _sanitize(obj):
    """JSON-friendly structures; +-inf and nan become strings."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [_sanitize(v) for v in sorted(obj)] if isinstance(obj, (set, frozenset)) \
            else [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    return obj


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _emit(payload: dict, args, started: float):
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "argv": sys.argv[1:],
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "inputs": {args.data: _digest(args.data)} if getattr(args, "data", None) else {},
        "wall_seconds": round(time.time() - started, 6),
    }
    doc = {"result": _sanitize(payload), "manifest": _sanitize(manifest)}
    text = json.dumps(doc, indent=2)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _indices(spec: str) -> list[int]:
    return [int(tok) for tok in spec.split(",") if tok.strip()]


def _load(args) -> Dataset:
    return load_dataset(args.data, endo=_indices(args.endo))


def _rate_config(args) -> RateConfig:
    if getattr(args, "r_mode", "practical") == "full":
        return RateConfig(alpha=args.alpha, mode="full", a=args.a,
                          delta=args.delta, d_n_delta=args.d_n_delta)
    return RateConfig(alpha=args.alpha)


def _original_order(d: Dataset, values: np.ndarray) -> list[dict]:
    """Report per-coordinate values in the caller's file column order."""
    order = d.x_order or tuple(range(d.n_regressors))
    names = d.x_names or tuple(f"x{i + 1}" for i in order)
    rows = []
    for internal, (orig, name) in enumerate(zip(order, names)):
        rows.append({"column": name, "value": values[internal], "position": orig + 1})
    return sorted(rows, key=lambda row: row["position"])


# ---------------------------------------------------------------------------
# Subcommand handlers.
# ---------------------------------------------------------------------------


def _cmd_inspect(args):
    d = _load(args)
    sd = scale_design(d, scaling=args.scaling)
    return {
        "n": d.n, "K": d.n_regressors, "L": d.n_instruments,
        "k_end": d.k_end,
        "L1": 0 if d.zbar is None else d.zbar.shape[1],
        "x_scales": sd.x_star, "z_scales": sd.z_star,
        "zbar_star": sd.zbar_star,
        "psi_max_abs": float(np.abs(sd.psi).max()),
        "x_names": list(d.x_names),
    }


def _fit_for(args, d: Dataset):
    sd = scale_design(d, scaling=args.scaling)
    rate = rate_r(d.n, d.n_instruments, _rate_config(args))
    r = args.r if args.r is not None else rate.r
    if args.variant == "two-stage":
        ts = stiv_two_stage(d, TwoStageConfig(
            c=args.c, rate=_rate_config(args), c_sql=args.c_sql,
            sigma_weight=args.sigma_weight, scaling=args.scaling,
        ))
        return ts.fit, scale_design(ts.projected, scaling=args.scaling), ts.rate.r, rate.alpha
    if args.variant == "nonpivotal":
        if args.sigma_star is None:
            raise ValidationError("--sigma-star is required for the nonpivotal variant")
        fit = stiv_nonpivotal(sd, args.sigma_star, r)
        return fit, sd, r, rate.alpha
    fit = stiv_fit(sd, StivConfig(r=r, c=args.c, sigma_weight=args.sigma_weight))
    return fit, sd, r, rate.alpha


def _cmd_estimate(args):
    d = _load(args)
    fit, sd, r, alpha = _fit_for(args, d)
    return {
        "beta": _original_order(d, fit.beta_hat),
        "sigma": fit.sigma_hat,
        "q_hat": fit.q_hat,
        "objective": fit.objective,
        "residuals": fit.constraint_residuals,
        "r": r,
        "alpha": alpha,
        "solver": {"status": fit.solve.status, "iterations": fit.solve.iterations,
                   "residual": fit.solve.residual},
    }


def _cmd_sensitivity(args):
    d = _load(args)
    sd = scale_design(d, scaling=args.scaling)
    cone = ConeSpec(c=args.c, enlarged=args.enlarged)
    J = set(i - 1 for i in _indices(args.J)) if args.J else set()
    J0 = set(i - 1 for i in _indices(args.J0)) if args.J0 else None
    p = math.inf if args.p in ("inf", "Inf") else float(args.p)
    if args.method == "coherence":
        rep = coherence_bound(sd.psi, J, p, cone)
    elif args.method == "certificate":
        if args.s is None:
            raise ValidationError("--s is required for the certificate method")
        if J0 is not None:
            rep = kappa_block_cert(sd.psi, J0, args.s, cone, threads=args.threads)
        else:
            rep = kappa_coord_cert(sd.psi, args.k - 1, args.s, cone, threads=args.threads)
    else:
        if J0 is not None:
            rep = kappa_block(sd.psi, J0, J, cone, threads=args.threads)
        else:
            rep = kappa_coord(sd.psi, args.k - 1, J, cone, threads=args.threads)
    return {
        "value": rep.value, "kind": rep.kind, "method": args.method,
        "provenance": rep.provenance, "lp_count": rep.lp_count,
        "witnesses": rep.witnesses,
    }


def _sens_for_inference(args, d, sd):
    source: tuple[str, object]
    if args.s is not None:
        source = ("certificate", args.s)
    else:
        if args.jhat == "auto":
            raise ValidationError("need --s or an explicit --jhat for direct sensitivities")
        source = ("direct", set(i - 1 for i in _indices(args.jhat)))
    variant = SINGLE_ENDO_REMARK if args.ci_variant == "single-endo-remark" else STANDARD
    return sensitivity_set(sd.psi, set(range(d.k_end)), source,
                           ConeSpec(c=args.c), variant=variant, threads=args.threads)


def _cmd_ci(args):
    d = _load(args)
    fit, sd, r, alpha = _fit_for(args, d)
    if args.jhat == "auto" and args.s is None:
        args.jhat = ",".join(str(i + 1) for i in sorted(support_estimate(fit.beta_hat, args.support_floor)))
    sens = _sens_for_inference(args, d, sd)
    report = confidence_intervals(fit, sd, sens, CiSpec(r=r, j_end=frozenset(range(d.k_end))))
    rows = []
    for row_b, row_h, row_lo, row_hi in zip(
        _original_order(d, fit.beta_hat), _original_order(d, report.half_widths),
        _original_order(d, report.lower), _original_order(d, report.upper),
    ):
        rows.append({
            "column": row_b["column"], "beta": row_b["value"],
            "half_width": row_h["value"], "lower": row_lo["value"],
            "upper": row_hi["value"],
        })
    return {"intervals": rows, "slack": report.slack, "r": r, "alpha": alpha,
            "all_finite": report.all_finite}


def _cmd_select(args):
    d = _load(args)
    fit, sd, r, alpha = _fit_for(args, d)
    if args.jhat == "auto" and args.s is None:
        args.jhat = ",".join(str(i + 1) for i in sorted(support_estimate(fit.beta_hat, args.support_floor)))
    sens = _sens_for_inference(args, d, sd)
    omega = thresholds(fit, sd, sens, r)
    selected, signs = threshold_select(fit.beta_hat, omega)
    rows = []
    for rb, ro, rs in zip(_original_order(d, fit.beta_hat),
                          _original_order(d, omega),
                          _original_order(d, signs.astype(float))):
        rows.append({
            "column": rb["column"], "beta": rb["value"], "omega": ro["value"],
            "selected": isinstance(ro["value"], float) and abs(rb["value"]) > ro["value"],
            "sign": int(rs["value"]),
        })
    return {"selection": rows, "support_size": int(len(selected)), "r": r}


def _cmd_nv(args):
    d = _load(args)
    if d.zbar is None:
        raise ValidationError("nv requires zbar columns in the input")
    sd = scale_design(d, scaling=args.scaling)
    rate = rate_r(d.n, d.n_instruments, RateConfig(alpha=args.alpha))
    r1 = rate_r(d.n, d.zbar.shape[1], RateConfig(alpha=args.alpha1)).r
    if args.pilot == "stiv":
        pilot = stiv_fit(sd, StivConfig(r=rate.r, c=args.c,
                                        sigma_weight=args.sigma_weight))
        beta_pilot = pilot.beta_hat
    else:
        with open(args.pilot) as fh:
            beta_pilot = np.asarray(json.load(fh), dtype=float)
    b_hat = args.b_hat
    if b_hat is None:
        if args.s is None:
            raise ValidationError("nv needs --b-hat or --s to budget the pilot error")
        sens = sensitivity_set(sd.psi, set(range(d.k_end)), ("certificate", args.s),
                               ConeSpec(c=args.c), threads=args.threads)
        from .nonvalid import nv_bhat_from_stiv
        b_hat = nv_bhat_from_stiv(pilot, sens, args.s, rate.r)
    if not math.isfinite(b_hat):
        raise NumericalError(
            "pilot error budget is infinite at this sample size; "
            "supply --b-hat explicitly"
        )
    fit = nv_fit(d, beta_pilot, NvConfig(r1=r1, c=args.c, b_hat=b_hat))
    s1 = None if args.s1 == "auto" else int(args.s1)
    flagged, signs, omega, s1_used = nv_select_auto(fit, b_hat, r1, args.c, s1=s1)
    return {
        "theta": fit.theta_hat, "sigma1": fit.sigma1_hat, "b_hat": b_hat,
        "omega": omega, "s1": s1_used,
        "flagged_instruments": [int(i) + 1 for i in flagged],
        "signs": signs, "r1": r1,
    }


def _cmd_simulate(args):
    return preset_study(args.preset, reps=args.reps, base_seed=args.seed,
                        processes=args.threads)


# ---------------------------------------------------------------------------
# Parser.
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="stiv", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def add_common(p, data=True):
        if data:
            p.add_argument("data", help="CSV with columns y, x1.., z1.. [, zbar1..]")
            p.add_argument("--endo", default="", help="comma list of endogenous x indices (1-based)")
        p.add_argument("--out", help="write JSON here instead of stdout")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--scaling", choices=[MAXABS, RMS], default=MAXABS)
        p.add_argument("--c", type=float, default=0.1)

    def add_rate(p):
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--r-mode", choices=["practical", "full"], default="practical")
        p.add_argument("--a", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--d-n-delta", type=float)
        p.add_argument("--r", type=float, help="override the computed rate")

    def add_fit(p):
        p.add_argument("--variant", choices=["stiv", "nonpivotal", "two-stage"], default="stiv")
        p.add_argument("--sigma-star", type=float)
        p.add_argument("--sigma-weight", type=float)
        p.add_argument("--c-sql", type=float, default=1.1)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("inspect", help="echo parsed dimensions and scalings")
    add_common(p)
    p.set_defaults(handler=_cmd_inspect)

    p = sub.add_parser("estimate", help="fit one of the estimator variants")
    add_common(p)
    add_rate(p)
    add_fit(p)
    p.set_defaults(handler=_cmd_estimate)

    p = sub.add_parser("sensitivity", help="sensitivity bounds for the scaled design")
    add_common(p)
    p.add_argument("--k", type=int, help="coordinate (1-based)")
    p.add_argument("--J", help="comma list for the dominant set (1-based)")
    p.add_argument("--J0", help="comma list for a block (1-based)")
    p.add_argument("--s", type=int)
    p.add_argument("--p", default="inf")
    p.add_argument("--enlarged", action="store_true")
    p.add_argument("--method", choices=["direct", "certificate", "coherence"], default="direct")
    p.set_defaults(handler=_cmd_sensitivity)

    for name, handler in (("ci", _cmd_ci), ("select", _cmd_select)):
        p = sub.add_parser(name)
        add_common(p)
        add_rate(p)
        add_fit(p)
        p.add_argument("--s", type=int, help="sparsity certificate")
        p.add_argument("--jhat", default="auto", help="'auto' or comma list (1-based)")
        p.add_argument("--support-floor", type=float, default=1e-8)
        p.add_argument("--ci-variant", dest="ci_variant",
                       choices=[STANDARD, SINGLE_ENDO_REMARK],
                       default=SINGLE_ENDO_REMARK)
        p.set_defaults(handler=handler)

    p = sub.add_parser("nv", help="non-validity indicators for suspect instruments")
    add_common(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--alpha1", type=float, default=0.05)
    p.add_argument("--s1", default="auto")
    p.add_argument("--s", type=int, help="certificate for the pilot budget")
    p.add_argument("--b-hat", type=float, help="explicit pilot l1 error budget")
    p.add_argument("--pilot", default="stiv", help="'stiv' or path to a JSON coefficient vector")
    p.add_argument("--sigma-weight", type=float)
    p.set_defaults(handler=_cmd_nv)

    p = sub.add_parser("simulate", help="run a named simulation study")
    p.add_argument("--preset", choices=list(PRESETS), required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_simulate)
    return top


def main(argv: list[str] | None = None) -> int:
    started = time.time()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        payload = args.handler(args)
    except OSError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except StivError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    _emit(payload, args, started)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
