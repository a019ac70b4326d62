"""Seeded data generation and Monte Carlo orchestration.

The reference design: z_i is an i.i.d. standard normal instrument vector;
(u_i, v_i) is bivariate normal with correlation rho and scales
(sigma_struct, sigma_end), independent of z_i; the single endogenous
regressor is x_1 = sum_l zeta_l z_l + v, the remaining regressors are the
trailing instruments themselves, and y = x' beta_star + u.

Reproducibility: every random quantity is drawn from numpy's PCG64
``default_rng`` seeded per replication (seed = base_seed + replication
index); normal variates use Generator.standard_normal, the error pair is
mixed by an explicit 2x2 Cholesky-style transform, and draws happen in a
fixed documented order (z, then the error pair, then suspect-instrument
noise).  Results are therefore deterministic end-to-end and independent of
scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SolverFailureError, ValidationError
from .estimators import (
    StivConfig,
    StivFit,
    TwoStageConfig,
    stiv_fit,
    stiv_nonpivotal,
    stiv_two_stage,
)
from .inference import confidence_intervals, thresholds, threshold_select, CiSpec
from .model import MAXABS, RMS, Dataset, RateConfig, rate_r, scale_design
from .nonvalid import NvConfig, nv_fit, nv_select_auto
from .sensitivity import SINGLE_ENDO_REMARK, ConeSpec, sensitivity_set


@dataclass(frozen=True)
class DgpParams:
    n: int = 49
    n_regressors: int = 25
    n_instruments: int = 50
    sigma_struct: float = 0.3
    sigma_end: float = 0.3
    rho: float = 0.3
    beta_star: np.ndarray | None = None  # default: five ones then zeros
    zeta: np.ndarray | None = None  # default: 0.15 on all L-K+1 first-stage slots
    theta_star: np.ndarray | None = None  # suspect-instrument indicators
    seed: int = 0

    def resolved_beta(self) -> np.ndarray:
        if self.beta_star is not None:
            return np.asarray(self.beta_star, dtype=float)
        beta = np.zeros(self.n_regressors)
        beta[: min(5, self.n_regressors)] = 1.0
        return beta

    def resolved_zeta(self) -> np.ndarray:
        width = self.n_instruments - self.n_regressors + 1
        if self.zeta is not None:
            zeta = np.asarray(self.zeta, dtype=float)
            if len(zeta) != width:
                raise ValidationError(f"zeta must have length {width}")
            return zeta
        return np.full(width, 0.15)

    def __post_init__(self):
        if not abs(self.rho) < 1.0:
            raise ValidationError("need |rho| < 1")
        if self.sigma_struct < 0 or self.sigma_end < 0:
            raise ValidationError("error scales must be nonnegative")
        if self.n_instruments < self.n_regressors:
            raise ValidationError("need at least as many instruments as regressors")
        if self.theta_star is not None and self.sigma_struct == 0.0:
            raise ValidationError("suspect instruments require sigma_struct > 0")


def generate_dgp(p: DgpParams) -> Dataset:
    """Draw one dataset; fully determined by p.seed."""
    rng = np.random.default_rng(p.seed)
    n, K, L = p.n, p.n_regressors, p.n_instruments
    beta = p.resolved_beta()
    zeta = p.resolved_zeta()

    z = rng.standard_normal((n, L))
    g1 = rng.standard_normal(n)
    g2 = rng.standard_normal(n)
    u = p.sigma_struct * g1
    v = p.sigma_end * (p.rho * g1 + math.sqrt(1.0 - p.rho**2) * g2)

    x = np.empty((n, K))
    x[:, 0] = z[:, : L - K + 1] @ zeta + v
    if K > 1:
        x[:, 1:] = z[:, L - K + 1 :]
    y = x @ beta + u

    zbar = None
    if p.theta_star is not None:
        theta = np.asarray(p.theta_star, dtype=float)
        noise = rng.standard_normal((n, len(theta)))
        # E[zbar_l u] = theta_l by construction: loading theta_l / Var(u)
        zbar = noise + np.outer(u, theta / p.sigma_struct**2)
    return Dataset(y=y, x=x, z=z, k_end=1, zbar=zbar)


# ---------------------------------------------------------------------------
# Per-replication pipelines.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McConfig:
    estimator: str = "pivotal"  # pivotal | nonpivotal | two-stage
    c: float = 0.1
    alpha: float = 0.05
    sigma_star: float | None = None
    sigma_weight: float | None = None
    r_override: float | None = None
    scaling: str = MAXABS
    inference_s: int | None = None  # compute thresholds/CIs at this certificate
    c_sql: float = 1.1
    threads: int = 1
    # selection ignores coordinates at solver precision even when the
    # thresholds degenerate to zero (noise-free designs)
    support_floor: float = 1e-8


def _rate_for(d: Dataset, cfg: McConfig) -> float:
    if cfg.r_override is not None:
        return cfg.r_override
    return rate_r(d.n, d.n_instruments, RateConfig(alpha=cfg.alpha)).r


def run_replication(params: DgpParams, cfg: McConfig, seed: int) -> dict:
    """One seeded replication; returns estimates and optional inference output."""
    d = generate_dgp(replace(params, seed=seed))
    beta_star = params.resolved_beta()
    true_support = set(np.where(beta_star != 0.0)[0])

    if cfg.estimator == "two-stage":
        ts = stiv_two_stage(
            d,
            TwoStageConfig(
                c=cfg.c, rate=RateConfig(alpha=cfg.alpha), c_sql=cfg.c_sql,
                sigma_weight=cfg.sigma_weight, scaling=cfg.scaling,
            ),
        )
        fit = ts.fit
        sd = scale_design(ts.projected, scaling=cfg.scaling)
        r = ts.rate.r
    else:
        sd = scale_design(d, scaling=cfg.scaling)
        r = _rate_for(d, cfg)
        if cfg.estimator == "pivotal":
            fit = stiv_fit(sd, StivConfig(r=r, c=cfg.c, sigma_weight=cfg.sigma_weight))
        elif cfg.estimator == "nonpivotal":
            if cfg.sigma_star is None:
                raise ValidationError("nonpivotal estimator needs sigma_star")
            fit = stiv_nonpivotal(sd, cfg.sigma_star, r)
        else:
            raise ValidationError(f"unknown estimator {cfg.estimator!r}")

    out = {
        "seed": seed,
        "beta": fit.beta_hat,
        "sigma": fit.sigma_hat,
        "q_hat": fit.q_hat,
    }
    if cfg.inference_s is not None:
        sens = sensitivity_set(
            sd.psi, set(range(d.k_end)), ("certificate", cfg.inference_s),
            ConeSpec(c=cfg.c), variant=SINGLE_ENDO_REMARK, threads=cfg.threads,
        )
        omega = thresholds(fit, sd, sens, r)
        selected, signs = threshold_select(
            fit.beta_hat, np.maximum(omega, cfg.support_floor))
        ci = confidence_intervals(
            fit, sd, sens, CiSpec(r=r, j_end=frozenset(range(d.k_end)))
        )
        covered = bool(
            np.all((ci.lower <= beta_star) & (beta_star <= ci.upper))
        )
        out.update(
            omega=omega,
            selected=set(int(i) for i in selected),
            signs=signs,
            exact_recovery=set(int(i) for i in selected) == true_support,
            ci_lower=ci.lower,
            ci_upper=ci.upper,
            covered=covered,
            ci_finite=bool(ci.all_finite),
            slack=ci.slack,
        )
    return out


@dataclass
class McSummary:
    reps: int
    failures: int
    beta_percentiles: np.ndarray  # (3, K): 5th / 50th / 95th
    sigma_percentiles: np.ndarray | None
    support_recovery_freq: float | None = None
    ci_coverage_freq: float | None = None
    omega_median: np.ndarray | None = None
    replication_results: list = field(default_factory=list, repr=False)


def _one_rep(args):
    params, cfg, seed = args
    try:
        return run_replication(params, cfg, seed)
    except SolverFailureError as exc:
        return {"seed": seed, "error": str(exc)}


def monte_carlo(
    params: DgpParams,
    cfg: McConfig,
    reps: int,
    base_seed: int = 0,
    processes: int = 1,
    keep_replications: bool = False,
) -> McSummary:
    """Run seeded replications and aggregate percentiles and frequencies.

    Failed replications are recorded and excluded; more than 1% failures
    aborts the study.  Percentiles use numpy's default linear interpolation.
    Aggregation is order-invariant, so parallel execution is deterministic.
    """
    if reps < 1:
        raise ValidationError("need reps >= 1")
    jobs = [(params, cfg, base_seed + i) for i in range(reps)]
    if processes > 1:
        with ProcessPoolExecutor(max_workers=processes) as ex:
            results = list(ex.map(_one_rep, jobs, chunksize=8))
    else:
        results = [_one_rep(j) for j in jobs]

    good = [r for r in results if "error" not in r]
    failures = reps - len(good)
    if failures > max(0.01 * reps, 0):
        raise SolverFailureError(
            f"{failures}/{reps} replications failed: "
            + "; ".join(r["error"] for r in results if "error" in r)[:500]
        )
    betas = np.array([r["beta"] for r in good])
    beta_pct = np.percentile(betas, [5, 50, 95], axis=0)
    sigmas = [r["sigma"] for r in good if r["sigma"] is not None]
    sigma_pct = np.percentile(sigmas, [5, 50, 95]) if sigmas else None

    recovery = coverage = omega_med = None
    if good and "selected" in good[0]:
        recovery = float(np.mean([r["exact_recovery"] for r in good]))
        coverage = float(np.mean([r["covered"] for r in good]))
        omega_med = np.median([r["omega"] for r in good], axis=0)
    return McSummary(
        reps=reps, failures=failures,
        beta_percentiles=beta_pct, sigma_percentiles=sigma_pct,
        support_recovery_freq=recovery, ci_coverage_freq=coverage,
        omega_median=omega_med,
        replication_results=results if keep_replications else [],
    )


# ---------------------------------------------------------------------------
# Non-valid-instrument detection pipeline.
# ---------------------------------------------------------------------------


def nv_planted_params(seed: int = 0) -> DgpParams:
    """Planted design for indicator detection: two non-valid suspects of
    magnitude 0.5 (opposite signs) among six, small structural model.

    The structural model is small and strongly instrumented (first-stage
    coefficients 0.5) so the pilot's l1 error budget, which enters the
    detection threshold with a factor of roughly five, stays far below the
    planted indicator magnitude.
    """
    return DgpParams(
        n=2000, n_regressors=3, n_instruments=10,
        beta_star=np.ones(3),
        zeta=np.full(8, 0.5),
        theta_star=np.array([0.5, -0.5, 0.0, 0.0, 0.0, 0.0]),
        seed=seed,
    )


def run_nv_replication(
    params: DgpParams,
    seed: int,
    c: float = 0.1,
    alpha: float = 0.05,
    s1: int | None = None,
    scaling: str = RMS,
) -> dict:
    """Pilot STIV on the valid instruments, then indicator estimation,
    thresholding with the oracle pilot budget |D_X^-1 (beta_hat - beta*)|_1.

    The certificate-based budget is available through nv_bhat_from_stiv but
    is far too conservative at this sample size to detect anything; the
    oracle budget isolates the detection machinery and is only computable in
    simulation, where beta_star is known.
    """
    d = generate_dgp(replace(params, seed=seed))
    beta_star = params.resolved_beta()
    theta_star = np.asarray(params.theta_star, dtype=float)
    sd = scale_design(d, scaling=scaling)
    r = rate_r(d.n, d.n_instruments, RateConfig(alpha=alpha)).r
    pilot = stiv_fit(sd, StivConfig(r=r, c=c))
    b_hat = float(np.abs(sd.x_star * (pilot.beta_hat - beta_star)).sum())
    r1 = rate_r(d.n, d.zbar.shape[1], RateConfig(alpha=alpha)).r
    fit = nv_fit(d, pilot.beta_hat, NvConfig(r1=r1, c=c, b_hat=b_hat))
    flagged, signs, omega, s1_used = nv_select_auto(fit, b_hat, r1, c, s1=s1)
    true_flagged = set(np.where(theta_star != 0.0)[0])
    true_signs = np.sign(theta_star).astype(int)
    return {
        "seed": seed,
        "theta": fit.theta_hat,
        "sigma1": fit.sigma1_hat,
        "b_hat": b_hat,
        "omega": omega,
        "flagged": set(int(i) for i in flagged),
        "signs": signs,
        "exact": set(int(i) for i in flagged) == true_flagged
        and bool(np.all(signs == true_signs)),
        "s1": s1_used,
    }


# ---------------------------------------------------------------------------
# Named presets mirroring the reference experiments.
# ---------------------------------------------------------------------------

PRESETS = ("table3", "table4", "table5", "table7", "nv-planted")


def preset_study(name: str, reps: int | None = None, base_seed: int = 0,
                 processes: int = 1) -> dict:
    """Run a named study and return a JSON-friendly summary."""
    if name == "table3":
        reps = 1000 if reps is None else reps
        summary = monte_carlo(DgpParams(), McConfig(estimator="pivotal"),
                              reps, base_seed, processes)
        return _mc_json(summary)
    if name == "table4":
        reps = 1000 if reps is None else reps
        params = DgpParams()
        r_np = rate_r(params.n, params.n_instruments, RateConfig()).r / math.sqrt(params.n)
        summary = monte_carlo(
            params,
            McConfig(estimator="nonpivotal", sigma_star=0.466, r_override=r_np),
            reps, base_seed, processes,
        )
        return _mc_json(summary)
    if name in ("table5", "table7"):
        reps = 20 if reps is None else reps
        params = DgpParams(n=8000)
        cfg = McConfig(
            estimator="two-stage" if name == "table7" else "pivotal",
            scaling=RMS, inference_s=5,
        )
        summary = monte_carlo(params, cfg, reps, base_seed, processes,
                              keep_replications=True)
        out = _mc_json(summary)
        out["omega_median"] = _jsonable(summary.omega_median)
        return out
    if name == "nv-planted":
        reps = 100 if reps is None else reps
        results = [run_nv_replication(nv_planted_params(), base_seed + i)
                   for i in range(reps)]
        return {
            "preset": "nv-planted",
            "reps": reps,
            "exact_recovery_freq": float(np.mean([r["exact"] for r in results])),
            "median_omega": float(np.median([r["omega"] for r in results])),
            "median_b_hat": float(np.median([r["b_hat"] for r in results])),
        }
    raise ValidationError(f"unknown preset {name!r}; choose from {PRESETS}")


def _jsonable(arr):
    if arr is None:
        return None
    return np.asarray(arr).tolist()


def _mc_json(summary: McSummary) -> dict:
    return {
        "reps": summary.reps,
        "failures": summary.failures,
        "beta_percentiles_5_50_95": _jsonable(summary.beta_percentiles),
        "sigma_percentiles_5_50_95": _jsonable(summary.sigma_percentiles),
        "support_recovery_freq": summary.support_recovery_freq,
        "ci_coverage_freq": summary.ci_coverage_freq,
    }
