"""STIV estimators: pivotal conic program, non-pivotal LP, and the two-stage variant.

The pivotal program jointly picks coefficients and a noise bound sigma:

    min  |D_X^-1 beta|_1 + w_sigma * sigma
    s.t. |(1/n) D_Z Z'(y - X beta)|_inf <= sigma * r,
         (1/n) |y - X beta|_2^2 <= sigma^2.

``w_sigma`` defaults to 3.5*sqrt(n).  A weight of this magnitude makes the
sigma term act as a self-tuned residual bound; tiny weights (such as the
tuning constant c itself) make the l1 term dominate and collapse the fit to
zero on weakly identified designs, so c enters the cone geometry and the
inference formulas but not the default objective.  The weight is exposed for
callers who want a different trade-off (see README, calibration notes).

The residual cone ``sigma >= sqrt(mean residual^2)`` is posed on an
SVD-reduced residual: with X = U S V' (economy), |y - X beta|^2 =
|S V' beta - U'y|^2 + rho0^2 identically, so the cone dimension is
min(n, K) + 2 regardless of n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .conic import (
    ConicProgram,
    LinearProgram,
    SecondOrderCone,
    SolveResult,
    Tolerances,
    solve_lp,
    solve_socp,
)
from .errors import DegenerateInstrumentError, SolverFailureError, ValidationError
from .model import (
    MAXABS,
    Dataset,
    RateConfig,
    RateResult,
    ScaledDesign,
    rate_r,
    scale_design,
)


def default_sigma_weight(n: int) -> float:
    """Calibrated default weight on sigma in the pivotal objective."""
    return 3.5 * math.sqrt(n)


@dataclass(frozen=True)
class StivConfig:
    r: float
    c: float = 0.1
    sigma_weight: float | None = None

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ValidationError("c must lie in (0, 1)")
        if self.r <= 0.0:
            raise ValidationError("r must be positive")
        if self.sigma_weight is not None and self.sigma_weight <= 0.0:
            raise ValidationError("sigma_weight must be positive")


@dataclass
class StivFit:
    beta_hat: np.ndarray
    sigma_hat: float | None  # None for the non-pivotal variant
    q_hat: float  # sqrt of mean squared residual at beta_hat
    objective: float
    scaled_l1: float  # |D_X^-1 beta_hat|_1
    r: float
    c: float
    solve: SolveResult
    constraint_residuals: dict = field(default_factory=dict)

    @property
    def support(self) -> np.ndarray:
        return np.where(self.beta_hat != 0.0)[0]


def _svd_residual_reduction(design: np.ndarray, target: np.ndarray):
    """Return (R, q, rho0) with |target - design b|^2 = |R b - q|^2 + rho0^2."""
    u, sing, vt = np.linalg.svd(design, full_matrices=False)
    R = sing[:, None] * vt
    q = u.T @ target
    rho0_sq = float(target @ target - q @ q)
    rho0 = math.sqrt(max(rho0_sq, 0.0))
    return R, q, rho0


def _check_optimal(result: SolveResult, what: str) -> SolveResult:
    if result.status == "infeasible":
        # the feasible set always contains (beta, sigma) with sigma large
        raise SolverFailureError(
            f"{what}: solver reported infeasible, which is impossible by "
            f"construction; this indicates a solver bug", result,
        )
    if not result.optimal:
        raise SolverFailureError(f"{what}: solver status {result.status}", result)
    return result


def stiv_fit(
    sd: ScaledDesign,
    cfg: StivConfig,
    y: np.ndarray | None = None,
    tol: Tolerances | None = None,
) -> StivFit:
    """Pivotal STIV fit on a scaled design."""
    d = sd.dataset
    y = d.y if y is None else np.asarray(y, dtype=float)
    n, K = d.x.shape
    L = d.z.shape[1]
    w_sigma = cfg.sigma_weight if cfg.sigma_weight is not None else default_sigma_weight(n)
    sqrt_n = math.sqrt(n)

    # variables: [beta (K), sigma (1), w (K), v (rk+1)]; cone sigma >= |v|_2
    # with v = (R beta - q, rho0)/sqrt(n), so |v|_2 = sqrt(mean residual^2).
    # All program data stay O(1) in n, which keeps the solve well scaled.
    zs = d.z / sd.z_star
    mom_mat = zs.T @ d.x / n  # (1/n) D_Z Z' X
    mom_y = zs.T @ y / n
    R, q, rho0 = _svd_residual_reduction(d.x, y)
    rk = R.shape[0]
    nv = K + 1 + K + rk + 1
    i_t = K
    i_w = K + 1
    i_v = i_w + K

    c_obj = np.zeros(nv)
    c_obj[i_w : i_w + K] = 1.0
    c_obj[i_t] = w_sigma

    a_eq = np.zeros((rk + 1, nv))
    b_eq = np.zeros(rk + 1)
    a_eq[:rk, :K] = R / sqrt_n
    a_eq[:rk, i_v : i_v + rk] = -np.eye(rk)
    b_eq[:rk] = q / sqrt_n
    a_eq[rk, i_v + rk] = 1.0
    b_eq[rk] = rho0 / sqrt_n

    rows = []
    rhs = []
    # +- moment rows: |mom_y - mom_mat beta|_inf <= r t
    blk = np.zeros((L, nv))
    blk[:, :K] = -mom_mat
    blk[:, i_t] = -cfg.r
    rows.append(blk)
    rhs.append(-mom_y)
    blk = np.zeros((L, nv))
    blk[:, :K] = mom_mat
    blk[:, i_t] = -cfg.r
    rows.append(blk)
    rhs.append(mom_y)
    # l1 split: |x_star_k beta_k| <= w_k
    blk = np.zeros((K, nv))
    blk[:, :K] = np.diag(sd.x_star)
    blk[:, i_w : i_w + K] = -np.eye(K)
    rows.append(blk)
    rhs.append(np.zeros(K))
    blk = np.zeros((K, nv))
    blk[:, :K] = -np.diag(sd.x_star)
    blk[:, i_w : i_w + K] = -np.eye(K)
    rows.append(blk)
    rhs.append(np.zeros(K))

    lb = np.full(nv, -np.inf)
    lb[i_t] = 0.0
    lb[i_w : i_w + K] = 0.0

    prog = ConicProgram(
        lp=LinearProgram(
            c=c_obj, a_eq=a_eq, b_eq=b_eq,
            a_ub=np.vstack(rows), b_ub=np.concatenate(rhs), lb=lb,
        ),
        cones=(SecondOrderCone(t=i_t, v=tuple(range(i_v, i_v + rk + 1))),),
    )
    result = _check_optimal(solve_socp(prog, tol), "stiv_fit")

    beta = result.x[:K]
    sigma = float(result.x[i_t])
    resid = y - d.x @ beta
    q_hat = float(np.sqrt(resid @ resid / n))
    iv_gap = float(np.max(np.abs(zs.T @ resid / n)) - sigma * cfg.r)
    scaled_l1 = float(np.abs(sd.x_star * beta).sum())
    return StivFit(
        beta_hat=beta, sigma_hat=sigma, q_hat=q_hat,
        objective=scaled_l1 + w_sigma * sigma, scaled_l1=scaled_l1,
        r=cfg.r, c=cfg.c, solve=result,
        constraint_residuals={"iv": iv_gap, "quadratic": q_hat - sigma},
    )


def stiv_nonpivotal(
    sd: ScaledDesign,
    sigma_star: float,
    r: float,
    y: np.ndarray | None = None,
    tol: Tolerances | None = None,
) -> StivFit:
    """Non-pivotal variant: min |D_X^-1 beta|_1 with the moment bound sigma_star * r."""
    if sigma_star <= 0.0:
        raise ValidationError("sigma_star must be positive")
    d = sd.dataset
    y = d.y if y is None else np.asarray(y, dtype=float)
    n, K = d.x.shape
    L = d.z.shape[1]
    zs = d.z / sd.z_star
    mom_mat = zs.T @ d.x / n
    mom_y = zs.T @ y / n
    bound = sigma_star * r

    nv = 2 * K
    c_obj = np.concatenate([np.zeros(K), np.ones(K)])
    rows = np.zeros((2 * L + 2 * K, nv))
    rhs = np.zeros(2 * L + 2 * K)
    rows[:L, :K] = -mom_mat
    rhs[:L] = bound - mom_y
    rows[L : 2 * L, :K] = mom_mat
    rhs[L : 2 * L] = bound + mom_y
    rows[2 * L : 2 * L + K, :K] = np.diag(sd.x_star)
    rows[2 * L : 2 * L + K, K:] = -np.eye(K)
    rows[2 * L + K :, :K] = -np.diag(sd.x_star)
    rows[2 * L + K :, K:] = -np.eye(K)
    lb = np.concatenate([np.full(K, -np.inf), np.zeros(K)])

    result = solve_lp(LinearProgram(c=c_obj, a_ub=rows, b_ub=rhs, lb=lb), tol)
    if result.status == "infeasible":
        raise SolverFailureError(
            "stiv_nonpivotal: moment constraint infeasible; increase sigma_star or r",
            result,
        )
    if not result.optimal:
        raise SolverFailureError(f"stiv_nonpivotal: solver status {result.status}", result)
    beta = result.x[:K]
    resid = y - d.x @ beta
    q_hat = float(np.sqrt(resid @ resid / n))
    scaled_l1 = float(np.abs(sd.x_star * beta).sum())
    iv_gap = float(np.max(np.abs(zs.T @ resid / n)) - bound)
    return StivFit(
        beta_hat=beta, sigma_hat=None, q_hat=q_hat,
        objective=scaled_l1, scaled_l1=scaled_l1, r=r, c=0.0, solve=result,
        constraint_residuals={"iv": iv_gap},
    )


# ---------------------------------------------------------------------------
# Square-root Lasso first stage and projection instruments.
# ---------------------------------------------------------------------------


@dataclass
class SqrtLassoFit:
    zeta: np.ndarray
    q_hat: float
    lam: float
    solve: SolveResult


def sqrt_lasso(
    target: np.ndarray,
    design: np.ndarray,
    level: float = 0.05,
    c_sql: float = 1.1,
    tol: Tolerances | None = None,
) -> SqrtLassoFit:
    """Square-root Lasso: min sqrt(mean residual^2) + (lam/n) sum_l s_l |zeta_l|.

    Column scales s_l are root-mean-square; lam = c_sql sqrt(n) ndtri(1 - level/(2L)).
    """
    target = np.asarray(target, dtype=float)
    design = np.asarray(design, dtype=float)
    n, L = design.shape
    if not 0.0 < level < 1.0:
        raise ValidationError("level must lie in (0, 1)")
    scales = np.sqrt((design**2).mean(axis=0))
    if np.any(scales == 0.0):
        raise ValidationError("design has a zero column")
    lam = c_sql * math.sqrt(n) * float(ndtri(1.0 - level / (2.0 * L)))
    sqrt_n = math.sqrt(n)

    R, q, rho0 = _svd_residual_reduction(design, target)
    rk = R.shape[0]
    # variables: [zeta (L), t (1), w (L), v (rk+1)], t >= sqrt(mean resid^2)
    nv = L + 1 + L + rk + 1
    i_t = L
    i_w = L + 1
    i_v = i_w + L
    c_obj = np.zeros(nv)
    c_obj[i_t] = 1.0
    c_obj[i_w : i_w + L] = lam / n * scales

    a_eq = np.zeros((rk + 1, nv))
    b_eq = np.zeros(rk + 1)
    a_eq[:rk, :L] = R / sqrt_n
    a_eq[:rk, i_v : i_v + rk] = -np.eye(rk)
    b_eq[:rk] = q / sqrt_n
    a_eq[rk, i_v + rk] = 1.0
    b_eq[rk] = rho0 / sqrt_n

    rows = np.zeros((2 * L, nv))
    rows[:L, :L] = np.eye(L)
    rows[:L, i_w : i_w + L] = -np.eye(L)
    rows[L:, :L] = -np.eye(L)
    rows[L:, i_w : i_w + L] = -np.eye(L)
    lb = np.full(nv, -np.inf)
    lb[i_t] = 0.0
    lb[i_w : i_w + L] = 0.0

    prog = ConicProgram(
        lp=LinearProgram(c=c_obj, a_eq=a_eq, b_eq=b_eq, a_ub=rows,
                         b_ub=np.zeros(2 * L), lb=lb),
        cones=(SecondOrderCone(t=i_t, v=tuple(range(i_v, i_v + rk + 1))),),
    )
    result = _check_optimal(solve_socp(prog, tol), "sqrt_lasso")
    zeta = result.x[:L]
    resid = target - design @ zeta
    return SqrtLassoFit(
        zeta=zeta, q_hat=float(np.sqrt(resid @ resid / n)), lam=lam, solve=result,
    )


def projection_instruments(d: Dataset, first_stage: np.ndarray) -> Dataset:
    """Replace the L raw instruments by K columns: fitted linear projection
    instruments for the endogenous regressors, exogenous regressors as their
    own instruments.

    ``first_stage`` has shape (k_end, L): one coefficient vector per
    endogenous regressor.
    """
    first_stage = np.atleast_2d(np.asarray(first_stage, dtype=float))
    if first_stage.shape != (d.k_end, d.n_instruments):
        raise ValidationError(
            f"first_stage must have shape ({d.k_end}, {d.n_instruments})"
        )
    cols = []
    for k in range(d.k_end):
        fitted = d.z @ first_stage[k]
        if np.abs(fitted).max() == 0.0:
            raise DegenerateInstrumentError(k + 1)
        cols.append(fitted)
    new_z = np.column_stack(cols + [d.x[:, d.k_end :]]) if d.k_end else d.x.copy()
    names = tuple(f"zhat{k + 1}" for k in range(d.k_end)) + tuple(
        d.x_names[d.k_end :] if d.x_names else
        (f"x{k + 1}" for k in range(d.k_end, d.n_regressors))
    )
    return Dataset(
        y=d.y, x=d.x, z=new_z, k_end=d.k_end, zbar=d.zbar,
        x_names=d.x_names, z_names=names, x_order=d.x_order,
    )


@dataclass(frozen=True)
class TwoStageConfig:
    c: float = 0.1
    rate: RateConfig = RateConfig()
    c_sql: float = 1.1
    sigma_weight: float | None = None
    scaling: str = MAXABS


@dataclass
class TwoStageFit:
    fit: StivFit
    first_stage: list[SqrtLassoFit]
    projected: Dataset
    rate: RateResult


def stiv_two_stage(
    d: Dataset,
    cfg: TwoStageConfig = TwoStageConfig(),
    tol: Tolerances | None = None,
) -> TwoStageFit:
    """Square-root Lasso first stage, then STIV on the projected instruments.

    The rate is recomputed with the reduced instrument count L' = K.
    """
    stages = []
    if d.k_end:
        coef = np.zeros((d.k_end, d.n_instruments))
        for k in range(d.k_end):
            fit_k = sqrt_lasso(d.x[:, k], d.z, level=cfg.rate.alpha,
                               c_sql=cfg.c_sql, tol=tol)
            stages.append(fit_k)
            coef[k] = fit_k.zeta
        projected = projection_instruments(d, coef)
    else:
        projected = projection_instruments(d, np.zeros((0, d.n_instruments)))
    rate = rate_r(d.n, projected.n_instruments, cfg.rate)
    sd = scale_design(projected, scaling=cfg.scaling)
    fit = stiv_fit(sd, StivConfig(r=rate.r, c=cfg.c, sigma_weight=cfg.sigma_weight), tol=tol)
    return TwoStageFit(fit=fit, first_stage=stages, projected=projected, rate=rate)
