"""Detection of non-valid instruments: estimation of non-validity indicators,
finite-sample bounds, and thresholded selection.

Given a pilot estimate beta_hat with an l1 error budget b_hat, the products
w_li = zbar_li (y_i - x_i' beta_hat) estimate E[zbar_l u].  The indicator
estimate solves

    min |theta|_1 + c sigma1
    s.t. |mean_i(w_li) - theta_l| <= sigma1 r1 + b_hat zbar_*        (all l)
         sqrt(mean_i (w_li - theta_l)^2) <= sigma1 + b_hat zbar_*    (all l)

The second constraint is an exact 2-dimensional second-order cone per l via
the decomposition mean_i (w_li - theta_l)^2 = v_l + (m_l - theta_l)^2 with
m_l, v_l the per-column mean and variance of w; no linearization is involved.

As with the pivotal coefficient fit, the weight on sigma1 defaults to
3.5*sqrt(n): the tiny weight c makes it cheaper to zero out theta entirely
and absorb the moments into sigma1, collapsing the estimate.  c still sets
the error-bound geometry (the (1-c) factors of the V bound).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conic import (
    ConicProgram,
    LinearProgram,
    SecondOrderCone,
    SolveResult,
    Tolerances,
    solve_socp,
)
from .errors import SolverFailureError, ValidationError
from .estimators import StivFit
from .model import Dataset
from .sensitivity import SensitivitySet


@dataclass(frozen=True)
class NvConfig:
    r1: float
    c: float = 0.1
    b_hat: float = 0.0
    sigma1_weight: float | None = None  # default 3.5*sqrt(n), as for the pivotal fit

    def __post_init__(self):
        if self.r1 <= 0:
            raise ValidationError("r1 must be positive")
        if not 0.0 < self.c < 1.0:
            raise ValidationError("c must lie in (0, 1)")
        if not self.b_hat >= 0.0:
            raise ValidationError("b_hat must be nonnegative")
        if self.sigma1_weight is not None and self.sigma1_weight <= 0.0:
            raise ValidationError("sigma1_weight must be positive")


@dataclass
class NvFit:
    theta_hat: np.ndarray
    sigma1_hat: float
    w_means: np.ndarray  # m_l
    w_vars: np.ndarray  # v_l
    zbar_star: float
    objective: float
    solve: SolveResult
    constraint_residuals: dict


def moment_decomposition(d: Dataset, beta_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and variance of w_li = zbar_li * residual_i."""
    if d.zbar is None:
        raise ValidationError("dataset has no suspect instruments")
    resid = d.y - d.x @ np.asarray(beta_hat, dtype=float)
    w = d.zbar * resid[:, None]
    m = w.mean(axis=0)
    v = (w**2).mean(axis=0) - m**2
    return m, np.maximum(v, 0.0)


def nv_fit(
    d: Dataset,
    beta_hat: np.ndarray,
    cfg: NvConfig,
    tol: Tolerances | None = None,
) -> NvFit:
    """Estimate the non-validity indicators theta."""
    m, v = moment_decomposition(d, beta_hat)
    L1 = len(m)
    zbar_star = float(np.sqrt((d.zbar**2).mean(axis=0)).max())
    shift = cfg.b_hat * zbar_star
    sqrt_v = np.sqrt(v)
    w_sigma1 = (
        cfg.sigma1_weight if cfg.sigma1_weight is not None
        else 3.5 * math.sqrt(d.n)
    )

    # variables: [theta (L1), sigma1 (1), w (L1), t1 (1), p (L1), q (L1)]
    # cones: (t1, (p_l, q_l)) with t1 = sigma1 + shift, p_l = sqrt(v_l),
    # q_l = theta_l - m_l.
    nv = L1 + 1 + L1 + 1 + 2 * L1
    i_sig = L1
    i_w = L1 + 1
    i_t1 = i_w + L1
    i_p = i_t1 + 1
    i_q = i_p + L1

    c_obj = np.zeros(nv)
    c_obj[i_w : i_w + L1] = 1.0
    c_obj[i_sig] = w_sigma1

    a_eq = np.zeros((1 + 2 * L1, nv))
    b_eq = np.zeros(1 + 2 * L1)
    a_eq[0, i_t1] = 1.0
    a_eq[0, i_sig] = -1.0
    b_eq[0] = shift
    for l in range(L1):
        a_eq[1 + l, i_p + l] = 1.0
        b_eq[1 + l] = sqrt_v[l]
        a_eq[1 + L1 + l, i_q + l] = 1.0
        a_eq[1 + L1 + l, l] = -1.0
        b_eq[1 + L1 + l] = -m[l]

    rows = np.zeros((4 * L1, nv))
    rhs = np.zeros(4 * L1)
    # |m_l - theta_l| <= sigma1 r1 + shift
    rows[:L1, :L1] = -np.eye(L1)
    rows[:L1, i_sig] = -cfg.r1
    rhs[:L1] = -m + shift
    rows[L1 : 2 * L1, :L1] = np.eye(L1)
    rows[L1 : 2 * L1, i_sig] = -cfg.r1
    rhs[L1 : 2 * L1] = m + shift
    # l1 split
    rows[2 * L1 : 3 * L1, :L1] = np.eye(L1)
    rows[2 * L1 : 3 * L1, i_w : i_w + L1] = -np.eye(L1)
    rows[3 * L1 :, :L1] = -np.eye(L1)
    rows[3 * L1 :, i_w : i_w + L1] = -np.eye(L1)

    lb = np.full(nv, -np.inf)
    lb[i_sig] = 0.0
    lb[i_w : i_w + L1] = 0.0

    cones = tuple(SecondOrderCone(t=i_t1, v=(i_p + l, i_q + l)) for l in range(L1))
    prog = ConicProgram(
        lp=LinearProgram(c=c_obj, a_eq=a_eq, b_eq=b_eq, a_ub=rows, b_ub=rhs, lb=lb),
        cones=cones,
    )
    result = solve_socp(prog, tol)
    if not result.optimal:
        raise SolverFailureError(f"nv_fit: solver status {result.status}", result)
    theta = result.x[:L1]
    sigma1 = float(result.x[i_sig])
    f_gap = float(np.sqrt(v + (m - theta) ** 2).max() - (sigma1 + shift))
    mom_gap = float(np.abs(m - theta).max() - (sigma1 * cfg.r1 + shift))
    return NvFit(
        theta_hat=theta, sigma1_hat=sigma1, w_means=m, w_vars=v,
        zbar_star=zbar_star,
        objective=float(np.abs(theta).sum() + w_sigma1 * sigma1),
        solve=result,
        constraint_residuals={"moment": mom_gap, "quadratic": f_gap},
    )


def nv_bound_v(
    sigma1: float,
    b: float,
    j_count: float,
    r1: float,
    c: float,
    zbar_star: float,
) -> float:
    """Sup-norm confidence bound V on the indicator estimation error."""
    if min(sigma1, b, j_count, r1, zbar_star) < 0:
        raise ValidationError("nv_bound_v needs nonnegative inputs")
    numer = 2.0 * (sigma1 * r1 + (1.0 + r1 / (1.0 - c)) * b * zbar_star)
    denom = 1.0 - 2.0 * r1 / (1.0 - c) * j_count
    return numer / denom if denom > 0.0 else math.inf


def nv_bound_l1(
    sigma1: float,
    b: float,
    j_count: float,
    r1: float,
    c: float,
    zbar_star: float,
) -> float:
    """Companion l1 bound on the indicator estimation error."""
    numer = 2.0 * (
        2.0 * j_count * (sigma1 * r1 + (1.0 + r1) * b * zbar_star) + c * b * zbar_star
    )
    denom = 1.0 - c - 2.0 * r1 * j_count
    return numer / denom if denom > 0.0 else math.inf


def nv_bhat_from_stiv(fit: StivFit, sens: SensitivitySet, s: int, r: float) -> float:
    """l1 error budget for a pivotal pilot via certificate sensitivities at s."""
    if fit.sigma_hat is None:
        raise ValidationError("pilot must be a pivotal fit")
    t1, t2 = sens.slack_terms(r)
    denom = 1.0 - t1 - t2
    if denom <= 0.0 or sens.kappa1 <= 0.0:
        return math.inf
    return 2.0 * fit.sigma_hat * r * s / sens.kappa1 / denom


def nv_threshold_select(
    fit: NvFit, omega: float
) -> tuple[np.ndarray, np.ndarray]:
    """Instruments flagged non-valid: |theta_l| > omega; returns (flagged, signs)."""
    if not omega >= 0.0:
        raise ValidationError("omega must be nonnegative or +inf")
    keep = np.abs(fit.theta_hat) > omega
    signs = np.where(keep, np.sign(fit.theta_hat), 0.0).astype(int)
    return np.where(keep)[0], signs


def nv_select_auto(
    fit: NvFit,
    b_hat: float,
    r1: float,
    c: float,
    s1: int | None = None,
    floor: float = 1e-8,
    max_rounds: int = 3,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Threshold selection with the support-size plug-in for s1.

    When s1 is not pinned, it starts from |support(theta_hat)| and the
    threshold/selection pair is iterated to a fixed point (at most
    ``max_rounds`` rounds).  Returns (flagged, signs, omega, s1_used).
    """
    if s1 is None:
        s1_used = int(np.sum(np.abs(fit.theta_hat) > floor))
    else:
        s1_used = int(s1)
    omega = nv_bound_v(fit.sigma1_hat, b_hat, s1_used, r1, c, fit.zbar_star)
    flagged, signs = nv_threshold_select(fit, omega)
    if s1 is not None:
        return flagged, signs, omega, s1_used
    for _ in range(max_rounds - 1):
        s1_next = len(flagged)
        if s1_next == s1_used:
            break
        s1_used = s1_next
        omega = nv_bound_v(fit.sigma1_hat, b_hat, s1_used, r1, c, fit.zbar_star)
        flagged, signs = nv_threshold_select(fit, omega)
    return flagged, signs, omega, s1_used
