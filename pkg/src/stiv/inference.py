"""Finite-sample confidence intervals, thresholded selection, and the
approximate-sparsity error bound.

Every bound shares the slack factor

    slack = (1 - r/kappa_end - r^2/kappa_end_comp)_+^{-1}

with the convention 1/0 = +inf: a nonpositive denominator yields infinite
half-widths, reported explicitly rather than clipped.  Per-coordinate
half-widths and thresholds share the arithmetic

    2 * sigma_hat * r / (x_scale_k * kappa_k) * slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ValidationError
from .estimators import StivFit
from .model import ScaledDesign
from .sensitivity import SensitivitySet


@dataclass(frozen=True)
class CiSpec:
    r: float
    j_end: frozenset[int]
    source: str = "certificate"  # or "direct"

    def __post_init__(self):
        if self.r <= 0:
            raise ValidationError("r must be positive")


@dataclass
class ConfidenceReport:
    half_widths: np.ndarray  # +inf where the slack denominator is nonpositive
    slack: float
    finite: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def all_finite(self) -> bool:
        return bool(self.finite.all())


def slack_factor(sens: SensitivitySet, r: float) -> float:
    """(1 - r/kappa_end - r^2/kappa_comp)_+^{-1}, +inf when denominator <= 0."""
    t1, t2 = sens.slack_terms(r)
    denom = 1.0 - t1 - t2
    return 1.0 / denom if denom > 0.0 else math.inf


def _per_coordinate(fit: StivFit, sd: ScaledDesign, sens: SensitivitySet, r: float) -> np.ndarray:
    if fit.sigma_hat is None:
        raise ConfigurationError("pivotal fit with sigma_hat required")
    slack = slack_factor(sens, r)
    with np.errstate(divide="ignore"):
        base = 2.0 * fit.sigma_hat * r / (sd.x_star * sens.coord)
    return base * slack


def confidence_intervals(
    fit: StivFit,
    sd: ScaledDesign,
    sens: SensitivitySet,
    spec: CiSpec,
) -> ConfidenceReport:
    """Per-coordinate confidence half-widths around the fit."""
    hw = _per_coordinate(fit, sd, sens, spec.r)
    finite = np.isfinite(hw)
    lower = np.where(finite, fit.beta_hat - hw, -np.inf)
    upper = np.where(finite, fit.beta_hat + hw, np.inf)
    return ConfidenceReport(
        half_widths=hw, slack=slack_factor(sens, spec.r),
        finite=finite, lower=lower, upper=upper,
    )


def thresholds(
    fit: StivFit,
    sd: ScaledDesign,
    sens: SensitivitySet,
    r: float,
) -> np.ndarray:
    """Selection thresholds omega_k; identical arithmetic to the CI half-widths."""
    return _per_coordinate(fit, sd, sens, r)


def threshold_select(beta_hat: np.ndarray, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Keep coordinates with |beta_k| > omega_k; return (support, signs).

    Signs follow the convention sign(0) = 0 and are zero off the support.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if beta_hat.shape != omega.shape:
        raise ValidationError("beta and omega must have equal length")
    keep = np.abs(beta_hat) > omega
    signs = np.where(keep, np.sign(beta_hat), 0.0).astype(int)
    return np.where(keep)[0], signs


def support_estimate(beta_hat: np.ndarray, floor: float = 1e-8) -> set[int]:
    """Support of the estimate with a magnitude floor stripping solver noise."""
    return set(np.where(np.abs(beta_hat) > floor)[0])


def approx_sparse_bound(
    fit: StivFit,
    sd: ScaledDesign,
    sens_for: "callable",
    candidates: list[set[int]],
    p: float,
    r: float,
    beta_ref: np.ndarray,
    cone_c: float = 0.1,
) -> tuple[float, set[int]]:
    """Bias/variance bound over candidate approximation supports.

    ``sens_for(J)`` must return a SensitivitySet on the *enlarged* cone for
    candidate J.  The bias term is 6 |(D_X^-1 beta_ref)_{J^c}|_1 / (1 - c);
    the variance term is 2 sigma_hat r / kappa_p(J) * slack(J).  Candidates
    whose sensitivities are unavailable are skipped with a warning entry;
    if every candidate fails, a ConfigurationError is raised.
    """
    if not candidates:
        raise ValidationError("need at least one candidate support")
    if fit.sigma_hat is None:
        raise ConfigurationError("pivotal fit with sigma_hat required")
    scaled_ref = sd.x_star * np.asarray(beta_ref, dtype=float)
    best: tuple[float, set[int]] | None = None
    failures = []
    for J in candidates:
        J = set(J)
        try:
            sens = sens_for(J)
        except Exception as exc:  # noqa: BLE001 - candidate-level skip by contract
            failures.append((J, repr(exc)))
            continue
        comp = sorted(set(range(len(scaled_ref))) - J)
        bias = 6.0 * float(np.abs(scaled_ref[comp]).sum()) / (1.0 - cone_c)
        if J:
            exponent = 0.0 if math.isinf(p) else 1.0 / p
            ratio = (2.0 + cone_c) / (1.0 - cone_c)
            kappa_p = ((1.0 + ratio) * len(J)) ** (-exponent) * float(np.min(sens.coord))
            variance = 2.0 * fit.sigma_hat * r / kappa_p * slack_factor(sens, r)
        else:
            variance = 0.0  # kappa over the empty cone is +inf
        value = max(variance, bias)
        if best is None or value < best[0]:
            best = (value, J)
    if best is None:
        raise ConfigurationError(f"all candidates failed: {failures}")
    return best
