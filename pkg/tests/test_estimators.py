"""Estimator tests: constraint verification, grid oracles on scalar
instances, equivariance, and the two-stage composition."""

import math

import numpy as np
import pytest

from stiv.errors import DegenerateInstrumentError, ValidationError
from stiv.estimators import (
    StivConfig,
    default_sigma_weight,
    projection_instruments,
    sqrt_lasso,
    stiv_fit,
    stiv_nonpivotal,
    stiv_two_stage,
    TwoStageConfig,
)
from stiv.model import Dataset, RateConfig, rate_r, scale_design
from stiv.sim import DgpParams, generate_dgp

from oracles import grid_stiv_objective

FEAS_TOL = 1e-8


def _design(seed=0, n=40, K=4, L=6):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, L))
    x = np.empty((n, K))
    x[:, 0] = z[:, : L - K + 1] @ rng.uniform(0.3, 0.7, L - K + 1) + rng.standard_normal(n)
    x[:, 1:] = z[:, L - K + 1 :]
    beta = np.zeros(K)
    beta[:2] = 1.0
    y = x @ beta + 0.2 * rng.standard_normal(n)
    return Dataset(y=y, x=x, z=z, k_end=1)


class TestStivFit:
    def test_zero_outcome_gives_zero_fit(self):
        d = _design()
        sd = scale_design(d)
        fit = stiv_fit(sd, StivConfig(r=0.4), y=np.zeros(d.n))
        assert fit.objective == pytest.approx(0.0, abs=1e-6)
        assert np.abs(fit.beta_hat).max() <= 1e-6
        assert fit.sigma_hat <= 1e-6

    def test_scalar_instance_matches_grid_oracle(self):
        # n=3, K=L=1, X=Z=1, Y=1, c=0.1, r=0.5; also checked with the
        # plain objective weight c itself.
        ones = np.ones((3, 1))
        d = Dataset(y=np.ones(3), x=ones, z=ones, k_end=0)
        sd = scale_design(d)
        betas = np.linspace(-0.5, 1.5, 1201)
        sigmas = np.linspace(0.0, 3.0, 1501)
        for weight in (0.1, default_sigma_weight(3)):
            fit = stiv_fit(sd, StivConfig(r=0.5, c=0.1, sigma_weight=weight))
            oracle = grid_stiv_objective(
                d.y, d.x, d.z, sd.x_star, sd.z_star, 0.5, weight, betas, sigmas)
            assert fit.objective == pytest.approx(oracle, abs=1e-4)

    def test_printed_weight_scalar_value(self):
        # with weight c = 0.1 the optimum sits at beta=0, sigma=2: objective 0.2
        ones = np.ones((3, 1))
        d = Dataset(y=np.ones(3), x=ones, z=ones, k_end=0)
        fit = stiv_fit(scale_design(d), StivConfig(r=0.5, c=0.1, sigma_weight=0.1))
        assert fit.objective == pytest.approx(0.2, abs=1e-6)
        assert abs(fit.beta_hat[0]) <= 1e-5

    def test_constraints_verified_independently(self):
        for seed in range(5):
            d = _design(seed)
            sd = scale_design(d)
            fit = stiv_fit(sd, StivConfig(r=0.3))
            assert fit.constraint_residuals["iv"] <= FEAS_TOL
            assert fit.constraint_residuals["quadratic"] <= FEAS_TOL

    def test_perturbation_never_improves_objective(self):
        d = _design(2)
        sd = scale_design(d)
        cfg = StivConfig(r=0.3)
        fit = stiv_fit(sd, cfg)
        w_sigma = default_sigma_weight(d.n)
        zs = d.z / sd.z_star

        def objective_at(beta):
            resid = d.y - d.x @ beta
            sigma = max(
                math.sqrt(resid @ resid / d.n),
                np.abs(zs.T @ resid / d.n).max() / cfg.r,
            )
            return np.abs(sd.x_star * beta).sum() + w_sigma * sigma

        base = objective_at(fit.beta_hat)
        for k in range(d.n_regressors):
            for eps in (1e-4, -1e-4):
                trial = fit.beta_hat.copy()
                trial[k] += eps
                assert objective_at(trial) >= base - 10 * FEAS_TOL

    def test_scale_equivariance(self):
        d = _design(3)
        sd = scale_design(d)
        cfg = StivConfig(r=0.3)
        fit = stiv_fit(sd, cfg)
        gamma = 3.7
        x2 = d.x.copy()
        x2[:, 0] *= gamma
        d2 = Dataset(y=d.y, x=x2, z=d.z, k_end=1)
        fit2 = stiv_fit(scale_design(d2), cfg)
        assert fit2.objective == pytest.approx(fit.objective, rel=1e-6)
        assert fit2.sigma_hat == pytest.approx(fit.sigma_hat, abs=1e-6)
        assert fit2.beta_hat[0] * gamma == pytest.approx(fit.beta_hat[0], abs=1e-5)


class TestNonpivotal:
    def test_zero_outcome(self):
        d = _design()
        sd = scale_design(d)
        fit = stiv_nonpivotal(sd, sigma_star=1.0, r=0.3, y=np.zeros(d.n))
        assert np.abs(fit.beta_hat).max() <= 1e-7

    def test_origin_feasible_when_bound_large(self):
        d = _design(1)
        sd = scale_design(d)
        mom = np.abs((d.z / sd.z_star).T @ d.y / d.n).max()
        fit = stiv_nonpivotal(sd, sigma_star=2.0 * mom, r=1.0)
        assert np.abs(fit.beta_hat).max() <= 1e-7

    def test_scalar_matches_grid(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((30, 1))
        y = 0.8 * x[:, 0] + 0.1 * rng.standard_normal(30)
        d = Dataset(y=y, x=x, z=x.copy(), k_end=0)
        sd = scale_design(d)
        fit = stiv_nonpivotal(sd, sigma_star=0.2, r=0.3)
        bound = 0.2 * 0.3
        zs = d.z[:, 0] / sd.z_star[0]
        grid = np.linspace(-2, 2, 800001)
        mom = np.abs((zs @ y) - grid * (zs @ x[:, 0])) / d.n
        feasible = grid[mom <= bound]
        oracle = np.abs(feasible).min()
        assert abs(fit.beta_hat[0]) == pytest.approx(oracle, abs=1e-5)

    def test_shrinkage_monotone_in_sigma_star(self):
        d = _design(7)
        sd = scale_design(d)
        small = stiv_nonpivotal(sd, sigma_star=0.1, r=0.3)
        large = stiv_nonpivotal(sd, sigma_star=0.4, r=0.3)
        assert large.scaled_l1 <= small.scaled_l1 + 1e-8


class TestSqrtLasso:
    def test_zero_target(self):
        rng = np.random.default_rng(0)
        design = rng.standard_normal((20, 5))
        fit = sqrt_lasso(np.zeros(20), design)
        assert np.abs(fit.zeta).max() <= 1e-8

    def test_single_column_matches_grid(self):
        rng = np.random.default_rng(4)
        design = rng.standard_normal((25, 1))
        target = 0.6 * design[:, 0] + 0.3 * rng.standard_normal(25)
        fit = sqrt_lasso(target, design, level=0.05, c_sql=1.1)
        grid = np.linspace(-1, 2, 300001)
        resid = target[:, None] - design @ grid[None, :]
        qs = np.sqrt((resid**2).mean(axis=0))
        scale = math.sqrt((design**2).mean())
        objs = qs + fit.lam / 25 * scale * np.abs(grid)
        oracle = objs.min()
        mine = fit.q_hat + fit.lam / 25 * scale * abs(fit.zeta[0])
        assert mine == pytest.approx(oracle, abs=1e-5)

    def test_level_validated(self):
        with pytest.raises(ValidationError):
            sqrt_lasso(np.ones(5), np.ones((5, 1)), level=1.5)


class TestProjectionInstruments:
    def test_no_endogenous_passthrough(self):
        rng = np.random.default_rng(2)
        z = rng.standard_normal((10, 3))
        d = Dataset(y=np.zeros(10), x=z[:, :2], z=z, k_end=0)
        proj = projection_instruments(d, np.zeros((0, 3)))
        assert proj.n_instruments == 2
        assert np.array_equal(proj.z, d.x)

    def test_unit_vector_copies_column(self):
        d = _design(0)
        coef = np.zeros((1, d.n_instruments))
        coef[0, 1] = 1.0
        proj = projection_instruments(d, coef)
        assert np.array_equal(proj.z[:, 0], d.z[:, 1])

    def test_zero_instrument_raises_with_index(self):
        d = _design(0)
        with pytest.raises(DegenerateInstrumentError) as err:
            projection_instruments(d, np.zeros((1, d.n_instruments)))
        assert err.value.endogenous_index == 1


class TestTwoStage:
    def test_no_endogenous_reduces_to_plain_fit(self):
        rng = np.random.default_rng(6)
        z = rng.standard_normal((30, 3))
        x = z[:, :2]
        y = x @ np.array([1.0, -0.5]) + 0.1 * rng.standard_normal(30)
        d = Dataset(y=y, x=x, z=z, k_end=0)
        ts = stiv_two_stage(d)
        direct = stiv_fit(
            scale_design(Dataset(y=y, x=x, z=x.copy(), k_end=0)),
            StivConfig(r=rate_r(30, 2, RateConfig()).r),
        )
        assert ts.fit.objective == pytest.approx(direct.objective, rel=1e-7)
        assert np.allclose(ts.fit.beta_hat, direct.beta_hat, atol=1e-6)

    def test_rate_uses_reduced_instrument_count(self):
        d = _design(8)
        ts = stiv_two_stage(d)
        assert ts.rate.r == pytest.approx(
            rate_r(d.n, d.n_regressors, RateConfig()).r)
        assert ts.projected.n_instruments == d.n_regressors

    def test_noiseless_first_stage_boosts_relevance(self):
        # with v = 0 and the exact first stage, the projected design's
        # endogenous diagonal entry dominates every raw-instrument entry
        rng = np.random.default_rng(9)
        n, K, L = 200, 3, 6
        z = rng.standard_normal((n, L))
        zeta = np.array([0.5, 0.4, 0.3, 0.0])
        x = np.empty((n, K))
        x[:, 0] = z[:, : L - K + 1] @ zeta  # no first-stage noise
        x[:, 1:] = z[:, L - K + 1 :]
        y = x @ np.array([1.0, 1.0, 0.0])
        d = Dataset(y=y, x=x, z=z, k_end=1)
        coef = np.zeros((1, L))
        coef[0, : L - K + 1] = zeta
        proj = projection_instruments(d, coef)
        raw = scale_design(d).psi
        new = scale_design(proj).psi
        assert new[0, 0] > np.abs(raw[:, 0]).max() + 1e-9
