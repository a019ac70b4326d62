"""Dataset validation, scaling, rate calibration, and CSV ingestion."""

import io
import math

import numpy as np
import pytest
from scipy.stats import norm

from stiv.errors import (
    DegenerateLevelError,
    DegenerateScalingError,
    DimensionError,
    ParseError,
    ValidationError,
)
from stiv.model import (
    Dataset,
    RateConfig,
    load_dataset,
    rate_r,
    scale_design,
)


def _dataset(n=6, k_end=1, K=3, L=4, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, L))
    x = np.empty((n, K))
    x[:, 0] = z[:, :2] @ np.array([0.5, 0.5]) + rng.standard_normal(n)
    x[:, 1:] = z[:, L - K + 1 :]
    y = x @ np.array([1.0, 1.0, 0.0]) + 0.1 * rng.standard_normal(n)
    return Dataset(y=y, x=x, z=z, k_end=k_end)


class TestDataset:
    def test_exogenous_mapping_enforced(self):
        rng = np.random.default_rng(1)
        z = rng.standard_normal((5, 3))
        x = rng.standard_normal((5, 2))  # exogenous columns don't match any z
        with pytest.raises(ValidationError, match="bit-identical"):
            Dataset(y=np.zeros(5), x=x, z=z, k_end=0)

    def test_fewer_instruments_than_regressors(self):
        with pytest.raises(DimensionError):
            Dataset(y=np.zeros(3), x=np.ones((3, 2)), z=np.ones((3, 1)), k_end=2)

    def test_zero_column_rejected(self):
        z = np.array([[1.0, 0.0], [2.0, 0.0]])
        with pytest.raises(DegenerateScalingError):
            Dataset(y=np.zeros(2), x=z[:, :1], z=z, k_end=1)

    def test_mapping_survives_row_subsampling(self):
        d = _dataset(n=10)
        sub = Dataset(y=d.y[:5], x=d.x[:5], z=d.z[:5], k_end=d.k_end)
        assert sub.n == 5


class TestScaleDesign:
    def test_two_point_column(self):
        # X = Z = [[1], [-2]]: scale 2, Psi = (1/2)(1*1 + 4)/(2*2) = 0.625
        d = Dataset(y=np.zeros(2), x=np.array([[1.0], [-2.0]]),
                    z=np.array([[1.0], [-2.0]]), k_end=0)
        sd = scale_design(d)
        assert sd.x_star[0] == 2.0
        assert sd.z_star[0] == 2.0
        assert sd.psi[0, 0] == pytest.approx(0.625, abs=1e-12)

    def test_single_active_row(self):
        d = Dataset(y=np.zeros(2), x=np.array([[1.0], [0.0]]),
                    z=np.array([[1.0], [0.0]]), k_end=0)
        sd = scale_design(d)
        assert sd.x_star[0] == 1.0
        assert sd.psi[0, 0] == pytest.approx(0.5)

    def test_psi_bounded_both_scalings(self):
        for seed in range(5):
            d = _dataset(seed=seed)
            for scaling in ("maxabs", "rms"):
                sd = scale_design(d, scaling=scaling)
                assert np.abs(sd.psi).max() <= 1.0 + 1e-12

    def test_column_rescaling_leaves_psi_unchanged(self):
        d = _dataset()
        base = scale_design(d).psi
        x2 = d.x.copy()
        x2[:, 0] *= 7.5
        z2 = d.z.copy()
        z2[:, 1] *= 0.01
        scaled = Dataset(y=d.y, x=x2, z=z2, k_end=1)
        assert np.allclose(scale_design(scaled).psi, base, atol=1e-12)

    def test_zbar_star_is_max_rms(self):
        d = _dataset()
        zbar = np.column_stack([d.z[:, 0] * 2.0, np.ones(d.n)])
        d2 = Dataset(y=d.y, x=d.x, z=d.z, k_end=1, zbar=zbar)
        sd = scale_design(d2)
        expected = max(np.sqrt(np.mean(zbar**2, axis=0)))
        assert sd.zbar_star == pytest.approx(expected)


class TestRate:
    def test_practical_reference_value(self):
        # quantile oracle: ndtri(0.9995) = 3.2905267...
        res = rate_r(49, 50, RateConfig(alpha=0.05))
        assert res.r == pytest.approx(norm.ppf(0.9995) / 7.0, abs=1e-12)
        assert res.r == pytest.approx(0.47007524735, abs=1e-9)
        assert res.alpha == 0.05

    def test_practical_needs_two_instruments(self):
        with pytest.raises(DegenerateLevelError):
            rate_r(10, 1, RateConfig())

    def test_full_mode_plugin(self):
        res = rate_r(2, math.ceil(math.e), RateConfig(
            mode="full", a=1.0, delta=1.0, d_n_delta=10.0))
        # L = 3 here; use the direct formula instead for L = e exactly
        cfg = RateConfig(mode="full", a=1.0, delta=1.0, d_n_delta=10.0)
        assert rate_r(2, 3, cfg).r == pytest.approx(math.sqrt(2 * math.log(3) / 2))
        assert res.side_condition_ok is not None

    def test_full_mode_alpha_formula(self):
        # A=2, L=10, delta=1, d=10, a0=1:
        # alpha = 20(1 - Phi(2 sqrt(2 ln 10))) + 2 (1 + 2 sqrt(2 ln 10))^2 / 1e6
        t = 2.0 * math.sqrt(2.0 * math.log(10.0))
        expected = 20.0 * (1.0 - norm.cdf(t)) + 2.0 * (1.0 + t) ** 2 / (10**3 * 10**3)
        res = rate_r(5, 10, RateConfig(mode="full", a=2.0, delta=1.0,
                                       d_n_delta=10.0, a0=1.0))
        assert res.alpha == pytest.approx(expected, rel=1e-12)
        assert res.side_condition_ok  # 10 <= exp(100/8)

    def test_side_condition_flagged_not_fatal(self):
        res = rate_r(5, 10, RateConfig(mode="full", a=2.0, delta=1.0,
                                       d_n_delta=0.5, a0=1.0))
        assert res.side_condition_ok is False

    def test_monotonicity_in_n_and_L(self):
        base = rate_r(100, 20).r
        assert rate_r(200, 20).r < base
        assert rate_r(100, 40).r > base


class TestLoadDataset:
    def _csv(self, text):
        return io.StringIO(text)

    def test_minimal_file(self):
        d = load_dataset(self._csv("y,x1,z1\n1,2,2\n2,3,3\n0,1,1\n"), endo=[])
        assert (d.n, d.n_regressors, d.n_instruments) == (3, 1, 1)

    def test_endogenous_prefix_reordering(self):
        # x1 is exogenous (equals z2); x2 is the endogenous column
        text = "y,x1,x2,z1,z2\n1,5,2,2,5\n2,6,3,3,6\n0,7,1,1,7\n"
        d = load_dataset(self._csv(text), endo=[2])
        # x2 declared endogenous: becomes the first internal column
        assert d.k_end == 1
        assert d.x_names == ("x2", "x1")
        assert np.array_equal(d.x[:, 0], np.array([2.0, 3.0, 1.0]))
        assert d.x_order == (1, 0)

    def test_unmatched_exogenous_column(self):
        text = "y,x1,z1\n1,2,3\n2,3,4\n"
        with pytest.raises(ValidationError):
            load_dataset(self._csv(text), endo=[])

    def test_parse_error_names_cell(self):
        text = "y,x1,z1\n1,abc,1\n"
        with pytest.raises(ParseError, match="row 2, column x1"):
            load_dataset(self._csv(text), endo=[1])

    def test_nonfinite_cell(self):
        text = "y,x1,z1\n1,inf,1\n"
        with pytest.raises(ParseError, match="non-finite"):
            load_dataset(self._csv(text), endo=[1])

    def test_reference_layout_shape(self):
        # y, x1..x25, z1..z50 with endo={1} and x_{l'} = z_l for l = 27..50
        rng = np.random.default_rng(0)
        n, K, L = 49, 25, 50
        z = rng.standard_normal((n, L))
        x1 = z[:, :26] @ np.full(26, 0.15) + rng.standard_normal(n)
        x = np.column_stack([x1, z[:, 26:]])
        y = x[:, :5].sum(axis=1)
        rows = ["y," + ",".join(f"x{k+1}" for k in range(K)) + ","
                + ",".join(f"z{l+1}" for l in range(L))]
        for i in range(n):
            rows.append(",".join(repr(float(v)) for v in [y[i], *x[i], *z[i]]))
        d = load_dataset(self._csv("\n".join(rows) + "\n"), endo=[1])
        assert (d.n, d.n_regressors, d.n_instruments) == (49, 25, 50)
        assert d.k_end == 1

    def test_instrument_map_checked(self):
        text = "y,x1,z1,z2\n1,2,2,9\n2,3,3,8\n"
        load_dataset(self._csv(text), endo=[], instrument_map={1: 1})
        with pytest.raises(ValidationError, match="not bit-exact"):
            load_dataset(self._csv(text), endo=[], instrument_map={1: 2})
