import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbps.errors import (
    DimensionError,
    InsufficientDataError,
    SingularDesignError,
    ValidationError,
)
from gbps.experts import (
    ArModel,
    ExpertConfig,
    ExpertSpec,
    GaussianPredictive,
    build_expert_bank,
    expert_loss_predictive,
    fit_ar,
    forecast_ar,
    returns_to_policy,
    sample_mean_forecast,
)
from gbps.market_data import ReturnTable


def table(values, start="2005-01"):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    dates = pd.period_range(start, periods=len(values), freq="M")
    return ReturnTable(dates, [f"A{k}" for k in range(values.shape[1])], values)


def normal_equations(y, p):
    """Solve (X'X) b = X'y by hand-built lag matrix; independent of the package."""
    rows = [[1.0] + [y[t - i] for i in range(1, p + 1)] for t in range(p, len(y))]
    X = np.array(rows)
    return np.linalg.solve(X.T @ X, X.T @ y[p:])


class TestGaussianPredictive:
    @pytest.mark.parametrize("mean,var", [(np.nan, 1.0), (0.0, -1.0), (0.0, np.inf)])
    def test_invalid(self, mean, var):
        with pytest.raises(ValidationError):
            GaussianPredictive(mean, var)


class TestFitAr:
    def test_noiseless_recovery(self):
        y = [0.0]
        for _ in range(29):
            y.append(1 + 0.5 * y[-1])
        m = fit_ar(y, 1)
        assert m.intercept == pytest.approx(1.0, abs=1e-8)
        assert m.coefficients[0] == pytest.approx(0.5, abs=1e-8)
        assert m.residual_variance == pytest.approx(0.0, abs=1e-8)

    def test_white_noise_slope_small(self):
        y = np.random.default_rng(0).standard_normal(500)
        assert abs(fit_ar(y, 1).coefficients[0]) < 0.15

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            fit_ar([0.1, 0.2, 0.3, 0.4], 3)

    def test_constant_is_singular(self):
        with pytest.raises(SingularDesignError):
            fit_ar(np.full(36, 0.01), 2)

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_matches_normal_equations(self, seed, p):
        y = np.random.default_rng(seed).normal(0.01, 0.05, 60)
        m = fit_ar(y, p)
        ref = normal_equations(y, p)
        np.testing.assert_allclose([m.intercept, *m.coefficients], ref, atol=1e-10)

    def test_residual_variance_dof(self):
        y = np.random.default_rng(4).standard_normal(40)
        m = fit_ar(y, 2)
        b = normal_equations(y, 2)
        resid = y[2:] - (b[0] + b[1] * y[1:-1] + b[2] * y[:-2])
        assert m.residual_variance == pytest.approx(resid @ resid / (40 - 2 - 3), rel=1e-10)


class TestForecastAr:
    def test_one_lag(self):
        g = forecast_ar(ArModel(1, 1.0, (0.5,), 0.0), [2.0])
        assert (g.mean, g.variance) == (2.0, 0.0)

    def test_zero_coefficients(self):
        g = forecast_ar(ArModel(3, 0.0, (0.0, 0.0, 0.0), 4.0), [5, -3, 9])
        assert (g.mean, g.variance) == (0.0, 4.0)

    def test_lag_order(self):
        # coefficient on lag 1 applies to the newest value
        g = forecast_ar(ArModel(2, 0.0, (1.0, 0.0), 0.0), [7.0, 3.0])
        assert g.mean == 3.0

    def test_lag_mismatch(self):
        with pytest.raises(DimensionError):
            forecast_ar(ArModel(2, 0.0, (0.1, 0.2), 1.0), [1.0])


class TestSampleMean:
    def test_constant(self):
        g = sample_mean_forecast([0.5] * 5 + [0.02] * 12, 12)
        assert g.mean == pytest.approx(0.02) and g.variance == pytest.approx(0.0, abs=1e-18)

    def test_two_values(self):
        g = sample_mean_forecast([0.0, 0.2], 2)
        assert g.mean == pytest.approx(0.1) and g.variance == pytest.approx(0.02)

    def test_window_one(self):
        with pytest.raises(ValidationError):
            sample_mean_forecast([0.1, 0.2], 1)

    def test_window_too_long(self):
        with pytest.raises(InsufficientDataError):
            sample_mean_forecast([0.1, 0.2], 3)


class TestReturnsToPolicy:
    def test_equal_means_uniform(self):
        np.testing.assert_allclose(returns_to_policy([0.3] * 4, 0.7), [0.25] * 4)

    def test_sharp(self):
        assert returns_to_policy([1.0, 0.0], 0.01)[0] > 0.999

    def test_shift_invariant(self):
        m = np.array([0.01, -0.02, 0.03])
        np.testing.assert_allclose(returns_to_policy(m, 0.02), returns_to_policy(m + 5.0, 0.02), atol=1e-15)

    @pytest.mark.parametrize("bad", [[np.nan, 0.0], []])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            returns_to_policy(bad, 0.02)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-0.2, 0.2), min_size=1, max_size=6), st.floats(0.005, 1.0))
    def test_monotone_and_on_simplex(self, means, tau):
        w = returns_to_policy(means, tau)
        assert abs(w.sum() - 1) <= 1e-12 and np.all(w >= 0)
        m = np.asarray(means)
        for a in range(len(m)):
            for b in range(len(m)):
                if m[a] > m[b]:
                    assert w[a] >= w[b]


class TestLossPredictive:
    def test_vertex(self):
        g = expert_loss_predictive([1, 0], [GaussianPredictive(0.05, 0.01), GaussianPredictive(0.3, 9.0)])
        assert g.mean == pytest.approx(-0.05) and g.variance == pytest.approx(0.01)

    def test_half_half(self):
        g = expert_loss_predictive([0.5, 0.5], [GaussianPredictive(0.1, 0.04), GaussianPredictive(-0.1, 0.04)])
        assert g.mean == pytest.approx(0.0, abs=1e-15) and g.variance == pytest.approx(0.02)

    def test_zero_variances(self):
        g = expert_loss_predictive([0.2, 0.8], [GaussianPredictive(0.1, 0.0)] * 2)
        assert g.variance == 0.0

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            expert_loss_predictive([0.5, 0.5], [GaussianPredictive(0.0, 1.0)])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2), st.floats(0.01, 1.0))
    def test_variance_zero_iff_weighted_variances_zero(self, raw, s2):
        w = np.asarray(raw) + 1e-3
        w /= w.sum()
        g = expert_loss_predictive(w, [GaussianPredictive(0.0, s2), GaussianPredictive(0.0, 0.0)])
        assert g.variance > 0


class TestExpertSpec:
    def test_parse_defaults(self):
        assert ExpertSpec.parse("mean:12") == ExpertSpec("Mean[1]", "mean", 12)
        assert ExpertSpec.parse("ar:2:36") == ExpertSpec("AR(2)", "ar", 36, 2)
        assert ExpertSpec.parse("Fast=ar:1:24").name == "Fast"

    def test_round_trip(self):
        s = ExpertSpec.parse("ar:3:48")
        assert ExpertSpec.parse(s.token()) == s

    @pytest.mark.parametrize("bad", ["median:12", "ar:2", "mean:x", "ar:0:36", "mean:1"])
    def test_bad(self, bad):
        with pytest.raises(ValidationError):
            ExpertSpec.parse(bad)

    def test_duplicate_names(self):
        with pytest.raises(ValidationError):
            ExpertConfig((ExpertSpec.parse("mean:12"), ExpertSpec.parse("mean:12")))


class TestExpertBank:
    rets = table(np.random.default_rng(1).normal(0.01, 0.04, (60, 3)))

    def test_default_bank(self):
        bank = build_expert_bank(self.rets, 40)
        assert len(bank) == 5
        assert len({f.expert_id for f in bank}) == 5
        for f in bank:
            assert f.policy.shape == (3,) and abs(f.policy.sum() - 1) < 1e-12

    def test_short_history(self):
        with pytest.raises(InsufficientDataError, match="expert"):
            build_expert_bank(self.rets, 6)

    def test_constant_history(self):
        flat = table(np.full((48, 3), 0.01))
        bank = build_expert_bank(flat, 48, ExpertConfig(singular_fallback=True))
        for f in bank:
            np.testing.assert_allclose(f.policy, [1 / 3] * 3, atol=1e-12)
        with pytest.raises(SingularDesignError, match="AR"):
            build_expert_bank(flat, 48)

    def test_uses_only_past(self):
        bank = build_expert_bank(self.rets, 40)
        mean12 = self.rets.returns[28:40].mean(axis=0)
        got = [g.mean for g in bank[0].return_predictives]
        np.testing.assert_allclose(got, mean12, atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(36, 59), st.integers(0, 2**31 - 1))
    def test_no_lookahead(self, t, seed):
        before = build_expert_bank(self.rets, t)
        noisy = self.rets.returns.copy()
        noisy[t:] = np.random.default_rng(seed).uniform(-0.5, 0.5, noisy[t:].shape)
        after = build_expert_bank(table(noisy), t)
        for a, b in zip(before, after):
            assert a.expert_id == b.expert_id
            np.testing.assert_array_equal(a.policy, b.policy)
            assert a.loss_predictive == b.loss_predictive
