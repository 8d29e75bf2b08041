import numpy as np
import pytest

from gbps.errors import ValidationError
from gbps.policy_learning import (
    EffectSpec,
    fit_direct_method,
    fit_ipw,
    ipw_pseudo_outcomes,
    policy_learning_demo,
    simulate,
)

from conftest import grid_posterior_mean

FAST = dict(n_bootstrap=50, n_eval=5000, n_samples=2000, burn_in=1000)


class TestSimulation:
    def test_shapes(self, rng):
        d = simulate(EffectSpec.default(3), 500, rng)
        assert d.X.shape == (500, 2) and set(np.unique(d.A)) <= {0, 1, 2}
        np.testing.assert_allclose(d.propensity.sum(axis=1), 1.0)

    def test_degenerate_propensities(self, rng):
        spec = EffectSpec((0, 0), ((0.0,), (0.0,)), propensity_coef=((50.0,), (-50.0,)))
        with pytest.raises(ValidationError, match="propensit"):
            simulate(spec, 200, rng)

    def test_spec_shapes(self):
        with pytest.raises(ValidationError):
            EffectSpec((0, 0, 0), ((1.0, 0.0), (0.0, 1.0)))

    def test_direct_method_recovers_truth(self, rng):
        spec = EffectSpec((0.0, 1.0), ((0.5, -0.2), (0.0, 0.3)), noise_sd=0.0)
        d = simulate(spec, 400, rng)
        np.testing.assert_allclose(fit_direct_method(d, 2), np.column_stack([spec.intercepts, spec.slopes]), atol=1e-10)

    def test_ipw_unbiased(self, rng):
        spec = EffectSpec.default(3)
        d = simulate(spec, 200_000, rng)
        gamma = ipw_pseudo_outcomes(d, 3)
        np.testing.assert_allclose(gamma.mean(axis=0), spec.mu(d.X).mean(axis=0), atol=0.03)
        assert fit_ipw(d, 3).shape == (3, 3)


class TestDemo:
    def test_oracle_experts_coincide(self):
        rep = policy_learning_demo(oracle_experts=True, seed=1, **FAST)
        ens, dm = rep.values["ensemble"][0], rep.values["DM"][0]
        assert ens == pytest.approx(dm, abs=1e-12)
        assert rep.values["IPW"][0] == pytest.approx(dm, abs=1e-12)

    def test_sabotaged_ipw(self):
        rep = policy_learning_demo(loss_bias=(0.0, 1.0), seed=0, **FAST)
        assert rep.theta[0] > 0.8
        ref = grid_posterior_mean(rep.ensemble.means, rep.ensemble.variances, rep.lam)
        assert rep.theta[0] == pytest.approx(ref[0], abs=0.02)

    def test_equal_treatment_means(self):
        spec = EffectSpec((0.2, 0.2, 0.2), ((0.0, 0.0),) * 3, propensity_coef=((0.3, 0.0), (0.0, 0.3), (0.0, 0.0)))
        rep = policy_learning_demo(effect_spec=spec, seed=2, **FAST)
        ens, se = rep.values["ensemble"]
        uni, se_u = rep.values["uniform"]
        assert abs(ens - uni) <= 3 * max(se, se_u, 1e-12)

    def test_outputs(self):
        rep = policy_learning_demo(seed=3, **FAST)
        assert rep.expert_ids == ("DM", "IPW")
        assert set(rep.values) == {"DM", "IPW", "ensemble", "uniform"}
        assert abs(rep.theta.sum() - 1) < 1e-9
        mix = rep.theta[0] * rep.policies["DM"] + rep.theta[1] * rep.policies["IPW"]
        np.testing.assert_allclose(rep.policies["ensemble"], mix, atol=1e-12)

    def test_deterministic(self):
        a = policy_learning_demo(seed=4, **FAST)
        b = policy_learning_demo(seed=4, **FAST)
        assert np.array_equal(a.theta, b.theta) and a.values == b.values

    @pytest.mark.parametrize("kwargs", [dict(K=1), dict(n=50), dict(K=4, effect_spec=EffectSpec.default(3)), dict(loss_bias=(1.0,))])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            policy_learning_demo(**kwargs)
