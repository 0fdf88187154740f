"""Sampling of the point process: stream reproducibility, count statistics,
mixtures, the closed-form exponential mean, and quadrature of the intensity."""

import numpy as np
import pytest
from scipy import stats as sps

from markcfg import fields as fl
from markcfg.calculus import exp_functional, linear_functional
from markcfg.configuration import ConfigBatch
from markcfg.errors import ConfigError, NumericsError, UsageError
from markcfg.flows import Window
from markcfg.intensity import (
    CircleUniform,
    ConstantDensity,
    GaussianDensity,
    IntensityModel,
    MixingLaw,
)
from markcfg.marks import get_marks
from markcfg.sampling import (
    SampleStreams,
    mc_estimate,
    mean_and_se,
    sample_batch,
    sample_configuration,
    sample_mixed_configuration,
)
from markcfg.scenarios import build_scenario, random_test_field


class TestStreams:
    def test_state_reset_equals_fresh_generator(self):
        streams = SampleStreams(987654321)
        for i in (0, 1, 17, 2**40):
            g = streams.generator(i)
            got = (g.uniform(), g.poisson(3.0), g.standard_normal())
            fresh = np.random.Generator(
                np.random.Philox(key=np.array([987654321, i], dtype=np.uint64))
            )
            want = (fresh.uniform(), fresh.poisson(3.0), fresh.standard_normal())
            assert got == want

    def test_bad_seed_rejected(self):
        with pytest.raises(UsageError):
            SampleStreams(-1)


class TestTotalMass:
    def test_constant_density(self):
        model = build_scenario("circle-mass2")
        assert model.total_mass() == pytest.approx(2.0, abs=1e-12)

    def test_gaussian_density(self):
        model = build_scenario("gauss-hermite")
        assert model.total_mass() == pytest.approx(np.sqrt(2 * np.pi), abs=1e-8)

    def test_shrinking_window_limit(self):
        tiny = build_scenario("circle-mass2", {"window": (0.5, 0.5 + 1e-9)})
        assert tiny.total_mass() == pytest.approx(2e-9, abs=1e-15)


class TestSampling:
    def test_count_moments(self):
        model = build_scenario("circle-mass2")
        batch, _ = sample_batch(model, 100_000, seed=31)
        counts = batch.counts.astype(float)
        mean = mean_and_se(counts)
        assert mean.within(2.0)
        var = counts.var(ddof=1)
        se_var = np.sqrt(max(np.mean((counts - counts.mean()) ** 4) - var**2, 0) / len(counts))
        assert abs(var - 2.0) <= 4 * se_var

    def test_chi2_fit(self):
        model = build_scenario("circle-mass2")
        batch, _ = sample_batch(model, 50_000, seed=32)
        counts = batch.counts
        kmax = counts.max()
        obs = np.bincount(counts, minlength=kmax + 2).astype(float)
        exp = 50_000 * sps.poisson.pmf(np.arange(kmax + 2), 2.0)
        exp[-1] = 50_000 - exp[:-1].sum()
        keep = exp >= 5
        stat = np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep])
        assert stat < sps.chi2.ppf(1 - 1e-3, keep.sum() - 1)

    def test_positions_follow_restricted_density(self):
        class LeftHalf:
            def value(self, x):
                x = np.asarray(x)
                return np.where(x[..., 0] < 0.5, 4.0, 0.0)

            def log_grad_fields(self, dim):
                return [fl.ZERO]

            def bound(self, window):
                return 4.0

        model = IntensityModel(
            get_marks("circle"), Window([0.0], [1.0]), LeftHalf(), CircleUniform()
        )
        batch, _ = sample_batch(model, 2000, seed=3)
        assert batch.points.shape[0] > 0
        assert np.all(batch.points[:, 0] < 0.5)

    def test_rejection_bound_violation_names_point(self):
        class Lying:
            def value(self, x):
                x = np.asarray(x)
                return np.full(x.shape[:-1], 3.0)

            def log_grad_fields(self, dim):
                return [fl.ZERO]

            def bound(self, window):
                return 1.0  # deliberately below the true maximum

        model = IntensityModel(
            get_marks("circle"), Window([0.0], [1.0]), Lying(), CircleUniform()
        )
        with pytest.raises(ConfigError, match="rho"):
            sample_batch(model, 50, seed=3)

    def test_marks_land_in_model_space(self):
        for name in ("circle-mass2", "dilation-gamma", "sphere-vmf"):
            model = build_scenario(name)
            batch, _ = sample_batch(model, 500, seed=8)
            if name == "circle-mass2":
                assert np.all((batch.marks >= 0) & (batch.marks < 2 * np.pi))
            elif name == "dilation-gamma":
                assert np.all(batch.marks > 0)
            else:
                assert np.max(np.abs(np.linalg.norm(batch.marks, axis=1) - 1)) < 1e-12

    def test_single_draw_api(self):
        model = build_scenario("dilation-gamma")
        streams = SampleStreams(5)
        om = sample_configuration(model, streams.generator(0))
        assert om.dim == 1 and om.mark_dim == 1


class TestMixing:
    def test_point_mass_zero_gives_empty(self):
        model = build_scenario("circle-mass2")
        batch, scales = sample_batch(model, 200, seed=4, mixing=MixingLaw.point(0.0))
        assert np.all(scales == 0.0)
        assert np.all(batch.counts == 0)

    def test_point_mass_one_matches_plain(self):
        model = build_scenario("circle-mass2")
        plain, _ = sample_batch(model, 300, seed=5)
        mixed, _ = sample_batch(model, 300, seed=5, mixing=MixingLaw.point(1.0))
        # streams differ (the mixture draws the scale first), so compare laws
        assert abs(plain.counts.mean() - mixed.counts.mean()) < 0.4

    def test_two_point_mixture_mean(self):
        model = build_scenario("circle-mass2")
        law = MixingLaw.discrete([1.0, 2.0], [0.5, 0.5])
        batch, _ = sample_batch(model, 100_000, seed=6, mixing=law)
        res = mean_and_se(batch.counts.astype(float))
        assert res.within(3.0)

    def test_gamma_mixing(self):
        law = MixingLaw.gamma(4.0, 2.0)
        assert law.mean() == pytest.approx(2.0)
        model = build_scenario("circle-mass2")
        batch, scales = sample_batch(model, 20_000, seed=7, mixing=law)
        assert mean_and_se(scales).within(2.0)

    def test_single_mixed_draw(self):
        model = build_scenario("circle-mass2")
        streams = SampleStreams(11)
        om = sample_mixed_configuration(model, MixingLaw.point(0.0), streams.generator(0))
        assert len(om) == 0

    def test_bad_mixing_laws(self):
        with pytest.raises(ConfigError):
            MixingLaw.discrete([1.0], [0.7])
        with pytest.raises(ConfigError):
            MixingLaw.discrete([-1.0], [1.0])
        with pytest.raises(ConfigError):
            MixingLaw.gamma(-1.0, 1.0)


class TestLaplace:
    def test_zero_function_gives_one(self):
        model = build_scenario("circle-mass2")
        assert model.laplace_closed(fl.ZERO) == pytest.approx(1.0)

    def test_mass2_constant_log2(self):
        model = build_scenario("circle-mass2")
        phi = fl.XPoly(1, {(0,): np.log(2.0)})
        assert model.laplace_closed(phi) == pytest.approx(np.exp(2.0), rel=1e-9)

    def test_mc_agrees_with_closed_form(self, rng):
        model = build_scenario("circle-mass2")
        phi = random_test_field(model, rng)
        res = mc_estimate(exp_functional(phi), model, 50_000, seed=12)
        assert res.within(model.laplace_closed(phi))

    def test_first_moment_is_intensity_integral(self):
        # mean of the pairing equals the integral of the function
        model = build_scenario("circle-mass2")
        one = fl.XPoly(1, {(0,): 1.0})
        res = mc_estimate(linear_functional(one), model, 50_000, seed=13)
        assert res.within(2.0)


class TestIndependence:
    def test_disjoint_windows_uncorrelated(self):
        model = build_scenario("circle-mass2")
        batch, _ = sample_batch(model, 100_000, seed=14)
        left = fl.XBump([0.25], 0.24, {(0,): 1.0})
        right = fl.XBump([0.75], 0.24, {(0,): 1.0})
        a = linear_functional(left).batch_values(batch)
        b = linear_functional(right).batch_values(batch)
        prod = mean_and_se(a * b)
        cov = prod.mean - a.mean() * b.mean()
        assert abs(cov) <= 4 * prod.se


class TestDeterminism:
    def test_same_seed_same_blocks_bitwise(self):
        model = build_scenario("dilation-gamma")
        phi = fl.mul_fields(fl.XBump([0.5], 0.3), fl.RayPolyExp({(1.0, -1.0): 1.0}))
        F = exp_functional(phi)
        r1 = mc_estimate(F, model, 10_000, seed=77, block_size=1024)
        r2 = mc_estimate(F, model, 10_000, seed=77, block_size=1024)
        assert r1.mean == r2.mean and r1.se == r2.se

    def test_per_sample_values_independent_of_batching(self):
        model = build_scenario("circle-mass2")
        a, _ = sample_batch(model, 64, seed=21)
        b1, _ = sample_batch(model, 32, seed=21, start_index=0)
        b2, _ = sample_batch(model, 32, seed=21, start_index=32)
        assert np.array_equal(a.points, np.vstack([b1.points, b2.points]))
        assert np.array_equal(a.marks, np.vstack([b1.marks, b2.marks]))

    def test_mc_requires_two_samples(self):
        model = build_scenario("circle-mass2")
        with pytest.raises(UsageError):
            mc_estimate(lambda om: 1.0, model, 1, seed=1)

    def test_constant_functional_zero_se(self):
        model = build_scenario("circle-mass2")
        res = mc_estimate(lambda om: 3.25, model, 100, seed=1)
        assert res.mean == pytest.approx(3.25) and res.se == 0.0


class TestQuadrature:
    def test_expectation_respects_support(self, rng):
        model = build_scenario("circle-mass2")
        phi = random_test_field(model, rng)
        full = model.expectation(phi)
        # expanding the integration range beyond the support changes nothing
        wide = model.expectation(phi.value, support_box=None)
        assert full == pytest.approx(wide, abs=1e-10)

    def test_inner_product_symmetry(self, rng):
        model = build_scenario("dilation-gamma")
        f = random_test_field(model, rng)
        g = random_test_field(model, rng, near=0.5 * (f.support_box[0] + f.support_box[1]))
        assert model.inner(f, g) == pytest.approx(model.inner(g, f), rel=1e-12)

    def test_dim2_expectation_unsupported(self):
        model = IntensityModel(
            get_marks("circle"),
            Window([0.0, 0.0], [1.0, 1.0]),
            ConstantDensity(2.0),
            CircleUniform(),
        )
        assert model.total_mass() == pytest.approx(2.0)
        with pytest.raises(UsageError):
            model.expectation(fl.XPoly(2, {(0, 0): 1.0}))
