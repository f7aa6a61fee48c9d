import math
from functools import lru_cache

import numpy as np
import pytest
from scipy import integrate

from conftest import replicate
from masspart.campaign import REPRESENTATIONS, get_representation, run_representation
from masspart.config import APPROX_GATE, EXACT_GATE, SUITE_SEED
from masspart.errors import IncompatibleParamsError, InvalidParameterError
from masspart.partition import Order, size_biased_permutation, sort_nonincreasing
from masspart.randkit import beta_cdf, exponential_cdf, gamma_cdf, uniform_cdf
from masspart.representations import (
    PdParams,
    RamParams,
    biased_exponential_cdf,
    brute_force_tail,
    closure_shape,
    mvee_tail_mean,
    nu_vee_tail,
    pd_to_ram,
    ram_sequences,
    sample_biased_exponential,
    sample_dickman_partition,
    sample_mvee,
    sample_pd0_exp_weights,
    sample_pd0_limit_of_mvee,
    sample_pd_stable_points,
    sample_pd_theta_biased,
    sample_pd_theta_mixed_poisson,
    sample_ram0_biased_exp,
    sample_ram_perpetuity,
    sample_ram_stick,
    sample_ram_stick_until,
    sample_xi_thinned,
)
from masspart.stattest import correlation_check, ks_one_sample, ks_two_sample

HALF = RamParams(0.5, 0.5, 0.5)
MATRIX_PD = ((0.5, 0.0), (0.5, 0.5), (0.3, 0.7), (0.0, 1.0), (0.0, 2.5))
N_MATRIX = 10_000
MATRIX_POINTS = 2000


def first_atom(sampler):
    return lambda s: sampler(s).atoms[0]


def size_biased_first(sampler, tolerance=0.05):
    return lambda s: size_biased_permutation(sampler(s), s, residual_tolerance=tolerance, method="race").atoms[0]


class TestParams:
    def test_pd_to_ram(self):
        assert pd_to_ram(PdParams(0.5, 0.0)) == RamParams(0.5, 0.5, 0.5)
        assert pd_to_ram(PdParams(0.0, 2.0)) == RamParams(0.0, 2.0, 1.0)
        ram = pd_to_ram(PdParams(0.3, -0.1))
        assert (ram.alpha, ram.a1, ram.c) == pytest.approx((0.3, 0.2, 0.7))

    def test_sequences(self):
        a, b, c = ram_sequences(RamParams(0.5, 1.0, 2.0), 4)
        np.testing.assert_allclose(a, [1.0, 1.5, 2.0, 2.5])
        np.testing.assert_allclose(b, [2.5] * 4)
        np.testing.assert_allclose(c, [2.0] * 4)

    @pytest.mark.parametrize("args", [(-0.1, 1.0, 1.0), (0.5, 0.0, 1.0), (0.5, 1.0, -2.0)])
    def test_invalid_ram(self, args):
        with pytest.raises(InvalidParameterError):
            RamParams(*args)

    @pytest.mark.parametrize("args", [(1.0, 0.0), (0.5, -0.5), (-0.1, 1.0)])
    def test_invalid_pd(self, args):
        with pytest.raises(InvalidParameterError):
            PdParams(*args)

    def test_closure_shape_follows_a_n(self):
        assert closure_shape(HALF, 1) == 0.5
        assert closure_shape(HALF, 4) == 2.0


class TestStickBreaking:
    def test_first_atom_arcsine(self):
        draws = replicate(first_atom(lambda s: sample_ram_stick(HALF, 1, s)), lane=10)
        assert ks_one_sample(draws, beta_cdf(0.5, 0.5)).p_value >= EXACT_GATE

    def test_sums_to_one(self, stream):
        p = sample_ram_stick(RamParams(0.7, 0.4, 1.3), 300, stream)
        assert abs(math.fsum(p.atoms) + p.residual - 1.0) <= 1e-12
        assert p.order is Order.SIZE_BIASED

    def test_alpha_beyond_one_second_stick(self):
        params = RamParams(2.0, 1.0, 3.0)

        def y2(s):
            p = sample_ram_stick(params, 2, s)
            return p.atoms[1] / (1.0 - p.atoms[0])

        assert ks_one_sample(replicate(y2, lane=11), beta_cdf(3.0, 3.0)).p_value >= EXACT_GATE

    def test_grows_until_residual(self, stream):
        p = sample_ram_stick_until(RamParams(0.5, 1.0, 0.5), 1e-4, stream)
        assert p.residual < 1e-4


class TestPerpetuity:
    def test_denominator_is_gamma(self):
        draws = replicate(lambda s: sample_ram_perpetuity(HALF, 5, s).scale, lane=20)
        assert ks_one_sample(draws, exponential_cdf).p_value >= EXACT_GATE

    def test_first_atom_matches_stick(self):
        perp = replicate(first_atom(lambda s: sample_ram_perpetuity(HALF, 3, s)), lane=21)
        stick = replicate(first_atom(lambda s: sample_ram_stick(HALF, 3, s)), lane=22)
        assert ks_two_sample(perp, stick).p_value >= EXACT_GATE

    def test_single_term_closure_is_beta(self):
        params = RamParams(0.3, 1.7, 0.8)
        draws = replicate(first_atom(lambda s: sample_ram_perpetuity(params, 1, s)), lane=23)
        assert ks_one_sample(draws, beta_cdf(0.8, 1.7)).p_value >= EXACT_GATE

    @pytest.mark.parametrize("n", [3, 4])
    def test_brute_force_tail_matches_closure_shape(self, n):
        tails = replicate(lambda s: brute_force_tail(HALF, n, 1000, s), n=10_000, lane=24 + n)
        assert ks_one_sample(tails, gamma_cdf(closure_shape(HALF, n))).p_value >= EXACT_GATE

    @pytest.mark.parametrize("j", [0, 1])
    def test_alpha_beyond_one_matches_stick(self, j):
        params = RamParams(1.5, 1.0, 2.0)
        perp = replicate(lambda s: sample_ram_perpetuity(params, 2, s).atoms[j], lane=30)
        stick = replicate(lambda s: sample_ram_stick(params, 2, s).atoms[j], lane=31)
        assert ks_two_sample(perp, stick).p_value >= EXACT_GATE

    def test_deep_prefix_does_not_underflow(self, stream):
        p = sample_ram_perpetuity(RamParams(0.05, 0.1, 0.2), 5000, stream)
        assert np.all(np.isfinite(p.atoms))
        assert abs(p.total - 1.0) <= 1e-9

    def test_without_closure_residual_zero(self, stream):
        p = sample_ram_perpetuity(HALF, 10, stream, tail_closure=False)
        assert p.residual == 0.0
        assert p.approximate


class TestStablePoints:
    def test_consecutive_ratio_is_beta(self):
        def ratio(s):
            p = sample_pd_stable_points(0.5, 2, s)
            return p.atoms[1] / p.atoms[0]

        assert ks_one_sample(replicate(ratio, lane=40), beta_cdf(0.5, 1.0)).p_value >= EXACT_GATE

    def test_largest_atom_matches_sorted_stick(self):
        stable = replicate(lambda s: sample_pd_stable_points(0.5, 2000, s).atoms[0], n=5000, lane=41)
        stick = replicate(
            lambda s: sort_nonincreasing(sample_ram_stick_until(HALF, 1e-3, s)).atoms[0], n=5000, lane=42
        )
        assert ks_two_sample(stable, stick).p_value >= APPROX_GATE

    def test_residual_shrinks_with_depth(self, stream):
        shallow = np.mean(replicate(lambda s: sample_pd_stable_points(0.5, 1000, s).residual, n=300, lane=43))
        deep = np.mean(replicate(lambda s: sample_pd_stable_points(0.5, 10_000, s).residual, n=300, lane=43))
        assert deep < shallow < 0.1

    def test_nonincreasing_and_flagged(self, stream):
        p = sample_pd_stable_points(0.3, 100, stream)
        assert p.order is Order.NONINCREASING and p.approximate

    def test_alpha_one_rejected(self, stream):
        with pytest.raises(InvalidParameterError):
            sample_pd_stable_points(1.0, 10, stream)


class TestThetaBiased:
    def test_first_atom_beta(self):
        draws = replicate(first_atom(lambda s: sample_pd_theta_biased(PdParams(0.5, 0.5), 1, s)), lane=50)
        assert ks_one_sample(draws, beta_cdf(0.5, 1.0)).p_value >= EXACT_GATE

    def test_second_atom_matches_stick(self):
        biased = replicate(lambda s: sample_pd_theta_biased(PdParams(0.5, 0.5), 3, s).atoms[1], lane=51)
        stick = replicate(lambda s: sample_ram_stick(RamParams(0.5, 1.0, 0.5), 3, s).atoms[1], lane=52)
        assert ks_two_sample(biased, stick).p_value >= EXACT_GATE

    def test_theta_zero_matches_stable_points(self):
        biased = replicate(first_atom(lambda s: sample_pd_theta_biased(PdParams(0.5, 0.0), 2, s)), lane=53)
        stable = replicate(size_biased_first(lambda s: sample_pd_stable_points(0.5, 2000, s)), lane=54)
        assert ks_two_sample(biased, stable).p_value >= APPROX_GATE

    def test_alpha_zero_rejected(self, stream):
        with pytest.raises(InvalidParameterError):
            sample_pd_theta_biased(PdParams(0.0, 1.0), 3, stream)


class TestExponentialWeights:
    def test_first_atom_uniform(self):
        draws = replicate(first_atom(lambda s: sample_pd0_exp_weights(1.0, 1, s)), lane=60)
        assert ks_one_sample(draws, uniform_cdf).p_value >= EXACT_GATE

    def test_matches_stick(self):
        expw = replicate(lambda s: sample_pd0_exp_weights(2.5, 2, s).atoms[1], lane=61)
        stick = replicate(lambda s: sample_ram_stick(RamParams(0.0, 2.5, 1.0), 2, s).atoms[1], lane=62)
        assert ks_two_sample(expw, stick).p_value >= EXACT_GATE

    def test_denominator_gamma(self):
        draws = replicate(lambda s: sample_pd0_exp_weights(2.5, 4, s).scale, lane=63)
        assert ks_one_sample(draws, gamma_cdf(3.5)).p_value >= EXACT_GATE


class TestBiasedExponential:
    def test_unit_c_matches_exponential_weights(self):
        biased = replicate(first_atom(lambda s: sample_ram0_biased_exp(1.7, 1.0, 2, s)), lane=70)
        expw = replicate(first_atom(lambda s: sample_pd0_exp_weights(1.7, 2, s)), lane=71)
        assert ks_two_sample(biased, expw).p_value >= EXACT_GATE

    def test_first_atom_beta(self):
        draws = replicate(first_atom(lambda s: sample_ram0_biased_exp(2.0, 3.0, 1, s)), lane=72)
        assert ks_one_sample(draws, beta_cdf(3.0, 2.0)).p_value >= EXACT_GATE

    def test_transform_is_beta(self, stream):
        d = sample_biased_exponential(2.0, 3.0, stream, size=50_000)
        assert ks_one_sample(np.exp(-d / 2.0), beta_cdf(2.0, 3.0)).p_value >= EXACT_GATE

    def test_density_normalizes_and_matches_cdf(self, stream):
        a, c = 2.0, 3.0
        norm = math.gamma(a) * math.gamma(c) / math.gamma(a + c)

        def density(x):
            return math.exp(-x) * (-math.expm1(-x / a)) ** (c - 1) / (a * norm)

        total, _ = integrate.quad(density, 0.0, np.inf)
        assert total == pytest.approx(1.0, abs=1e-8)
        partial_mass, _ = integrate.quad(density, 0.0, 1.5)
        assert biased_exponential_cdf(a, c)(1.5) == pytest.approx(partial_mass, abs=1e-8)


class TestMvee:
    def test_exceedance_count_matches_intensity(self):
        counts = replicate(lambda s: np.count_nonzero(sample_mvee(0.5, 1.0, 200, s).sizes > 0.1), n=10_000, lane=80)
        expected = nu_vee_tail(0.5, 0.1)
        # Poisson counts: variance equals the mean
        z = (counts.mean() - expected) / math.sqrt(expected / counts.size)
        assert abs(z) <= 5

    def test_vanishing_intensity(self):
        counts = replicate(lambda s: np.count_nonzero(sample_mvee(0.5, 1e-6, 50, s).sizes > 0.1), n=1000, lane=81)
        assert counts.sum() == 0

    def test_truncation_record(self, stream):
        pts = sample_mvee(0.4, 2.0, 30, stream)
        assert pts.truncation_level["n_points"] == 30
        assert pts.truncation_level["tail_mean"] == pytest.approx(
            mvee_tail_mean(0.4, 2.0, pts.truncation_level["gamma_n"])
        )
        assert np.all(pts.sizes > 0)


class TestNuVeeTail:
    def test_far_tail(self):
        assert nu_vee_tail(0.5, 50.0) < 1e-15

    def test_against_quadrature(self):
        alpha = 0.5
        value, _ = integrate.quad(lambda x: alpha / math.gamma(1 - alpha) * x ** (-alpha - 1) * math.exp(-x), 1.0, np.inf)
        assert nu_vee_tail(alpha, 1.0) == pytest.approx(value, abs=1e-8)

    def test_decreasing(self):
        values = [nu_vee_tail(0.3, u) for u in np.linspace(0.01, 10.0, 100)]
        assert all(b < a for a, b in zip(values, values[1:]))


class TestXiThinned:
    @pytest.fixture(scope="class")
    def draws(self):
        def one(s):
            d = sample_xi_thinned(0.5, 1000, s)
            return [d.partition.atoms[0], d.partition.atoms[1], d.a_frac, d.gamma_total]
        return replicate(one, lane=90)

    def test_age_fraction_arcsine(self, draws):
        assert ks_one_sample(draws[:, 2], beta_cdf(0.5, 0.5), APPROX_GATE).passed

    def test_gamma_total_exponential(self, draws):
        assert ks_one_sample(draws[:, 3], exponential_cdf).p_value >= EXACT_GATE

    def test_first_atom_matches_stick(self, draws):
        stick = replicate(first_atom(lambda s: sample_ram_stick(HALF, 1, s)), lane=91)
        assert ks_two_sample(draws[:, 0], stick).p_value >= APPROX_GATE

    def test_gamma_independent_of_partition(self, draws):
        assert correlation_check(draws[:, 3], draws[:, 1]).passed
        assert correlation_check(draws[:, 3], draws[:, 2]).passed

    def test_tiny_alpha_keeps_finite_log_overshoot(self):
        def one(s):
            d = sample_xi_thinned(0.01, 20, s)
            return [d.b_over_gamma, d.log_b_over_gamma]
        draws = replicate(one, lane=92)
        b, log_b = draws[:, 0], draws[:, 1]
        assert np.all(np.isfinite(log_b))
        overflow = np.isinf(b)
        assert overflow.any()
        assert np.all(log_b[overflow] > math.log(np.finfo(float).max))
        np.testing.assert_allclose(np.log(b[~overflow]), log_b[~overflow], rtol=1e-12, atol=1e-12)

    def test_age_atom_comes_first(self, stream):
        d = sample_xi_thinned(0.3, 50, stream)
        assert d.partition.atoms[0] == pytest.approx(d.a_frac)
        assert d.partition.order is Order.CONSTRUCTION and d.partition.approximate


class TestDickman:
    def test_first_interval_beta(self):
        draws = replicate(first_atom(lambda s: sample_dickman_partition(2.0, 1, s)), lane=100)
        assert ks_one_sample(draws, beta_cdf(1.0, 2.0)).p_value >= EXACT_GATE

    def test_telescopes(self, stream):
        p = sample_dickman_partition(0.7, 200, stream)
        assert abs(math.fsum(p.atoms) + p.residual - 1.0) <= 1e-12

    @pytest.mark.parametrize("j", [0, 1])
    def test_matches_exponential_weights(self, j):
        dickman = replicate(lambda s: sample_dickman_partition(2.5, 2, s).atoms[j], lane=101)
        expw = replicate(lambda s: sample_pd0_exp_weights(2.5, 2, s).atoms[j], lane=102)
        assert ks_two_sample(dickman, expw).p_value >= EXACT_GATE


class TestMixedPoisson:
    def test_matches_stick(self):
        pd = PdParams(0.5, 0.5)
        mixed = replicate(size_biased_first(lambda s: sample_pd_theta_mixed_poisson(pd, 2000, s)), lane=110)
        stick = replicate(first_atom(lambda s: sample_ram_stick(pd_to_ram(pd), 1, s)), lane=111)
        assert ks_two_sample(mixed, stick).p_value >= APPROX_GATE

    def test_requires_positive_theta(self, stream):
        with pytest.raises(InvalidParameterError):
            sample_pd_theta_mixed_poisson(PdParams(0.5, 0.0), 10, stream)


class TestAlphaZeroLimit:
    @pytest.fixture(scope="class")
    def reference(self):
        return replicate(first_atom(lambda s: sample_pd0_exp_weights(1.0, 1, s)), n=50_000, lane=120)

    def limit_statistic(self, alpha, reference, lane):
        sampler = size_biased_first(lambda s: sample_pd0_limit_of_mvee(1.0, alpha, 400, s))
        return ks_two_sample(replicate(sampler, n=50_000, lane=lane), reference).statistic

    def test_close_to_pd0(self, reference):
        assert self.limit_statistic(0.01, reference, 121) < 0.02

    def test_sweep_nonincreasing(self, reference):
        stats = [self.limit_statistic(a, reference, 122 + i) for i, a in enumerate((0.05, 0.02, 0.01))]
        se = 1.0 / math.sqrt(25_000)
        assert all(later <= earlier + 2 * se for earlier, later in zip(stats, stats[1:]))

    def test_sums_to_one(self, stream):
        p = sample_pd0_limit_of_mvee(1.0, 0.02, 400, stream)
        assert abs(p.total - 1.0) <= 1e-12

    def test_alpha_range(self, stream):
        with pytest.raises(InvalidParameterError):
            sample_pd0_limit_of_mvee(1.0, 0.1, 100, stream)


def matrix_cases():
    for pd in MATRIX_PD:
        params = pd_to_ram(PdParams(*pd))
        for name, rep in REPRESENTATIONS.items():
            if name == "ram-stick":
                continue
            try:
                rep.validate(params)
            except IncompatibleParamsError:
                continue
            yield pytest.param(name, pd, id=f"{name}-PD{pd[0]},{pd[1]}")


MATRIX_CASES = list(matrix_cases())


@lru_cache(maxsize=None)
def stick_reference(pd):
    lane = 300 + MATRIX_PD.index(pd)
    return run_representation("ram-stick", pd_to_ram(PdParams(*pd)), 2, N_MATRIX, SUITE_SEED, lane=lane)


class TestEquivalenceMatrix:
    """First two size-biased atoms of every applicable sampler against stick-breaking."""

    def test_every_family_has_alternatives(self):
        covered = {pd for _, pd in (case.values for case in MATRIX_CASES)}
        assert covered == set(MATRIX_PD)

    @pytest.mark.parametrize("name, pd", MATRIX_CASES)
    def test_first_two_atoms_match_stick(self, name, pd):
        rep = get_representation(name)
        lane = 310 + len(MATRIX_PD) * list(REPRESENTATIONS).index(name) + MATRIX_PD.index(pd)
        rows = run_representation(name, pd_to_ram(PdParams(*pd)), 2, N_MATRIX, SUITE_SEED, lane=lane,
                                  points=MATRIX_POINTS, size_biased=True)
        reference = stick_reference(pd)
        # Bonferroni over the whole matrix, as the certification groups do.
        gate = (EXACT_GATE if rep.exact else APPROX_GATE) / (2 * len(MATRIX_CASES))
        for j in range(2):
            assert ks_two_sample(rows[:, j], reference[:, j], gate).passed, f"atom{j + 1}"

    def test_mixed_poisson_does_not_degrade_with_more_points(self):
        pd = (0.3, 0.7)
        reference = stick_reference(pd)[:, 0]
        stats = [
            ks_two_sample(
                run_representation("pd-mixed", pd_to_ram(PdParams(*pd)), 1, N_MATRIX, SUITE_SEED,
                                   lane=400 + i, points=points, size_biased=True)[:, 0],
                reference,
            ).statistic
            for i, points in enumerate((100, 200))
        ]
        se = 1.0 / math.sqrt(N_MATRIX / 2.0)
        assert stats[1] <= stats[0] + 2.0 * se
