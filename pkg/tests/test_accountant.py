"""Accountant tests: closed-form oracles for tau and the DP conversion,
branch selection, calibration round trips, budget-driven gamma selection,
and dropout degradation.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddgauss.accountant import (
    CommBudget,
    PrivacyReport,
    calibrate_sigma,
    choose_gamma,
    compose,
    dropout_epsilon,
    epsilon_zcdp,
    privacy_report,
    tau,
    zcdp_to_dp,
    _smallest_feasible,
)
from ddgauss.rounding import RoundingParams, delta2_bound

BETA_DEFAULT = math.exp(-0.5)


class TestTau:
    def test_single_client_has_no_penalty(self):
        assert tau(1.0, 1) == 0.0

    def test_two_clients_single_term(self):
        # n = 2 leaves one term: 10 e^(-2 pi^2 s^2 / 2) at s^2 = 3.  The
        # same quantity over 10 bounds the two-Gaussian divergence, which
        # must come out below 1e-12 at this scale.
        value = tau(math.sqrt(3.0), 2)
        assert value == pytest.approx(10.0 * math.exp(-3.0 * math.pi**2), rel=1e-12)
        assert value / 10.0 <= 1e-12

    def test_matches_direct_summation(self):
        # Chunked evaluation against a one-shot vectorized sum.
        for sigma_grid, n in ((0.5, 1_000_000), (0.7, 1_000), (1.5, 17)):
            ks = np.arange(1, n, dtype=np.float64)
            direct = 10.0 * float(
                np.exp(-2.0 * math.pi**2 * sigma_grid**2 * ks / (ks + 1.0)).sum()
            )
            assert tau(sigma_grid, n) == pytest.approx(direct, rel=1e-12)

    def test_truncates_long_flat_tail(self):
        # At s = 5 the terms collapse within a few k, so n = 1e9 must both
        # return instantly and agree with a short prefix of the series.
        big = tau(5.0, 10**9)
        ks = np.arange(1, 201, dtype=np.float64)
        prefix = 10.0 * float(np.exp(-50.0 * math.pi**2 * ks / (ks + 1.0)).sum())
        assert big == pytest.approx(prefix, rel=1e-25)

    @given(
        sigma_grid=st.floats(0.5, 4.0),
        n=st.integers(1, 500),
    )
    @settings(max_examples=200, deadline=None)
    def test_coarse_bound_and_monotonicity(self, sigma_grid, n):
        value = tau(sigma_grid, n)
        assert 0.0 <= value <= 10.0 * (n - 1) * math.exp(-math.pi**2 * sigma_grid**2) + 1e-300
        assert value <= tau(sigma_grid, n + 1)
        assert value >= tau(sigma_grid + 0.25, n)

    def test_validation(self):
        with pytest.raises(ValueError, match="at least 1/2"):
            tau(0.49, 5)
        with pytest.raises(ValueError, match="positive integer"):
            tau(1.0, 0)


class TestEpsilonZcdp:
    def test_unit_scale_ten_thousand_clients(self):
        # sigma = delta2 = gamma = 1, n = 1e4, d = 1 must land under 0.02,
        # and only the additive branch gets there (the quadrature branch
        # alone evaluates to ~0.0225).
        eps, branch = epsilon_zcdp(1.0, 1.0, 1.0, 10_000, 1)
        assert eps < 0.02
        assert branch == "additive"

    def test_single_client_collapses_to_gaussian(self):
        # n = 1 has no convolution penalty: both branches equal delta2/sigma.
        eps, _ = epsilon_zcdp(2.0, 4.0, 1.0, 1, 128)
        assert eps == pytest.approx(0.5, rel=1e-15)

    def test_min_selection_against_direct_evaluation(self):
        delta2, sigma, gamma, n, d = 1.0, 1.0, 1.0 / 3.0, 100, 1000
        t = tau(sigma / gamma, n)
        quadrature = math.sqrt(delta2**2 / (n * sigma**2) + 0.5 * t * d)
        additive = delta2 / (math.sqrt(n) * sigma) + t * math.sqrt(d)
        eps, branch = epsilon_zcdp(delta2, sigma, gamma, n, d)
        assert eps == min(quadrature, additive)
        assert eps == {"quadrature": quadrature, "additive": additive}[branch]

    def test_quadrature_branch_wins_in_low_dimension(self):
        # Branch crossover sits near d = 16 delta2^2/(n sigma^2); below it
        # the quadrature form is smaller.
        eps, branch = epsilon_zcdp(1.0, 1.0, 1.0, 2, 4)
        t = tau(1.0, 2)
        assert branch == "quadrature"
        assert eps == pytest.approx(math.sqrt(0.5 + 0.5 * t * 4), rel=1e-15)

    def test_cross_branch_with_l1_sensitivity(self):
        # A tight l1 bound beats both default branches when tau is small
        # but d is large.
        delta2, sigma, gamma, n, d, delta1 = 1.0, 1.0, 1.0, 4, 100, 5.0
        t = tau(1.0, 4)
        expected = math.sqrt(
            delta2**2 / (n * sigma**2) + 2.0 * delta1 * t / (math.sqrt(n) * sigma) + t**2 * d
        )
        eps, branch = epsilon_zcdp(delta2, sigma, gamma, n, d, delta1=delta1)
        assert branch == "cross"
        assert eps == pytest.approx(expected, rel=1e-15)

    def test_rejects_oversized_delta1(self):
        with pytest.raises(ValueError, match="delta1"):
            epsilon_zcdp(1.0, 1.0, 1.0, 4, 4, delta1=2.1)

    def test_rejects_small_noise_ratio(self):
        with pytest.raises(ValueError, match="at least 1/2"):
            epsilon_zcdp(1.0, 0.4, 1.0, 4, 4)

    def test_strictly_decreasing_and_continuous_in_sigma(self):
        sigmas = np.geomspace(0.5, 50.0, 400)
        eps = np.array([epsilon_zcdp(1.0, s, 1.0, 20, 64)[0] for s in sigmas])
        assert np.all(np.diff(eps) < 0)
        nudged = np.array(
            [epsilon_zcdp(1.0, s * (1 + 1e-9), 1.0, 20, 64)[0] for s in sigmas]
        )
        assert np.all(np.abs(nudged - eps) <= 1e-6 * eps)


class TestZcdpToDp:
    def _grid_minimum(self, rho, delta):
        u = np.linspace(-30.0, 30.0, 1_200_001)
        alpha = 1.0 + np.exp(u)
        log_inv_delta = -math.log(delta)
        f = (
            rho * alpha
            + (log_inv_delta - np.log(alpha)) / (alpha - 1.0)
            + np.log1p(-1.0 / alpha)
        )
        return float(f.min())

    def test_unit_epsilon_example(self):
        # eps = 1 (rho = 1/2) at delta = 1e-5: closed form is
        # 0.5 + sqrt(2 ln 1e5) ~ 5.2985; the optimized value sits well below.
        closed = 0.5 + math.sqrt(2.0 * math.log(1e5))
        value = zcdp_to_dp(0.5, 1e-5)
        assert value <= closed
        assert value < closed - 0.1
        assert value == pytest.approx(self._grid_minimum(0.5, 1e-5), abs=1e-6)

    @pytest.mark.parametrize("rho,delta", [(0.02, 1e-6), (2.0, 1e-10), (1e-4, 1e-3)])
    def test_matches_dense_grid_scan(self, rho, delta):
        value = zcdp_to_dp(rho, delta)
        grid = self._grid_minimum(rho, delta)
        assert value <= grid + 1e-9 * max(1.0, grid)
        assert value == pytest.approx(grid, abs=1e-6)

    def test_vanishes_with_rho(self):
        assert zcdp_to_dp(1e-18, 1e-5) <= 1e-8

    def test_never_exceeds_closed_form(self):
        for rho in np.geomspace(1e-8, 100.0, 30):
            for delta in (1e-12, 1e-6, 0.3):
                closed = rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))
                assert zcdp_to_dp(float(rho), delta) <= closed

    def test_monotone_on_grid(self):
        # Strict monotonicity holds away from the zero floor (tiny rho at
        # large delta certifies (0, delta)-DP and clamps whole cells to 0).
        rhos = np.geomspace(1e-6, 10.0, 20)
        deltas = np.geomspace(1e-12, 0.1, 20)
        table = np.array([[zcdp_to_dp(float(r), float(dl)) for dl in deltas] for r in rhos])
        diff_rho = np.diff(table, axis=0)
        assert np.all(diff_rho >= 0)  # nondecreasing in rho
        assert np.all(diff_rho[table[:-1, :] > 0] > 0)
        diff_delta = np.diff(table, axis=1)
        assert np.all(diff_delta <= 0)  # nonincreasing in delta
        assert np.all(diff_delta[table[:, 1:] > 0] < 0)

    def test_zero_floor_engages_where_infimum_is_negative(self):
        assert zcdp_to_dp(1e-6, 0.1) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError, match="rho"):
            zcdp_to_dp(0.0, 1e-5)
        with pytest.raises(ValueError, match="delta"):
            zcdp_to_dp(0.5, 1.0)


class TestCompose:
    def test_identity_and_linearity(self):
        assert compose(0.25, 1) == 0.25
        assert compose(1e-5, 1500) == pytest.approx(0.015, rel=1e-15)
        assert compose(compose(1e-4, 6), 7) == pytest.approx(compose(1e-4, 42), rel=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError, match="rounds"):
            compose(0.1, 0)
        with pytest.raises(ValueError, match="rho"):
            compose(0.0, 5)


class TestCalibrateSigma:
    N, D, C, GAMMA = 50, 32, 1.0, 0.05

    def _eps(self, sigma, gamma=GAMMA):
        bound = delta2_bound(self.C, RoundingParams(gamma=gamma, beta=BETA_DEFAULT, dim=self.D))
        return epsilon_zcdp(bound.delta2, sigma, gamma, self.N, self.D)[0]

    @pytest.mark.parametrize("target", [0.5, 1.0, 4.0])
    def test_round_trip(self, target):
        sigma = calibrate_sigma(target, self.C, self.GAMMA, BETA_DEFAULT, self.N, self.D)
        achieved = self._eps(sigma)
        assert achieved <= target
        assert achieved == pytest.approx(target, rel=1e-8)

    def test_negligible_tau_matches_branch_inversion(self):
        # With sigma/gamma in the hundreds, tau vanishes and the quadrature
        # branch inverts in closed form: sigma = delta2 / (sqrt(n) eps).
        target, gamma, n, d = 0.5, 1e-3, 100, 16
        bound = delta2_bound(self.C, RoundingParams(gamma=gamma, beta=BETA_DEFAULT, dim=d))
        sigma = calibrate_sigma(target, self.C, gamma, BETA_DEFAULT, n, d)
        assert sigma == pytest.approx(bound.delta2 / (math.sqrt(n) * target), rel=1e-3)

    def test_tighter_target_needs_more_noise(self):
        sigmas = [
            calibrate_sigma(t, self.C, self.GAMMA, BETA_DEFAULT, self.N, self.D)
            for t in (4.0, 2.0, 1.0, 0.5, 0.25)
        ]
        assert all(a < b for a, b in zip(sigmas, sigmas[1:]))

    def test_floors_at_half_gamma(self):
        sigma = calibrate_sigma(1e6, self.C, self.GAMMA, BETA_DEFAULT, self.N, self.D)
        assert sigma == self.GAMMA / 2.0

    def test_unachievable_target_reports_range(self):
        with pytest.raises(ValueError, match="unachievable"):
            calibrate_sigma(1e-12, self.C, self.GAMMA, BETA_DEFAULT, 4, self.D)


class TestChooseGamma:
    TARGET, C, N, D = 1.0, 1.0, 16, 64

    def _choose(self, bit_width, k, mode="general"):
        return choose_gamma(
            CommBudget(bit_width=bit_width, k=k, norm_mode=mode),
            self.TARGET,
            self.C,
            BETA_DEFAULT,
            self.N,
            self.D,
        )

    def test_more_bits_buy_finer_grids(self):
        gammas = [self._choose(b, 2.0)[0] for b in range(10, 21)]
        assert all(a > b for a, b in zip(gammas, gammas[1:]))

    def test_larger_k_coarsens_the_grid(self):
        gammas = [self._choose(16, k)[0] for k in (1.0, 2.0, 4.0, 8.0)]
        assert all(a < b for a, b in zip(gammas, gammas[1:]))

    def test_optimistic_norm_mode_is_finer(self):
        assert self._choose(14, 2.0, "optimistic")[0] <= self._choose(14, 2.0, "general")[0]

    def test_returned_point_is_tight_and_feasible(self):
        budget = CommBudget(bit_width=14, k=3.0)
        gamma, sigma, report = choose_gamma(
            budget, self.TARGET, self.C, BETA_DEFAULT, self.N, self.D
        )
        S = budget.sum_norm_bound(self.C, self.N)
        s = math.sqrt(S**2 / (gamma**2 * self.D) + self.N * (0.25 + sigma**2 / gamma**2))
        assert budget.k * s <= 2.0 ** (budget.bit_width - 1)
        assert report.eps_zcdp <= self.TARGET
        assert report.eps_zcdp == pytest.approx(self.TARGET, rel=1e-6)
        # Nothing meaningfully smaller is feasible.
        smaller = gamma * 0.99
        sig2 = calibrate_sigma(self.TARGET, self.C, smaller, BETA_DEFAULT, self.N, self.D)
        s2 = math.sqrt(S**2 / (smaller**2 * self.D) + self.N * (0.25 + sig2**2 / smaller**2))
        assert budget.k * s2 > 2.0 ** (budget.bit_width - 1)

    def test_infeasible_budget_reports_best_ratio(self):
        # k sqrt(n / 4) alone exceeds the range: nothing can fit.
        with pytest.raises(ValueError, match="ratio"):
            choose_gamma(CommBudget(bit_width=4, k=8.0), 1.0, 1.0, BETA_DEFAULT, 100, 4)

    def test_budget_validation(self):
        with pytest.raises(ValueError, match="bit_width"):
            CommBudget(bit_width=0, k=2.0)
        with pytest.raises(ValueError, match="k must"):
            CommBudget(bit_width=10, k=0.0)
        with pytest.raises(ValueError, match="norm_mode"):
            CommBudget(bit_width=10, k=2.0, norm_mode="hopeful")


class TestSmallestFeasible:
    def test_monotone_threshold(self):
        result = _smallest_feasible(lambda g: g >= 3.7, 0.01, 100.0)
        assert result == pytest.approx(3.7, rel=1e-4)
        assert result >= 3.7

    def test_non_monotone_window(self):
        feasible = lambda g: 2.0 <= g <= 3.0 or g >= 5.0
        result = _smallest_feasible(feasible, 0.1, 10.0)
        assert result == pytest.approx(2.0, rel=1e-4)
        assert feasible(result)

    def test_all_infeasible_returns_none(self):
        assert _smallest_feasible(lambda g: False, 0.1, 10.0) is None


class TestDropout:
    ARGS = dict(delta2=1.0, sigma=0.3, gamma=0.05, n=100, d=8)

    def test_zero_dropout_is_identity(self):
        base, _ = epsilon_zcdp(**self.ARGS)
        assert dropout_epsilon(drop_fraction=0.0, **self.ARGS) == base

    def test_strictly_increasing_in_dropout(self):
        values = [
            dropout_epsilon(drop_fraction=f, **self.ARGS) for f in np.arange(0.0, 0.95, 0.1)
        ]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_negligible_tau_ratio_is_sqrt_n_over_survivors(self):
        # f = 0.75 keeps 25 of 100 noise shares; in the tau-negligible
        # regime epsilon scales as 1/sqrt(n'), so the ratio is exactly 2.
        args = dict(delta2=1.0, sigma=0.2, gamma=1e-3, n=100, d=16)
        base, _ = epsilon_zcdp(**args)
        degraded = dropout_epsilon(drop_fraction=0.75, **args)
        assert degraded / base == pytest.approx(2.0, rel=0.01)

    def test_validation(self):
        with pytest.raises(ValueError, match="drop_fraction"):
            dropout_epsilon(drop_fraction=1.0, **self.ARGS)


class TestPrivacyReport:
    def test_builder_consistency(self):
        report = privacy_report(
            c=1.0, gamma=0.05, sigma=0.4, beta=BETA_DEFAULT, n=50, d=32, delta=1e-6
        )
        assert report.rho == 0.5 * report.eps_zcdp**2
        assert report.delta == 1e-6
        assert report.branch_used in ("quadrature", "additive", "cross")
        closed = report.rho + 2.0 * math.sqrt(report.rho * math.log(1e6))
        assert 0.0 <= report.eps_dp <= closed
        assert report.delta2.delta2 == pytest.approx(
            report.delta2.delta2_grid * 0.05, rel=1e-12
        )

    def test_rejects_inconsistent_rho(self):
        good = privacy_report(
            c=1.0, gamma=0.05, sigma=0.4, beta=BETA_DEFAULT, n=50, d=32, delta=1e-6
        )
        with pytest.raises(ValueError, match="rho"):
            PrivacyReport(
                delta2=good.delta2,
                tau=good.tau,
                eps_zcdp=good.eps_zcdp,
                rho=good.rho * 2.0,
                eps_dp=good.eps_dp,
                delta=good.delta,
                branch_used=good.branch_used,
            )
