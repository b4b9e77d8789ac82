import math

import numpy as np
import pytest
from scipy.special import comb

from spinldp import chain_algebra as ca
from spinldp import ldp_engine as ld
from spinldp import states as st
from spinldp.errors import DomainError

from conftest import SX, SZ


def binary_entropy_rate(x):
    return ((1 + x) / 2) * math.log(1 + x) + ((1 - x) / 2) * math.log(1 - x)


class TestPnAlpha:
    def test_alpha_zero_is_partition_function(self, tfi):
        n, beta = 4, 0.8
        h = ca.hamiltonian(tfi, (1, n))
        w = np.linalg.eigvalsh(h.matrix)
        expect = math.log(np.exp(-beta * w).sum())
        assert abs(ld.log_pn_alpha(tfi, tfi, beta, 0.0, n) - expect) < 1e-12

    def test_beta_zero_is_tilted_trace(self, tfi):
        n, alpha = 4, 0.6
        h = ca.hamiltonian(tfi, (1, n))
        w = np.linalg.eigvalsh(h.matrix)
        expect = math.log(np.exp(alpha * w).sum())
        assert abs(ld.log_pn_alpha(tfi, tfi, 0.0, alpha, n) - expect) < 1e-12

    def test_commuting_factorization(self, sigma_z_interaction):
        beta, alpha = 0.4, 1.1
        per_site = math.log(math.exp(alpha - beta) + math.exp(beta - alpha))
        for n in (2, 5):
            got = ld.log_pn_alpha(
                sigma_z_interaction, sigma_z_interaction, beta, alpha, n
            )
            assert abs(got - n * per_site) < 1e-12

    def test_distinct_interactions_against_dense(self, sigma_z_interaction, tfi):
        # overlap route vs direct dense evaluation
        import spinldp.operator_kernel as ok

        beta, alpha, n = 0.7, 0.5, 3
        h_psi = ca.hamiltonian(tfi, (1, n)).matrix
        h_phi = ca.hamiltonian(sigma_z_interaction, (1, n)).matrix
        a = ok.mexp_herm(h_psi, scale=-beta / 2)
        b = ok.mexp_herm(h_phi, scale=alpha)
        expect = math.log(np.trace(a @ b @ a).real)
        got = ld.log_pn_alpha(tfi, sigma_z_interaction, beta, alpha, n)
        assert abs(got - expect) < 1e-11

    def test_linear_scale_overflow_guard(self, sigma_z_interaction):
        with pytest.raises(DomainError, match="log_pn_alpha"):
            ld.pn_alpha(sigma_z_interaction, sigma_z_interaction, 0.0, 100.0, 10)


class TestLogMgfCurve:
    def test_product_state_all_modes_log_cosh(self, sigma_z_interaction):
        gibbs = st.GibbsFiniteState(sigma_z_interaction, 0.0, 10)
        alphas = np.linspace(-2, 2, 9)
        for mode, kw in (
            ("direct", {}),
            ("increments", {}),
            ("transfer", {"window": 6}),
        ):
            curve = ld.log_mgf_curve(
                gibbs, sigma_z_interaction, alphas, [7, 8], mode=mode, **kw
            )
            err = np.abs(curve.f_values - np.log(np.cosh(alphas))).max()
            assert err <= 1e-8

    def test_f_zero_is_zero(self, tfi):
        gibbs = st.GibbsFiniteState(tfi, 0.6, 6)
        curve = ld.log_mgf_curve(gibbs, tfi, [-0.5, 0.0, 0.5], [5, 6], mode="increments")
        assert abs(curve.f_values[1]) < 1e-12

    def test_slope_at_zero_matches_energy_density(self, tfi):
        gibbs = st.GibbsFiniteState(tfi, 0.5, 8)
        h = 1e-3
        curve = ld.log_mgf_curve(
            gibbs, tfi, [-h, 0.0, h], [7, 8], mode="increments", with_error=False
        )
        slope = (curve.f_values[2] - curve.f_values[0]) / (2 * h)
        density = ld.mean_energy_density(gibbs, tfi, 8)
        assert abs(slope - density) < 1e-5

    def test_fcs_slope_at_zero(self, primitive_triple, nn_pair_half):
        h = 1e-3
        curve = ld.log_mgf_curve(
            primitive_triple, nn_pair_half, [-h, 0.0, h], [7, 8],
            mode="increments", with_error=False,
        )
        slope = (curve.f_values[2] - curve.f_values[0]) / (2 * h)
        density = ld.mean_energy_density(primitive_triple, nn_pair_half, 8)
        assert abs(slope - density) < 1e-4

    def test_jensen_bound(self, tfi):
        gibbs = st.GibbsFiniteState(tfi, 0.5, 6)
        n = 6
        alphas = [-1.0, -0.3, 0.4, 1.2]
        curve = ld.log_mgf_curve(gibbs, tfi, alphas, [n], mode="direct", with_error=False)
        mu = ld.spectral_measure(gibbs, tfi, n)
        mean = ld.measure_mean(mu)
        for a, f in zip(curve.alpha_grid, curve.f_values):
            assert f >= a * mean - 1e-10

    def test_nonprimitive_fcs_rejected(self, sigma_z_interaction):
        with pytest.raises(DomainError, match="non-primitive"):
            ld.log_mgf_curve(
                st.period_two_triple(), sigma_z_interaction, [0.0], [3],
                mode="direct", with_error=False,
            )


class TestLegendre:
    def test_log_cosh_binary_entropy(self):
        grid = np.linspace(-4, 4, 401)
        f = np.log(np.cosh(grid))
        curve = ld.RateCurve(grid, f, np.zeros_like(f), np.gradient(f, grid))
        xs = np.linspace(-0.95, 0.95, 191)
        out = ld.legendre_transform(curve, x_grid=xs)
        closed = np.array([binary_entropy_rate(x) for x in xs])
        assert np.abs(out.i_values - closed).max() <= 1e-6

    def test_value_at_mean_slope_vanishes(self):
        grid = np.linspace(-3, 3, 301)
        f = np.log(np.cosh(grid))
        conj = ld.ConvexConjugator(grid, f)
        assert abs(conj.transform(0.0)) <= 1e-10

    def test_out_of_range_is_infinite(self):
        grid = np.linspace(-2, 2, 101)
        f = np.log(np.cosh(grid))
        conj = ld.ConvexConjugator(grid, f)
        assert conj.transform(0.999) == math.inf

    def test_linear_f_degenerate_conjugate(self):
        grid = np.linspace(-1, 1, 21)
        c = 0.37
        conj = ld.ConvexConjugator(grid, c * grid)
        assert conj.transform(c) == pytest.approx(0.0, abs=1e-12)
        assert conj.transform(c + 0.1) == math.inf

    def test_biconjugacy_recovers_f(self):
        grid = np.linspace(-4, 4, 401)
        f = np.log(np.cosh(grid))
        curve = ld.legendre_transform(
            ld.RateCurve(grid, f, np.zeros_like(f), np.gradient(f, grid)),
            x_grid=np.linspace(-0.95, 0.95, 191),
        )
        alphas = np.linspace(-1.6, 1.6, 33)
        back = ld.fenchel_on_grid(curve.x_grid, curve.i_values, alphas)
        assert np.abs(back - np.log(np.cosh(alphas))).max() <= 1e-5

    def test_nonconvex_rejected(self):
        grid = np.linspace(-1, 1, 21)
        bumpy = grid ** 2 - 0.05 * np.cos(8 * grid)
        with pytest.raises(DomainError, match="convex"):
            ld.ConvexConjugator(grid, bumpy)

    def test_tiny_violations_flattened(self):
        grid = np.linspace(-1, 1, 41)
        f = 0.5 * grid ** 2
        rng = np.random.default_rng(0)
        noisy = f + 1e-8 * rng.standard_normal(len(f))
        conj = ld.ConvexConjugator(grid, noisy)  # no raise
        assert conj.transform(0.0) <= 1e-6


class TestSpectralMeasure:
    def test_weights_sum_to_one(self, tfi):
        gibbs = st.GibbsFiniteState(tfi, 0.7, 5)
        mu = ld.spectral_measure(gibbs, tfi, 5)
        assert abs(mu.weights.sum() - 1.0) <= 1e-10

    def test_binomial_counting(self, sigma_z_interaction):
        n = 8
        gibbs = st.GibbsFiniteState(sigma_z_interaction, 0.0, n)
        mu = ld.spectral_measure(gibbs, sigma_z_interaction, n)
        assert len(mu.atoms) == n + 1
        for k in range(n + 1):
            x = (n - 2 * k) / n
            idx = int(np.argmin(np.abs(mu.atoms - x)))
            assert abs(mu.atoms[idx] - x) < 1e-12
            assert abs(mu.weights[idx] - comb(n, k) / 2 ** n) < 1e-12

    def test_mean_matches_direct_expectation(self, tfi):
        n = 5
        gibbs = st.GibbsFiniteState(tfi, 0.6, n)
        mu = ld.spectral_measure(gibbs, tfi, n)
        h = ca.hamiltonian(tfi, (1, n))
        rho = st.gibbs_density(tfi, 0.6, n)
        direct = float(np.trace(rho.matrix @ h.matrix).real) / n
        assert abs(ld.measure_mean(mu) - direct) <= 1e-12

    def test_moment_route_matches_pn_route(self, tfi):
        # same operator, two routes: measure moments vs p_n normalization
        n, beta = 5, 0.6
        gibbs = st.GibbsFiniteState(tfi, beta, n)
        mu = ld.spectral_measure(gibbs, tfi, n)
        for alpha in (-0.8, 0.3, 1.1):
            via_measure = math.log(
                float(np.sum(mu.weights * np.exp(n * alpha * mu.atoms)))
            )
            via_pn = ld.log_pn_alpha(tfi, tfi, beta, alpha, n) - ld.log_pn_alpha(
                tfi, tfi, beta, 0.0, n
            )
            assert abs(via_measure - via_pn) <= 1e-10

    def test_fcs_state_measure(self, primitive_triple, nn_pair_half):
        mu = ld.spectral_measure(primitive_triple, nn_pair_half, 5)
        assert abs(mu.weights.sum() - 1.0) <= 1e-10
        assert mu.weights.min() >= 0


class TestBoundsCheck:
    @pytest.fixture(scope="class")
    def product_setup(self, sigma_z_interaction):
        gibbs = st.GibbsFiniteState(sigma_z_interaction, 0.0, 12)
        measures = [
            ld.spectral_measure(gibbs, sigma_z_interaction, n) for n in (6, 8, 10, 12)
        ]
        alphas = np.linspace(-4, 4, 161)
        curve = ld.log_mgf_curve(
            gibbs, sigma_z_interaction, alphas, [10], mode="direct", with_error=False
        )
        return measures, curve

    def test_interval_containing_mean(self, product_setup):
        measures, curve = product_setup
        report = ld.ldp_bounds_check(measures, curve, [(-0.2, 0.2)])
        entry = report["sets"][0]
        assert entry["inf_rate"] <= 1e-9
        # mass near the mean stays order one, so the rate tends to zero
        assert abs(entry["rows"][-1]["log_mass_rate"]) < 0.1

    def test_binomial_tail_masses(self, product_setup, sigma_z_interaction):
        measures, curve = product_setup
        report = ld.ldp_bounds_check(measures, curve, [(0.5, 1.0)])
        rows = report["sets"][0]["rows"]
        for row in rows:
            n = row["n"]
            expect = sum(comb(n, k) for k in range(n + 1) if (n - 2 * k) / n >= 0.5 - 1e-9)
            assert abs(row["mass"] - expect / 2 ** n) <= 1e-12
        assert report["sets"][0]["inf_rate"] == pytest.approx(
            binary_entropy_rate(0.5), abs=1e-6
        )

    def test_upper_bound_slack_nonnegative_small(self, product_setup):
        measures, curve = product_setup
        report = ld.ldp_bounds_check(measures, curve, [(0.5, 1.0)])
        assert report["sets"][0]["upper_bound_slack"] <= 0.05

    def test_empty_interval_reports_minus_inf(self, product_setup):
        measures, curve = product_setup
        report = ld.ldp_bounds_check(measures, curve, [(1.5, 2.0)])
        rows = report["sets"][0]["rows"]
        assert all(r["empty"] for r in rows)
        assert all(r["log_mass_rate"] == -math.inf for r in rows)


class TestEnsembles:
    def test_beta_zero_sigma_z(self, sigma_z_interaction):
        report = ld.ensembles_equivalence(
            [sigma_z_interaction], [0.0], [0.0], 0.2, [8, 10, 12]
        )
        rows = report["rows"]
        assert abs(rows[-1]["canonical_entropy_density"] - math.log(2)) < 1e-12
        assert rows[-1]["gap"] <= 0.05
        assert report["gap_shrinks"]
        assert report["tail_fits"][0]["rate"] > 0
        assert all(r["joint_projection_exact"] for r in rows)

    def test_entropy_identity(self, tfi):
        report = ld.ensembles_equivalence([tfi], [-0.4], [None or 0.0], 0.5, [6])
        assert report["rows"][0]["entropy_identity_residual"] <= 1e-10

    def test_log_density_window_mass_beta_zero(self, sigma_z_interaction):
        report = ld.ensembles_equivalence([sigma_z_interaction], [0.0], [0.0], 0.2, [6])
        assert report["rows"][0]["log_density_window_mass"] == pytest.approx(1.0)

    def test_noncommuting_pair_flagged(self, sigma_z_interaction):
        x_int = ca.Interaction(2, (((0,), SX),))
        report = ld.ensembles_equivalence(
            [sigma_z_interaction, x_int], [0.1, 0.1], [0.0, 0.0], 0.6, [4]
        )
        assert not report["rows"][0]["joint_projection_exact"]

    def test_length_mismatch_rejected(self, sigma_z_interaction):
        with pytest.raises(DomainError):
            ld.ensembles_equivalence([sigma_z_interaction], [0.0, 1.0], [0.0], 0.2, [4])
