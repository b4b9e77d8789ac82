import math

import numpy as np
import pytest

from spinldp import chain_algebra as ca
from spinldp import ldp_engine as ld
from spinldp import operator_kernel as ok
from spinldp import states as st
from spinldp import transfer as tr
from spinldp.errors import InvariantViolation

from conftest import SZ, rand_herm, rand_psd


class TestKMSOperator:
    def test_trivial_couplings_fix_identity(self, sigma_z_interaction):
        op = tr.build_kms_operator(
            sigma_z_interaction, sigma_z_interaction, 0.0, 0.0, m=6
        )
        out = op.apply(np.eye(op.dim, dtype=complex))
        assert np.abs(out - np.eye(op.dim)).max() < 1e-13
        res = tr.leading_eigen(op)
        assert res.iterations == 1
        assert abs(res.lam - 1.0) < 1e-13
        assert np.abs(res.h - np.eye(op.dim) / 1.0).max() < 1e-10

    def test_commuting_one_site_closed_form(self, sigma_z_interaction):
        beta, alpha = 0.7, 0.9
        op = tr.build_kms_operator(
            sigma_z_interaction, sigma_z_interaction, beta, alpha, m=6
        )
        res = tr.leading_eigen(op)
        closed = 0.5 * (math.exp(alpha - beta) + math.exp(beta - alpha))
        assert abs(res.lam - closed) <= 1e-10

    def test_positivity_preserved(self, tfi):
        op = tr.build_kms_operator(tfi, tfi, 0.5, 0.8, m=6)
        rng = np.random.default_rng(3)
        for _ in range(20):
            q = rand_psd(op.dim, rng)
            out = op.apply(q)
            out = (out + out.conj().T) / 2
            assert np.linalg.eigvalsh(out)[0] >= -1e-10

    def test_adjoint_consistency(self, tfi):
        op = tr.build_kms_operator(tfi, tfi, 0.5, 0.4, m=6)
        rng = np.random.default_rng(4)
        q = rand_herm(op.dim, rng)
        s = rand_herm(op.dim, rng)
        lhs = np.trace(s.conj().T @ op.apply(q))
        rhs = np.trace(op.apply_adjoint(s).conj().T @ q)
        assert abs(lhs - rhs) < 1e-9

    def test_matches_dense_superoperator_small_window(self, sigma_z_interaction, tfi):
        op = tr.build_kms_operator(sigma_z_interaction, sigma_z_interaction, 0.5, 0.6, m=4)
        mat = tr.dense_superoperator(op)
        evals = np.linalg.eigvals(mat)
        lam_dense = float(np.max(np.abs(evals)))
        res = tr.leading_eigen(op)
        assert abs(res.lam - lam_dense) < 1e-8

    def test_section3_identity_tfi(self, tfi):
        beta, n = 0.5, 10
        for alpha in (-1.0, 0.0, 1.0):
            op = tr.build_kms_operator(tfi, tfi, beta, alpha, m=8)
            res = tr.leading_eigen(op)
            inc = ld.log_pn_alpha(tfi, tfi, beta, alpha, n) - ld.log_pn_alpha(
                tfi, tfi, beta, alpha, n - 1
            )
            assert abs(tr.kms_log_increment(res.lam, 2) - inc) <= 1e-3

    def test_window_growth_stability(self, tfi):
        lams = []
        for m in (7, 8):
            op = tr.build_kms_operator(tfi, tfi, 0.5, 1.0, m=m)
            lams.append(tr.leading_eigen(op).lam)
        assert abs(lams[1] - lams[0]) <= 1e-6


class TestFCSOperator:
    def test_unitality_at_alpha_zero(self, primitive_triple, nn_pair_half):
        op = tr.build_fcs_operator(primitive_triple, nn_pair_half, 0.0, m=6)
        out = op.apply(np.eye(op.dim, dtype=complex))
        assert np.abs(out - np.eye(op.dim)).max() < 1e-12
        assert abs(tr.leading_eigen(op).lam - 1.0) < 1e-10

    def test_zero_observable_is_neutral(self, primitive_triple):
        zero_phi = ca.Interaction(2, (((0,), np.zeros((2, 2))),))
        for alpha in (-1.0, 2.0):
            op = tr.build_fcs_operator(primitive_triple, zero_phi, alpha, m=4)
            assert abs(tr.leading_eigen(op).lam - 1.0) < 1e-10

    def test_b_one_product_closed_form(self, product_half_triple, sigma_z_interaction):
        alpha = 0.8
        op = tr.build_fcs_operator(product_half_triple, sigma_z_interaction, alpha, m=5)
        res = tr.leading_eigen(op)
        assert abs(math.log(res.lam) - math.log(math.cosh(alpha))) < 1e-10

    def test_section4_identity(self, primitive_triple, nn_pair_half):
        n = 8
        for alpha in (0.5, -0.5):
            op = tr.build_fcs_operator(primitive_triple, nn_pair_half, alpha, m=7)
            res = tr.leading_eigen(op)
            h_n = ca.hamiltonian(nn_pair_half, (1, n))
            h_m = ca.hamiltonian(nn_pair_half, (1, n - 1))
            inc = ld.log_exp_expectation(
                st.fcs_local_density(primitive_triple, n), h_n, alpha
            ) - ld.log_exp_expectation(
                st.fcs_local_density(primitive_triple, n - 1), h_m, alpha
            )
            assert abs(math.log(res.lam) - inc) <= 1e-3

    def test_positivity_preserved(self, primitive_triple, nn_pair_half):
        op = tr.build_fcs_operator(primitive_triple, nn_pair_half, 0.7, m=6)
        rng = np.random.default_rng(9)
        for _ in range(10):
            q = rand_psd(op.dim, rng)
            out = op.apply(q)
            out = (out + out.conj().T) / 2
            assert np.linalg.eigvalsh(out)[0] >= -1e-10

    def test_matches_dense_superoperator_small_window(self, primitive_triple, sigma_z_interaction):
        op = tr.build_fcs_operator(primitive_triple, sigma_z_interaction, 0.5, m=4)
        lam_dense = float(np.max(np.abs(np.linalg.eigvals(tr.dense_superoperator(op)))))
        assert abs(tr.leading_eigen(op).lam - lam_dense) < 1e-8


class TestOneSiteTransfer:
    def test_alpha_zero_unital(self, primitive_triple):
        out = tr.fc_deformed_transfer(primitive_triple, SZ, 0.0)
        assert abs(out.lam - 1.0) < 1e-12

    def test_b_one_log_cosh(self, product_half_triple):
        out = tr.fc_deformed_transfer(product_half_triple, SZ, 1.3)
        assert abs(out.log_lam - math.log(math.cosh(1.3))) < 1e-12

    def test_exactness_against_density(self, primitive_triple):
        alpha, n = 0.7, 6
        weight = ok.mexp_herm(alpha * SZ)
        big = weight
        for _ in range(n - 1):
            big = np.kron(big, weight)
        omega = st.fcs_local_density(primitive_triple, n)
        direct = np.trace(omega.matrix @ big)
        t_mat = tr.fc_deformed_transfer(primitive_triple, SZ, alpha).matrix
        vec = np.eye(2, dtype=complex).reshape(-1)
        for _ in range(n):
            vec = t_mat @ vec
        via_transfer = np.trace(primitive_triple.rho @ vec.reshape(2, 2))
        assert abs(direct - via_transfer) <= 1e-10


class TestLeadingEigenContract:
    def test_lambda_positive_on_grid(self, tfi):
        for alpha in (-1.5, -0.5, 0.5, 1.5):
            op = tr.build_kms_operator(tfi, tfi, 0.5, alpha, m=6)
            assert tr.leading_eigen(op).lam > 0

    def test_log_lambda_convex(self, tfi):
        alphas = np.linspace(-1.0, 1.0, 7)
        logs = []
        for a in alphas:
            op = tr.build_kms_operator(tfi, tfi, 0.5, float(a), m=6)
            logs.append(math.log(tr.leading_eigen(op).lam))
        second = np.diff(logs, 2)
        assert second.min() >= -1e-6

    def test_h_reported_positive(self, tfi):
        op = tr.build_kms_operator(tfi, tfi, 0.5, 0.5, m=6)
        res = tr.leading_eigen(op)
        assert res.min_eig_h > 0

    def test_eigen_report_fields(self, tfi):
        op = tr.build_kms_operator(tfi, tfi, 0.5, 0.5, m=6)
        res = tr.leading_eigen(op)
        rep = tr.eigen_report(op, res)
        assert set(rep) == {
            "alpha", "lambda", "log_lambda", "gap_estimate",
            "window", "margin", "residual",
        }
        assert rep["lambda"] == res.lam


class TestTheorem22Diagnostics:
    def test_identity_probe_sequence_vanishes(self, primitive_triple, nn_pair_half):
        op = tr.build_fcs_operator(primitive_triple, nn_pair_half, 0.0, m=6)
        res = tr.leading_eigen(op)
        rep = tr.theorem22_diagnostics(
            op, res.lam, res.h, [np.eye(op.dim)], n_max=6
        )
        assert max(rep["probes"][0]["decay"]) < 1e-9

    def test_alpha_zero_decay_tracks_channel_gap(self, primitive_triple, nn_pair_half):
        op = tr.build_fcs_operator(primitive_triple, nn_pair_half, 0.0, m=6)
        res = tr.leading_eigen(op)
        rng = np.random.default_rng(17)
        probe = rand_herm(op.dim, rng)
        rep = tr.theorem22_diagnostics(op, res.lam, res.h, [probe], n_max=12)
        implied = math.exp(rep["probes"][0]["slope"])
        channel = st.fcs_channel_spectrum(primitive_triple)["subleading_modulus"]
        assert 0.5 * channel <= implied <= 2.0 * channel

    def test_positive_probe_k_ratio_stabilizes(self, primitive_triple, nn_pair_half):
        op = tr.build_fcs_operator(primitive_triple, nn_pair_half, 0.5, m=6)
        res = tr.leading_eigen(op)
        rng = np.random.default_rng(18)
        probe = rand_herm(op.dim, rng) + 2.0 * np.eye(op.dim)
        rep = tr.theorem22_diagnostics(op, res.lam, res.h, [probe], n_max=12)
        entry = rep["probes"][0]
        assert math.isfinite(entry["k_ratio_final"])
        assert entry["k_ratio_spread"] < 0.10

    def test_rejects_non_positive_h(self, primitive_triple, nn_pair_half):
        op = tr.build_fcs_operator(primitive_triple, nn_pair_half, 0.5, m=6)
        res = tr.leading_eigen(op)
        with pytest.raises(InvariantViolation):
            tr.theorem22_diagnostics(op, res.lam, -res.h, [np.eye(op.dim)])
