import numpy as np
import pytest

from spinldp import operator_kernel as ok
from spinldp.errors import CapExceededError, DomainError

from conftest import ID2, SX, SZ, rand_herm


def lop(matrix, sites, d=2):
    return ok.LocalOperator(np.asarray(matrix, dtype=complex), sites, d)


class TestEmbed:
    def test_identity_padding_right(self):
        out = ok.embed(lop(SZ, (1,)), (1, 2))
        assert np.allclose(out.matrix, np.kron(SZ, ID2))

    def test_identity_stays_identity(self):
        out = ok.embed(ok.identity((3, 3), 2), (1, 3))
        assert np.allclose(out.matrix, np.eye(8))

    def test_two_site_against_index_oracle(self):
        rng = np.random.default_rng(0)
        x, y = rand_herm(2, rng), rand_herm(2, rng)
        op = lop(np.kron(x, y), (2, 3))
        out = ok.embed(op, (1, 3))
        # oracle: explicit multi-index summation over (s1, s2, s3)
        expect = np.zeros((8, 8), dtype=complex)
        for r1 in range(2):
            for r2 in range(2):
                for r3 in range(2):
                    for c1 in range(2):
                        for c2 in range(2):
                            for c3 in range(2):
                                val = (r1 == c1) * x[r2, c2] * y[r3, c3]
                                expect[4 * r1 + 2 * r2 + r3, 4 * c1 + 2 * c2 + c3] = val
        assert np.abs(out.matrix - expect).max() < 1e-14
        assert np.allclose(out.matrix, np.kron(ID2, np.kron(x, y)))

    def test_gap_filling(self):
        op = lop(np.kron(SZ, SX), (1, 3))
        out = ok.embed(op, (1, 3))
        assert np.allclose(out.matrix, np.kron(SZ, np.kron(ID2, SX)))

    def test_support_not_contained_rejected(self):
        with pytest.raises(DomainError):
            ok.embed(lop(SZ, (1,)), (2, 3))


class TestPartialTrace:
    def test_product_factorization(self):
        rng = np.random.default_rng(1)
        a, b = rand_herm(2, rng), rand_herm(2, rng)
        out = ok.partial_trace(lop(np.kron(a, b), (1, 2)), [1])
        assert np.allclose(out.matrix, np.trace(a) * b)
        assert out.sites == (2,)

    def test_identity_scaling(self):
        out = ok.partial_trace(ok.identity((1, 2), 2), [2])
        assert np.allclose(out.matrix, 2.0 * ID2)

    def test_brute_force_index_oracle(self):
        rng = np.random.default_rng(2)
        m = rand_herm(4, rng)
        out = ok.partial_trace(lop(m, (1, 2)), [2])
        expect = np.zeros((2, 2), dtype=complex)
        for r in range(2):
            for c in range(2):
                for k in range(2):
                    expect[r, c] += m[2 * r + k, 2 * c + k]
        assert np.abs(out.matrix - expect).max() < 1e-12

    def test_trace_preserved(self):
        rng = np.random.default_rng(3)
        m = rand_herm(8, rng)
        out = ok.partial_trace(lop(m, (1, 2, 3)), [1, 3])
        assert abs(np.trace(out.matrix) - np.trace(m)) < 1e-12

    def test_sites_outside_support_rejected(self):
        with pytest.raises(DomainError):
            ok.partial_trace(lop(SZ, (1,)), [2])


class TestSpectral:
    def test_sigma_z_projection(self):
        p = ok.spectral_projection(lop(SZ, (1,)), (0.5, 1.5))
        assert np.allclose(p.matrix, np.diag([1.0, 0.0]))

    def test_full_line_gives_identity(self):
        p = ok.spectral_projection(lop(SX, (1,)), (-np.inf, np.inf))
        assert np.allclose(p.matrix, ID2)

    def test_reconstruction(self):
        rng = np.random.default_rng(4)
        m = rand_herm(8, rng)
        op = lop(m, (1, 2, 3))
        w, v = ok.herm_spectral(op)
        rebuilt = (v * w) @ v.conj().T
        assert np.abs(rebuilt - m).max() < 1e-12

    def test_partition_sums_to_identity(self):
        rng = np.random.default_rng(5)
        op = lop(rand_herm(4, rng), (1, 2))
        total = sum(
            ok.spectral_projection(op, iv).matrix
            for iv in [(-np.inf, -0.3), (-0.3, 0.3), (0.3, np.inf)]
            if True
        )
        # open/closed double counting only matters if an eigenvalue sits on a cut
        w, _ = ok.herm_spectral(op)
        assert all(abs(x + 0.3) > 1e-9 and abs(x - 0.3) > 1e-9 for x in w)
        assert np.abs(total - np.eye(4)).max() < 1e-12

    def test_non_hermitian_rejected_with_norm(self):
        m = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
        with pytest.raises(DomainError, match="asymmetry"):
            ok.herm_spectral(lop(m, (1,)))

    def test_diagonal_fast_path_matches_dense(self):
        rng = np.random.default_rng(6)
        d = np.sort(rng.standard_normal(8))[::-1].copy()
        w, v = ok.herm_eig(np.diag(d).astype(complex))
        assert np.allclose(w, np.sort(d))
        assert np.abs((v * w) @ v.conj().T - np.diag(d)).max() < 1e-14


class TestMatExp:
    def test_exp_zero(self):
        out = ok.mat_exp(ok.zero((1, 2), 2))
        assert np.allclose(out.matrix, np.eye(4))

    def test_diagonal_case(self):
        out = ok.mat_exp(lop(np.diag([0.3, -1.2]), (1,)))
        assert np.allclose(out.matrix, np.diag(np.exp([0.3, -1.2])))

    def test_inverse_pair_identity(self):
        rng = np.random.default_rng(7)
        g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        plus = ok.mat_exp(lop(g, (1, 2)))
        minus = ok.mat_exp(lop(-g, (1, 2)))
        assert np.linalg.norm(plus.matrix @ minus.matrix - np.eye(4), 2) <= 1e-10

    def test_hermitian_positive_definite(self):
        rng = np.random.default_rng(8)
        out = ok.mat_exp(lop(rand_herm(4, rng), (1, 2)))
        assert np.linalg.eigvalsh(out.matrix)[0] > 0

    def test_overflow_reports_norm(self):
        with pytest.raises(DomainError, match="overflow"):
            ok.mat_exp(lop(np.diag([800.0, -800.0]), (1,)))


class TestInvariantsAndCaps:
    def test_trace_of_embedding_recovers_operator(self):
        rng = np.random.default_rng(9)
        m = rand_herm(2, rng)
        big = ok.embed(lop(m, (2,)), (1, 3))
        back = ok.partial_trace(big, [1, 3])
        assert np.abs(back.matrix - (2 ** 2) * m).max() < 1e-12

    def test_disjoint_support_trace_product(self):
        rng = np.random.default_rng(10)
        a, b = rand_herm(2, rng), rand_herm(2, rng)
        ea = ok.embed(lop(a, (1,)), (1, 4))
        eb = ok.embed(lop(b, (3,)), (1, 4))
        lhs = np.trace(ea.matrix @ eb.matrix)
        rhs = np.trace(a) * np.trace(b) * 2 ** 2
        assert abs(lhs - rhs) < 1e-10

    def test_eigenvalues_invariant_under_site_permutation(self):
        rng = np.random.default_rng(11)
        op = lop(rand_herm(8, rng), (1, 2, 3))
        perm = ok.permute_sites(op, {1: 3, 2: 1, 3: 2})
        w0, _ = ok.herm_spectral(op)
        w1, _ = ok.herm_spectral(perm)
        assert np.abs(w0 - w1).max() < 1e-10

    def test_reflect_is_involutive(self):
        rng = np.random.default_rng(12)
        op = lop(rand_herm(4, rng), (1, 2))
        back = ok.reflect(ok.reflect(op))
        assert back.sites == op.sites
        assert np.abs(back.matrix - op.matrix).max() < 1e-14

    def test_window_cap_enforced(self):
        with pytest.raises(CapExceededError):
            ok.identity((1, 15), 2)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(DomainError):
            lop(np.eye(3), (1,), 2)
