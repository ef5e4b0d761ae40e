import numpy as np
import pytest

from gscanstat.errors import DegenerateInput
from gscanstat.gmrf import (ConstraintSet, StructureMatrix, bym2_covariance,
                            canonical_kind, constrained_covariance,
                            constraint_set, delta_constraint_rows,
                            generalized_inverse, icar_precision,
                            interaction_structure, laplacian_null_basis,
                            positive_eigenvalues, rw1_precision,
                            sample_constrained, scale_structure,
                            solve_generalized, write_matrix_market)
from gscanstat.graph import graph_from_edges, grid_graph


def path_graph(n):
    ids = [f"a{i}" for i in range(n)]
    edges = [(ids[i], ids[i + 1]) for i in range(n - 1)]
    return graph_from_edges(ids, edges, [(float(i), 0.0) for i in range(n)])


def complete3():
    ids = ["a", "b", "c"]
    edges = [("a", "b"), ("a", "c"), ("b", "c")]
    return graph_from_edges(ids, edges, [(0, 0), (1, 0), (0, 1)])


class TestStructures:
    def test_icar_path3(self):
        R = icar_precision(path_graph(3))
        assert R.dense().tolist() == [[1, -1, 0], [-1, 2, -1], [0, -1, 1]]
        assert R.rank_deficiency == 1

    def test_icar_complete3(self):
        R = icar_precision(complete3())
        assert R.dense().tolist() == [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]]

    def test_icar_two_components(self):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = graph_from_edges(["a", "b", "c", "d"], [("a", "b"), ("c", "d")],
                                 [(0, 0), (1, 0), (5, 0), (6, 0)])
        assert icar_precision(g).rank_deficiency == 2

    def test_rw1_matches_path_icar(self):
        assert rw1_precision(3).dense().tolist() == icar_precision(path_graph(3)).dense().tolist()

    def test_rw1_t2(self):
        assert rw1_precision(2).dense().tolist() == [[1, -1], [-1, 1]]
        with pytest.raises(DegenerateInput):
            rw1_precision(1)

    def test_rw1_row_sums_zero(self):
        for T in (2, 4, 7):
            assert np.allclose(rw1_precision(T).dense().sum(axis=1), 0.0)


class TestScaling:
    def test_path3_factor_matches_eigen_oracle(self):
        R = icar_precision(path_graph(3))
        vals, vecs = np.linalg.eigh(R.dense())
        inv = np.where(vals > 1e-10, 1.0 / np.where(vals > 1e-10, vals, 1.0), 0.0)
        pinv_diag = np.diag((vecs * inv) @ vecs.T)
        factor = np.exp(np.log(pinv_diag).mean())
        scaled = scale_structure(R)
        assert np.allclose(scaled.dense(), factor * R.dense(), rtol=1e-12)
        assert scaled.scaled

    def test_scaling_is_idempotent_up_to_unity(self):
        R = scale_structure(icar_precision(grid_graph(3, 3)))
        again = scale_structure(R)
        ratio = again.dense()[0, 0] / R.dense()[0, 0]
        assert ratio == pytest.approx(1.0, abs=1e-8)

    def test_scaling_is_scale_invariant(self):
        R = icar_precision(grid_graph(3, 3))
        doubled = StructureMatrix(2.0 * R.matrix, rank_deficiency=R.rank_deficiency)
        a = scale_structure(R)
        b = scale_structure(doubled)
        assert np.allclose(a.dense(), b.dense(), rtol=1e-10)

    def test_scaled_pinv_diag_geomean_one(self):
        R = scale_structure(icar_precision(grid_graph(4, 3)))
        diag = np.diag(generalized_inverse(R))
        assert np.exp(np.log(diag).mean()) == pytest.approx(1.0, rel=1e-8)


class TestInteractions:
    def test_type_i_identity(self):
        M = interaction_structure("I", rw1_precision(2), icar_precision(path_graph(3)), 3, 2)
        assert np.allclose(M.dense(), np.eye(6))
        assert M.rank_deficiency == 0

    def test_type_iv_dense_kron_oracle(self):
        Rg = rw1_precision(2)
        Rx = scale_structure(icar_precision(path_graph(3)))
        M = interaction_structure("IV", Rg, Rx, 3, 2)
        assert np.allclose(M.dense(), np.kron(Rg.dense(), Rx.dense()))
        assert M.rank_deficiency == 3 + 2 - 1

    def test_type_ii_rank_deficiency_is_n(self):
        M = interaction_structure(2, rw1_precision(4), icar_precision(grid_graph(2, 3)), 6, 4)
        assert M.rank_deficiency == 6
        vals = np.linalg.eigvalsh(M.dense())
        assert int(np.sum(vals < 1e-9)) == 6

    def test_type_iii_rank_deficiency_is_t(self):
        M = interaction_structure("III", rw1_precision(4), icar_precision(grid_graph(2, 3)), 6, 4)
        assert M.rank_deficiency == 4

    def test_kind_parsing(self):
        assert canonical_kind(1) == "I" and canonical_kind("iv") == "IV"
        with pytest.raises(ValueError):
            canonical_kind("V")


class TestConstraints:
    def test_type_i_has_three_rows(self):
        A = constraint_set("I", 4, 3)
        assert A.matrix.shape == (3, 4 + 3 + 12)
        assert A.matrix @ np.zeros(19) == pytest.approx(0.0)

    def test_type_iv_delta_rank(self):
        rows = delta_constraint_rows("IV", 3, 2)
        assert rows.shape[0] == 3 + 2 - 1
        assert np.linalg.matrix_rank(rows) == 4

    def test_ranks_match_documented_counts(self):
        for kind, want in (("I", 1), ("II", 5), ("III", 4), ("IV", 5 + 4 - 1)):
            rows = delta_constraint_rows(kind, 5, 4)
            assert np.linalg.matrix_rank(rows) == want

    def test_constraint_rows_span_structure_null_space(self):
        # the delta constraints must remove exactly the improper directions
        Rg = rw1_precision(3)
        Rx = icar_precision(path_graph(4))
        for kind in ("II", "III", "IV"):
            M = interaction_structure(kind, Rg, Rx, 4, 3)
            rows = delta_constraint_rows(kind, 4, 3)
            vals, vecs = np.linalg.eigh(M.dense())
            null = vecs[:, vals < 1e-9]
            # every null vector lies in the row space of the constraints
            proj = rows.T @ np.linalg.pinv(rows.T)
            assert np.allclose(proj @ null, null, atol=1e-8)


class TestGeneralizedInverse:
    def test_moore_penrose_identity(self):
        for R in (icar_precision(path_graph(5)), rw1_precision(6),
                  interaction_structure("IV", rw1_precision(3),
                                        icar_precision(path_graph(3)), 3, 3)):
            Rp = generalized_inverse(R)
            D = R.dense()
            assert np.allclose(D @ Rp @ D, D, atol=1e-8)
            assert np.allclose(Rp @ D @ Rp, Rp, atol=1e-8)

    def test_solve_generalized_dense_path(self):
        R = icar_precision(grid_graph(3, 3))
        b = np.arange(9.0)
        b -= b.mean()
        x = solve_generalized(R, b)
        assert np.allclose(R.dense() @ x, b, atol=1e-8)

    def test_solve_generalized_cg_path_matches_dense(self, monkeypatch):
        import gscanstat.gmrf as gmrf_mod
        R = icar_precision(grid_graph(5, 5))
        b = np.random.default_rng(0).normal(size=25)
        b -= b.mean()
        dense = solve_generalized(R, b)
        monkeypatch.setattr(gmrf_mod, "DENSE_LIMIT", 10)
        iterative = solve_generalized(R, b, null_basis=laplacian_null_basis(R))
        assert np.allclose(iterative, dense, atol=1e-7)


class TestBym2:
    def test_composite_covariance_psd_over_lambda(self):
        R = scale_structure(icar_precision(grid_graph(3, 2)))
        for lam in (0.0, 0.25, 0.5, 0.9, 1.0):
            C = bym2_covariance(R, tau=2.0, lam=lam)
            assert np.allclose(C, C.T)
            vals = np.linalg.eigvalsh(C)
            assert vals.min() >= -1e-10


class TestSampling:
    def test_constraints_hold_exactly(self):
        R = icar_precision(path_graph(3))
        A = np.ones((1, 3))
        for seed in (0, 1, 99):
            x = sample_constrained(R, 1.0, A, seed)
            assert abs(x.sum()) <= 1e-10

    def test_path3_covariance_matches_pinv(self):
        R = icar_precision(path_graph(3))
        A = np.ones((1, 3))
        draws = sample_constrained(R, 1.0, A, seed=42, size=100_000)
        emp = draws.T @ draws / len(draws)
        want = constrained_covariance(R, 1.0, A)
        assert np.allclose(want, generalized_inverse(R), atol=1e-10)
        se = np.sqrt((np.outer(np.diag(want), np.diag(want)) + want ** 2) / len(draws))
        assert np.all(np.abs(emp - want) <= 3 * se + 1e-12)

    def test_precision_scaling_law(self):
        R = icar_precision(path_graph(4))
        A = np.ones((1, 4))
        lo = sample_constrained(R, 1.0, A, seed=7, size=20_000)
        hi = sample_constrained(R, 4.0, A, seed=7, size=20_000)
        ratio = lo.std(axis=0) / hi.std(axis=0)
        assert np.allclose(ratio, 2.0, atol=0.05)

    def test_determinism(self):
        R = rw1_precision(5)
        A = np.ones((1, 5))
        x = sample_constrained(R, 2.0, A, seed=3, size=4)
        y = sample_constrained(R, 2.0, A, seed=3, size=4)
        assert np.array_equal(x, y)

    def test_type_iv_draws_satisfy_both_families(self):
        Rg = rw1_precision(3)
        Rx = icar_precision(path_graph(4))
        M = interaction_structure("IV", Rg, Rx, 4, 3)
        rows = delta_constraint_rows("IV", 4, 3)
        draws = sample_constrained(M, 1.0, rows, seed=11, size=50)
        full = np.zeros((3 + 4, 12))
        for t in range(3):
            full[t, t * 4:(t + 1) * 4] = 1.0
        for i in range(4):
            full[3 + i, i::4] = 1.0
        assert np.max(np.abs(full @ draws.T)) <= 1e-10


def test_matrix_market_dump(tmp_path):
    R = rw1_precision(4)
    out = tmp_path / "rw1.mtx"
    write_matrix_market(R, out)
    from scipy.io import mmread
    back = mmread(str(out)).toarray()
    assert np.allclose(back, R.dense())
