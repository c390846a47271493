"""Tests for the multilevel factorization driver."""

import numpy as np
import pytest

from spdkit.errors import DimensionMismatch, NotSPD, ParseError
from spdkit.factorize import (
    EliminationState,
    factorize,
    load_factor,
    memory_ratio,
    save_factor,
)
from spdkit.partition import build_hierarchy, default_levels
from spdkit.schemes import OpKind, SchemeKind
from spdkit.sparse import from_coo, laplacian_2d

ALL_SCHEMES = ["first", "second-full", "second-superfine"]


def identity_matrix(n):
    return from_coo(n, np.arange(n), np.arange(n), np.ones(n))


def dense_m(factor):
    return np.column_stack([factor.apply_m(col) for col in np.eye(factor.n)])


class TestEliminationState:
    def test_initial_blocks_reproduce_matrix(self):
        a = laplacian_2d(8)
        h = build_hierarchy(a, 2)
        state = EliminationState(a, h)
        assert np.array_equal(state.to_dense(), a.toarray())

    def test_eliminating_one_interior_leaves_exact_schur(self):
        a = laplacian_2d(8)
        h = build_hierarchy(a, 2)
        state = EliminationState(a, h)
        cid = min(c for c in state.active if state.depth[c] == h.levels)
        s = state.dofs_of[cid]
        dense = a.toarray()
        rest = np.setdiff1d(np.arange(a.n), s)
        expect = dense.copy()
        expect[np.ix_(rest, rest)] -= (
            dense[np.ix_(rest, s)]
            @ np.linalg.solve(dense[np.ix_(s, s)], dense[np.ix_(s, rest)]))
        expect[s, :] = 0.0
        expect[:, s] = 0.0
        expect[s, s] = 1.0
        state.eliminate_interior(cid)
        got = state.to_dense()
        assert np.linalg.norm(got - expect) <= 1e-12 * np.linalg.norm(dense)
        assert np.linalg.norm(got - got.T) == 0.0

    def test_digest_tracks_trailing_changes(self):
        a = laplacian_2d(8)
        h = build_hierarchy(a, 2)
        state = EliminationState(a, h)
        before = state.digest()
        assert before == EliminationState(a, h).digest()
        cid = min(c for c in state.active if state.depth[c] == h.levels)
        state.eliminate_interior(cid)
        assert state.digest() != before

    def test_matrix_hierarchy_size_mismatch(self):
        a = laplacian_2d(8)
        h = build_hierarchy(laplacian_2d(4), 1)
        with pytest.raises(DimensionMismatch):
            EliminationState(a, h)


class TestFactorizeExamples:
    def test_identity_matrix_gives_identity_factor(self):
        n = 64
        ident = identity_matrix(n)
        h = build_hierarchy(ident, default_levels(n))
        f = factorize(ident, h, 0.1, "first")
        assert memory_ratio(f, ident) == 1.0
        x = np.random.default_rng(0).standard_normal(n)
        assert np.array_equal(f.apply_m(x), x)
        for op in f.ops:
            assert op.kind is OpKind.ELIMINATION
            assert np.array_equal(op.lower, np.eye(op.lower.shape[0]))

    def test_exact_at_eps_zero(self):
        a = laplacian_2d(16)
        h = build_hierarchy(a, default_levels(a.n))
        f = factorize(a, h, 0.0, "first")
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.standard_normal(a.n)
            resid = np.linalg.norm(f.apply_m(a.matvec(x)) - x)
            assert resid <= 1e-10 * np.linalg.norm(x)

    def test_single_cluster_matrix_inverts_exactly(self):
        a = from_coo(2, np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]),
                     np.array([4.0, 2.0, 2.0, 5.0]))
        h = build_hierarchy(a, 1)
        f = factorize(a, h, 0.1, "first")
        assert len(f.ops) == 1
        m = dense_m(f)
        assert np.linalg.norm(m - np.linalg.inv(a.toarray())) <= 1e-14

    def test_trailing_matrices_identical_across_schemes(self):
        a = laplacian_2d(64)
        h = build_hierarchy(a, default_levels(a.n))
        factors = {s: factorize(a, h, 0.01, s) for s in ALL_SCHEMES}
        digests = {
            s: [lv["digest"] for lv in f.diagnostics["levels"]]
            for s, f in factors.items()
        }
        assert digests["first"] == digests["second-full"]
        assert digests["first"] == digests["second-superfine"]

    def test_factors_differ_only_by_corrections(self):
        a = laplacian_2d(64)
        h = build_hierarchy(a, default_levels(a.n))
        fo = factorize(a, h, 0.01, "first")
        fu = factorize(a, h, 0.01, "second-full")
        fu_base = [op for op in fu.ops
                   if op.kind is not OpKind.ERROR_CORRECTION]
        assert all(op.kind is not OpKind.ERROR_CORRECTION for op in fo.ops)
        assert any(op.kind is OpKind.ERROR_CORRECTION for op in fu.ops)
        assert len(fo.ops) == len(fu_base)
        for x, y in zip(fo.ops, fu_base):
            assert x.kind is y.kind
            assert np.array_equal(x.dofs, y.dofs)
            if x.kind is OpKind.ELIMINATION:
                assert np.array_equal(x.lower, y.lower)
                assert np.array_equal(x.panel, y.panel)
            elif x.kind is OpKind.SCALING:
                assert np.array_equal(x.lower, y.lower)
            else:
                # same stop tolerance, so the orthogonal payloads agree
                # bitwise between the first-order and full schemes
                assert np.array_equal(x.q, y.q)


class TestFactorizationProperties:
    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_preconditioner_is_spd(self, scheme):
        a = laplacian_2d(8)
        h = build_hierarchy(a, 3)
        f = factorize(a, h, 0.1, scheme, skip_levels=0)
        m = dense_m(f)
        assert np.linalg.norm(m - m.T) <= 1e-12
        assert np.linalg.eigvalsh((m + m.T) / 2).min() > 0.0
        rng = np.random.default_rng(2)
        for _ in range(100):
            x = rng.standard_normal(a.n)
            assert x @ f.apply_m(x) > 0.0

    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_exactness_at_eps_zero_all_schemes(self, scheme):
        a = laplacian_2d(16)
        h = build_hierarchy(a, 4)
        f = factorize(a, h, 0.0, scheme, skip_levels=0)
        rng = np.random.default_rng(3)
        x = rng.standard_normal(a.n)
        resid = np.linalg.norm(f.apply_m(a.matvec(x)) - x)
        assert resid <= 1e-10 * np.linalg.norm(x)

    def test_skipping_every_level_is_exact_block_cholesky(self):
        a = laplacian_2d(16)
        h = build_hierarchy(a, 4)
        f = factorize(a, h, 0.5, "first", skip_levels=h.levels)
        x = np.random.default_rng(4).standard_normal(a.n)
        resid = np.linalg.norm(f.apply_m(a.matvec(x)) - x)
        assert resid <= 1e-10 * np.linalg.norm(x)
        assert all(lv["skipped"] for lv in f.diagnostics["levels"])

    def test_factorization_is_deterministic(self):
        a = laplacian_2d(16)
        h = build_hierarchy(a, 4)
        fa = factorize(a, h, 0.05, "second-full", skip_levels=1)
        fb = factorize(a, h, 0.05, "second-full", skip_levels=1)
        assert len(fa.ops) == len(fb.ops)
        assert np.array_equal(fa.perm, fb.perm)
        assert fa.nnz_factor == fb.nnz_factor
        for x, y in zip(fa.ops, fb.ops):
            assert x.kind is y.kind
            assert np.array_equal(x.dofs, y.dofs)
            for name in ("lower", "panel", "q", "e_tilde"):
                if hasattr(x, name):
                    assert np.array_equal(getattr(x, name), getattr(y, name))

    def test_perm_is_a_permutation(self):
        a = laplacian_2d(16)
        h = build_hierarchy(a, 4)
        f = factorize(a, h, 0.1, "first", skip_levels=0)
        assert np.array_equal(np.sort(f.perm), np.arange(a.n))

    def test_memory_never_doubles_between_schemes(self):
        for d, eps in [(16, 0.1), (32, 0.01)]:
            a = laplacian_2d(d)
            h = build_hierarchy(a, default_levels(a.n))
            mu_fo = memory_ratio(factorize(a, h, eps, "first"), a)
            mu_fu = memory_ratio(factorize(a, h, eps, "second-full"), a)
            assert mu_fu / mu_fo <= 2.0
            assert mu_fu >= mu_fo

    def test_disconnected_matrix_factorizes(self):
        # two decoupled path graphs
        rows = []
        cols = []
        vals = []
        for base in (0, 8):
            for i in range(8):
                rows.append(base + i)
                cols.append(base + i)
                vals.append(2.0)
            for i in range(7):
                rows += [base + i, base + i + 1]
                cols += [base + i + 1, base + i]
                vals += [-1.0, -1.0]
        a = from_coo(16, np.array(rows), np.array(cols), np.array(vals))
        h = build_hierarchy(a, 2)
        f = factorize(a, h, 0.0, "first", skip_levels=0)
        x = np.random.default_rng(5).standard_normal(16)
        resid = np.linalg.norm(f.apply_m(a.matvec(x)) - x)
        assert resid <= 1e-10 * np.linalg.norm(x)

    def test_collect_local_errors_records_norms(self):
        a = laplacian_2d(16)
        h = build_hierarchy(a, 4)
        f = factorize(a, h, 0.1, "first", skip_levels=0,
                      collect_local_errors=True)
        entries = [e for lv in f.diagnostics["levels"]
                   for e in lv["interfaces"]]
        assert entries
        assert all("local_error" in e and e["local_error"] >= 0.0
                   for e in entries)
        assert any(e["local_error"] > 0.0 for e in entries)

    def test_rejects_bad_arguments(self):
        a = laplacian_2d(8)
        h = build_hierarchy(a, 2)
        with pytest.raises(ValueError):
            factorize(a, h, 1.5, "first")
        with pytest.raises(ValueError):
            factorize(a, h, -0.1, "first")
        with pytest.raises(ValueError):
            factorize(a, h, 0.1, "no-such-scheme")
        with pytest.raises(ValueError):
            factorize(a, h, 0.1, "first", skip_levels=-1)

    def test_apply_rejects_wrong_length(self):
        a = laplacian_2d(8)
        h = build_hierarchy(a, 2)
        f = factorize(a, h, 0.1, "first")
        with pytest.raises(DimensionMismatch):
            f.apply_inv(np.ones(a.n + 1))
        with pytest.raises(DimensionMismatch):
            f.apply_inv_t(np.ones(3))

    def test_indefinite_matrix_raises_not_spd(self):
        n = 16
        rows = list(range(n)) + list(range(n - 1)) + list(range(1, n))
        cols = list(range(n)) + list(range(1, n)) + list(range(n - 1))
        vals = [0.1] * n + [-1.0] * (2 * (n - 1))
        a = from_coo(n, np.array(rows), np.array(cols),
                     np.array(vals, dtype=float))
        h = build_hierarchy(a, 2)
        with pytest.raises(NotSPD):
            factorize(a, h, 0.0, "first")

    def test_inverse_transpose_matches_inverse(self):
        a = laplacian_2d(8)
        h = build_hierarchy(a, 3)
        f = factorize(a, h, 0.1, "second-full", skip_levels=0)
        l_inv = np.column_stack(
            [f.apply_inv(col) for col in np.eye(a.n)])
        l_inv_t = np.column_stack(
            [f.apply_inv_t(col) for col in np.eye(a.n)])
        assert np.allclose(l_inv_t, l_inv.T, atol=1e-13)


class TestSerialization:
    def roundtrip(self, tmp_path, scheme):
        a = laplacian_2d(16)
        h = build_hierarchy(a, 4)
        f = factorize(a, h, 0.05, scheme, skip_levels=1)
        path = tmp_path / "factor.bin"
        save_factor(f, path)
        return f, load_factor(path)

    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_roundtrip_preserves_everything(self, tmp_path, scheme):
        f, g = self.roundtrip(tmp_path, scheme)
        assert g.n == f.n
        assert g.eps == f.eps
        assert g.scheme is f.scheme
        assert g.skip_levels == f.skip_levels
        assert g.nnz_factor == f.nnz_factor
        assert np.array_equal(g.perm, f.perm)
        assert len(g.ops) == len(f.ops)
        for x, y in zip(f.ops, g.ops):
            assert x.kind is y.kind
            assert np.array_equal(x.dofs, y.dofs)
            for name in ("w_dofs", "lower", "panel", "q", "e_tilde"):
                if hasattr(x, name):
                    assert np.array_equal(getattr(x, name), getattr(y, name))

    def test_loaded_factor_applies_identically(self, tmp_path):
        f, g = self.roundtrip(tmp_path, "second-superfine")
        x = np.random.default_rng(6).standard_normal(f.n)
        assert np.array_equal(f.apply_m(x), g.apply_m(x))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ParseError):
            load_factor(path)

    def test_truncated_file_rejected(self, tmp_path):
        a = laplacian_2d(8)
        h = build_hierarchy(a, 2)
        f = factorize(a, h, 0.1, "first")
        path = tmp_path / "factor.bin"
        save_factor(f, path)
        data = path.read_bytes()
        path.write_bytes(data[:len(data) // 2])
        with pytest.raises(ParseError):
            load_factor(path)

    def test_unknown_version_rejected(self, tmp_path):
        a = laplacian_2d(8)
        h = build_hierarchy(a, 2)
        f = factorize(a, h, 0.1, "first")
        path = tmp_path / "factor.bin"
        save_factor(f, path)
        data = bytearray(path.read_bytes())
        data[4] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(ParseError):
            load_factor(path)
