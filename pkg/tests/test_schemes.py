"""Tests for the per-cluster block operators and sparsification schemes."""

import numpy as np
import pytest

from spdkit.schemes import (
    OpKind,
    SchemeKind,
    local_error,
    make_elimination,
    make_scaling,
    make_sparsification,
)

ALL_SCHEMES = [
    SchemeKind.FIRST_ORDER,
    SchemeKind.SECOND_ORDER_FULL,
    SchemeKind.SECOND_ORDER_SUPERFINE,
]


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    return m @ m.T + n * np.eye(n)


def with_singular_values(m, n, svals, seed):
    rng = np.random.default_rng(seed)
    u, _ = np.linalg.qr(rng.standard_normal((m, m)))
    v, _ = np.linalg.qr(rng.standard_normal((n, n)))
    s = np.zeros((m, n))
    k = min(m, n, len(svals))
    s[:k, :k] = np.diag(svals[:k])
    return u @ s @ v.T


def diag_panel(svals, n_cols):
    """Panel whose pivoted-QR pivots equal ``svals`` exactly."""
    m = len(svals)
    s = np.zeros((m, n_cols))
    s[:, :m] = np.diag(svals)
    return s


def op_matrix(ops, n):
    """Dense matrix of the ordered operator product (the inverse factor)."""
    m = np.eye(n)
    for op in ops:
        op.apply_inv(m)
    return m


def op_matrix_t(ops, n):
    m = np.eye(n)
    for op in reversed(ops):
        op.apply_inv_t(m)
    return m


class TestElimination:
    def test_decoupled_block_gives_trivial_factors(self):
        op, update = make_elimination(np.eye(3), np.zeros((4, 3)))
        assert np.array_equal(op.lower, np.eye(3))
        assert np.array_equal(op.panel, np.zeros((4, 3)))
        assert np.array_equal(update, np.zeros((4, 4)))
        assert op.kind is OpKind.ELIMINATION

    def test_two_by_two_schur_update(self):
        a = np.array([[4.0, 2.0], [2.0, 5.0]])
        op, update = make_elimination(a[:1, :1], a[1:, :1])
        assert op.lower[0, 0] == 2.0
        assert op.panel[0, 0] == 1.0
        assert update[0, 0] == 1.0
        assert a[1, 1] - update[0, 0] == 4.0

    def test_no_neighbors(self):
        op, update = make_elimination(np.array([[9.0]]), np.zeros((0, 1)))
        assert update.shape == (0, 0)
        x = np.array([6.0])
        op.apply_inv(x)
        assert x[0] == 2.0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_schur_update_matches_dense_formula(self, seed):
        a = random_spd(12, seed)
        a_ss, a_ws = a[:4, :4], a[4:, :4]
        _, update = make_elimination(a_ss, a_ws)
        oracle = a_ws @ np.linalg.solve(a_ss, a_ws.T)
        assert np.linalg.norm(update - oracle) <= 1e-12 * np.linalg.norm(a)

    @pytest.mark.parametrize("seed", [3, 4])
    def test_congruence_zeroes_block_and_leaves_schur(self, seed):
        a = random_spd(12, seed)
        op, update = make_elimination(a[:4, :4], a[4:, :4])
        g = op_matrix([op], 12)
        out = g @ a @ g.T
        expect = np.eye(12)
        expect[4:, 4:] = a[4:, 4:] - update
        assert np.linalg.norm(out - expect) <= 1e-11

    def test_apply_matches_dense_action_on_scattered_dofs(self):
        rng = np.random.default_rng(7)
        a = random_spd(7, 11)
        s_dofs = np.array([2, 7, 9])
        w_dofs = np.array([0, 4, 5, 11])
        op, _ = make_elimination(a[:3, :3], a[3:, :3], s_dofs, w_dofs)
        g = np.eye(12)
        g[np.ix_(s_dofs, s_dofs)] = op.lower_inv
        g[np.ix_(w_dofs, s_dofs)] = -op.panel @ op.lower_inv
        x = rng.standard_normal(12)
        got = x.copy()
        op.apply_inv(got)
        assert np.allclose(got, g @ x, atol=1e-13)
        got_t = x.copy()
        op.apply_inv_t(got_t)
        assert np.allclose(got_t, g.T @ x, atol=1e-13)

    def test_apply_handles_column_stacks(self):
        a = random_spd(6, 5)
        op, _ = make_elimination(a[:2, :2], a[2:, :2])
        cols = np.random.default_rng(0).standard_normal((6, 3))
        stacked = cols.copy()
        op.apply_inv(stacked)
        for j in range(3):
            single = cols[:, j].copy()
            op.apply_inv(single)
            assert np.allclose(stacked[:, j], single, atol=1e-14)

    def test_nnz_counts_stored_payloads(self):
        op, _ = make_elimination(np.eye(3), np.zeros((2, 3)))
        assert op.nnz == 3


class TestScaling:
    def test_identity_block_is_noop(self):
        panel_in = np.arange(6.0).reshape(2, 3)
        op, panel = make_scaling(np.eye(2), panel_in)
        assert np.array_equal(op.lower, np.eye(2))
        assert np.array_equal(panel, panel_in)
        assert op.kind is OpKind.SCALING

    def test_multiple_of_identity_halves_panel(self):
        op, panel = make_scaling(4.0 * np.eye(3), np.ones((3, 5)))
        assert np.array_equal(panel, 0.5 * np.ones((3, 5)))
        assert np.array_equal(op.lower, 2.0 * np.eye(3))

    @pytest.mark.parametrize("seed", [0, 1])
    def test_factor_and_panel_reconstruct_blocks(self, seed):
        a_pp = random_spd(8, seed)
        a_pw = np.random.default_rng(seed + 100).standard_normal((8, 15))
        op, panel = make_scaling(a_pp, a_pw)
        assert np.linalg.norm(op.lower @ op.lower.T - a_pp) <= 1e-12 * np.linalg.norm(a_pp)
        assert np.linalg.norm(op.lower @ panel - a_pw) <= 1e-12 * np.linalg.norm(a_pw)

    def test_apply_is_triangular_solve(self):
        a_pp = random_spd(5, 3)
        op, _ = make_scaling(a_pp, np.zeros((5, 0)))
        x = np.random.default_rng(1).standard_normal(5)
        got = x.copy()
        op.apply_inv(got)
        assert np.allclose(got, np.linalg.solve(op.lower, x), atol=1e-13)
        got_t = x.copy()
        op.apply_inv_t(got_t)
        assert np.allclose(got_t, np.linalg.solve(op.lower.T, x), atol=1e-13)

    def test_congruence_turns_block_into_identity(self):
        a_pp = random_spd(6, 9)
        op, _ = make_scaling(a_pp, np.zeros((6, 0)))
        z_inv = op.lower_inv
        assert np.linalg.norm(z_inv @ a_pp @ z_inv.T - np.eye(6)) <= 1e-12


class TestSparsificationExamples:
    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_eps_zero_keeps_every_row(self, scheme):
        panel = np.random.default_rng(2).standard_normal((4, 7))
        res = make_sparsification(panel, 0.0, scheme)
        assert res.n_fine == 0
        assert res.rank_c == 4
        assert res.correction is None
        assert np.linalg.norm(
            res.orthogonal.q @ res.coarse_rows - panel) <= 1e-12

    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_eps_one_keeps_at_most_one_row(self, scheme):
        panel = np.random.default_rng(3).standard_normal((5, 8))
        res = make_sparsification(panel, 1.0, scheme)
        assert res.rank_c <= 1
        assert res.n_fine == 5 - res.rank_c

    def test_superfine_band_ranks_on_gapped_spectrum(self):
        svals = [1.0, 0.5, 1e-4, 1e-5, 1e-9, 1e-10]
        panel = with_singular_values(6, 10, svals, seed=4)
        res = make_sparsification(panel, 1e-2,
                                  SchemeKind.SECOND_ORDER_SUPERFINE)
        assert res.rank_c == 2
        # One singular value (1e-4) sits inside the kept band
        # [eps**2, eps); pivoted-QR pivots may move one borderline
        # direction across the edge, so allow off-by-one.
        assert 1 <= res.rank_f2 <= 2
        assert res.correction is not None
        assert res.correction.e_tilde.shape == (res.rank_f2, 10)

    def test_correction_dofs_are_leading_fine_slots(self):
        svals = [1.0, 0.5, 1e-4, 1e-5, 1e-9, 1e-10]
        panel = with_singular_values(6, 10, svals, seed=4)
        p_dofs = np.array([20, 21, 22, 23, 24, 25])
        w_dofs = 30 + np.arange(10)
        res = make_sparsification(panel, 1e-2,
                                  SchemeKind.SECOND_ORDER_SUPERFINE,
                                  p_dofs=p_dofs, w_dofs=w_dofs)
        assert np.array_equal(res.correction.dofs, p_dofs[:res.rank_f2])
        assert np.array_equal(res.correction.w_dofs, w_dofs)
        assert np.array_equal(res.orthogonal.dofs, p_dofs)

    def test_full_scheme_keeps_every_fine_row(self):
        svals = [1.0, 0.5, 1e-4, 1e-5, 1e-9, 1e-10]
        panel = with_singular_values(6, 10, svals, seed=4)
        res = make_sparsification(panel, 1e-2, SchemeKind.SECOND_ORDER_FULL)
        assert res.n_fine == 4
        assert res.correction.e_tilde.shape == (4, 10)

    def test_first_order_never_builds_correction(self):
        svals = [1.0, 0.5, 1e-4, 1e-5, 1e-9, 1e-10]
        panel = with_singular_values(6, 10, svals, seed=4)
        res = make_sparsification(panel, 1e-2, SchemeKind.FIRST_ORDER)
        assert res.correction is None
        assert res.n_fine == 4

    def test_orthogonal_payload_is_orthonormal(self):
        panel = np.random.default_rng(8).standard_normal((9, 14))
        for scheme in ALL_SCHEMES:
            res = make_sparsification(panel, 1e-1, scheme)
            q = res.orthogonal.q
            assert np.linalg.norm(q.T @ q - np.eye(9)) <= 1e-12


class TestLocalError:
    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_zero_dropped_term_gives_zero(self, scheme):
        res = make_sparsification(np.zeros((3, 6)), 1e-2, scheme)
        assert local_error(scheme, res) == 0.0

    def test_first_order_returns_dropped_norm(self):
        panel = diag_panel([1.0, 0.1], 4)
        res = make_sparsification(panel, 0.5, SchemeKind.FIRST_ORDER)
        assert res.n_fine == 1
        assert abs(local_error(SchemeKind.FIRST_ORDER, res) - 0.1) <= 1e-15

    def test_full_second_order_squares_dropped_norm(self):
        panel = diag_panel([1.0, 0.1], 4)
        res = make_sparsification(panel, 0.5, SchemeKind.SECOND_ORDER_FULL)
        err = local_error(SchemeKind.SECOND_ORDER_FULL, res)
        assert abs(err - 0.01) <= 1e-15

    def test_superfine_band_term_dominates(self):
        panel = diag_panel([1.0, 0.3, 1e-3], 5)
        res = make_sparsification(panel, 0.5,
                                  SchemeKind.SECOND_ORDER_SUPERFINE)
        err = local_error(SchemeKind.SECOND_ORDER_SUPERFINE, res)
        assert abs(err - 0.09) <= 1e-14

    def test_superfine_tail_term_dominates(self):
        panel = diag_panel([1.0, 0.251, 0.2], 5)
        res = make_sparsification(panel, 0.5,
                                  SchemeKind.SECOND_ORDER_SUPERFINE)
        err = local_error(SchemeKind.SECOND_ORDER_SUPERFINE, res)
        assert abs(err - 0.2) <= 1e-14

    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_requires_error_info(self, scheme):
        panel = np.random.default_rng(5).standard_normal((4, 6))
        res = make_sparsification(panel, 1e-1, scheme,
                                  keep_error_info=False)
        with pytest.raises(ValueError):
            local_error(scheme, res)


def spd_from_panel(panel):
    """SPD matrix with identity interface block and prescribed coupling."""
    mp, nw = panel.shape
    a = np.zeros((mp + nw, mp + nw))
    a[:mp, :mp] = np.eye(mp)
    a[:mp, mp:] = panel
    a[mp:, :mp] = panel.T
    a[mp:, mp:] = panel.T @ panel + 0.5 * np.eye(nw)
    return a


def two_block_matrix(mp, nw, svals, seed):
    panel = with_singular_values(mp, nw, svals, seed)
    return spd_from_panel(panel), panel


def pipeline(a, mp, eps, scheme):
    """Scale + sparsify the leading block; return ops and bookkeeping."""
    n = a.shape[0]
    p_dofs = np.arange(mp)
    w_dofs = np.arange(mp, n)
    scale, panel = make_scaling(a[:mp, :mp], a[:mp, mp:], p_dofs)
    res = make_sparsification(panel, eps, scheme, p_dofs, w_dofs)
    ops = [scale, res.orthogonal]
    if res.correction is not None:
        ops.append(res.correction)
    return ops, res


def scheme_trailing(a, mp, res):
    """Trailing model shared by every scheme: fine slots decouple to the
    identity, coarse slots keep their rows, the neighbor block is kept."""
    n = a.shape[0]
    t = np.eye(n)
    c_slots = np.arange(res.n_fine, mp)
    w_slots = np.arange(mp, n)
    t[np.ix_(c_slots, w_slots)] = res.coarse_rows
    t[np.ix_(w_slots, c_slots)] = res.coarse_rows.T
    t[np.ix_(w_slots, w_slots)] = a[mp:, mp:]
    return t


class TestSchemePipelines:
    def test_trailing_matrix_identical_across_schemes(self):
        svals = 10.0 ** (-0.5 * np.arange(8))
        a, _ = two_block_matrix(8, 12, svals, seed=6)
        results = [pipeline(a, 8, 1e-2, s)[1] for s in ALL_SCHEMES]
        base = results[0]
        for res in results[1:]:
            assert res.rank_c == base.rank_c
            assert np.array_equal(res.coarse_rows, base.coarse_rows)
            nf = base.n_fine
            assert np.array_equal(res.orthogonal.q[:, nf:],
                                  base.orthogonal.q[:, nf:])

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    @pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
    def test_trailing_matrix_stays_spd(self, seed, eps):
        svals = 10.0 ** (-0.6 * np.arange(7))
        a, _ = two_block_matrix(7, 11, svals, seed=seed)
        for scheme in ALL_SCHEMES:
            _, res = pipeline(a, 7, eps, scheme)
            n_keep = res.rank_c + 11
            t = scheme_trailing(a, 7, res)[7 - res.rank_c:, 7 - res.rank_c:]
            assert t.shape == (n_keep, n_keep)
            np.linalg.cholesky(t)

    def test_exact_reconstruction_when_nothing_is_dropped(self):
        svals = 10.0 ** (-0.5 * np.arange(8))
        a, _ = two_block_matrix(8, 12, svals, seed=7)
        ops, res = pipeline(a, 8, 1e-2, SchemeKind.SECOND_ORDER_FULL)
        n = a.shape[0]
        l_inv = op_matrix(ops, n)
        rotated = l_inv @ a @ l_inv.T
        t_exact = scheme_trailing(a, 8, res)
        e = res.correction.e_tilde
        t_exact[8:, 8:] -= e.T @ e
        assert np.linalg.norm(rotated - t_exact) <= 1e-12

    def test_inverse_transpose_is_transpose_of_inverse(self):
        svals = 10.0 ** (-0.5 * np.arange(6))
        a, _ = two_block_matrix(6, 9, svals, seed=8)
        for scheme in ALL_SCHEMES:
            ops, _ = pipeline(a, 6, 1e-2, scheme)
            n = a.shape[0]
            assert np.allclose(op_matrix_t(ops, n), op_matrix(ops, n).T,
                               atol=1e-13)

    @pytest.mark.parametrize("scheme,expected_slope", [
        (SchemeKind.FIRST_ORDER, 1.0),
        (SchemeKind.SECOND_ORDER_FULL, 2.0),
        (SchemeKind.SECOND_ORDER_SUPERFINE, 2.0),
    ])
    def test_global_error_decay_slope(self, scheme, expected_slope):
        # Diagonal panel: pivots equal the singular values exactly, and
        # the 10**-0.45 spacing keeps every value clear of the tolerance
        # cut at each grid point, so the observed decay is deterministic.
        svals = 10.0 ** (-0.45 * np.arange(16))
        a = spd_from_panel(diag_panel(svals, 20))
        n = a.shape[0]
        eps_grid = [1e-1, 1e-2, 1e-3]
        errs = []
        for eps in eps_grid:
            ops, res = pipeline(a, 16, eps, scheme)
            l_inv = op_matrix(ops, n)
            lower = np.linalg.inv(l_inv)
            t = scheme_trailing(a, 16, res)
            errs.append(np.linalg.norm(a - lower @ t @ lower.T, 2))
        slope = np.polyfit(np.log10(eps_grid), np.log10(errs), 1)[0]
        assert abs(slope - expected_slope) <= 0.3

    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_global_error_matches_local_error(self, scheme):
        svals = 10.0 ** (-0.7 * np.arange(6))
        a, _ = two_block_matrix(6, 10, svals, seed=10)
        n = a.shape[0]
        ops, res = pipeline(a, 6, 1e-2, scheme)
        l_inv = op_matrix(ops, n)
        lower = np.linalg.inv(l_inv)
        t = scheme_trailing(a, 6, res)
        global_err = np.linalg.norm(a - lower @ t @ lower.T, 2)
        predicted = local_error(scheme, res)
        assert predicted > 0.0
        assert global_err <= 2.0 * predicted
        assert global_err >= predicted / 2.0

    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_three_block_chain_reconstructs_exactly(self, scheme):
        a = random_spd(20, 12)
        s_dofs = np.arange(5)
        p_dofs = np.arange(5, 11)
        w_dofs = np.arange(11, 20)
        pw_dofs = np.arange(5, 20)
        elim, update = make_elimination(a[:5, :5], a[5:, :5], s_dofs, pw_dofs)
        a1 = a[5:, 5:] - update
        scale, panel = make_scaling(a1[:6, :6], a1[:6, 6:], p_dofs)
        res = make_sparsification(panel, 1e-1, scheme, p_dofs, w_dofs)
        ops = [elim, scale, res.orthogonal]
        if res.correction is not None:
            ops.append(res.correction)
        l_inv = op_matrix(ops, 20)
        rotated = l_inv @ a @ l_inv.T

        expect = np.eye(20)
        c_slots = np.arange(5 + res.n_fine, 11)
        expect[np.ix_(c_slots, w_dofs)] = res.coarse_rows
        expect[np.ix_(w_dofs, c_slots)] = res.coarse_rows.T
        w_exact = a1[6:, 6:].copy()
        q_f = res.orthogonal.q[:, :res.n_fine]
        fine_rows = q_f.T @ panel
        kept = res.rank_f2 if scheme is SchemeKind.SECOND_ORDER_SUPERFINE \
            else (res.n_fine if scheme is SchemeKind.SECOND_ORDER_FULL else 0)
        if kept:
            w_exact -= fine_rows[:kept].T @ fine_rows[:kept]
        expect[np.ix_(w_dofs, w_dofs)] = w_exact
        if res.n_fine > kept:
            dropped = fine_rows[kept:]
            f_slots = np.arange(5 + kept, 5 + res.n_fine)
            expect[np.ix_(f_slots, w_dofs)] = dropped
            expect[np.ix_(w_dofs, f_slots)] = dropped.T
        assert np.linalg.norm(rotated - expect) <= 1e-11
