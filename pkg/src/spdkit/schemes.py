"""Per-cluster block operators of the multilevel approximate factorization.

Three kinds of congruence steps act on the trailing matrix: elimination of
an interior block by one step of block Cholesky, symmetric rescaling of an
interface block to the identity, and sparsification of an interface by an
orthogonal change of basis that splits its coupling into coarse rows (kept)
and fine rows (compressed away).

The accuracy schemes differ only in what happens to the fine rows E of the
rotated coupling panel:

- first order drops E outright; the local error is of order ``eps``.
- full second order keeps E inside the factor through an error-correction
  operator and drops only the negative-semidefinite ``E^T E`` term from the
  trailing matrix; the local error is of order ``eps**2``.
- superfine second order keeps only the rows of E whose pivots lie in
  ``[eps**2, eps)`` and drops the rest; the local error stays of order
  ``eps**2`` at lower storage cost.

All three produce bit-identical trailing matrices for the same panel and
tolerance: the kept coarse rows and the neighbor block are untouched by the
choice of scheme.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dense import SchemeKind, cholesky, rrqr_sparsify, tri_inverse, tri_solve

__all__ = [
    "SchemeKind",
    "OpKind",
    "BlockOperator",
    "Elimination",
    "Scaling",
    "Orthogonal",
    "ErrorCorrection",
    "SparsificationResult",
    "make_elimination",
    "make_scaling",
    "make_sparsification",
    "local_error",
]


class OpKind(Enum):
    ELIMINATION = "elimination"
    SCALING = "scaling"
    ORTHOGONAL = "orthogonal"
    ERROR_CORRECTION = "error-correction"


class BlockOperator:
    """One factor of the inverse lower-triangular product.

    Operators mutate a global vector (or a stack of columns) in place:
    ``apply_inv`` multiplies by the operator itself, ``apply_inv_t`` by its
    transpose.  The whole preconditioner applies every recorded operator in
    order, then the transposes in reverse order.
    """

    kind = None

    def apply_inv(self, x):
        raise NotImplementedError

    def apply_inv_t(self, x):
        raise NotImplementedError

    @property
    def nnz(self):
        """Stored nonzeros of the factor payload (caches excluded)."""
        raise NotImplementedError


class Elimination(BlockOperator):
    """Block-Cholesky elimination of an interior block.

    Holds the lower Cholesky factor of the block diagonal and the coupling
    panel (neighbor rows times the inverse transposed factor).  Applying the
    operator solves the triangular system on the block and subtracts the
    panel contribution from the neighbors.
    """

    kind = OpKind.ELIMINATION

    def __init__(self, dofs, w_dofs, lower, panel):
        self.dofs = np.asarray(dofs, dtype=np.int64)
        self.w_dofs = np.asarray(w_dofs, dtype=np.int64)
        self.lower = lower
        self.panel = panel
        self._lower_inv = None

    @property
    def lower_inv(self):
        if self._lower_inv is None:
            self._lower_inv = tri_inverse(self.lower)
        return self._lower_inv

    def apply_inv(self, x):
        t = self.lower_inv @ x[self.dofs]
        x[self.dofs] = t
        if self.w_dofs.size:
            x[self.w_dofs] -= self.panel @ t

    def apply_inv_t(self, x):
        v = x[self.dofs]
        if self.w_dofs.size:
            v = v - self.panel.T @ x[self.w_dofs]
        x[self.dofs] = self.lower_inv.T @ v

    @property
    def nnz(self):
        return int(np.count_nonzero(self.lower)) + int(
            np.count_nonzero(self.panel))


class Scaling(BlockOperator):
    """Symmetric rescaling of an interface block to the identity."""

    kind = OpKind.SCALING

    def __init__(self, dofs, lower):
        self.dofs = np.asarray(dofs, dtype=np.int64)
        self.lower = lower
        self._lower_inv = None

    @property
    def lower_inv(self):
        if self._lower_inv is None:
            self._lower_inv = tri_inverse(self.lower)
        return self._lower_inv

    def apply_inv(self, x):
        x[self.dofs] = self.lower_inv @ x[self.dofs]

    def apply_inv_t(self, x):
        x[self.dofs] = self.lower_inv.T @ x[self.dofs]

    @property
    def nnz(self):
        return int(np.count_nonzero(self.lower))


class Orthogonal(BlockOperator):
    """Orthogonal change of basis on an interface block.

    The stored square matrix has its columns ordered fine-first (for the
    superfine scheme the band rows come before the rest of the fine block),
    coarse last, so after application the first ``n_fine`` slots of the
    block hold the fine components.
    """

    kind = OpKind.ORTHOGONAL

    def __init__(self, dofs, q):
        self.dofs = np.asarray(dofs, dtype=np.int64)
        self.q = q

    def apply_inv(self, x):
        x[self.dofs] = self.q.T @ x[self.dofs]

    def apply_inv_t(self, x):
        x[self.dofs] = self.q @ x[self.dofs]

    @property
    def nnz(self):
        return int(np.count_nonzero(self.q))


class ErrorCorrection(BlockOperator):
    """Second-order correction coupling fine rows back to the neighbors.

    ``dofs`` are the fine slots whose rows of the rotated panel are kept
    (all fine slots for the full scheme, only the band rows for superfine);
    ``w_dofs`` are the neighbor dofs the panel columns refer to.
    """

    kind = OpKind.ERROR_CORRECTION

    def __init__(self, dofs, w_dofs, e_tilde):
        self.dofs = np.asarray(dofs, dtype=np.int64)
        self.w_dofs = np.asarray(w_dofs, dtype=np.int64)
        self.e_tilde = e_tilde

    def apply_inv(self, x):
        x[self.w_dofs] -= self.e_tilde.T @ x[self.dofs]

    def apply_inv_t(self, x):
        x[self.dofs] -= self.e_tilde @ x[self.w_dofs]

    @property
    def nnz(self):
        return int(np.count_nonzero(self.e_tilde))


def make_elimination(a_ss, a_ws, s_dofs=None, w_dofs=None):
    """Eliminate an interior block by one step of block Cholesky.

    Returns the elimination operator and the Schur update (the matrix to
    subtract from the neighbor block).  After applying the operator as a
    congruence, the interior block is the identity and its couplings are
    zero.
    """
    a_ss = np.asarray(a_ss, dtype=np.float64)
    a_ws = np.asarray(a_ws, dtype=np.float64)
    ns = a_ss.shape[0]
    nw = a_ws.shape[0]
    if s_dofs is None:
        s_dofs = np.arange(ns)
    if w_dofs is None:
        w_dofs = ns + np.arange(nw)
    lower = cholesky(a_ss)
    if nw:
        panel = tri_solve(lower, a_ws, trans=True, side="right")
    else:
        panel = np.zeros((0, ns))
    update = panel @ panel.T
    return Elimination(s_dofs, w_dofs, lower, panel), update


def make_scaling(a_pp, a_pw, p_dofs=None):
    """Rescale an interface block to the identity.

    Returns the scaling operator and the rescaled coupling panel, ready for
    sparsification.
    """
    a_pp = np.asarray(a_pp, dtype=np.float64)
    a_pw = np.asarray(a_pw, dtype=np.float64)
    if p_dofs is None:
        p_dofs = np.arange(a_pp.shape[0])
    lower = cholesky(a_pp)
    panel = tri_solve(lower, a_pw) if a_pw.size else np.zeros(a_pw.shape)
    return Scaling(p_dofs, lower), panel


def _spectral(a):
    if min(a.shape) == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


@dataclass(frozen=True)
class SparsificationResult:
    """Operators and bookkeeping from sparsifying one interface panel.

    ``coarse_rows`` is the kept coupling (coarse basis times panel) in
    original column order; it is identical across schemes, so the trailing
    matrix never depends on the scheme.  ``correction`` is None when there
    is nothing to correct (first order, or no fine rows kept).

    The dropped-term norms are spectral norms of the exactly dropped
    blocks, retained only when requested: ``e_norm`` for the whole fine
    block (first order and full second order), ``e1_norm``/``e2_norm`` for
    the superfine split.
    """

    orthogonal: Orthogonal
    correction: ErrorCorrection | None
    coarse_rows: np.ndarray
    n_fine: int
    rank_c: int
    rank_f2: int
    scheme: SchemeKind
    e_norm: float | None = field(default=None)
    e1_norm: float | None = field(default=None)
    e2_norm: float | None = field(default=None)


def make_sparsification(panel, eps, scheme, p_dofs=None, w_dofs=None,
                        keep_error_info=True):
    """Compress an interface's rescaled coupling panel.

    Runs the early-stopping pivoted QR, wraps the orthogonal change of
    basis and (for second-order schemes) the error-correction operator, and
    returns the kept coarse rows that replace the interface's coupling in
    the trailing matrix.  With ``keep_error_info`` the spectral norms of
    the dropped blocks are computed eagerly for local error reporting;
    disabling it skips that extra work in production factorizations.
    """
    panel = np.asarray(panel, dtype=np.float64)
    m, nw = panel.shape
    if p_dofs is None:
        p_dofs = np.arange(m)
    if w_dofs is None:
        w_dofs = m + np.arange(nw)
    res = rrqr_sparsify(panel, eps, scheme)
    n_fine = m - res.rank_c
    q = np.hstack([res.q_f, res.q_c])
    orthogonal = Orthogonal(p_dofs, q)
    n_corr = res.e_tilde.shape[0]
    correction = None
    if n_corr and res.e_tilde.size:
        correction = ErrorCorrection(p_dofs[:n_corr], w_dofs, res.e_tilde)
    e_norm = e1_norm = e2_norm = None
    if keep_error_info:
        if scheme is SchemeKind.SECOND_ORDER_SUPERFINE:
            e2_norm = _spectral(res.e_tilde)
            q_f1 = res.q_f[:, res.rank_f2:]
            e1_norm = _spectral(q_f1.T @ panel) if q_f1.size else 0.0
        elif scheme is SchemeKind.SECOND_ORDER_FULL:
            e_norm = _spectral(res.e_tilde)
        else:
            e_norm = _spectral(res.q_f.T @ panel) if res.q_f.size else 0.0
    return SparsificationResult(
        orthogonal=orthogonal,
        correction=correction,
        coarse_rows=res.r_coarse,
        n_fine=n_fine,
        rank_c=res.rank_c,
        rank_f2=res.rank_f2,
        scheme=scheme,
        e_norm=e_norm,
        e1_norm=e1_norm,
        e2_norm=e2_norm,
    )


def local_error(scheme, result):
    """Spectral norm of the exactly dropped term for one sparsification.

    First order drops the whole fine coupling (norm ``e``); full second
    order drops only its square (``e**2``); superfine drops the square of
    the kept band and the tail rows outright.
    """
    if scheme is SchemeKind.FIRST_ORDER:
        if result.e_norm is None:
            raise ValueError("sparsification ran without error info")
        return result.e_norm
    if scheme is SchemeKind.SECOND_ORDER_FULL:
        if result.e_norm is None:
            raise ValueError("sparsification ran without error info")
        return result.e_norm ** 2
    if scheme is SchemeKind.SECOND_ORDER_SUPERFINE:
        if result.e1_norm is None or result.e2_norm is None:
            raise ValueError("sparsification ran without error info")
        return max(result.e2_norm ** 2, result.e1_norm)
    raise ValueError(f"unknown scheme {scheme!r}")
