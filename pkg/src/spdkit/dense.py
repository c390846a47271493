"""Dense kernels: Cholesky, triangular solves, and the early-stopping
column-pivoted rank-revealing QR that drives interface sparsification.

Cholesky and the triangular solves wrap LAPACK (potrf/trtrs/trtri) behind
the package's error types.  The rank-revealing QR is implemented here in
full because its stopping and classification rules are the heart of the
sparsification schemes: classical max-norm column pivoting with running
norm downdates, a strict relative stopping test, and a pivot-magnitude
split of the basis into coarse and fine groups.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import lapack

from .errors import DimensionMismatch, NonFinite, NotSPD, SingularTriangular


class SchemeKind(Enum):
    """Off-diagonal sparsification schemes.

    FIRST_ORDER drops the fine-fine coupling entirely; the local error is
    of first order in the drop tolerance.  SECOND_ORDER_FULL keeps the fine
    coupling inside the factor and drops only its square from the trailing
    matrix, for a second-order local error.  SECOND_ORDER_SUPERFINE splits
    the fine group by pivot magnitude and keeps the correction only for the
    upper part, matching second-order accuracy at reduced memory.
    """

    FIRST_ORDER = "first"
    SECOND_ORDER_FULL = "second-full"
    SECOND_ORDER_SUPERFINE = "second-superfine"

    @classmethod
    def from_string(cls, s):
        for kind in cls:
            if kind.value == s:
                return kind
        names = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown scheme {s!r} (expected one of: {names})")


def cholesky(m):
    """Lower-triangular Cholesky factor of a symmetric positive definite
    matrix.  Raises NotSPD carrying the 0-based failing pivot index."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch("cholesky needs a square matrix")
    if a.shape[0] == 0:
        return np.zeros((0, 0))
    c, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotSPD(info - 1)
    if info < 0:
        raise ValueError(f"illegal argument {-info} to dpotrf")
    return c


def tri_solve(l, b, trans=False, side="left"):
    """Solve a triangular system with the lower factor L.

    side="left":  L X = B   (or L^T X = B when trans)
    side="right": X L = B   (or X L^T = B when trans)
    """
    l = np.asarray(l, dtype=np.float64)
    d = np.abs(np.diag(l))
    zero = np.nonzero(d == 0.0)[0]
    if zero.size:
        raise SingularTriangular(zero[0])
    b = np.asarray(b, dtype=np.float64)
    from scipy.linalg import solve_triangular

    if side == "left":
        return solve_triangular(l, b, lower=True, trans=1 if trans else 0,
                                check_finite=False)
    if side == "right":
        x = solve_triangular(l, b.T, lower=True, trans=0 if trans else 1,
                             check_finite=False)
        return x.T
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def tri_inverse(l):
    """Explicit inverse of a lower-triangular factor (internal cache for
    the solve phase; small well-conditioned blocks only)."""
    if l.shape[0] == 0:
        return np.zeros((0, 0))
    inv, info = lapack.dtrtri(l, lower=1)
    if info > 0:
        raise SingularTriangular(info - 1)
    return inv


@dataclass(frozen=True)
class RRQRResult:
    """Outcome of the early-stopping pivoted QR on an interface panel.

    q_c holds the coarse basis (pivots at or above the coarse tolerance),
    q_f the fine complement; for the superfine scheme q_f is ordered with
    the f2 columns (pivots in [eps^2, eps)) before the f1 remainder.
    r_coarse is Q_c^T A restored to original column order.  e_tilde is the
    correction block: empty for first order, Q_f^T A for the full
    second-order scheme, Q_f2^T A for superfine.
    """

    perm: np.ndarray
    q_c: np.ndarray
    q_f: np.ndarray
    r_coarse: np.ndarray
    e_tilde: np.ndarray
    rank_c: int
    rank_f2: int


def _rrqr_core(a, coarse_tol, stop_tol):
    """Column-pivoted Householder QR, stopped when the pivot magnitude
    drops strictly below stop_tol * |R(1,1)|.

    Returns (q, r, perm, pivots, k_stop, k_c) where k_stop is the number
    of columns eliminated and k_c the number whose pivot stayed at or
    above coarse_tol * |R(1,1)|.  Rows k_stop: of r hold the residual
    block Q_f^T A (in pivoted column order).
    """
    m, n = a.shape
    r = a.copy()
    q = np.eye(m)
    perm = np.arange(n)
    kmax = min(m, n)
    pivots = np.zeros(kmax)
    if kmax == 0:
        return q, r, perm, pivots, 0, 0
    norms2 = np.einsum("ij,ij->j", r, r)
    ref2 = norms2.copy()
    r11 = 0.0
    k = 0
    while k < kmax:
        j = k + int(np.argmax(norms2[k:]))
        eta = float(np.linalg.norm(r[k:, j]))
        norms2[j] = ref2[j] = eta * eta
        if k == 0:
            r11 = eta
            if r11 == 0.0:
                break
        if eta < stop_tol * r11:
            break
        if j != k:
            r[:, [k, j]] = r[:, [j, k]]
            perm[[k, j]] = perm[[j, k]]
            norms2[[k, j]] = norms2[[j, k]]
            ref2[[k, j]] = ref2[[j, k]]
        pivots[k] = eta
        if eta > 0.0:
            x = r[k:, k]
            beta = -eta if x[0] >= 0.0 else eta
            v = x.copy()
            v[0] -= beta
            scale = 2.0 / (v @ v)
            if k + 1 < n:
                w = (r[k:, k + 1:].T @ v) * scale
                r[k:, k + 1:] -= np.outer(v, w)
            r[k, k] = beta
            r[k + 1:, k] = 0.0
            qv = q[:, k:] @ v
            q[:, k:] -= np.outer(qv, v) * scale
            if k + 1 < n:
                rk = r[k, k + 1:]
                tail = norms2[k + 1:]
                tail -= rk * rk
                np.maximum(tail, 0.0, out=tail)
                stale = np.nonzero(tail < 0.01 * ref2[k + 1:])[0]
                if stale.size:
                    cols = k + 1 + stale
                    exact = np.einsum("ij,ij->j", r[k + 1:, cols],
                                      r[k + 1:, cols])
                    norms2[cols] = exact
                    ref2[cols] = exact
        k += 1
    k_stop = k
    below = np.nonzero(pivots[:k_stop] < coarse_tol * r11)[0]
    k_c = int(below[0]) if below.size else k_stop
    return q, r, perm, pivots, k_stop, k_c


def rrqr_sparsify(a_pw, eps, scheme):
    """Rank-revealing QR of an interface coupling panel with the stopping
    and classification rules of the requested scheme.

    The factorization eliminates pivot columns while the pivot magnitude
    |R(k,k)| stays at or above the stopping threshold (eps * |R(1,1)| for
    the first-order and full second-order schemes, eps^2 * |R(1,1)| for
    superfine; the test is strict, ties continue).  A zero panel returns
    rank_c = 0 with Q_f the identity.  The coarse basis is always the
    pivots at or above eps * |R(1,1)|.
    """
    a = np.array(a_pw, dtype=np.float64, copy=True)
    if a.ndim != 2:
        raise DimensionMismatch("panel must be 2-D")
    if not np.all(np.isfinite(a)):
        raise NonFinite("panel contains NaN or Inf")
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    m, n = a.shape
    stop_tol = eps * eps if scheme is SchemeKind.SECOND_ORDER_SUPERFINE else eps
    q, r, perm, pivots, k_stop, k_c = _rrqr_core(a, eps, stop_tol)
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    r_coarse = np.ascontiguousarray(r[:k_c, :][:, inv])
    q_c = np.ascontiguousarray(q[:, :k_c])
    q_f = np.ascontiguousarray(q[:, k_c:])
    if scheme is SchemeKind.FIRST_ORDER:
        e_tilde = np.zeros((0, n))
        rank_f2 = 0
    elif scheme is SchemeKind.SECOND_ORDER_FULL:
        e_tilde = np.ascontiguousarray(r[k_c:, :][:, inv])
        rank_f2 = 0
    else:
        e_tilde = np.ascontiguousarray(r[k_c:k_stop, :][:, inv])
        rank_f2 = k_stop - k_c
    return RRQRResult(perm=perm, q_c=q_c, q_f=q_f, r_coarse=r_coarse,
                      e_tilde=e_tilde, rank_c=k_c, rank_f2=rank_f2)
