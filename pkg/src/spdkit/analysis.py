"""Dense two-level laboratory for the sparsification schemes.

Everything in this module works on a single split of a dense SPD matrix:
the leading block is scaled to the identity, rotated so that its coupling
to the rest concentrates in a few coarse rows, and the remaining fine
coupling rows are either dropped, kept in the factor, or kept partially.
Because the split is done once and the kept system is factored exactly,
the quality of each scheme can be measured in closed form:

* ``build_two_level`` assembles the scaled/rotated decomposition and the
  norm ``e_tilde`` of the dropped coupling whitened by the kept system.
* ``cond_first`` / ``cond_second`` give the condition numbers of the
  preconditioned operator for the drop-everything and keep-everything
  schemes, both closed-form functions of ``e_tilde``.
* ``precond_matrix`` realizes the preconditioned operator densely for
  spectral inspection, for any of the three schemes.
* ``rate_identity`` evaluates both convergence-rate bounds and the gap
  in the exact squaring identity relating them.
* ``make_theorem_instance`` / ``theorem_harness`` build model systems
  whose right-hand side is orthogonal to the coupling and check, by
  running plain conjugate gradients on both preconditioned forms, that
  every second residual of the one matches the other exactly.
* ``forward_error`` measures ``||(I - MA) v||`` on unit eigenvectors.
"""

import numpy as np

from .dense import SchemeKind, cholesky, rrqr_sparsify, tri_solve
from .errors import Breakdown, DimensionMismatch, NotSymmetricReal
from .krylov import _as_apply, cg_bound_rate

__all__ = [
    "TwoLevelSetup",
    "TheoremInstance",
    "build_two_level",
    "cond_first",
    "cond_second",
    "precond_matrix",
    "rate_identity",
    "make_theorem_instance",
    "theorem_harness",
    "forward_error",
]


def _spectral(m):
    """2-norm of a dense matrix; 0.0 when either dimension is empty."""
    if min(m.shape) == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


class TwoLevelSetup:
    """One exact split of a dense SPD matrix into kept and dropped parts.

    After scaling the leading block to the identity and rotating it, the
    matrix decomposes as

        a = scaling @ rotation @ [[I, e_hat], [e_hat.T, a_hat]]
            @ rotation.T @ scaling.T

    where the identity block spans the ``n_fine`` fine directions of the
    leading block, ``a_hat`` is the kept system (identity coarse block,
    coarse coupling rows, untouched trailing block), and ``e_hat`` is the
    dropped fine-to-trailing coupling padded with zero coarse columns.

    ``l_hat`` is the exact Cholesky factor of ``a_hat`` and ``e_tilde``
    is the spectral norm of ``l_hat^-1 e_hat.T`` — the dropped coupling
    measured in the metric of the kept system.  It is below one for any
    SPD input.  For the superfine scheme the rows of ``e_hat`` split into
    the kept band ``e_hat2`` (first ``rank_f2`` rows) and the dropped
    tail ``e_hat1``; both are None for the other schemes.
    """

    def __init__(self, a, scaling, rotation, a_hat, e_hat, l_hat, e_tilde,
                 leading_size, n_fine, rank_c, scheme,
                 e_hat1=None, e_hat2=None):
        self.a = a
        self.scaling = scaling
        self.rotation = rotation
        self.a_hat = a_hat
        self.e_hat = e_hat
        self.l_hat = l_hat
        self.e_tilde = e_tilde
        self.leading_size = leading_size
        self.n_fine = n_fine
        self.rank_c = rank_c
        self.scheme = scheme
        self.e_hat1 = e_hat1
        self.e_hat2 = e_hat2

    @property
    def n(self):
        return self.a.shape[0]

    def middle_matrix(self):
        """The exact middle factor [[I, e_hat], [e_hat.T, a_hat]]."""
        nf = self.n_fine
        mid = np.zeros((self.n, self.n))
        mid[:nf, :nf] = np.eye(nf)
        mid[:nf, nf:] = self.e_hat
        mid[nf:, :nf] = self.e_hat.T
        mid[nf:, nf:] = self.a_hat
        return mid

    def __repr__(self):
        return (f"TwoLevelSetup(n={self.n}, leading_size={self.leading_size}, "
                f"n_fine={self.n_fine}, rank_c={self.rank_c}, "
                f"e_tilde={self.e_tilde:.3e}, scheme={self.scheme.value!r})")


def build_two_level(a, leading_size, eps, scheme):
    """Split a dense SPD matrix at ``leading_size`` and sparsify once.

    Scales the leading diagonal block to the identity with its Cholesky
    factor, runs one rank-revealing QR on the scaled coupling panel, and
    assembles the exact decomposition recorded in TwoLevelSetup.  The kept
    system is factored exactly, so the setup fully determines the quality
    of the two-level preconditioner for every scheme.

    Raises NotSPD when the leading block or the kept system is not
    positive definite, NotSymmetricReal for asymmetric input.
    """
    if isinstance(scheme, str):
        scheme = SchemeKind.from_string(scheme)
    a = np.array(a, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch("two-level setup needs a square matrix")
    n = a.shape[0]
    scale = max(1.0, float(np.max(np.abs(a)))) if n else 1.0
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * scale):
        raise NotSymmetricReal("two-level setup needs a symmetric matrix")
    if not 1 <= leading_size <= n:
        raise ValueError(
            f"leading block size must lie in [1, {n}], got {leading_size}")

    m1 = leading_size
    z1 = cholesky(a[:m1, :m1])
    panel = tri_solve(z1, a[:m1, m1:])
    res = rrqr_sparsify(panel, eps, scheme)

    rank_c = res.rank_c
    n_fine = m1 - rank_c
    n_rest = n - m1

    scaling = np.eye(n)
    scaling[:m1, :m1] = z1
    rotation = np.eye(n)
    rotation[:m1, :m1] = np.hstack([res.q_f, res.q_c])

    a_hat = np.zeros((rank_c + n_rest, rank_c + n_rest))
    a_hat[:rank_c, :rank_c] = np.eye(rank_c)
    a_hat[:rank_c, rank_c:] = res.r_coarse
    a_hat[rank_c:, :rank_c] = res.r_coarse.T
    a_hat[rank_c:, rank_c:] = a[m1:, m1:]
    l_hat = cholesky(a_hat)

    e_hat = np.zeros((n_fine, rank_c + n_rest))
    e_hat[:, rank_c:] = res.q_f.T @ panel
    e_tilde = _spectral(tri_solve(l_hat, e_hat.T))

    e_hat1 = e_hat2 = None
    if scheme is SchemeKind.SECOND_ORDER_SUPERFINE:
        e_hat2 = np.ascontiguousarray(e_hat[:res.rank_f2])
        e_hat1 = np.ascontiguousarray(e_hat[res.rank_f2:])

    return TwoLevelSetup(a=a, scaling=scaling, rotation=rotation,
                         a_hat=a_hat, e_hat=e_hat, l_hat=l_hat,
                         e_tilde=e_tilde, leading_size=m1, n_fine=n_fine,
                         rank_c=rank_c, scheme=scheme,
                         e_hat1=e_hat1, e_hat2=e_hat2)


def _check_e_tilde(e_tilde):
    if not 0.0 <= e_tilde < 1.0:
        raise ValueError(
            f"whitened coupling norm must lie in [0, 1), got {e_tilde}")


def cond_first(setup):
    """Condition number of the first-order preconditioned operator.

    The preconditioner drops the fine coupling entirely, leaving an
    identity-plus-coupling operator whose condition number is the
    closed form (1 + e_tilde) / (1 - e_tilde).
    """
    _check_e_tilde(setup.e_tilde)
    return (1.0 + setup.e_tilde) / (1.0 - setup.e_tilde)


def cond_second(setup):
    """Condition number of the full second-order preconditioned operator.

    The preconditioner keeps the fine coupling in the factor and drops
    only its square, leaving a block-diagonal operator with largest
    eigenvalue exactly one and condition number 1 / (1 - e_tilde**2).
    """
    _check_e_tilde(setup.e_tilde)
    return 1.0 / (1.0 - setup.e_tilde ** 2)


def _lower_factor(setup, scheme):
    """Dense lower factor of the two-level preconditioner for a scheme."""
    n = setup.n
    nf = setup.n_fine
    unit = np.eye(n)
    if scheme is SchemeKind.SECOND_ORDER_FULL:
        unit[nf:, :nf] = setup.e_hat.T
    elif scheme is SchemeKind.SECOND_ORDER_SUPERFINE:
        if setup.e_hat2 is None:
            raise ValueError("setup lacks the kept-band split; build it "
                             "with scheme='second-superfine'")
        band = setup.e_hat2.shape[0]
        unit[nf:, :band] = setup.e_hat2.T
    lower = np.eye(n)
    lower[nf:, nf:] = setup.l_hat
    return setup.scaling @ setup.rotation @ unit @ lower


def precond_matrix(setup, scheme):
    """Dense preconditioned operator L^-1 a L^-T for the given scheme.

    Realizes the two-level preconditioner factor densely and applies it
    to the original matrix, for spectral inspection.  For the first-order
    scheme the result is identity diagonal blocks with the whitened
    coupling off the diagonal; for the full second-order scheme it is
    block diagonal; for superfine the deviation from the identity is the
    whitened dropped tail plus the squared kept band.
    """
    if isinstance(scheme, str):
        scheme = SchemeKind.from_string(scheme)
    lower = _lower_factor(setup, scheme)
    w = np.linalg.solve(lower, setup.a)
    return np.linalg.solve(lower, w.T).T


def rate_identity(e_tilde):
    """Convergence-rate bounds of both schemes and their identity gap.

    Returns (r1, r2, gap) where r1 and r2 are the rate bounds implied by
    the first- and second-order condition numbers at the given coupling
    norm, and gap = |r1**2 - r2|, which is zero in exact arithmetic: the
    second-order rate bound is exactly the square of the first-order one.
    """
    _check_e_tilde(e_tilde)
    r1 = cg_bound_rate((1.0 + e_tilde) / (1.0 - e_tilde))
    r2 = cg_bound_rate(1.0 / (1.0 - e_tilde ** 2))
    return r1, r2, abs(r1 * r1 - r2)


class TheoremInstance:
    """Model preconditioned pair with a coupling-orthogonal right side.

    Holds a coupling block with spectral norm below one, the two halves
    of a shared right-hand side with ``coupling.T @ b1 = 0``, and the
    complement block ``schur_block = I - coupling.T @ coupling``.  The
    two systems of ``theorem_harness`` are assembled from these parts.
    ``infeasible`` flags the degenerate shape where the orthogonality
    constraint admits only ``b1 = 0`` (coupling with full row rank).
    """

    def __init__(self, coupling, b1, b2, infeasible=False):
        coupling = np.atleast_2d(np.asarray(coupling, dtype=np.float64))
        b1 = np.asarray(b1, dtype=np.float64).ravel()
        b2 = np.asarray(b2, dtype=np.float64).ravel()
        m1, m2 = coupling.shape
        if b1.size != m1 or b2.size != m2:
            raise DimensionMismatch(
                f"right-hand side halves must have sizes {m1} and {m2}, "
                f"got {b1.size} and {b2.size}")
        self.coupling = coupling
        self.b1 = b1
        self.b2 = b2
        self.schur_block = np.eye(m2) - coupling.T @ coupling
        self.infeasible = bool(infeasible)

    def __repr__(self):
        m1, m2 = self.coupling.shape
        return (f"TheoremInstance(m1={m1}, m2={m2}, "
                f"coupling_norm={_spectral(self.coupling):.3e}, "
                f"infeasible={self.infeasible})")


def make_theorem_instance(m1, m2, seed=0):
    """Random harness instance with the orthogonality constraint enforced.

    Draws a random coupling block scaled to spectral norm 0.8, a random
    second right-hand-side half, and a random first half projected onto
    the orthogonal complement of the coupling's column space.  When that
    complement is trivial (m1 <= m2 with full-rank coupling) the only
    admissible first half is zero; the instance is returned with
    ``infeasible=True`` rather than raising.
    """
    if m1 < 1 or m2 < 1:
        raise ValueError(f"block sizes must be positive, got {m1}, {m2}")
    rng = np.random.default_rng(seed)
    coupling = rng.standard_normal((m1, m2))
    coupling *= 0.8 / _spectral(coupling)
    b2 = rng.standard_normal(m2)
    raw = rng.standard_normal(m1)
    u, svals, _ = np.linalg.svd(coupling, full_matrices=True)
    rank = int(np.count_nonzero(svals > 1e-12 * svals[0]))
    null_basis = u[:, rank:]
    if null_basis.shape[1] == 0:
        return TheoremInstance(coupling, np.zeros(m1), b2, infeasible=True)
    b1 = null_basis @ (null_basis.T @ raw)
    return TheoremInstance(coupling, b1, b2)


def _plain_cg_residual_vectors(a, b, tol, maxit):
    """Residual vectors of plain CG from the zero vector on dense SPD a.

    Entry k of the returned list is the residual after k steps (entry
    zero is b itself).  Stops once the residual norm falls to tol times
    the right-hand-side norm, or after maxit steps.  Raises Breakdown on
    non-positive curvature, which signals an indefinite operator.
    """
    b_norm = float(np.linalg.norm(b))
    r = b.astype(np.float64, copy=True)
    vectors = [r.copy()]
    if b_norm == 0.0:
        return vectors
    p = r.copy()
    rr = float(r @ r)
    for _ in range(maxit):
        ap = a @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise Breakdown(f"system operator is not positive definite "
                            f"(p'Ap = {pap})")
        alpha = rr / pap
        r = r - alpha * ap
        vectors.append(r.copy())
        rr_next = float(r @ r)
        if np.sqrt(rr_next) <= tol * b_norm:
            break
        p = r + (rr_next / rr) * p
        rr = rr_next
    return vectors


def theorem_harness(inst, tol=1e-10, maxit=None):
    """Run plain CG on both preconditioned model systems and compare.

    Assembles the coupled system [[I, coupling], [coupling.T, I]] and the
    block-diagonal system [[I, 0], [0, schur_block]], runs plain conjugate
    gradients from zero on each with the shared right-hand side, and
    returns (norms1, norms2, deviation): the residual-norm sequences and
    the largest value of ``||r1[2k] - r2[k]|| / ||b||`` over the steps
    where both sequences are defined.  With the orthogonality constraint
    satisfied the deviation is zero in exact arithmetic — the coupled
    system takes exactly two steps for every one of the block-diagonal
    system.  Breakdown propagates when a coupling norm at or above one
    makes a system indefinite.
    """
    m1, m2 = inst.coupling.shape
    n = m1 + m2
    a1 = np.eye(n)
    a1[:m1, m1:] = inst.coupling
    a1[m1:, :m1] = inst.coupling.T
    a2 = np.eye(n)
    a2[m1:, m1:] = inst.schur_block
    b = np.concatenate([inst.b1, inst.b2])
    if maxit is None:
        maxit = 4 * n + 20
    vecs1 = _plain_cg_residual_vectors(a1, b, tol, 2 * maxit)
    vecs2 = _plain_cg_residual_vectors(a2, b, tol, maxit)
    b_norm = float(np.linalg.norm(b))
    deviation = 0.0
    if b_norm > 0.0:
        k_max = min((len(vecs1) - 1) // 2, len(vecs2) - 1)
        for k in range(k_max + 1):
            gap = float(np.linalg.norm(vecs1[2 * k] - vecs2[k])) / b_norm
            deviation = max(deviation, gap)
    norms1 = np.array([float(np.linalg.norm(v)) for v in vecs1])
    norms2 = np.array([float(np.linalg.norm(v)) for v in vecs2])
    return norms1, norms2, deviation


def forward_error(m, a, v_lambda):
    """Forward error ||(I - M A) v|| of a preconditioner on a unit vector.

    ``m`` and ``a`` may be callables, objects with ``matvec``, or dense
    arrays.  The vector must have unit norm; eigenvectors of the system
    operator make the error directly comparable across modes.
    """
    v = np.asarray(v_lambda, dtype=np.float64).ravel()
    if abs(float(np.linalg.norm(v)) - 1.0) > 1e-8:
        raise ValueError("forward error expects a unit-norm vector")
    apply_a = _as_apply(a, "a")
    apply_m = _as_apply(m, "m")
    return float(np.linalg.norm(v - apply_m(apply_a(v))))
