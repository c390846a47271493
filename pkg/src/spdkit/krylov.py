"""Preconditioned conjugate gradients with residual-history capture.

The solver takes the system operator and an optional preconditioner apply
(both as callables, objects with ``matvec``, or dense arrays), starts from
the zero vector, and iterates until the recursively updated relative
residual drops below the tolerance.  The returned report carries the full
residual history — entry zero is always 1.0 by the zero-initial-guess
convention — plus a final true-residual check computed from scratch.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import Breakdown

__all__ = ["SolveReport", "pcg", "cg_bound_rate", "default_maxit"]


@dataclass
class SolveReport:
    """Outcome of one preconditioned CG solve.

    Fields describing the preconditioner (``eps``, ``scheme``, ``mu``,
    ``factor_seconds``) are filled by the caller that built the factor;
    the solver itself only knows the iteration side.
    """

    n_cg: int
    residual_history: list
    converged: bool
    true_residual: float
    solve_seconds: float
    eps: float | None = None
    scheme: str | None = None
    mu: float | None = None
    factor_seconds: float | None = None

    def as_dict(self):
        return {
            "n_cg": self.n_cg,
            "residual_history": list(self.residual_history),
            "converged": self.converged,
            "true_residual": self.true_residual,
            "solve_seconds": self.solve_seconds,
            "eps": self.eps,
            "scheme": self.scheme,
            "mu": self.mu,
            "factor_seconds": self.factor_seconds,
        }


def _as_apply(operator, what):
    if operator is None:
        return lambda v: v
    if callable(operator) and not isinstance(operator, np.ndarray):
        return operator
    if hasattr(operator, "matvec"):
        return operator.matvec
    arr = np.asarray(operator, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{what} must be square, got shape {arr.shape}")
    return lambda v: arr @ v


def default_maxit(n):
    """Iteration cap scaling with the mesh diameter of a 2D problem."""
    return int(10.0 * math.sqrt(n) + 100.0)


def pcg(a, b, m=None, tol=1e-10, maxit=None):
    """Solve an SPD system by preconditioned conjugate gradients.

    ``a`` and ``m`` may be callables, objects with ``matvec`` (such as the
    sparse matrix type or a factorization's ``apply_m``), or dense arrays;
    ``m=None`` runs unpreconditioned CG.  The initial guess is always the
    zero vector.  Returns ``(x, SolveReport)``; hitting the iteration cap
    is reported via ``converged=False``, not an exception.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if maxit is None:
        maxit = default_maxit(n)
    apply_a = _as_apply(a, "system operator")
    apply_m = _as_apply(m, "preconditioner")

    start = time.perf_counter()
    x = np.zeros(n)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return x, SolveReport(n_cg=0, residual_history=[0.0], converged=True,
                              true_residual=0.0,
                              solve_seconds=time.perf_counter() - start)
    r = b.copy()
    history = [1.0]
    z = apply_m(r)
    rz = float(r @ z)
    if rz <= 0.0:
        raise Breakdown(f"preconditioner is not positive definite (r'z = {rz})")
    p = z.copy()
    converged = False
    iterations = 0
    for k in range(1, maxit + 1):
        ap = apply_a(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            raise Breakdown(f"system operator is not positive definite "
                            f"(p'Ap = {pap})")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        rel = float(np.linalg.norm(r)) / b_norm
        history.append(rel)
        iterations = k
        if rel < tol:
            converged = True
            break
        z = apply_m(r)
        rz_next = float(r @ z)
        if rz_next <= 0.0:
            raise Breakdown(f"preconditioner is not positive definite "
                            f"(r'z = {rz_next})")
        p = z + (rz_next / rz) * p
        rz = rz_next
    true_residual = float(np.linalg.norm(b - apply_a(x))) / b_norm
    report = SolveReport(
        n_cg=iterations,
        residual_history=history,
        converged=converged,
        true_residual=true_residual,
        solve_seconds=time.perf_counter() - start,
    )
    return x, report


def cg_bound_rate(kappa):
    """Asymptotic CG contraction factor for a given condition number."""
    if kappa < 1.0:
        raise ValueError(f"condition number must be at least 1, got {kappa}")
    root = math.sqrt(kappa)
    return (root - 1.0) / (root + 1.0)
