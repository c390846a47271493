"""Sparse SPD solver toolkit built on multilevel approximate factorization.

The package factors a sparse symmetric positive definite matrix over a
nested-dissection hierarchy, compressing separator couplings with a
rank-revealing QR at a chosen drop tolerance.  Three compression schemes
are provided: a first-order one that drops the fine coupling outright,
and two second-order ones that keep a correction term (the full fine
block, or only its leading band) so the preconditioner error is squared.
The factor drives a preconditioned conjugate-gradient solver, and a
dense two-level analysis lab exposes the closed-form condition numbers,
residual structures, and convergence-rate identities behind the schemes.
"""

from .analysis import (
    TheoremInstance,
    TwoLevelSetup,
    build_two_level,
    cond_first,
    cond_second,
    forward_error,
    make_theorem_instance,
    precond_matrix,
    rate_identity,
    theorem_harness,
)
from .dense import (
    RRQRResult,
    SchemeKind,
    cholesky,
    rrqr_sparsify,
    tri_inverse,
    tri_solve,
)
from .errors import (
    AsymmetricValues,
    Breakdown,
    DimensionMismatch,
    InputError,
    NonFinite,
    NonpositiveDiagonal,
    NotSPD,
    NotSymmetricReal,
    NumericalError,
    ParseError,
    RhoNotOne,
    SingularTriangular,
    SpdkitError,
)
from .factorize import (
    Factorization,
    apply_inv,
    apply_inv_t,
    factorize,
    load_factor,
    memory_ratio,
    save_factor,
)
from .krylov import SolveReport, cg_bound_rate, pcg
from .partition import (
    Cluster,
    PartitionHierarchy,
    build_hierarchy,
    default_levels,
)
from .schemes import (
    SparsificationResult,
    make_elimination,
    make_scaling,
    make_sparsification,
)
from .sparse import (
    CoefficientField,
    SparseSymMatrix,
    eig_mode_sequence,
    from_coo,
    high_contrast_field,
    jacobi_prescale,
    laplacian_2d,
    laplacian_from_field,
    poisson_eigvec,
    read_matrix_market,
    write_matrix_market,
)

__version__ = "0.1.0"

__all__ = [
    "AsymmetricValues",
    "Breakdown",
    "Cluster",
    "CoefficientField",
    "DimensionMismatch",
    "Factorization",
    "InputError",
    "NonFinite",
    "NonpositiveDiagonal",
    "NotSPD",
    "NotSymmetricReal",
    "NumericalError",
    "ParseError",
    "PartitionHierarchy",
    "RRQRResult",
    "RhoNotOne",
    "SchemeKind",
    "SingularTriangular",
    "SolveReport",
    "SparseSymMatrix",
    "SparsificationResult",
    "SpdkitError",
    "TheoremInstance",
    "TwoLevelSetup",
    "apply_inv",
    "apply_inv_t",
    "build_hierarchy",
    "build_two_level",
    "cg_bound_rate",
    "cholesky",
    "cond_first",
    "cond_second",
    "default_levels",
    "eig_mode_sequence",
    "factorize",
    "forward_error",
    "from_coo",
    "high_contrast_field",
    "jacobi_prescale",
    "laplacian_2d",
    "laplacian_from_field",
    "load_factor",
    "make_elimination",
    "make_scaling",
    "make_sparsification",
    "make_theorem_instance",
    "memory_ratio",
    "pcg",
    "poisson_eigvec",
    "precond_matrix",
    "rate_identity",
    "read_matrix_market",
    "rrqr_sparsify",
    "save_factor",
    "theorem_harness",
    "tri_inverse",
    "tri_solve",
    "write_matrix_market",
    "__version__",
]
