"""Sparse symmetric storage, problem generators, and Matrix Market I/O.

The central type is :class:`SparseSymMatrix`, a CSR matrix with both
triangles stored explicitly.  Vectors are plain 1-D numpy arrays throughout
the package.  Random draws use ``numpy.random.default_rng`` (PCG64): seeded,
splittable, uniforms with full 53-bit mantissas.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.signal import convolve2d

from .errors import (
    AsymmetricValues,
    DimensionMismatch,
    NonpositiveDiagonal,
    NotSymmetricReal,
    ParseError,
)


@dataclass(frozen=True)
class SparseSymMatrix:
    """Symmetric sparse matrix in CSR form, both triangles stored.

    Invariants enforced at construction: the stored pattern is symmetric
    with exactly equal values across the diagonal, column indices are
    strictly increasing within each row, and every diagonal entry is
    present and strictly positive.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        n = self.n
        if len(self.row_ptr) != n + 1:
            raise DimensionMismatch("row_ptr must have length n+1")
        counts = np.diff(self.row_ptr)
        if np.any(counts < 1):
            raise NonpositiveDiagonal("every row needs its diagonal entry")
        # strictly increasing column indices per row, hence no duplicates
        rows = np.repeat(np.arange(n), counts)
        order_ok = np.all(np.diff(self.col_idx)[np.diff(rows) == 0] > 0)
        if not order_ok:
            raise ParseError("column indices must be strictly increasing per row")
        csr = sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=(n, n))
        if (csr != csr.T).nnz != 0:
            raise AsymmetricValues("stored pattern or values are not symmetric")
        diag = csr.diagonal()
        if np.any(diag <= 0.0):
            raise NonpositiveDiagonal("diagonal entries must be strictly positive")
        object.__setattr__(self, "_csr", csr)

    @property
    def nnz(self):
        return len(self.values)

    def matvec(self, x):
        return self._csr @ x

    def __matmul__(self, x):
        return self._csr @ x

    def diagonal(self):
        return self._csr.diagonal()

    def toarray(self):
        return self._csr.toarray()

    def to_scipy(self):
        return self._csr


def from_coo(n, rows, cols, vals):
    """Build a SparseSymMatrix from COO triplets covering both triangles."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(row_ptr, rows + 1, 1)
    np.cumsum(row_ptr, out=row_ptr)
    return SparseSymMatrix(n, row_ptr, cols, vals)


# ---------------------------------------------------------------------------
# Matrix Market I/O.  Only `matrix coordinate real symmetric` is accepted;
# indices are 1-based per the format standard.


def read_matrix_market(path):
    """Read a symmetric real coordinate Matrix Market file.

    One triangle is stored in the file; both triangles are materialized in
    the returned matrix.  Raises ParseError on malformed content,
    NotSymmetricReal for any other format kind, AsymmetricValues when both
    (i,j) and (j,i) appear explicitly with different values.
    """
    with open(path, "r") as fh:
        header = fh.readline()
        parts = header.strip().split()
        if len(parts) != 5 or parts[0] != "%%MatrixMarket":
            raise ParseError(f"bad Matrix Market header: {header.strip()!r}")
        if parts[1].lower() != "matrix" or parts[2].lower() != "coordinate":
            raise ParseError(f"unsupported object/format: {header.strip()!r}")
        if parts[3].lower() != "real" or parts[4].lower() != "symmetric":
            raise NotSymmetricReal(
                f"only real symmetric matrices are supported, got "
                f"{parts[3]} {parts[4]}"
            )
        line = fh.readline()
        while line and (line.startswith("%") or not line.strip()):
            line = fh.readline()
        try:
            m, n, nnz = (int(t) for t in line.split())
        except ValueError:
            raise ParseError(f"bad size line: {line.strip()!r}") from None
        if m != n:
            raise NotSymmetricReal("matrix must be square")
        seen = {}
        for _ in range(nnz):
            line = fh.readline()
            if not line:
                raise ParseError("file ends before declared entry count")
            toks = line.split()
            if len(toks) != 3:
                raise ParseError(f"bad entry line: {line.strip()!r}")
            try:
                i, j, v = int(toks[0]), int(toks[1]), float(toks[2])
            except ValueError:
                raise ParseError(f"bad entry line: {line.strip()!r}") from None
            if not (1 <= i <= n and 1 <= j <= n):
                raise ParseError(f"index out of range: ({i}, {j})")
            key = (i - 1, j - 1)
            mirror = (j - 1, i - 1)
            if key in seen:
                raise ParseError(f"duplicate entry ({i}, {j})")
            if i != j and mirror in seen and seen[mirror] != v:
                raise AsymmetricValues(
                    f"entries ({j}, {i}) and ({i}, {j}) disagree: "
                    f"{seen[mirror]} vs {v}"
                )
            seen[key] = v
    rows, cols, vals = [], [], []
    for (i, j), v in seen.items():
        rows.append(i)
        cols.append(j)
        vals.append(v)
        if i != j and (j, i) not in seen:
            rows.append(j)
            cols.append(i)
            vals.append(v)
    return from_coo(n, rows, cols, vals)


def write_matrix_market(path, a):
    """Write the lower triangle of a SparseSymMatrix in coordinate format."""
    csr = a.to_scipy().tocoo()
    mask = csr.row >= csr.col
    rows, cols, vals = csr.row[mask], csr.col[mask], csr.data[mask]
    order = np.lexsort((rows, cols))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        fh.write(f"{a.n} {a.n} {len(vals)}\n")
        for k in order:
            fh.write(f"{rows[k] + 1} {cols[k] + 1} {vals[k]:.17g}\n")


# ---------------------------------------------------------------------------
# Problem generators: 5-point Laplacians on a d x d grid with Dirichlet
# boundary, optionally with a high-contrast coefficient field.


def laplacian_2d(d):
    """Constant-coefficient 5-point Laplacian on a d x d grid, n = d^2.

    Dirichlet boundary: the diagonal stays 4 everywhere, boundary rows
    simply have fewer off-diagonal entries.
    """
    if d < 2:
        raise DimensionMismatch("grid side must be at least 2")
    ones = np.ones(d)
    t = sp.diags([-ones[:-1], 2 * ones, -ones[:-1]], [-1, 0, 1])
    eye = sp.identity(d)
    a = sp.kron(eye, t) + sp.kron(t, eye)
    a = a.tocsr()
    a.sort_indices()
    return SparseSymMatrix(d * d, a.indptr.astype(np.int64),
                           a.indices.astype(np.int64), a.data)


@dataclass(frozen=True)
class CoefficientField:
    """Quantized high-contrast coefficient field on a d x d grid.

    Every entry of `a` equals rho or 1/rho.
    """

    d: int
    a: np.ndarray
    rho: float
    sigma: float
    seed: int


def _gaussian_kernel(sigma):
    r = int(np.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return np.outer(g, g)


def high_contrast_field(d, rho, sigma=2.0, seed=0):
    """Draw a uniform field, smooth it, and quantize to {rho, 1/rho}.

    The Gaussian kernel has radius ceil(3*sigma) and is truncated at the
    grid edge with per-cell renormalization to unit mass, so the smoothed
    field stays inside (0, 1).
    """
    if d < 2 or rho < 1.0 or sigma <= 0.0:
        raise DimensionMismatch("need d >= 2, rho >= 1, sigma > 0")
    rng = np.random.default_rng(seed)
    raw = rng.random((d, d))
    kernel = _gaussian_kernel(sigma)
    smooth = convolve2d(raw, kernel, mode="same")
    mass = convolve2d(np.ones((d, d)), kernel, mode="same")
    smooth /= mass
    a = np.where(smooth >= 0.5, rho, 1.0 / rho)
    return CoefficientField(d=d, a=a, rho=float(rho), sigma=float(sigma),
                            seed=seed)


def laplacian_from_field(fld):
    """5-point finite-volume operator for div(a grad u), Dirichlet boundary.

    The weight of the edge between two adjacent cells is the arithmetic mean
    of their coefficients; a boundary face contributes the cell's own
    coefficient to the diagonal, so a constant field reduces exactly to
    laplacian_2d.
    """
    d = fld.d
    a = fld.a

    def idx(i, j):
        return i * d + j

    rows, cols, vals = [], [], []
    diag = np.zeros((d, d))
    # vertical edges: cells (i, j) - (i+1, j)
    wv = 0.5 * (a[:-1, :] + a[1:, :])
    # horizontal edges: cells (i, j) - (i, j+1)
    wh = 0.5 * (a[:, :-1] + a[:, 1:])
    ii, jj = np.meshgrid(np.arange(d - 1), np.arange(d), indexing="ij")
    r1 = idx(ii, jj).ravel()
    r2 = idx(ii + 1, jj).ravel()
    w = wv.ravel()
    rows += [r1, r2]
    cols += [r2, r1]
    vals += [-w, -w]
    np.add.at(diag, (ii.ravel(), jj.ravel()), w)
    np.add.at(diag, (ii.ravel() + 1, jj.ravel()), w)
    ii, jj = np.meshgrid(np.arange(d), np.arange(d - 1), indexing="ij")
    r1 = idx(ii, jj).ravel()
    r2 = idx(ii, jj + 1).ravel()
    w = wh.ravel()
    rows += [r1, r2]
    cols += [r2, r1]
    vals += [-w, -w]
    np.add.at(diag, (ii.ravel(), jj.ravel()), w)
    np.add.at(diag, (ii.ravel(), jj.ravel() + 1), w)
    # Dirichlet boundary faces contribute the cell's own coefficient
    diag[0, :] += a[0, :]
    diag[-1, :] += a[-1, :]
    diag[:, 0] += a[:, 0]
    diag[:, -1] += a[:, -1]
    rows.append(np.arange(d * d))
    cols.append(np.arange(d * d))
    vals.append(diag.ravel())
    return from_coo(d * d, np.concatenate(rows), np.concatenate(cols),
                    np.concatenate(vals))


def jacobi_prescale(a, b):
    """Symmetric diagonal scaling A' = D^-1/2 A D^-1/2, b' = D^-1/2 b.

    Returns (A', b', diag) where diag recovers the solution of the original
    system via x = diag^-1/2 * x'.
    """
    diag = a.diagonal()
    if np.any(diag <= 0.0):
        raise NonpositiveDiagonal("jacobi_prescale needs a positive diagonal")
    s = 1.0 / np.sqrt(diag)
    csr = a.to_scipy()
    counts = np.diff(csr.indptr)
    row_of = np.repeat(np.arange(a.n), counts)
    # group the scale factors so the (i,j) and (j,i) products round
    # identically and the result stays exactly symmetric
    vals = csr.data * (s[row_of] * s[csr.indices])
    scaled = SparseSymMatrix(a.n, csr.indptr.astype(np.int64),
                             csr.indices.astype(np.int64), vals)
    return scaled, b * s, diag


def poisson_eigvec(d, p):
    """Unit eigenvector and eigenvalue of laplacian_2d(d) for mode p.

    v(i, j) = sin(p*i*pi/(d+1)) * sin(p*j*pi/(d+1)) on the 1-based grid,
    lambda_p = 8 sin^2(p*pi/(2(d+1))).
    """
    if not 1 <= p <= d:
        raise DimensionMismatch("need 1 <= p <= d")
    grid = np.arange(1, d + 1) * (p * np.pi / (d + 1))
    s = np.sin(grid)
    v = np.outer(s, s).ravel()
    v /= np.linalg.norm(v)
    lam = 8.0 * np.sin(p * np.pi / (2.0 * (d + 1))) ** 2
    return v, lam


def eig_mode_sequence(d):
    """The sweep p = floor((5/4)^k) capped at d, deduplicated ascending."""
    ps = []
    k = 0
    while True:
        p = int(np.floor(1.25**k))
        if p > d:
            break
        if not ps or p != ps[-1]:
            ps.append(p)
        k += 1
    return ps
