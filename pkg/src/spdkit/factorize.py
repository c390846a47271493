"""Multilevel approximate factorization driver.

Walks the partition hierarchy from the finest level to the coarsest.  At
each level every interior cluster is eliminated by block Cholesky; then,
unless the level is within the skip window, every still-active interface is
rescaled to the identity and sparsified, shrinking it to the coarse rows of
its coupling panel.  Whatever remains at the end is eliminated as one dense
block.  The recorded operators form the inverse of a lower-triangular
factor; applying them forward and then transposed-in-reverse realizes a
symmetric positive definite approximation of the matrix inverse, used as a
preconditioner.

The trailing matrix is stored block-sparsely, one dense block per pair of
coupled active clusters, because every step of the algorithm is a block
operation and fill-in arrives block-shaped.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .dense import SchemeKind
from .errors import DimensionMismatch, ParseError
from .schemes import (
    BlockOperator,
    Elimination,
    ErrorCorrection,
    OpKind,
    Orthogonal,
    Scaling,
    local_error,
    make_elimination,
    make_scaling,
    make_sparsification,
)

__all__ = [
    "EliminationState",
    "Factorization",
    "factorize",
    "apply_inv",
    "apply_inv_t",
    "memory_ratio",
    "save_factor",
    "load_factor",
]


class EliminationState:
    """Trailing matrix of a running factorization, stored block-sparsely.

    Keys of ``blocks`` are pairs of active cluster ids with ``i <= j``; the
    block holds the submatrix with rows in cluster ``i``'s current dofs and
    columns in cluster ``j``'s.  Eliminated dofs implicitly hold identity
    rows.  The state is symmetric by construction: only one triangle of
    each off-diagonal pair is stored.
    """

    def __init__(self, a, hierarchy):
        if a.n != hierarchy.n:
            raise DimensionMismatch(
                f"matrix has {a.n} dofs but hierarchy covers {hierarchy.n}")
        self.n = a.n
        self.depth = {c.id: c.depth for c in hierarchy.clusters}
        self.dofs_of = {c.id: np.asarray(c.dofs, dtype=np.int64)
                        for c in hierarchy.clusters}
        self.active = set(self.dofs_of)
        self.neighbors = {cid: set() for cid in self.active}
        self.blocks = {}

        loc = np.empty(self.n, dtype=np.int64)
        for dofs in self.dofs_of.values():
            loc[dofs] = np.arange(dofs.size)
        coo = a.to_scipy().tocoo()
        cl = hierarchy.cluster_of
        ci = cl[coo.row]
        cj = cl[coo.col]
        keep = ci <= cj
        rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
        ci, cj = ci[keep], cj[keep]
        ncl = len(hierarchy.clusters)
        key = ci * ncl + cj
        order = np.argsort(key, kind="stable")
        key, rows, cols, vals = key[order], rows[order], cols[order], vals[order]
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        stops = np.r_[starts[1:], key.size]
        for s0, s1 in zip(starts, stops):
            i, j = divmod(int(key[s0]), ncl)
            b = np.zeros((self.dofs_of[i].size, self.dofs_of[j].size))
            b[loc[rows[s0:s1]], loc[cols[s0:s1]]] = vals[s0:s1]
            self.blocks[(i, j)] = b
            if i != j:
                self.neighbors[i].add(j)
                self.neighbors[j].add(i)

    def block(self, i, j):
        """Oriented view of the coupling block (rows ``i``, columns ``j``)."""
        if i <= j:
            return self.blocks[(i, j)]
        return self.blocks[(j, i)].T

    def _gather_row(self, cid, nbrs):
        sizes = [self.dofs_of[w].size for w in nbrs]
        offs = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        if nbrs:
            panel = np.hstack([self.block(cid, w) for w in nbrs])
            w_dofs = np.concatenate([self.dofs_of[w] for w in nbrs])
        else:
            panel = np.zeros((self.dofs_of[cid].size, 0))
            w_dofs = np.empty(0, dtype=np.int64)
        return panel, w_dofs, offs

    def _put_row(self, cid, nbrs, offs, rows):
        for jj, w in enumerate(nbrs):
            piece = rows[:, offs[jj]:offs[jj + 1]]
            if cid <= w:
                self.blocks[(cid, w)] = np.ascontiguousarray(piece)
            else:
                self.blocks[(w, cid)] = np.ascontiguousarray(piece.T)

    def _drop_cluster(self, cid, nbrs):
        for w in nbrs:
            self.blocks.pop((min(cid, w), max(cid, w)), None)
            self.neighbors[w].discard(cid)
        self.blocks.pop((cid, cid), None)
        self.neighbors.pop(cid, None)
        self.active.discard(cid)

    def eliminate_interior(self, cid):
        """Eliminate one interior cluster; returns the recorded operator."""
        nbrs = sorted(self.neighbors[cid])
        # Interiors may only couple to interfaces of strictly earlier
        # levels; a violation would mean the partition (or fill tracking)
        # is broken, so fail loudly rather than factorize garbage.
        lvl = self.depth[cid]
        assert all(self.depth[w] < lvl for w in nbrs), \
            f"interior cluster {cid} touches a non-interface neighbor"
        a_ss = self.blocks[(cid, cid)]
        if nbrs:
            a_ws = np.vstack([self.block(w, cid) for w in nbrs])
            w_dofs = np.concatenate([self.dofs_of[w] for w in nbrs])
        else:
            a_ws = np.zeros((0, a_ss.shape[0]))
            w_dofs = np.empty(0, dtype=np.int64)
        op, update = make_elimination(a_ss, a_ws, self.dofs_of[cid], w_dofs)
        sizes = [self.dofs_of[w].size for w in nbrs]
        offs = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        for ii, wi in enumerate(nbrs):
            for jj in range(ii, len(nbrs)):
                wj = nbrs[jj]
                sub = update[offs[ii]:offs[ii + 1], offs[jj]:offs[jj + 1]]
                cur = self.blocks.get((wi, wj))
                if cur is None:
                    self.blocks[(wi, wj)] = -sub
                    if wi != wj:
                        self.neighbors[wi].add(wj)
                        self.neighbors[wj].add(wi)
                else:
                    cur -= sub
        self._drop_cluster(cid, nbrs)
        return op

    def rescale(self, cid):
        """Rescale one interface block to the identity; returns the operator."""
        nbrs = sorted(self.neighbors[cid])
        panel, _, offs = self._gather_row(cid, nbrs)
        op, scaled = make_scaling(self.blocks[(cid, cid)], panel,
                                  self.dofs_of[cid])
        self.blocks[(cid, cid)] = np.eye(self.dofs_of[cid].size)
        self._put_row(cid, nbrs, offs, scaled)
        return op

    def sparsify(self, cid, eps, scheme, keep_error_info=False):
        """Sparsify one interface; returns its result and the dropped dofs.

        The cluster's dof list shrinks to the coarse slots; the fine slots
        decouple to identity rows regardless of scheme (second-order
        schemes carry the kept fine rows inside the factor instead of the
        trailing matrix).
        """
        nbrs = sorted(self.neighbors[cid])
        panel, w_dofs, offs = self._gather_row(cid, nbrs)
        res = make_sparsification(panel, eps, scheme, self.dofs_of[cid],
                                  w_dofs, keep_error_info=keep_error_info)
        old = self.dofs_of[cid]
        dropped = old[:res.n_fine]
        kept = old[res.n_fine:]
        self.dofs_of[cid] = kept
        if kept.size:
            self.blocks[(cid, cid)] = np.eye(kept.size)
            self._put_row(cid, nbrs, offs, res.coarse_rows)
        else:
            self._drop_cluster(cid, nbrs)
        return res, dropped

    def finalize(self):
        """Eliminate everything still active as one dense block."""
        rest = sorted(self.active)
        sizes = [self.dofs_of[c].size for c in rest]
        total = int(sum(sizes))
        if total == 0:
            return None, np.empty(0, dtype=np.int64)
        dofs = np.concatenate([self.dofs_of[c] for c in rest])
        offs = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        dense = np.zeros((total, total))
        for ii, ci in enumerate(rest):
            for jj in range(ii, len(rest)):
                b = self.blocks.get((ci, rest[jj]))
                if b is None:
                    continue
                dense[offs[ii]:offs[ii + 1], offs[jj]:offs[jj + 1]] = b
                if jj != ii:
                    dense[offs[jj]:offs[jj + 1], offs[ii]:offs[ii + 1]] = b.T
        op, _ = make_elimination(dense, np.zeros((0, total)), dofs,
                                 np.empty(0, dtype=np.int64))
        for cid in rest:
            self._drop_cluster(cid, sorted(self.neighbors[cid]))
        return op, dofs

    def digest(self):
        """Order-independent fingerprint of the current trailing matrix."""
        h = hashlib.sha256()
        for key in sorted(self.blocks):
            b = self.blocks[key]
            h.update(struct.pack("<qqqq", key[0], key[1], *b.shape))
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()

    def to_dense(self):
        """Dense trailing matrix; eliminated dofs hold identity rows."""
        m = np.eye(self.n)
        for (i, j), b in self.blocks.items():
            di, dj = self.dofs_of[i], self.dofs_of[j]
            m[np.ix_(di, dj)] = b
            if i != j:
                m[np.ix_(dj, di)] = b.T
        return m


@dataclass
class Factorization:
    """Completed factor: an ordered list of block operators.

    ``apply_inv`` applies the inverse factor (each operator in recorded
    order), ``apply_inv_t`` its transpose (reverse order), and ``apply_m``
    their composition — the symmetric positive definite preconditioner
    application approximating the matrix inverse.  A completed
    factorization is immutable and safe to apply from concurrent threads.
    """

    ops: list
    perm: np.ndarray
    n: int
    eps: float
    scheme: SchemeKind
    skip_levels: int
    nnz_factor: int
    diagnostics: dict | None = field(default=None, repr=False)

    def _checked_copy(self, x):
        arr = np.array(x, dtype=np.float64, copy=True)
        if arr.shape[0] != self.n:
            raise DimensionMismatch(
                f"vector has {arr.shape[0]} entries, factor expects {self.n}")
        return arr

    def apply_inv(self, x):
        y = self._checked_copy(x)
        for op in self.ops:
            op.apply_inv(y)
        return y

    def apply_inv_t(self, x):
        y = self._checked_copy(x)
        for op in reversed(self.ops):
            op.apply_inv_t(y)
        return y

    def apply_m(self, x):
        return self.apply_inv_t(self.apply_inv(x))


def factorize(a, hierarchy, eps, scheme, skip_levels=4,
              collect_local_errors=False):
    """Factor a sparse SPD matrix over a partition hierarchy.

    Levels run from the finest to the coarsest.  Each level eliminates its
    interior clusters, then — outside the first ``skip_levels`` levels,
    where interfaces are still too small to be worth compressing — rescales
    and sparsifies every active interface in ascending cluster-id order.
    At ``eps = 0`` nothing is ever dropped and the result is an exact block
    Cholesky factorization.

    ``collect_local_errors`` additionally records each interface's dropped
    term norm in the diagnostics (extra dense work; off by default).
    """
    if isinstance(scheme, str):
        scheme = SchemeKind.from_string(scheme)
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if skip_levels < 0:
        raise ValueError(f"skip_levels must be nonnegative, got {skip_levels}")
    state = EliminationState(a, hierarchy)
    ops = []
    perm_parts = []
    level_diags = []
    for level in range(hierarchy.levels, 0, -1):
        interiors = sorted(c for c in state.active if state.depth[c] == level)
        interior_dofs = 0
        for cid in interiors:
            dofs = state.dofs_of[cid]
            ops.append(state.eliminate_interior(cid))
            perm_parts.append(dofs)
            interior_dofs += dofs.size
        skipped = (hierarchy.levels - level) < skip_levels
        interface_diags = []
        if not skipped:
            interfaces = sorted(state.active)
            for cid in interfaces:
                ops.append(state.rescale(cid))
            for cid in interfaces:
                size_before = state.dofs_of[cid].size
                res, dropped = state.sparsify(
                    cid, eps, scheme, keep_error_info=collect_local_errors)
                ops.append(res.orthogonal)
                if res.correction is not None:
                    ops.append(res.correction)
                if dropped.size:
                    perm_parts.append(dropped)
                entry = {
                    "cluster": int(cid),
                    "size_before": int(size_before),
                    "size_after": int(res.rank_c),
                    "rank_f2": int(res.rank_f2),
                }
                if collect_local_errors:
                    entry["local_error"] = float(local_error(scheme, res))
                interface_diags.append(entry)
        level_diags.append({
            "level": int(level),
            "interior_clusters": len(interiors),
            "interior_dofs": int(interior_dofs),
            "skipped": bool(skipped),
            "interfaces": interface_diags,
            "digest": state.digest(),
        })
    final_op, final_dofs = state.finalize()
    if final_op is not None:
        ops.append(final_op)
        perm_parts.append(final_dofs)
    perm = (np.concatenate(perm_parts) if perm_parts
            else np.empty(0, dtype=np.int64))
    assert perm.size == a.n and np.array_equal(np.sort(perm), np.arange(a.n))
    diagnostics = {"levels": level_diags, "final_block": int(final_dofs.size)}
    return Factorization(
        ops=ops,
        perm=perm,
        n=a.n,
        eps=float(eps),
        scheme=scheme,
        skip_levels=int(skip_levels),
        nnz_factor=int(sum(op.nnz for op in ops)),
        diagnostics=diagnostics,
    )


def apply_inv(factor, x):
    """Apply the inverse factor to a vector (or stack of columns)."""
    return factor.apply_inv(x)


def apply_inv_t(factor, x):
    """Apply the transposed inverse factor."""
    return factor.apply_inv_t(x)


def memory_ratio(factor, a):
    """Stored factor nonzeros relative to the input matrix's nonzeros."""
    return factor.nnz_factor / a.nnz


_MAGIC = b"SPDF"
_FORMAT_VERSION = 1
_HEADER_FORMAT = "<HqdBHIq"
_KIND_TAGS = {
    OpKind.ELIMINATION: 0,
    OpKind.SCALING: 1,
    OpKind.ORTHOGONAL: 2,
    OpKind.ERROR_CORRECTION: 3,
}
_SCHEME_TAGS = {
    SchemeKind.FIRST_ORDER: 0,
    SchemeKind.SECOND_ORDER_FULL: 1,
    SchemeKind.SECOND_ORDER_SUPERFINE: 2,
}
_SCHEME_FROM_TAG = {v: k for k, v in _SCHEME_TAGS.items()}


def _write_array(fh, arr, dtype):
    arr = np.ascontiguousarray(arr, dtype=dtype)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
    fh.write(arr.tobytes())


def _read_exact(fh, count):
    data = fh.read(count)
    if len(data) != count:
        raise ParseError("truncated factor file")
    return data


def _read_array(fh, dtype):
    ndim = struct.unpack("<B", _read_exact(fh, 1))[0]
    shape = struct.unpack(f"<{ndim}q", _read_exact(fh, 8 * ndim))
    itemsize = np.dtype(dtype).itemsize
    count = int(np.prod(shape)) if ndim else 1
    data = _read_exact(fh, count * itemsize)
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


def save_factor(factor, path):
    """Write a factorization to a versioned binary container."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack(_HEADER_FORMAT, _FORMAT_VERSION, factor.n,
                             factor.eps, _SCHEME_TAGS[factor.scheme],
                             factor.skip_levels, len(factor.ops),
                             factor.nnz_factor))
        _write_array(fh, factor.perm, np.int64)
        for op in factor.ops:
            fh.write(struct.pack("<B", _KIND_TAGS[op.kind]))
            if op.kind is OpKind.ELIMINATION:
                _write_array(fh, op.dofs, np.int64)
                _write_array(fh, op.w_dofs, np.int64)
                _write_array(fh, op.lower, np.float64)
                _write_array(fh, op.panel, np.float64)
            elif op.kind is OpKind.SCALING:
                _write_array(fh, op.dofs, np.int64)
                _write_array(fh, op.lower, np.float64)
            elif op.kind is OpKind.ORTHOGONAL:
                _write_array(fh, op.dofs, np.int64)
                _write_array(fh, op.q, np.float64)
            else:
                _write_array(fh, op.dofs, np.int64)
                _write_array(fh, op.w_dofs, np.int64)
                _write_array(fh, op.e_tilde, np.float64)


def load_factor(path):
    """Read back a factorization written by ``save_factor``.

    Solve-phase caches (triangular inverses) are rebuilt lazily on first
    application; level diagnostics are not serialized.
    """
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != _MAGIC:
            raise ParseError("not a factor file (bad magic)")
        version, n, eps, scheme_tag, skip_levels, op_count, nnz_factor = \
            struct.unpack(_HEADER_FORMAT,
                          _read_exact(fh, struct.calcsize(_HEADER_FORMAT)))
        if version != _FORMAT_VERSION:
            raise ParseError(f"unsupported factor file version {version}")
        if scheme_tag not in _SCHEME_FROM_TAG:
            raise ParseError(f"unknown scheme tag {scheme_tag}")
        perm = _read_array(fh, np.int64)
        ops = []
        for _ in range(op_count):
            tag = struct.unpack("<B", _read_exact(fh, 1))[0]
            if tag == _KIND_TAGS[OpKind.ELIMINATION]:
                dofs = _read_array(fh, np.int64)
                w_dofs = _read_array(fh, np.int64)
                lower = _read_array(fh, np.float64)
                panel = _read_array(fh, np.float64)
                ops.append(Elimination(dofs, w_dofs, lower, panel))
            elif tag == _KIND_TAGS[OpKind.SCALING]:
                dofs = _read_array(fh, np.int64)
                lower = _read_array(fh, np.float64)
                ops.append(Scaling(dofs, lower))
            elif tag == _KIND_TAGS[OpKind.ORTHOGONAL]:
                dofs = _read_array(fh, np.int64)
                q = _read_array(fh, np.float64)
                ops.append(Orthogonal(dofs, q))
            elif tag == _KIND_TAGS[OpKind.ERROR_CORRECTION]:
                dofs = _read_array(fh, np.int64)
                w_dofs = _read_array(fh, np.int64)
                e_tilde = _read_array(fh, np.float64)
                ops.append(ErrorCorrection(dofs, w_dofs, e_tilde))
            else:
                raise ParseError(f"unknown operator tag {tag}")
    return Factorization(
        ops=ops,
        perm=perm,
        n=int(n),
        eps=float(eps),
        scheme=_SCHEME_FROM_TAG[scheme_tag],
        skip_levels=int(skip_levels),
        nnz_factor=int(nnz_factor),
        diagnostics=None,
    )
