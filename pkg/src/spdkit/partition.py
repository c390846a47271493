"""Multilevel interior/interface partitioning of a sparse SPD matrix graph.

The hierarchy is built by recursive vertex-separator bisection: each region
is split into two balanced parts by growing one side breadth-first from a
pseudo-peripheral seed, the boundary layer on the far side becomes the
separator, and the construction recurses into the two parts for `levels`
rounds.  Leaf parts are the interiors eliminated at the finest level; a
separator created at dissection depth t is one cluster for its whole life:
it is an interface at every level above t and becomes an interior exactly
at level t.  The promotion map between consecutive levels is therefore the
identity on surviving cluster ids.

Everything is derived from the entries of A alone; no coordinates are
used.  Construction is deterministic: seeds and tie-breaks always take the
smallest vertex id.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra


@dataclass(frozen=True)
class Cluster:
    """A set of unknowns handled as one unit.

    depth is the dissection depth at which the cluster was carved out;
    clusters with depth == levels are the leaf interiors.
    """

    id: int
    dofs: np.ndarray
    depth: int

    @property
    def size(self):
        return len(self.dofs)


class PartitionHierarchy:
    """Interior/interface structure across factorization levels.

    Levels are processed from `levels` (finest) down to 0.  At level l the
    interiors are the clusters of depth l (leaves when l == levels) and the
    interfaces are the separators of depth < l.
    """

    def __init__(self, levels, n, clusters, adj_ptr, adj_idx):
        self.levels = levels
        self.n = n
        self.clusters = clusters
        self._adj_ptr = adj_ptr
        self._adj_idx = adj_idx
        cluster_of = np.full(n, -1, dtype=np.int64)
        for c in clusters:
            cluster_of[c.dofs] = c.id
        self.cluster_of = cluster_of

    def interiors(self, level):
        return [c for c in self.clusters if c.depth == level]

    def interfaces(self, level):
        return [c for c in self.clusters if c.depth < level]

    def active(self, level):
        return [c for c in self.clusters if c.depth <= level]

    def promotion(self, level):
        """Map from level-l interface clusters to their level-(l-1) cluster."""
        return {c.id: c.id for c in self.interfaces(level)}

    def neighbor_ids(self, cluster, level):
        """Ids of active clusters adjacent to `cluster` in the graph of A."""
        active = {c.id for c in self.active(level)}
        nbrs = set()
        for v in cluster.dofs:
            for w in self._adj_idx[self._adj_ptr[v]:self._adj_ptr[v + 1]]:
                cid = self.cluster_of[w]
                if cid != cluster.id and cid in active:
                    nbrs.add(int(cid))
        return sorted(nbrs)

    def level_view(self, level):
        """Cluster records for one level: id, kind, dofs, neighbor ids."""
        out = []
        for c in self.active(level):
            kind = "interior" if c.depth == level else "interface"
            out.append({
                "id": c.id,
                "kind": kind,
                "dofs": [int(v) for v in c.dofs],
                "neighbors": self.neighbor_ids(c, level),
            })
        return out

    def to_json(self, path=None):
        doc = {
            "levels": self.levels,
            "n": self.n,
            "clusters": [
                {"id": c.id, "depth": c.depth, "dofs": [int(v) for v in c.dofs]}
                for c in self.clusters
            ],
            "promotion": {
                str(l): self.promotion(l) for l in range(1, self.levels + 1)
            },
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(doc, fh)
        return doc


def default_levels(n):
    """Closest integer to log2(n/25), clamped to at least 1."""
    if n < 2:
        raise ValueError("need at least 2 unknowns")
    return max(1, math.floor(math.log2(n / 25.0) + 0.5))


def _ranges(starts, stops):
    """Concatenation of arange(s, t) over the (start, stop) pairs."""
    counts = stops - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    return np.repeat(starts, counts) + (np.arange(total) - offsets)


class _Splitter:
    """Workspace for repeated region bisections on one graph."""

    def __init__(self, adj):
        self._ptr = adj.indptr.astype(np.int64)
        self._idx = adj.indices.astype(np.int64)
        self._local = np.full(adj.shape[0], -1, dtype=np.int64)

    def _extract(self, verts):
        """Induced subgraph in local numbering: (ptr, idx) csr arrays."""
        nv = len(verts)
        local = self._local
        local[verts] = np.arange(nv)
        starts, stops = self._ptr[verts], self._ptr[verts + 1]
        cols = local[self._idx[_ranges(starts, stops)]]
        rows = np.repeat(np.arange(nv), stops - starts)
        keep = cols >= 0
        rows, cols = rows[keep], cols[keep]
        ptr = np.zeros(nv + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=nv), out=ptr[1:])
        local[verts] = -1
        return ptr, cols

    def bisect(self, verts):
        """Split a region into (part1, part2, separator).

        The separator is carved from the part2 side; part1 and part2 are
        non-adjacent after its removal.  Disconnected regions are split by
        whole components with an empty separator.  `verts` must be sorted;
        all returned arrays are sorted.
        """
        empty = np.empty(0, dtype=np.int64)
        nv = len(verts)
        if nv < 2:
            return verts, empty, empty
        ptr, idx = self._extract(verts)
        sub = sp.csr_matrix((np.ones(len(idx)), idx, ptr), shape=(nv, nv))
        ncomp, labels = connected_components(sub, directed=False)
        if ncomp > 1:
            sizes = np.bincount(labels)
            comp_order = np.lexsort((np.arange(ncomp), -sizes))
            side = np.zeros(ncomp, dtype=np.int8)
            n1 = n2 = 0
            for c in comp_order:
                if n1 <= n2:
                    side[c] = 1
                    n1 += sizes[c]
                else:
                    side[c] = 2
                    n2 += sizes[c]
            return verts[side[labels] == 1], verts[side[labels] == 2], empty
        # pseudo-peripheral seed: run one BFS from the smallest id, take the
        # smallest farthest vertex, levelize from there
        d0 = dijkstra(sub, directed=False, unweighted=True, indices=0)
        seed = int(np.nonzero(d0 == d0.max())[0][0])
        dist = dijkstra(sub, directed=False, unweighted=True,
                        indices=seed).astype(np.int64)
        order = np.lexsort((np.arange(nv), dist))
        widths = np.bincount(dist)
        bounds = np.cumsum(widths)
        if len(widths) == 1:
            # diameter zero: a clique-like region, keep it whole
            return empty, empty, verts
        # pick the level boundary that best balances the sides once the
        # boundary layer is carved out of the far side
        p2_est = nv - bounds[:-1] - widths[1:]
        jbest = int(np.argmin(np.abs(bounds[:-1] - p2_est)))
        cut = int(bounds[jbest])
        p1_loc = order[:cut]
        # partial fill from the next level when it improves balance,
        # smallest ids first
        w = int(widths[jbest + 1])
        deficit = (nv - w) // 2 - cut
        if deficit > 0 and w > 1:
            lvl = np.sort(order[cut:cut + w])
            p1_loc = np.concatenate([p1_loc, lvl[:min(deficit, w - 1)]])
        part = np.zeros(nv, dtype=np.int8)
        part[p1_loc] = 1
        starts, stops = ptr[p1_loc], ptr[p1_loc + 1]
        cand = idx[_ranges(starts, stops)]
        sep_loc = cand[part[cand] == 0]
        part[sep_loc] = 3
        sep_loc = np.nonzero(part == 3)[0]
        if bool(np.any(part == 0)) and sep_loc.size:
            # a separator vertex with no neighbor left in part2 rejoins part1
            starts, stops = ptr[sep_loc], ptr[sep_loc + 1]
            nbr = idx[_ranges(starts, stops)]
            owner = np.repeat(np.arange(len(sep_loc)), stops - starts)
            hits = np.bincount(owner[part[nbr] == 0], minlength=len(sep_loc))
            part[sep_loc[hits == 0]] = 1
        p1 = verts[part == 1]
        p2 = verts[part == 0]
        sep = verts[part == 3]
        return p1, p2, sep


def build_hierarchy(a, levels):
    """Recursive vertex-separator dissection of the graph of A.

    Returns a PartitionHierarchy with `levels` elimination levels.  Works
    on disconnected graphs (components are split with empty separators).
    """
    csr = a.to_scipy().tocsr()
    n = a.n
    coo = csr.tocoo()
    off = coo.row != coo.col
    adj = sp.csr_matrix((np.ones(int(off.sum())), (coo.row[off], coo.col[off])),
                        shape=(n, n))
    splitter = _Splitter(adj)
    clusters = []

    def recurse(verts, depth):
        if verts.size == 0:
            return
        if depth == levels or verts.size < 6:
            # leaf or too small to split further: a finest-level interior
            clusters.append(Cluster(id=len(clusters), dofs=verts,
                                    depth=levels))
            return
        p1, p2, sep = splitter.bisect(verts)
        if sep.size == 0 and (p1.size == 0 or p2.size == 0):
            # unsplittable (e.g. clique fallback): keep whole as a leaf
            clusters.append(Cluster(id=len(clusters), dofs=verts,
                                    depth=levels))
            return
        if sep.size:
            clusters.append(Cluster(id=len(clusters), dofs=sep, depth=depth))
        recurse(p1, depth + 1)
        recurse(p2, depth + 1)

    recurse(np.arange(n, dtype=np.int64), 0)
    return PartitionHierarchy(levels, n, clusters,
                              adj.indptr.astype(np.int64),
                              adj.indices.astype(np.int64))
