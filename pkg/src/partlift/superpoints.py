"""Superpoint oversegmentation via a generalized minimal partition.

The cloud is clustered on a kNN graph with normal+color features by
minimizing

    E(P) = sum_p ||mean(P(p)) - f_p||^2  +  rho * sum_{(i,j) in E} w_ij [P(i) != P(j)]

with an iterative split-and-merge scheme in the l0-cut-pursuit family: every
superpoint is bisected (exactly by enumeration for small blocks, otherwise by
alternating two-means with a graph-cut boundary refinement), split sides are
decomposed into graph-connected components, moves are accepted only when the
total energy strictly decreases, and adjacent superpoints are re-merged
greedily whenever that decreases energy.  Superpoints are therefore always
connected in the graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components, maximum_flow
from scipy.spatial import cKDTree

from partlift.core import Partition, PointCloud

# Blocks up to this size are bisected exactly by enumerating bipartitions.
EXACT_SPLIT_LIMIT = 12
# Above this size the max-distance seed pair is approximated by a double sweep.
EXACT_SEED_LIMIT = 1024

_FLOW_CAP = float(2**24)


class AdjacencyGraph:
    """Symmetrized kNN graph: unique undirected edges plus CSR adjacency."""

    def __init__(self, num_points: int, edges: np.ndarray, weights=None):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges[:, 0] == edges[:, 1]).any():
            raise ValueError("self-loops are not allowed")
        lo = edges.min(axis=1)
        hi = edges.max(axis=1)
        order = np.lexsort((hi, lo))
        self.edges = np.stack([lo[order], hi[order]], axis=1)
        if weights is None:
            self.weights = np.ones(len(self.edges))
        else:
            self.weights = np.asarray(weights, dtype=np.float64)[order]
        if (self.weights <= 0).any():
            raise ValueError("edge weights must be positive")
        self.num_points = num_points
        # CSR over both edge directions
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        eid = np.tile(np.arange(len(self.edges)), 2)
        order = np.lexsort((dst, src))
        self._nbr = dst[order]
        self._nbr_edge = eid[order]
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=num_points))])

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, p: int) -> np.ndarray:
        return self._nbr[self._indptr[p] : self._indptr[p + 1]]

    def degree(self, p: int) -> int:
        return int(self._indptr[p + 1] - self._indptr[p])


def build_features(cloud: PointCloud, color_weight: float = 1.0) -> np.ndarray:
    """Per-point 6-D features: concat(normal, color_weight * color)."""
    if color_weight < 0:
        raise ValueError("color_weight must be >= 0")
    return np.hstack([cloud.normals, color_weight * cloud.colors])


def build_knn_graph(cloud: PointCloud, k: int) -> AdjacencyGraph:
    """Exact symmetrized kNN graph; distance ties break by lower point index.

    An edge is kept when either endpoint lists the other among its k nearest.
    """
    pos = cloud.positions
    n = pos.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points")
    if not 1 <= k < n:
        raise ValueError("k must satisfy 1 <= k < N")
    tree = cKDTree(pos)

    pad = min(n, k + 9)
    while True:
        _, nb = tree.query(pos, k=pad)
        nb = nb.reshape(n, -1)
        d2 = ((pos[nb] - pos[:, None, :]) ** 2).sum(axis=2)
        d2[nb == np.arange(n)[:, None]] = -1.0  # self sorts first when present
        # sort each row by (distance^2, index)
        order = np.lexsort((nb, d2), axis=1)
        rows = np.arange(n)[:, None]
        nb_sorted = nb[rows, order]
        d2_sorted = d2[rows, order]
        # self may be missing from the pool when > pad points coincide
        start = (nb_sorted[:, 0] == np.arange(n)).astype(np.int64)
        if pad == n:
            break
        # pool safe iff the last kept distance is strictly below the pool max
        last = d2_sorted[np.arange(n), start + k - 1]
        if (last < d2_sorted[:, -1]).all():
            break
        pad = min(n, pad * 2)

    neigh = nb_sorted[rows, start[:, None] + np.arange(k)]
    edges = np.stack([np.repeat(np.arange(n), k), neigh.ravel()], axis=1)
    lo = edges.min(axis=1)
    hi = edges.max(axis=1)
    uniq = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return AdjacencyGraph(n, uniq)


@dataclass(frozen=True)
class PartitionEnergy:
    data: float
    boundary: float

    @property
    def total(self) -> float:
        return self.data + self.boundary


def energy(partition: Partition, features: np.ndarray, graph: AdjacencyGraph, rho: float) -> PartitionEnergy:
    """Evaluate both energy terms; the piecewise value is the superpoint mean."""
    g = partition.means[partition.assignment]
    data = float(((features - g) ** 2).sum())
    a = partition.assignment
    cut = a[graph.edges[:, 0]] != a[graph.edges[:, 1]]
    boundary = float(rho * graph.weights[cut].sum())
    return PartitionEnergy(data, boundary)


class _Block:
    """Mutable per-superpoint statistics during cut pursuit."""

    __slots__ = ("points", "fsum", "sqsum")

    def __init__(self, points, fsum, sqsum):
        self.points = points  # ascending point indices
        self.fsum = fsum
        self.sqsum = float(sqsum)

    @property
    def size(self):
        return len(self.points)

    def sse(self):
        return self.sqsum - float(self.fsum @ self.fsum) / self.size


def _components_of(local_edges: np.ndarray, size: int) -> np.ndarray:
    """Connected-component labels (canonical first-occurrence order)."""
    if size == 1:
        return np.zeros(1, dtype=np.int64)
    if len(local_edges):
        m = csr_matrix(
            (np.ones(len(local_edges), dtype=np.int8), (local_edges[:, 0], local_edges[:, 1])),
            shape=(size, size),
        )
        _, labels = connected_components(m, directed=False)
    else:
        labels = np.arange(size)
    # relabel by first occurrence so labels are deterministic
    _, first = np.unique(labels, return_index=True)
    remap = np.empty(labels.max() + 1, dtype=np.int64)
    remap[labels[np.sort(first)]] = np.arange(len(first))
    return remap[labels]


def _enumerate_bisection(f, sq, local_edges, w, rho):
    """Exact best bipartition of a small block; returns (labels, energy)."""
    s = len(f)
    fsum = f.sum(axis=0)
    sqtot = float(sq.sum())
    masks = np.arange(1, 2 ** (s - 1), dtype=np.uint32)
    bits = ((masks[:, None] >> np.arange(s - 1)) & 1).astype(bool)
    bits = np.concatenate([np.zeros((len(masks), 1), dtype=bool), bits], axis=1)
    size_b = bits.sum(axis=1)
    size_a = s - size_b
    sum_b = bits @ f
    sq_b = bits @ sq
    sum_a = fsum - sum_b
    sq_a = sqtot - sq_b
    sse = (
        sq_a
        - (sum_a**2).sum(axis=1) / size_a
        + sq_b
        - (sum_b**2).sum(axis=1) / size_b
    )
    if len(local_edges):
        cut = bits[:, local_edges[:, 0]] != bits[:, local_edges[:, 1]]
        boundary = rho * (cut @ w)
    else:
        boundary = 0.0
    total = sse + boundary
    best = int(np.argmin(total))  # ties: lowest mask
    return bits[best], float(total[best])


def _mincut_labels(f, sq, mu0, mu1, local_edges, w, rho):
    """Exact binary labeling for fixed means via s-t max flow."""
    s = len(f)
    u0 = sq - 2.0 * (f @ mu0) + float(mu0 @ mu0)
    u1 = sq - 2.0 * (f @ mu1) + float(mu1 @ mu1)
    base = np.minimum(u0, u1)
    cap_src = u1 - base  # cut when labeled 1
    cap_snk = u0 - base  # cut when labeled 0
    pair = rho * w
    top = max(cap_src.max(initial=0.0), cap_snk.max(initial=0.0), pair.max(initial=0.0))
    if top <= 0.0:
        return np.zeros(s, dtype=bool)
    scale = _FLOW_CAP / top
    src, snk = s, s + 1
    rows = np.concatenate([np.full(s, src), np.arange(s), local_edges[:, 0], local_edges[:, 1]])
    cols = np.concatenate([np.arange(s), np.full(s, snk), local_edges[:, 1], local_edges[:, 0]])
    caps = np.concatenate([cap_src, cap_snk, pair, pair])
    caps = np.round(caps * scale).astype(np.int64)
    g = csr_matrix((caps, (rows, cols)), shape=(s + 2, s + 2), dtype=np.int32)
    g.sum_duplicates()
    res = maximum_flow(g, src, snk)
    resid = (g - res.flow).tocsr()
    resid.data = (resid.data > 0).astype(np.int32)
    resid.eliminate_zeros()
    reach = breadth_first_order(resid, src, directed=True, return_predecessors=False)
    labels = np.ones(s, dtype=bool)
    labels[reach[reach < s]] = False
    return labels


def _heuristic_bisection(f, sq, local_edges, w, rho):
    """Two-means seeded split with alternating mean / graph-cut refinement."""
    s = len(f)
    if s <= EXACT_SEED_LIMIT:
        gram = f @ f.T
        d2 = sq[:, None] + sq[None, :] - 2.0 * gram
        a, b = np.unravel_index(np.argmax(d2), d2.shape)
        a, b = int(a), int(b)
    else:
        # deterministic double sweep approximates the max-distance pair
        mean = f.mean(axis=0)
        x0 = int(np.argmax(((f - mean) ** 2).sum(axis=1)))
        a = int(np.argmax(((f - f[x0]) ** 2).sum(axis=1)))
        b = int(np.argmax(((f - f[a]) ** 2).sum(axis=1)))
    if a == b:
        return None
    da = ((f - f[a]) ** 2).sum(axis=1)
    db = ((f - f[b]) ** 2).sum(axis=1)
    labels = db < da

    for _ in range(8):
        if labels.all() or not labels.any():
            return None
        mu0 = f[~labels].mean(axis=0)
        mu1 = f[labels].mean(axis=0)
        new = _mincut_labels(f, sq, mu0, mu1, local_edges, w, rho)
        if (new == labels).all():
            break
        labels = new
    if labels.all() or not labels.any():
        return None
    sse = 0.0
    for side in (~labels, labels):
        fs = f[side]
        sse += float(sq[side].sum()) - float(fs.sum(axis=0) @ fs.sum(axis=0)) / side.sum()
    cutw = float(w[labels[local_edges[:, 0]] != labels[local_edges[:, 1]]].sum()) if len(local_edges) else 0.0
    return labels, sse + rho * cutw


def cut_pursuit(
    features: np.ndarray,
    graph: AdjacencyGraph,
    rho: float,
    max_iters: int = 10,
    history: list | None = None,
) -> Partition:
    """Approximately solve the minimal partition problem by split-and-merge.

    The returned partition's energy never exceeds either trivial partition
    (all singletons, or one cluster per graph component).  When ``history``
    is given, the running total energy is appended after initialization and
    after every accepted split/merge; it decreases strictly.
    """
    if rho <= 0:
        raise ValueError("rho must be > 0")
    f = np.asarray(features, dtype=np.float64)
    n = f.shape[0]
    if n != graph.num_points:
        raise ValueError("features/graph size mismatch")
    sq = (f**2).sum(axis=1)

    # initial partition: one superpoint per connected component
    if graph.num_edges:
        m = csr_matrix(
            (np.ones(graph.num_edges, dtype=np.int8), (graph.edges[:, 0], graph.edges[:, 1])),
            shape=(n, n),
        )
        _, assign = connected_components(m, directed=False)
    else:
        assign = np.arange(n)
    assign = assign.astype(np.int64)
    _, first = np.unique(assign, return_index=True)
    remap = np.empty(assign.max() + 1, dtype=np.int64)
    remap[assign[np.sort(first)]] = np.arange(len(first))
    assign = remap[assign]

    blocks: dict[int, _Block] = {}
    for sid in range(assign.max() + 1):
        pts = np.flatnonzero(assign == sid)
        blocks[sid] = _Block(pts, f[pts].sum(axis=0), sq[pts].sum())
    next_id = len(blocks)

    total = sum(b.sse() for b in blocks.values())  # boundary starts at 0
    if history is not None:
        history.append(total)
    saturated: set[int] = set()
    loc = np.empty(n, dtype=np.int64)

    def internal_edge_lists():
        """edge indices grouped by superpoint (both endpoints inside)."""
        su = assign[graph.edges[:, 0]]
        sv = assign[graph.edges[:, 1]]
        same = su == sv
        ids = su[same]
        eidx = np.flatnonzero(same)
        order = np.argsort(ids, kind="stable")
        ids = ids[order]
        eidx = eidx[order]
        bounds = np.searchsorted(ids, np.arange(assign.max() + 2))
        return {sid: eidx[bounds[sid] : bounds[sid + 1]] for sid in np.unique(ids)}

    for _ in range(max_iters):
        changed = False

        # -- split phase -------------------------------------------------
        by_sp = internal_edge_lists()
        for sid in sorted(blocks):
            if sid in saturated:
                continue
            block = blocks[sid]
            s = block.size
            if s < 2:
                saturated.add(sid)
                continue
            pts = block.points
            loc[pts] = np.arange(s)
            eids = by_sp.get(sid, np.empty(0, dtype=np.int64))
            ledges = loc[graph.edges[eids]] if len(eids) else np.empty((0, 2), dtype=np.int64)
            w = graph.weights[eids]
            fS = f[pts]
            sqS = sq[pts]
            old = block.sse()

            if s <= EXACT_SPLIT_LIMIT:
                labels, split_e = _enumerate_bisection(fS, sqS, ledges, w, rho)
            else:
                got = _heuristic_bisection(fS, sqS, ledges, w, rho)
                labels, split_e = (None, np.inf) if got is None else got

            if split_e >= old:
                saturated.add(sid)
                continue

            # decompose both sides into connected components
            same_side = labels[ledges[:, 0]] == labels[ledges[:, 1]] if len(ledges) else np.empty(0, dtype=bool)
            piece_labels = _components_of(ledges[same_side], s)

            piece_ids = np.unique(piece_labels)
            if len(piece_ids) < 2:
                saturated.add(sid)
                continue
            new_sse = 0.0
            for pl in piece_ids:
                sel = piece_labels == pl
                fs = fS[sel].sum(axis=0)
                new_sse += float(sqS[sel].sum()) - float(fs @ fs) / sel.sum()
            if len(ledges):
                cutw = float(w[piece_labels[ledges[:, 0]] != piece_labels[ledges[:, 1]]].sum())
            else:
                cutw = 0.0
            delta = (new_sse + rho * cutw) - old
            if not delta < 0.0:
                saturated.add(sid)
                continue

            # accept: first piece keeps sid, others get fresh ids
            for j, pl in enumerate(piece_ids):
                sel = piece_labels == pl
                sub = pts[sel]
                nid = sid if j == 0 else next_id
                if j > 0:
                    next_id += 1
                assign[sub] = nid
                blocks[nid] = _Block(sub, fS[sel].sum(axis=0), float(sqS[sel].sum()))
            total += delta
            if history is not None:
                history.append(total)
            changed = True

        # -- merge phase --------------------------------------------------
        while True:
            su = assign[graph.edges[:, 0]]
            sv = assign[graph.edges[:, 1]]
            cross = su != sv
            if not cross.any():
                break
            a = np.minimum(su[cross], sv[cross])
            b = np.maximum(su[cross], sv[cross])
            key = a * (next_id + 1) + b
            uniq, inv = np.unique(key, return_inverse=True)
            wsum = np.bincount(inv, weights=graph.weights[cross])
            pa = uniq // (next_id + 1)
            pb = uniq % (next_id + 1)
            order = np.lexsort((pb, pa))

            merged_any = False
            parent = {sid: sid for sid in blocks}

            def find(x):
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            wmap = {(int(pa[i]), int(pb[i])): float(wsum[i]) for i in order}
            for i in order:
                ra, rb = find(int(pa[i])), find(int(pb[i]))
                if ra == rb:
                    continue
                lo_, hi_ = min(ra, rb), max(ra, rb)
                wab = wmap.get((lo_, hi_), 0.0)
                if wab <= 0.0:
                    continue
                ba, bb = blocks[lo_], blocks[hi_]
                mu_a = ba.fsum / ba.size
                mu_b = bb.fsum / bb.size
                dmu = mu_a - mu_b
                ward = ba.size * bb.size / (ba.size + bb.size) * float(dmu @ dmu)
                delta = ward - rho * wab
                if not delta < 0.0:
                    continue
                # merge hi_ into lo_
                merged = _Block(
                    np.sort(np.concatenate([ba.points, bb.points])),
                    ba.fsum + bb.fsum,
                    ba.sqsum + bb.sqsum,
                )
                blocks[lo_] = merged
                del blocks[hi_]
                saturated.discard(lo_)
                parent[hi_] = lo_
                assign[merged.points] = lo_
                # fold hi_'s cross weights into lo_
                for (x, y), wv in list(wmap.items()):
                    if x == hi_ or y == hi_:
                        del wmap[(x, y)]
                        other = y if x == hi_ else x
                        if other == lo_:
                            continue
                        nk = (min(lo_, other), max(lo_, other))
                        wmap[nk] = wmap.get(nk, 0.0) + wv
                total += delta
                if history is not None:
                    history.append(total)
                merged_any = True
                changed = True
            if not merged_any:
                break

        if not changed:
            break

    # canonical dense relabel by first point occurrence
    _, first = np.unique(assign, return_index=True)
    remap_keys = assign[np.sort(first)]
    lut = np.empty(int(assign.max()) + 1, dtype=np.int64)
    lut[remap_keys] = np.arange(len(remap_keys))
    assign = lut[assign]

    result = Partition.from_assignment(assign, f)
    # contract backstop: never exceed the trivial partitions (split-phase
    # singleton moves make this unreachable at convergence, but max_iters
    # can stop the loop early)
    e_final = energy(result, f, graph, rho).total
    e_singl = rho * float(graph.weights.sum())
    if n > 1 and e_singl < e_final:
        result = Partition.from_assignment(np.arange(n), f)
        if history is not None and (not history or e_singl < history[-1]):
            history.append(e_singl)
    return result
