"""Oriented surface graphs over splat point clouds.

Each node carries an orthonormal local frame (tangent, bitangent, normal)
built by Gram-Schmidt from an estimated normal and a global up vector.
Directed KNN edges are assigned direction bins in the source node's tangent
plane: bin 0 is the self-loop, bins 1..8 sit at 45 degree increments with
bin 1 on the +tangent axis, and off-axis edges split their weight linearly
between the two adjacent bins. On a pixel grid this reproduces image
8-connectivity exactly, which is what lets image CNN weights run on the
graph unchanged.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.spatial import cKDTree

from . import kernels
from .errors import InsufficientPointsError, InvalidArgumentError

GLOBAL_UP = np.array([0.0, 0.0, 1.0])
_FALLBACK_UPS = (np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
_DEGENERATE_EPS = 1e-6

# Offsets of the eight non-self bins in grid (row, col) space; bin 1 points
# along +tangent, successive bins advance 45 degrees.
GRID_BIN_OFFSETS = {
    1: (-1, 0),
    2: (-1, 1),
    3: (0, 1),
    4: (1, 1),
    5: (1, 0),
    6: (1, -1),
    7: (0, -1),
    8: (-1, -1),
}


@dataclass
class Frame:
    """Orthonormal local frame at a node."""

    normal: np.ndarray
    tangent: np.ndarray
    bitangent: np.ndarray


@dataclass
class PoolMap:
    """Fine-to-coarse clustering used by pooling layers."""

    cluster_of: np.ndarray
    coarse_positions: np.ndarray

    @property
    def n_coarse(self):
        return self.coarse_positions.shape[0]


class SurfaceGraph:
    """Immutable oriented graph: positions, frames, edges, selections.

    Edges are directed src -> dst ("src gathers from dst") and stored flat;
    ``sel_bins``/``sel_weights`` hold up to two (bin, weight) entries per
    edge with -1 marking an unused slot.
    """

    def __init__(
        self,
        positions,
        normals,
        tangents,
        bitangents,
        up,
        src,
        dst,
        sel_bins,
        sel_weights,
        knn_k,
        grid_shape=None,
        diagnostics=None,
    ):
        self.positions = positions
        self.normals = normals
        self.tangents = tangents
        self.bitangents = bitangents
        self.up = np.asarray(up, dtype=np.float64)
        self.src = src
        self.dst = dst
        self.sel_bins = sel_bins
        self.sel_weights = sel_weights
        self.knn_k = knn_k
        self.grid_shape = grid_shape
        self.diagnostics = diagnostics or {}

    @property
    def n_nodes(self):
        return self.positions.shape[0]

    @property
    def n_edges(self):
        return self.src.shape[0]

    def frame(self, i):
        return Frame(
            normal=self.normals[i],
            tangent=self.tangents[i],
            bitangent=self.bitangents[i],
        )

    def selection(self, e):
        """Selection entries of edge ``e`` as a list of (bin, weight)."""
        out = []
        for slot in range(self.sel_bins.shape[1]):
            b = int(self.sel_bins[e, slot])
            if b >= 0:
                out.append((b, float(self.sel_weights[e, slot])))
        return out

    def debug_dict(self):
        """JSON-friendly dump for external visualization tools."""
        return {
            "positions": self.positions.tolist(),
            "normals": self.normals.tolist(),
            "edges": [
                {"src": int(s), "dst": int(d), "selection": self.selection(e)}
                for e, (s, d) in enumerate(zip(self.src, self.dst))
            ],
        }


def _knn_query(points, k):
    """(distances, indices) of the k nearest neighbors, self excluded.

    Ties are broken by lower neighbor index, including ties hidden past the
    query window (resolved with an exact radius search).
    """
    n = points.shape[0]
    if n <= k:
        raise InsufficientPointsError(f"need more than {k} points, got {n}")
    tree = cKDTree(points)
    window = min(n, k + 1 + 4)
    dist, idx = tree.query(points, k=window, workers=-1)
    masked = np.where(idx == np.arange(n)[:, None], np.inf, dist)
    order = np.lexsort((idx, masked), axis=-1)
    sorted_d = np.take_along_axis(masked, order, axis=1)
    sorted_i = np.take_along_axis(idx, order, axis=1)
    out_d = sorted_d[:, :k].copy()
    out_i = sorted_i[:, :k].copy()

    if window < n:
        # If the k-th kept distance reaches the end of the window, tied
        # candidates may have been cut off arbitrarily; redo those rows.
        suspect = np.nonzero(out_d[:, k - 1] >= sorted_d[:, window - 2])[0]
        for i in suspect:
            radius = out_d[i, k - 1] * (1 + 1e-12) + 1e-300
            cand = np.array(tree.query_ball_point(points[i], radius))
            cand = cand[cand != i]
            d = np.linalg.norm(points[cand] - points[i], axis=1)
            sel = np.lexsort((cand, d))[:k]
            out_d[i] = d[sel]
            out_i[i] = cand[sel]
    return out_d, out_i


def estimate_normals(points, k, return_degenerate=False, _knn=None):
    """Per-point unit normals from neighborhood PCA with consistent signs.

    The normal is the smallest-eigenvalue eigenvector of the covariance of
    the point and its k nearest neighbors. Signs are made consistent by
    propagation along a minimum spanning tree of the KNN graph, then each
    connected component is flipped to a canonical orientation (outward from
    the component centroid when that is well defined).

    ``_knn`` lets the graph builder reuse an existing (distances, neighbors)
    query instead of repeating it.
    """
    points = np.asarray(points, dtype=np.float64)
    if k < 3:
        raise InvalidArgumentError("k must be >= 3 for plane fitting")
    n = points.shape[0]
    dists, neighbors = _knn_query(points, k) if _knn is None else _knn

    eigvals, eigvecs = _neighborhood_pca(points, neighbors)
    normals = np.ascontiguousarray(eigvecs[:, :, 0])

    degenerate = eigvals.sum(axis=1) <= 1e-24
    if degenerate.any():
        normals[degenerate] = GLOBAL_UP

    # Undirected KNN graph with distance weights; zero-length edges keep a
    # tiny weight so duplicates stay connected in the sparse structure.
    rows = np.repeat(np.arange(n), k)
    cols = neighbors.ravel()
    w = np.maximum(dists.ravel(), 1e-30)
    graph = sp.coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    graph = graph.maximum(graph.T)
    n_comp, labels = connected_components(graph, directed=False)
    roots = np.unique(labels, return_index=True)[1]

    mst = minimum_spanning_tree(graph)
    forest = (mst + mst.T).tocsr()
    kernels.propagate_signs(
        forest.indptr, forest.indices.astype(np.int64), roots.astype(np.int64), normals
    )

    _orient_components(points, normals, labels, n_comp)
    if return_degenerate:
        return normals, degenerate
    return normals


def _neighborhood_pca(points, neighbors, chunk=65536):
    """Batched eigendecomposition of self-plus-neighbors covariances."""
    n, k = neighbors.shape
    eigvals = np.empty((n, 3))
    eigvecs = np.empty((n, 3, 3))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        nbh = np.concatenate(
            [points[lo:hi, None, :], points[neighbors[lo:hi]]], axis=1
        )
        centered = nbh - nbh.mean(axis=1, keepdims=True)
        cov = np.einsum("nki,nkj->nij", centered, centered) / (k + 1)
        eigvals[lo:hi], eigvecs[lo:hi] = np.linalg.eigh(cov)
    return eigvals, eigvecs


def _orient_components(points, normals, labels, n_comp):
    """Flip each component to a canonical global orientation."""
    counts = np.bincount(labels, minlength=n_comp).astype(np.float64)
    offsets = points - _component_means(points, labels, n_comp, counts)[labels]
    outward = np.bincount(
        labels, weights=(normals * offsets).sum(axis=1), minlength=n_comp
    )
    mean_n = _component_means(normals, labels, n_comp, counts)

    flip = np.ones(n_comp)
    for c in range(n_comp):
        if abs(outward[c]) > 1e-9 * counts[c]:
            flip[c] = math.copysign(1.0, outward[c])
        else:
            # Open/flat patch: pick the sign making the dominant coordinate
            # of the mean normal positive, so plane normals land on +axis.
            m = mean_n[c]
            j = int(np.argmax(np.abs(m)))
            if m[j] != 0.0:
                flip[c] = math.copysign(1.0, m[j])
    normals *= flip[labels, None]


def _component_means(values, labels, n_comp, counts):
    sums = np.zeros((n_comp, values.shape[1]))
    np.add.at(sums, labels, values)
    return sums / counts[:, None]


def build_frames(normals, up):
    """Tangent/bitangent per node by Gram-Schmidt of ``up`` against normals.

    Falls back to (0,0,1) and then (1,0,0) wherever the up vector is within
    1e-6 of parallel to the normal.
    """
    normals = np.asarray(normals, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    if abs(np.linalg.norm(up) - 1.0) > 1e-6:
        raise InvalidArgumentError("up vector must be unit length")

    tangents = np.empty_like(normals)
    pending = np.ones(normals.shape[0], dtype=bool)
    for candidate in (up,) + _FALLBACK_UPS:
        if not pending.any():
            break
        nrm = normals[pending]
        proj = candidate - (nrm @ candidate)[:, None] * nrm
        lengths = np.linalg.norm(proj, axis=1)
        ok = lengths >= _DEGENERATE_EPS
        rows = np.nonzero(pending)[0][ok]
        tangents[rows] = proj[ok] / lengths[ok, None]
        pending[rows] = False
    bitangents = np.cross(normals, tangents)
    return tangents, bitangents


def knn_edges(points, k, _knn=None):
    """Directed KNN edges plus one self-loop per node.

    Returns (src, dst) flat arrays laid out node-major: the self-loop first,
    then the k neighbors ordered by (distance, index).
    """
    points = np.asarray(points, dtype=np.float64)
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    n = points.shape[0]
    _, neighbors = _knn_query(points, k) if _knn is None else _knn
    dst = np.concatenate(
        [np.arange(n, dtype=np.int64)[:, None], neighbors.astype(np.int64)], axis=1
    ).ravel()
    src = np.repeat(np.arange(n, dtype=np.int64), k + 1)
    return src, dst


def assign_selections(positions, tangents, bitangents, src, dst, normals=None):
    """Direction bins and interpolation weights for every edge.

    The edge vector is projected onto the source node's tangent plane; its
    angle splits weight linearly between the two adjacent 45-degree bins.
    Self-loops get bin 0 with weight 1. Edges with (numerically) no
    tangential component keep full weight in the nearest bin and are
    reported in the returned degeneracy mask.
    """
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    if normals is None:
        normals = np.zeros_like(positions)
    bins, weights, degenerate, _ = kernels.edge_selections(
        positions,
        np.ascontiguousarray(tangents),
        np.ascontiguousarray(bitangents),
        np.ascontiguousarray(normals),
        np.ascontiguousarray(src, dtype=np.int64),
        np.ascontiguousarray(dst, dtype=np.int64),
    )
    return bins, weights, degenerate


def build_surface_graph(points, k=16, up=GLOBAL_UP, normals=None, normal_k=None):
    """Full pipeline from points to an oriented surface graph.

    ``normals`` overrides estimation (used by the randomized-normals
    ablation); ``normal_k`` defaults to the edge k.
    """
    points = np.asarray(points, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    norm = np.linalg.norm(up)
    if norm == 0.0:
        raise InvalidArgumentError("up vector must be nonzero")
    up = up / norm

    nk = normal_k or k
    query_k = max(k, nk if normals is None else k)
    dists, neighbors = _knn_query(points, query_k)

    if normals is None:
        normals, degenerate_normals = estimate_normals(
            points,
            nk,
            return_degenerate=True,
            _knn=(dists[:, :nk], neighbors[:, :nk]),
        )
        n_degenerate_normals = int(degenerate_normals.sum())
    else:
        normals = np.asarray(normals, dtype=np.float64)
        n_degenerate_normals = 0

    tangents, bitangents = build_frames(normals, up)
    src, dst = knn_edges(points, k, _knn=(dists[:, :k], neighbors[:, :k]))
    sel_bins, sel_weights, degenerate, normal_comp = kernels.edge_selections(
        np.ascontiguousarray(points),
        tangents,
        bitangents,
        np.ascontiguousarray(normals),
        src,
        dst,
    )

    non_self = src != dst
    component = normal_comp[non_self]
    diagnostics = {
        "degenerate_normals": n_degenerate_normals,
        "planar_degenerate_edges": int(degenerate.sum()),
        "edge_normal_component_mean": float(component.mean()) if component.size else 0.0,
        "edge_normal_component_max": float(component.max()) if component.size else 0.0,
    }
    return SurfaceGraph(
        positions=points,
        normals=normals,
        tangents=tangents,
        bitangents=bitangents,
        up=up,
        src=src,
        dst=dst,
        sel_bins=sel_bins,
        sel_weights=sel_weights,
        knn_k=k,
        diagnostics=diagnostics,
    )


def grid_graph(height, width):
    """Image-shaped graph: one node per pixel, pure single-bin edges.

    Nodes sit at (col, row, 0) in row-major order with normals (0,0,1) and
    up (0,-1,0), which makes the eight bins coincide with image-space
    8-connectivity; border nodes simply lack the out-of-image edges.
    """
    if height < 1 or width < 1:
        raise InvalidArgumentError("grid dimensions must be >= 1")
    n = height * width
    rows, cols = np.divmod(np.arange(n), width)
    positions = np.stack(
        [cols.astype(np.float64), rows.astype(np.float64), np.zeros(n)], axis=1
    )
    normals = np.tile(GLOBAL_UP, (n, 1))
    up = np.array([0.0, -1.0, 0.0])
    tangents, bitangents = build_frames(normals, up)

    src_parts = [np.arange(n, dtype=np.int64)]
    dst_parts = [np.arange(n, dtype=np.int64)]
    bin_parts = [np.zeros(n, dtype=np.int16)]
    for b, (dr, dc) in GRID_BIN_OFFSETS.items():
        r2 = rows + dr
        c2 = cols + dc
        ok = (r2 >= 0) & (r2 < height) & (c2 >= 0) & (c2 < width)
        src_parts.append(np.nonzero(ok)[0].astype(np.int64))
        dst_parts.append((r2[ok] * width + c2[ok]).astype(np.int64))
        bin_parts.append(np.full(int(ok.sum()), b, dtype=np.int16))
    src = np.concatenate(src_parts)
    dst = np.concatenate(dst_parts)
    pure_bins = np.concatenate(bin_parts)

    sel_bins = np.full((src.shape[0], 2), -1, dtype=np.int16)
    sel_weights = np.zeros((src.shape[0], 2), dtype=np.float64)
    sel_bins[:, 0] = pure_bins
    sel_weights[:, 0] = 1.0
    return SurfaceGraph(
        positions=positions,
        normals=normals,
        tangents=tangents,
        bitangents=bitangents,
        up=up,
        src=src,
        dst=dst,
        sel_bins=sel_bins,
        sel_weights=sel_weights,
        knn_k=8,
        grid_shape=(height, width),
    )


def mean_edge_length(graph):
    non_self = graph.src != graph.dst
    if not non_self.any():
        return 0.0
    e = graph.positions[graph.dst[non_self]] - graph.positions[graph.src[non_self]]
    return float(np.linalg.norm(e, axis=1).mean())


def _cluster_stats(graph, cluster_of, m):
    """Centroids and averaged unit normals per cluster."""
    n = graph.positions.shape[0]
    counts = np.bincount(cluster_of, minlength=m).astype(np.float64)
    coarse_pos = np.zeros((m, 3))
    np.add.at(coarse_pos, cluster_of, graph.positions)
    coarse_pos /= counts[:, None]

    coarse_normals = np.zeros((m, 3))
    np.add.at(coarse_normals, cluster_of, graph.normals)
    lengths = np.linalg.norm(coarse_normals, axis=1)
    weak = lengths < 1e-9
    if weak.any():
        first_member = np.full(m, -1, dtype=np.int64)
        for i in range(n - 1, -1, -1):
            first_member[cluster_of[i]] = i
        coarse_normals[weak] = graph.normals[first_member[weak]]
        lengths = np.linalg.norm(coarse_normals, axis=1)
    coarse_normals /= lengths[:, None]
    return coarse_pos, coarse_normals


def _downsample_grid(graph):
    """Pool a grid graph into exact 2x2 blocks; the result stays a grid."""
    h, w = graph.grid_shape
    n = graph.positions.shape[0]
    rows, cols = np.divmod(np.arange(n), w)
    cluster_of = (rows // 2) * (w // 2) + (cols // 2)
    m = (h // 2) * (w // 2)
    coarse_pos, _ = _cluster_stats(graph, cluster_of, m)
    coarse = grid_graph(h // 2, w // 2)
    coarse.positions = coarse_pos
    return coarse, PoolMap(cluster_of=cluster_of, coarse_positions=coarse_pos)


def downsample_graph(graph, voxel):
    """Coarsen a graph by voxel clustering of node positions.

    Coarse nodes sit at member centroids with averaged normals; edges and
    selections are rebuilt at the coarse level. Grids pooled by voxel 2
    stay grids (exact 2x2 blocks, clustered by pixel index) so image
    pooling semantics survive repeated pooling.
    """
    if voxel <= 0:
        raise InvalidArgumentError("voxel must be positive")
    if graph.grid_shape is not None and voxel == 2:
        h, w = graph.grid_shape
        if h % 2 == 0 and w % 2 == 0:
            return _downsample_grid(graph)

    positions = graph.positions
    n = positions.shape[0]
    keys = np.floor((positions - positions.min(axis=0)) / voxel).astype(np.int64)
    _, cluster_of = np.unique(keys, axis=0, return_inverse=True)
    cluster_of = cluster_of.reshape(n)
    m = int(cluster_of.max()) + 1

    coarse_pos, coarse_normals = _cluster_stats(graph, cluster_of, m)
    pool_map = PoolMap(cluster_of=cluster_of, coarse_positions=coarse_pos)

    if m == 1:
        tangents, bitangents = build_frames(coarse_normals, graph.up)
        coarse = SurfaceGraph(
            positions=coarse_pos,
            normals=coarse_normals,
            tangents=tangents,
            bitangents=bitangents,
            up=graph.up,
            src=np.zeros(1, dtype=np.int64),
            dst=np.zeros(1, dtype=np.int64),
            sel_bins=np.array([[0, -1]], dtype=np.int16),
            sel_weights=np.array([[1.0, 0.0]]),
            knn_k=graph.knn_k,
        )
        return coarse, pool_map

    k = min(graph.knn_k, m - 1)
    coarse = build_surface_graph(coarse_pos, k=k, up=graph.up, normals=coarse_normals)
    return coarse, pool_map
