"""Hot numeric kernels with selectable backends.

Two implementations exist for each kernel: a numba ``@njit`` version and a
pure numpy/scipy version. The active backend is chosen by the
``SPLATSTYLE_BACKEND`` environment variable:

    SPLATSTYLE_BACKEND=numba   force numba (error if numba missing)
    SPLATSTYLE_BACKEND=numpy   force the numpy/scipy path
    unset                      numba when importable, numpy otherwise

``benchmarks/bench_kernels.py`` compares both paths on realistic sizes.
"""

import os

import numpy as np
import scipy.sparse as sp

try:
    import numba
    from numba import njit, prange

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def active_backend():
    """Resolve the backend name ("numba" or "numpy") from the environment."""
    choice = os.environ.get("SPLATSTYLE_BACKEND", "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("SPLATSTYLE_BACKEND=numba but numba is not importable")
        return "numba"
    return "numba" if HAS_NUMBA else "numpy"


def set_num_threads(n):
    """Limit numba's thread pool; no-op on the numpy backend."""
    if HAS_NUMBA and n and n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


# ---------------------------------------------------------------------------
# CSR sparse @ dense accumulate: out += S @ dense
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(parallel=True, cache=True)
    def _csr_matmul_accum_numba(indptr, indices, data, dense, out):
        n_rows = indptr.shape[0] - 1
        n_cols = dense.shape[1]
        for i in prange(n_rows):
            lo = indptr[i]
            hi = indptr[i + 1]
            if lo == hi:
                continue
            for k in range(lo, hi):
                j = indices[k]
                w = data[k]
                for c in range(n_cols):
                    out[i, c] += w * dense[j, c]


def _csr_matmul_accum_numpy(indptr, indices, data, dense, out):
    n_rows = indptr.shape[0] - 1
    mat = sp.csr_matrix((data, indices, indptr), shape=(n_rows, dense.shape[0]))
    out += mat @ dense


def csr_matmul_accum(indptr, indices, data, dense, out):
    """Accumulate a CSR sparse-times-dense product into ``out`` (rows x C)."""
    if active_backend() == "numba":
        _csr_matmul_accum_numba(indptr, indices, data, dense, out)
    else:
        _csr_matmul_accum_numpy(indptr, indices, data, dense, out)


# ---------------------------------------------------------------------------
# Per-edge direction binning (fused gather + planar projection + interpolation)
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(parallel=True, cache=True)
    def _edge_selections_numba(
        positions, tangents, bitangents, normals, src, dst,
        bins, weights, degenerate, normal_comp,
    ):
        quarter = 0.25 * np.pi
        for e in prange(src.shape[0]):
            i = src[e]
            j = dst[e]
            if i == j:
                bins[e, 0] = 0
                weights[e, 0] = 1.0
                bins[e, 1] = -1
                weights[e, 1] = 0.0
                normal_comp[e] = 0.0
                continue
            ex = positions[j, 0] - positions[i, 0]
            ey = positions[j, 1] - positions[i, 1]
            ez = positions[j, 2] - positions[i, 2]
            x = ex * tangents[i, 0] + ey * tangents[i, 1] + ez * tangents[i, 2]
            y = (
                ex * bitangents[i, 0]
                + ey * bitangents[i, 1]
                + ez * bitangents[i, 2]
            )
            nc = ex * normals[i, 0] + ey * normals[i, 1] + ez * normals[i, 2]
            edge_len = np.sqrt(ex * ex + ey * ey + ez * ez)
            normal_comp[e] = abs(nc) / edge_len if edge_len > 0.0 else 0.0

            theta = np.arctan2(y, x)
            sector = (theta / quarter) % 8.0
            lower = np.int64(np.floor(sector)) % 8
            frac = sector - np.floor(sector)
            if np.hypot(x, y) <= 1e-9 * edge_len:
                frac = 0.0
                degenerate[e] = True
            bins[e, 0] = 1 + lower
            weights[e, 0] = 1.0 - frac
            if frac > 0.0:
                bins[e, 1] = 1 + (lower + 1) % 8
                weights[e, 1] = frac
            else:
                bins[e, 1] = -1
                weights[e, 1] = 0.0


def _edge_selections_numpy(
    positions, tangents, bitangents, normals, src, dst,
    bins, weights, degenerate, normal_comp,
):
    e = positions[dst] - positions[src]
    x = (e * tangents[src]).sum(axis=1)
    y = (e * bitangents[src]).sum(axis=1)
    nc = (e * normals[src]).sum(axis=1)
    is_self = src == dst

    edge_len = np.linalg.norm(e, axis=1)
    np.divide(np.abs(nc), edge_len, out=normal_comp, where=edge_len > 0.0)

    theta = np.arctan2(y, x)
    sector = np.mod(theta / (0.25 * np.pi), 8.0)
    lower = np.floor(sector).astype(np.int64) % 8
    frac = sector - np.floor(sector)
    tangential = np.hypot(x, y)
    deg = (~is_self) & (tangential <= 1e-9 * edge_len)
    degenerate[:] = deg
    frac = np.where(deg, 0.0, frac)

    bins[:, 0] = 1 + lower
    weights[:, 0] = 1.0 - frac
    split = frac > 0.0
    bins[split, 1] = 1 + (lower[split] + 1) % 8
    weights[split, 1] = frac[split]
    bins[~split, 1] = -1
    weights[~split, 1] = 0.0

    bins[is_self, 0] = 0
    weights[is_self, 0] = 1.0
    bins[is_self, 1] = -1
    weights[is_self, 1] = 0.0
    degenerate[is_self] = False
    normal_comp[is_self] = 0.0


def edge_selections(positions, tangents, bitangents, normals, src, dst):
    """Bins, weights, degeneracy flags and |e.n|/|e| for every edge."""
    n_edges = src.shape[0]
    bins = np.full((n_edges, 2), -1, dtype=np.int16)
    weights = np.zeros((n_edges, 2))
    degenerate = np.zeros(n_edges, dtype=np.bool_)
    normal_comp = np.zeros(n_edges)
    args = (
        positions, tangents, bitangents, normals,
        src, dst, bins, weights, degenerate, normal_comp,
    )
    if active_backend() == "numba":
        _edge_selections_numba(*args)
    else:
        _edge_selections_numpy(*args)
    return bins, weights, degenerate, normal_comp


# ---------------------------------------------------------------------------
# Per-bin CSR assembly with (node, bin) row normalization
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _scatter_bins_numba(bins, rows, cols, weights, n_nodes, n_bins):
        n_entries = bins.shape[0]
        counts = np.zeros((n_bins, n_nodes), dtype=np.int64)
        for e in range(n_entries):
            counts[bins[e], rows[e]] += 1

        indptrs = np.zeros((n_bins, n_nodes + 1), dtype=np.int64)
        for m in range(n_bins):
            for i in range(n_nodes):
                indptrs[m, i + 1] = indptrs[m, i] + counts[m, i]
        bin_offsets = np.zeros(n_bins + 1, dtype=np.int64)
        for m in range(n_bins):
            bin_offsets[m + 1] = bin_offsets[m] + indptrs[m, n_nodes]

        indices = np.empty(bin_offsets[n_bins], dtype=np.int64)
        data = np.empty(bin_offsets[n_bins])
        cursor = np.zeros((n_bins, n_nodes), dtype=np.int64)
        for e in range(n_entries):
            m = bins[e]
            r = rows[e]
            pos = bin_offsets[m] + indptrs[m, r] + cursor[m, r]
            cursor[m, r] += 1
            indices[pos] = cols[e]
            data[pos] = weights[e]

        for m in range(n_bins):
            base = bin_offsets[m]
            for i in range(n_nodes):
                lo = base + indptrs[m, i]
                hi = base + indptrs[m, i + 1]
                total = 0.0
                for p in range(lo, hi):
                    total += data[p]
                if total > 0.0:
                    for p in range(lo, hi):
                        data[p] /= total
        return indptrs, bin_offsets, indices, data


def _scatter_bins_numpy(bins, rows, cols, weights, n_nodes, n_bins):
    order = np.argsort(bins * n_nodes + rows, kind="stable")
    bins = bins[order]
    rows = rows[order]
    cols = cols[order]
    weights = weights[order].copy()
    boundaries = np.searchsorted(bins, np.arange(n_bins + 1))

    indptrs = np.zeros((n_bins, n_nodes + 1), dtype=np.int64)
    bin_offsets = np.zeros(n_bins + 1, dtype=np.int64)
    for m in range(n_bins):
        lo, hi = boundaries[m], boundaries[m + 1]
        r, w = rows[lo:hi], weights[lo:hi]
        row_sums = np.bincount(r, weights=w, minlength=n_nodes)
        weights[lo:hi] = w / row_sums[r]
        np.cumsum(np.bincount(r, minlength=n_nodes), out=indptrs[m, 1:])
        bin_offsets[m + 1] = bin_offsets[m] + (hi - lo)
    return indptrs, bin_offsets, cols, weights


def scatter_bins(bins, rows, cols, weights, n_nodes, n_bins=9):
    """Group (bin, row, col, weight) entries into per-bin normalized CSR.

    Returns (indptrs, bin_offsets, indices, data): bin m's CSR is
    indices/data[bin_offsets[m]:bin_offsets[m+1]] with row pointers
    indptrs[m]. Entry order within a row follows input order.
    """
    if active_backend() == "numba":
        return _scatter_bins_numba(bins, rows, cols, weights, n_nodes, n_bins)
    return _scatter_bins_numpy(bins, rows, cols, weights, n_nodes, n_bins)


# ---------------------------------------------------------------------------
# Sign propagation over a spanning forest (normal orientation)
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _propagate_signs_numba(indptr, indices, roots, normals):
        n = indptr.shape[0] - 1
        visited = np.zeros(n, dtype=np.bool_)
        stack = np.empty(n, dtype=np.int64)
        for r in roots:
            if visited[r]:
                continue
            visited[r] = True
            top = 0
            stack[top] = r
            top += 1
            while top > 0:
                top -= 1
                u = stack[top]
                for k in range(indptr[u], indptr[u + 1]):
                    v = indices[k]
                    if visited[v]:
                        continue
                    visited[v] = True
                    dot = (
                        normals[u, 0] * normals[v, 0]
                        + normals[u, 1] * normals[v, 1]
                        + normals[u, 2] * normals[v, 2]
                    )
                    if dot < 0.0:
                        normals[v, 0] = -normals[v, 0]
                        normals[v, 1] = -normals[v, 1]
                        normals[v, 2] = -normals[v, 2]
                    stack[top] = v
                    top += 1


def _propagate_signs_numpy(indptr, indices, roots, normals):
    n = indptr.shape[0] - 1
    visited = np.zeros(n, dtype=bool)
    for r in roots:
        if visited[r]:
            continue
        visited[r] = True
        stack = [r]
        while stack:
            u = stack.pop()
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if visited[v]:
                    continue
                visited[v] = True
                if np.dot(normals[u], normals[v]) < 0.0:
                    normals[v] = -normals[v]
                stack.append(v)


def propagate_signs(indptr, indices, roots, normals):
    """Flip normals along a spanning forest so adjacent normals agree.

    The forest is given as a symmetric CSR adjacency; ``roots`` holds one
    node per connected component. ``normals`` is modified in place.
    """
    if active_backend() == "numba":
        _propagate_signs_numba(indptr, indices, roots, normals)
    else:
        _propagate_signs_numpy(indptr, indices, roots, normals)
