"""Backend parity: the numba kernels and the numpy/scipy fallbacks must agree."""

import numpy as np
import pytest
import scipy.sparse as sp

from splatstyle import kernels


def random_csr(rng, n, density=0.05):
    mat = sp.random(n, n, density=density, random_state=np.random.RandomState(0))
    return mat.tocsr()


@pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba unavailable")
class TestBackendParity:
    def test_csr_matmul_accum(self):
        rng = np.random.default_rng(0)
        mat = random_csr(rng, 300)
        dense = rng.normal(size=(300, 7))
        seed = rng.normal(size=(300, 7))

        out_numba = seed.copy()
        kernels._csr_matmul_accum_numba(
            mat.indptr.astype(np.int64), mat.indices.astype(np.int64),
            mat.data, dense, out_numba
        )
        out_numpy = seed.copy()
        kernels._csr_matmul_accum_numpy(
            mat.indptr.astype(np.int64), mat.indices.astype(np.int64),
            mat.data, dense, out_numpy
        )
        assert np.abs(out_numba - out_numpy).max() < 1e-12
        assert np.abs(out_numba - (seed + mat @ dense)).max() < 1e-12

    def test_propagate_signs(self):
        rng = np.random.default_rng(1)
        # random spanning tree over 200 nodes
        n = 200
        parents = np.array([rng.integers(0, i) for i in range(1, n)])
        rows = np.concatenate([parents, np.arange(1, n)])
        cols = np.concatenate([np.arange(1, n), parents])
        adj = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()

        normals = rng.normal(size=(n, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        roots = np.array([0], dtype=np.int64)

        a = normals.copy()
        kernels._propagate_signs_numba(
            adj.indptr.astype(np.int64), adj.indices.astype(np.int64), roots, a
        )
        b = normals.copy()
        kernels._propagate_signs_numpy(
            adj.indptr.astype(np.int64), adj.indices.astype(np.int64), roots, b
        )
        # both flip to sign-consistent fields; tree edges must agree in sign
        for out in (a, b):
            dots = (out[rows] * out[cols]).sum(axis=1)
            assert dots.min() > -1e-12
        assert np.abs(a - b).max() == 0.0


@pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba unavailable")
class TestFusedKernelParity:
    def test_edge_selections(self, monkeypatch):
        rng = np.random.default_rng(3)
        n = 250
        pts = rng.normal(size=(n, 3))
        normals = rng.normal(size=(n, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        from splatstyle.surface_graph import build_frames, knn_edges

        t, b = build_frames(normals, np.array([0.0, 0.0, 1.0]))
        src, dst = knn_edges(pts, 8)

        results = {}
        for backend in ("numba", "numpy"):
            monkeypatch.setenv("SPLATSTYLE_BACKEND", backend)
            results[backend] = kernels.edge_selections(pts, t, b, normals, src, dst)
        for got, want in zip(results["numba"], results["numpy"]):
            assert got.dtype == want.dtype
            if got.dtype == np.float64:
                assert np.abs(got - want).max() < 1e-12
            else:
                assert np.array_equal(got, want)

    def test_scatter_bins(self, monkeypatch):
        rng = np.random.default_rng(4)
        n_entries, n_nodes = 5000, 40
        bins = rng.integers(0, 9, n_entries)
        rows = rng.integers(0, n_nodes, n_entries)
        cols = rng.integers(0, n_nodes, n_entries)
        weights = rng.random(n_entries) + 0.01

        results = {}
        for backend in ("numba", "numpy"):
            monkeypatch.setenv("SPLATSTYLE_BACKEND", backend)
            results[backend] = kernels.scatter_bins(bins, rows, cols, weights, n_nodes)
        for got, want in zip(results["numba"], results["numpy"]):
            got, want = np.asarray(got), np.asarray(want)
            if got.dtype.kind == "f":
                assert np.abs(got - want).max() < 1e-12
            else:
                assert np.array_equal(got, want)


def test_backend_env_selection(monkeypatch):
    monkeypatch.setenv("SPLATSTYLE_BACKEND", "numpy")
    assert kernels.active_backend() == "numpy"
    monkeypatch.delenv("SPLATSTYLE_BACKEND")
    assert kernels.active_backend() in ("numba", "numpy")


def test_numpy_backend_full_pipeline(monkeypatch):
    # the whole conv path runs identically on the fallback backend
    monkeypatch.setenv("SPLATSTYLE_BACKEND", "numpy")
    import splatstyle as ss
    from splatstyle.bundles import kernel_to_taps
    from splatstyle.conv_engine import build_dir_matrices

    rng = np.random.default_rng(2)
    g = ss.grid_graph(6, 6)
    x = rng.normal(size=(36, 3))
    blocks = kernel_to_taps(rng.normal(size=(4, 3, 3, 3)))
    out_numpy = ss.selection_conv(x, build_dir_matrices(g), blocks, np.zeros(4))

    monkeypatch.delenv("SPLATSTYLE_BACKEND")
    out_default = ss.selection_conv(x, build_dir_matrices(g), blocks, np.zeros(4))
    assert np.abs(out_numpy - out_default).max() < 1e-12
