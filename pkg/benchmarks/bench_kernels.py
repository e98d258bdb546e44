"""Benchmark the numba kernels against their numpy/scipy fallbacks.

Builds a realistic surface graph (noisy sphere, super-sampled) and times
each hot kernel plus a whole selection-convolution layer under both
backends. Run:

    python benchmarks/bench_kernels.py --nodes 200000 --channels 16
"""

import argparse
import os
import time

import numpy as np


def timed(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=200_000)
    parser.add_argument("--channels", type=int, default=16)
    parser.add_argument("--knn", type=int, default=16)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    import splatstyle as ss
    from splatstyle import kernels
    from splatstyle.conv_engine import build_dir_matrices, selection_conv

    if not kernels.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    n_surface = max(args.nodes // 2, 100)
    scene, _ = ss.make_noisy_sphere(n_surface, n_surface // 100, seed=0)
    cloud = ss.build_point_cloud(scene, args.nodes - len(scene), seed=1)
    pts = cloud.points
    print(f"graph: {len(pts)} nodes, k={args.knn}, {args.channels} channels")

    os.environ["SPLATSTYLE_BACKEND"] = "numba"
    graph = ss.build_surface_graph(pts, k=args.knn)
    dirmats = build_dir_matrices(graph)

    rng = np.random.default_rng(2)
    x = rng.standard_normal((graph.n_nodes, args.channels))
    blocks = {
        m: rng.standard_normal((args.channels, args.channels)) * 0.1
        for m in range(9)
    }
    bias = np.zeros(args.channels)

    sel_args = (
        np.ascontiguousarray(graph.positions),
        graph.tangents,
        graph.bitangents,
        np.ascontiguousarray(graph.normals),
        graph.src,
        graph.dst,
    )
    slots = graph.sel_bins.shape[1]
    bins = graph.sel_bins.ravel().astype(np.int64)
    rows = np.repeat(graph.src, slots).astype(np.int64)
    cols = np.repeat(graph.dst, slots).astype(np.int64)
    weights = graph.sel_weights.ravel().astype(np.float64)
    valid = (bins >= 0) & (weights > 0.0)
    scatter_args = (bins[valid], rows[valid], cols[valid], weights[valid], graph.n_nodes)

    y = x @ blocks[1]
    m_big = max(range(9), key=dirmats.nnz)
    csr_args = (
        dirmats.indptrs[m_big],
        dirmats.indices[m_big],
        dirmats.data[m_big],
        y,
    )

    cases = {
        "edge_selections": lambda: kernels.edge_selections(*sel_args),
        "scatter_bins": lambda: kernels.scatter_bins(*scatter_args),
        "csr_matmul_accum": lambda: kernels.csr_matmul_accum(
            *csr_args, np.zeros_like(y)
        ),
        "selection_conv": lambda: selection_conv(x, dirmats, blocks, bias),
    }

    # warm up jit compilation before timing
    for fn in cases.values():
        fn()

    print(f"{'kernel':<18} {'numpy':>9} {'numba':>9} {'speedup':>8}")
    for name, fn in cases.items():
        os.environ["SPLATSTYLE_BACKEND"] = "numpy"
        t_numpy = timed(fn, args.repeats)
        os.environ["SPLATSTYLE_BACKEND"] = "numba"
        t_numba = timed(fn, args.repeats)
        print(
            f"{name:<18} {t_numpy:>8.3f}s {t_numba:>8.3f}s {t_numpy / t_numba:>7.1f}x"
        )


if __name__ == "__main__":
    main()
