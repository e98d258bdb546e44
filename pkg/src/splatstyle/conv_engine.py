"""Selection convolution over per-direction sparse matrices.

A layer computes ``X' = sum_m S_m (X W_m) + bias`` where ``S_m`` is the
row-normalized sparse matrix of edges in direction bin ``m`` (entry (i, j)
for edge i -> j, i.e. node i gathers from node j, the bin taken in i's
frame) and ``W_m`` is one spatial tap of an image kernel. Bin 0 is the
self-loop/center tap, bins 1..8 map to the 3x3 taps as laid out in
``surface_graph.GRID_BIN_OFFSETS``: for a kernel K indexed K[row, col],
W_0 = K[1,1] and W_m = K[1+dr, 1+dc] for bin m's (dr, dc) offset.

Weight container format (shared with external exporters, byte-exact):

    bytes 0..7    magic ``b"SELCONVW"``
    bytes 8..15   uint64 little-endian: header length H in bytes
    bytes 16..16+H  UTF-8 JSON ``{"layers": [...], "tensors": {...}}``
                  where layers is the manifest layer list (name, kind,
                  in_channels, out_channels) and tensors maps tensor name
                  to {"offset": byte offset into the blob, "shape": [...]}
    bytes 16+H..  blob of float32 little-endian row-major tensors

Tensor naming: conv layers own ``<name>.w0`` .. ``<name>.w8`` each of shape
(in_channels, out_channels) plus ``<name>.bias`` of shape (out_channels,);
conv1x1 layers own only ``<name>.w0`` and ``<name>.bias``.
"""

import json

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ManifestError, NumericError, ShapeError, WeightError
from .surface_graph import downsample_graph, mean_edge_length

MAGIC = b"SELCONVW"
N_BINS = 9
LAYER_KINDS = ("conv", "conv1x1", "relu", "pool", "unpool", "transform")


class SparseDirMatrix:
    """Per-bin CSR matrices with rows normalized per (node, bin)."""

    def __init__(self, n_nodes, indptrs, indices, data):
        self.n_nodes = n_nodes
        self.indptrs = indptrs
        self.indices = indices
        self.data = data

    def nnz(self, m):
        return self.indices[m].shape[0]

    def bin_csr(self, m):
        """The bin as a scipy CSR matrix (for tests and diagnostics)."""
        return sp.csr_matrix(
            (self.data[m], self.indices[m], self.indptrs[m]),
            shape=(self.n_nodes, self.n_nodes),
        )


def build_dir_matrices(graph):
    """Scatter the graph's selections into nine row-normalized CSR bins."""
    n = graph.n_nodes
    slots = graph.sel_bins.shape[1]
    bins = graph.sel_bins.ravel().astype(np.int64)
    rows = np.repeat(graph.src, slots).astype(np.int64)
    cols = np.repeat(graph.dst, slots).astype(np.int64)
    weights = graph.sel_weights.ravel().astype(np.float64)
    valid = (bins >= 0) & (weights > 0.0)
    bins, rows, cols, weights = bins[valid], rows[valid], cols[valid], weights[valid]

    indptr_table, bin_offsets, indices_all, data_all = kernels.scatter_bins(
        bins, rows, cols, weights, n, N_BINS
    )
    indptrs, indices, data = [], [], []
    for m in range(N_BINS):
        lo, hi = bin_offsets[m], bin_offsets[m + 1]
        indptrs.append(indptr_table[m])
        indices.append(indices_all[lo:hi])
        data.append(data_all[lo:hi])
    return SparseDirMatrix(n, indptrs, indices, data)


def get_dir_matrices(graph):
    """Build (and memoize on the graph) its direction matrices."""
    cached = getattr(graph, "_dir_matrices", None)
    if cached is None:
        cached = build_dir_matrices(graph)
        graph._dir_matrices = cached
    return cached


def selection_conv(x, dirmats, bin_weights, bias):
    """Apply one selection convolution: sum_m S_m (x W_m) + bias."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"feature map must be 2-D, got shape {x.shape}")
    if x.shape[0] != dirmats.n_nodes:
        raise ShapeError(
            f"feature rows {x.shape[0]} != node count {dirmats.n_nodes}"
        )
    in_ch = x.shape[1]
    out_ch = None
    for m, w in bin_weights.items():
        if w.shape[0] != in_ch:
            raise ShapeError(
                f"W_{m} expects {w.shape[0]} input channels, features have {in_ch}"
            )
        if out_ch is None:
            out_ch = w.shape[1]
        elif w.shape[1] != out_ch:
            raise ShapeError("inconsistent output channels across bins")
    if out_ch is None:
        raise ShapeError("no weight blocks supplied")
    if bias is not None and bias.shape != (out_ch,):
        raise ShapeError(f"bias shape {bias.shape} != ({out_ch},)")

    out = np.zeros((dirmats.n_nodes, out_ch))
    for m, w in bin_weights.items():
        if dirmats.nnz(m) == 0:
            continue
        y = x @ w.astype(np.float64)
        kernels.csr_matmul_accum(
            dirmats.indptrs[m], dirmats.indices[m], dirmats.data[m], y, out
        )
    if bias is not None:
        out += bias
    return out


class NetworkManifest:
    """Ordered layer descriptions for a style network."""

    def __init__(self, layers):
        self.layers = [dict(layer) for layer in layers]
        self.validate()

    def validate(self):
        prev_out = None
        depth = 0
        for layer in self.layers:
            for key in ("name", "kind", "in_channels", "out_channels"):
                if key not in layer:
                    raise ManifestError(f"layer missing '{key}': {layer}")
            kind = layer["kind"]
            if kind not in LAYER_KINDS:
                raise ManifestError(f"unknown layer kind '{kind}'")
            cin, cout = layer["in_channels"], layer["out_channels"]
            if kind not in ("conv", "conv1x1") and cin != cout:
                raise ManifestError(
                    f"{kind} layer '{layer['name']}' cannot change channels"
                )
            if prev_out is not None and cin != prev_out:
                raise ManifestError(
                    f"channel chain broken at '{layer['name']}': "
                    f"{prev_out} -> {cin}"
                )
            prev_out = cout
            if kind == "pool":
                depth += 1
            elif kind == "unpool":
                depth -= 1
                if depth < 0:
                    raise ManifestError("unpool without a matching pool")
        if depth != 0:
            raise ManifestError(f"{depth} pool layer(s) left unmatched")

    def tensor_names(self):
        names = []
        for layer in self.layers:
            kind = layer["kind"]
            if kind == "conv":
                names.extend(f"{layer['name']}.w{m}" for m in range(N_BINS))
                names.append(f"{layer['name']}.bias")
            elif kind == "conv1x1":
                names.append(f"{layer['name']}.w0")
                names.append(f"{layer['name']}.bias")
        return names

    def pool_factor(self):
        """2 ** (number of pool layers)."""
        return 2 ** sum(1 for layer in self.layers if layer["kind"] == "pool")

    def to_json_obj(self):
        return self.layers


class WeightStore:
    """Named float32 tensors backing a manifest's conv layers."""

    def __init__(self, manifest, tensors):
        self.manifest = manifest
        self.tensors = dict(tensors)

    def tensor(self, name):
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightError(f"tensor '{name}' not found") from None

    def conv_blocks(self, layer):
        """(bin -> W_m dict, bias) for a conv/conv1x1 layer."""
        name, kind = layer["name"], layer["kind"]
        cin, cout = layer["in_channels"], layer["out_channels"]
        n_taps = N_BINS if kind == "conv" else 1
        blocks = {}
        for m in range(n_taps):
            w = self.tensor(f"{name}.w{m}")
            if w.shape != (cin, cout):
                raise WeightError(
                    f"tensor '{name}.w{m}' has shape {w.shape}, "
                    f"expected ({cin}, {cout})"
                )
            blocks[m] = w
        bias = self.tensor(f"{name}.bias")
        if bias.shape != (cout,):
            raise WeightError(
                f"tensor '{name}.bias' has shape {bias.shape}, expected ({cout},)"
            )
        return blocks, bias

    def validate(self):
        for layer in self.manifest.layers:
            if layer["kind"] in ("conv", "conv1x1"):
                self.conv_blocks(layer)

    def save(self, path):
        order = self.manifest.tensor_names()
        tensor_meta = {}
        blob = bytearray()
        for name in order:
            arr = np.ascontiguousarray(self.tensor(name), dtype="<f4")
            tensor_meta[name] = {"offset": len(blob), "shape": list(arr.shape)}
            blob.extend(arr.tobytes())
        header = json.dumps(
            {"layers": self.manifest.to_json_obj(), "tensors": tensor_meta},
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.uint64(len(header)).tobytes())
            fh.write(header)
            fh.write(bytes(blob))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:8] != MAGIC:
            raise WeightError("bad magic; not a weight container")
        header_len = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
        header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
        blob = raw[16 + header_len :]
        manifest = NetworkManifest(header["layers"])
        tensors = {}
        for name, meta in header["tensors"].items():
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = meta["offset"]
            end = start + 4 * count
            if end > len(blob):
                raise WeightError(f"tensor '{name}' extends past end of blob")
            tensors[name] = np.frombuffer(blob[start:end], dtype="<f4").reshape(shape)
        store = cls(manifest, tensors)
        store.validate()
        return store


def pool_features(pool_map, x):
    """Mean of each cluster's member features."""
    m = pool_map.n_coarse
    counts = np.bincount(pool_map.cluster_of, minlength=m).astype(np.float64)
    out = np.zeros((m, x.shape[1]))
    np.add.at(out, pool_map.cluster_of, x)
    return out / counts[:, None]


def unpool_features(pool_map, x_coarse):
    """Copy each coarse feature back to its member nodes."""
    return x_coarse[pool_map.cluster_of]


def _check_finite(x, layer_name):
    if not np.isfinite(x).all():
        raise NumericError(f"non-finite values after layer '{layer_name}'")


def run_network(graph, manifest, weights, x0, transform_hook=None):
    """Run the manifest's layers over the graph, returning node features.

    Pool layers coarsen the graph (2x2 blocks on grids, voxel clustering at
    twice the mean edge length otherwise) and mean-pool features; unpool
    restores the matching finer level by copying features to cluster
    members. Transform layers call ``transform_hook(x, layer)``.
    """
    manifest.validate()
    weights.validate()
    return run_layers(graph, manifest.layers, weights, x0, transform_hook)


def run_layers(graph, layers, weights, x0, transform_hook=None):
    """Run a layer sequence without whole-manifest validation.

    Used for prefix runs (a style encoder stops at the transform layer, so
    its pools are legitimately unmatched). The sequence must still never
    unpool below the starting level.
    """
    x = np.ascontiguousarray(x0, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("x0 must be a 2-D node-by-channel array")
    if layers and x.shape[1] != layers[0]["in_channels"]:
        raise ManifestError(
            f"x0 has {x.shape[1]} channels, first layer expects "
            f"{layers[0]['in_channels']}"
        )

    current = graph
    stack = []
    for layer in layers:
        kind = layer["kind"]
        if kind in ("conv", "conv1x1"):
            blocks, bias = weights.conv_blocks(layer)
            x = selection_conv(x, get_dir_matrices(current), blocks, bias)
        elif kind == "relu":
            x = np.maximum(x, 0.0)
        elif kind == "pool":
            if current.grid_shape is not None:
                h, w = current.grid_shape
                if h % 2 or w % 2:
                    raise ManifestError(
                        f"cannot pool a {h}x{w} grid; dimensions must be even"
                    )
                voxel = 2.0
            else:
                voxel = 2.0 * mean_edge_length(current)
                if voxel <= 0.0:
                    raise ManifestError("cannot pool a graph with no edges")
            coarse, pool_map = downsample_graph(current, voxel)
            stack.append((current, pool_map))
            x = pool_features(pool_map, x)
            current = coarse
        elif kind == "unpool":
            if not stack:
                raise ManifestError("unpool without a matching pool")
            current, pool_map = stack.pop()
            x = unpool_features(pool_map, x)
        elif kind == "transform":
            if transform_hook is None:
                raise ManifestError(
                    f"manifest has transform layer '{layer['name']}' "
                    "but no hook was supplied"
                )
            x = np.ascontiguousarray(transform_hook(x, layer), dtype=np.float64)
        _check_finite(x, layer["name"])
    return x
