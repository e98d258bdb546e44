"""End-to-end color stylization over a surface graph.

The style image is encoded on a pixel-grid graph, node colors are encoded
on the splat surface graph with the same weights, feature statistics are
aligned with a closed-form whitening-coloring transform at the manifest's
transform layer, and the decoder maps features back to per-node colors.
Final colors are interpolated onto the surviving splat centers and written
into the scene's SH DC coefficients.
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.spatial import cKDTree

from .conv_engine import run_layers, run_network
from .errors import (
    InsufficientPointsError,
    InvalidArgumentError,
    ManifestError,
    NumericError,
    ShapeError,
)
from .splat_io import rgb_to_dc
from .surface_graph import grid_graph

MIN_STYLE_SIZE = 32


@dataclass
class TransformSpec:
    """Knobs of the feature alignment: eigenvalue floor and blend strength."""

    epsilon: float = 1e-5
    strength: float = 1.0

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise InvalidArgumentError("epsilon must be positive")
        if not 0.0 <= self.strength <= 1.0:
            raise InvalidArgumentError("strength must lie in [0, 1]")


@dataclass
class StyleImage:
    """Linear-RGB style image with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ShapeError(f"style image must be HxWx3, got {self.pixels.shape}")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise InvalidArgumentError("style pixels must lie in [0, 1]")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


def load_style_image(path):
    """Read a PNG/JPEG as linear [0,1] RGB (plain /255, no gamma)."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return StyleImage(rgb)


def split_at_transform(manifest):
    """(encoder layers, transform layer or None, decoder layers)."""
    for i, layer in enumerate(manifest.layers):
        if layer["kind"] == "transform":
            return manifest.layers[:i], layer, manifest.layers[i + 1 :]
    return list(manifest.layers), None, []


def encode_style(image, manifest, weights):
    """Deepest encoder features of the style image on a grid graph."""
    encoder, _, _ = split_at_transform(manifest)
    factor = 2 ** sum(1 for layer in encoder if layer["kind"] == "pool")
    h, w = image.height, image.width
    if h < MIN_STYLE_SIZE or w < MIN_STYLE_SIZE:
        raise ManifestError(
            f"style image {h}x{w} is smaller than {MIN_STYLE_SIZE} pixels"
        )
    if h % factor or w % factor:
        raise ManifestError(
            f"style image {h}x{w} not divisible by encoder pool factor {factor}"
        )
    grid = grid_graph(h, w)
    x0 = image.pixels.reshape(h * w, 3)
    return run_layers(grid, encoder, weights, x0)


def _sym_power(mat, power, epsilon):
    """Symmetric matrix power with eigenvalues floored at epsilon."""
    eigvals, eigvecs = np.linalg.eigh(mat)
    eigvals = np.maximum(eigvals, epsilon)
    return (eigvecs * eigvals**power) @ eigvecs.T


def linear_transform(fc, fs, spec):
    """Whitening-coloring transform aligning content stats to style stats.

    Content features are whitened by the inverse square root of their
    covariance and re-colored with the style covariance square root, then
    shifted to the style mean; ``spec.strength`` blends against the
    untouched input.
    """
    fc = np.asarray(fc, dtype=np.float64)
    fs = np.asarray(fs, dtype=np.float64)
    if fc.ndim != 2 or fs.ndim != 2:
        raise ShapeError("feature maps must be 2-D")
    if fc.shape[1] != fs.shape[1]:
        raise ShapeError(
            f"channel mismatch: content {fc.shape[1]} vs style {fs.shape[1]}"
        )
    if fc.shape[0] < 2 or fs.shape[0] < 2:
        raise ShapeError("need at least 2 rows to form covariance")
    if not (np.isfinite(fc).all() and np.isfinite(fs).all()):
        raise NumericError("non-finite values in transform input")

    mean_c = fc.mean(axis=0)
    mean_s = fs.mean(axis=0)
    xc = fc - mean_c
    xs = fs - mean_s
    cov_c = xc.T @ xc / (fc.shape[0] - 1)
    cov_s = xs.T @ xs / (fs.shape[0] - 1)

    t = _sym_power(cov_c, -0.5, spec.epsilon) @ _sym_power(cov_s, 0.5, spec.epsilon)
    stylized = xc @ t + mean_s
    a = spec.strength
    return a * stylized + (1.0 - a) * fc


def stylize_graph(graph, colors, style, manifest, weights, spec):
    """New [0,1] RGB per graph node after style transfer."""
    colors = np.asarray(colors, dtype=np.float64)
    if colors.shape != (graph.n_nodes, 3):
        raise ShapeError(
            f"colors shape {colors.shape} != ({graph.n_nodes}, 3)"
        )
    if manifest.layers:
        if manifest.layers[0]["in_channels"] != 3:
            raise ManifestError("stylization manifest must take 3 input channels")
        if manifest.layers[-1]["out_channels"] != 3:
            raise ManifestError("stylization manifest must emit 3 output channels")

    fs = encode_style(style, manifest, weights)
    _, transform_layer, _ = split_at_transform(manifest)

    def hook(x, layer):
        return linear_transform(x, fs, spec)

    if transform_layer is not None:
        out = run_network(graph, manifest, weights, colors, transform_hook=hook)
    else:
        out = run_layers(graph, manifest.layers, weights, colors)
        out = linear_transform(out, fs, spec)
    return np.clip(out, 0.0, 1.0)


def writeback(
    scene,
    cloud,
    node_rgb,
    k=4,
    zero_rest=True,
    removed=None,
    drop_removed=True,
):
    """Write stylized node colors back to splat centers.

    Each surviving splat center takes the inverse-distance-weighted average
    of its k nearest graph-node colors (exact color of a coincident node).
    Splats listed in ``removed`` keep their original color and are dropped
    from the output unless ``drop_removed`` is false.
    """
    node_rgb = np.asarray(node_rgb, dtype=np.float64)
    if len(cloud) == 0:
        raise InsufficientPointsError("point cloud is empty")
    if node_rgb.shape != (len(cloud), 3):
        raise ShapeError(f"node_rgb shape {node_rgb.shape} != ({len(cloud)}, 3)")
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")

    n = len(scene)
    removed_idx = (
        np.empty(0, dtype=np.int64) if removed is None else np.asarray(removed)
    )
    keep = np.ones(n, dtype=bool)
    keep[removed_idx] = False
    survivors = np.nonzero(keep)[0]

    k = min(k, len(cloud))
    tree = cKDTree(cloud.points)
    centers = scene.positions[survivors].astype(np.float64)
    dist, idx = tree.query(centers, k=k, workers=-1)
    if k == 1:
        dist = dist[:, None]
        idx = idx[:, None]

    exact = dist[:, 0] <= 1e-12
    weights = 1.0 / np.maximum(dist, 1e-300)
    rgb = (weights[:, :, None] * node_rgb[idx]).sum(axis=1) / weights.sum(axis=1)[
        :, None
    ]
    if exact.any():
        # Coincident nodes: take the lowest-index zero-distance node's color.
        zero_mask = dist[exact] <= 1e-12
        cand = np.where(zero_mask, idx[exact], np.iinfo(np.int64).max)
        rgb[exact] = node_rgb[cand.min(axis=1)]

    out = scene.copy()
    sh_dc, _ = rgb_to_dc(rgb, zero_rest=False)
    full_dc = out.sh_dc.astype(np.float64)
    full_dc[survivors] = sh_dc
    out.set_sh_dc(full_dc)
    if zero_rest:
        for name in out.data:
            if name.startswith("f_rest_"):
                col = out.data[name].copy()
                col[survivors] = 0
                out.data[name] = col
    if drop_removed and removed_idx.size:
        out = out.select(survivors)
    return out
