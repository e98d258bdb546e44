"""Outlier removal and point-cloud densification for splat scenes.

Filtering scores each splat center by its distance to the mean of its K
nearest neighbors (self excluded); isolated centers score high and the top
fraction by a user percentile is dropped. Super-sampling draws extra points
from the splats' own Gaussian distributions, favoring large, opaque splats.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptySceneError, InsufficientPointsError, InvalidArgumentError
from .splat_io import Splat, dc_to_rgb


@dataclass
class FilterReport:
    """Diagnostics from a filtering pass."""

    offset_norms: np.ndarray
    threshold: float
    removed: np.ndarray

    def to_json_dict(self, bins=20):
        """JSON-friendly summary: offset histogram, threshold, removal count."""
        counts, edges = np.histogram(self.offset_norms, bins=bins)
        return {
            "threshold": float(self.threshold),
            "removed_count": int(self.removed.shape[0]),
            "point_count": int(self.offset_norms.shape[0]),
            "offset_histogram": {
                "counts": counts.tolist(),
                "bin_edges": edges.tolist(),
            },
        }


@dataclass
class PointCloud:
    """Sampled points with their source splat index and base color."""

    points: np.ndarray
    source: np.ndarray
    colors: np.ndarray

    def __len__(self):
        return self.points.shape[0]


def _knn_exclude_self(points, k):
    """Indices of the k nearest neighbors of every point, self excluded."""
    n = points.shape[0]
    tree = cKDTree(points)
    dist, idx = tree.query(points, k=k + 1, workers=-1)
    # The query point is usually column 0, but duplicates can displace it;
    # mask it by index and keep the k closest of the rest.
    self_mask = idx == np.arange(n)[:, None]
    order = np.argsort(np.where(self_mask, np.inf, dist), axis=1, kind="stable")
    return np.take_along_axis(idx, order[:, :k], axis=1)


def neighborhood_offsets(points, k):
    """Distance from each point to the mean of its k nearest neighbors."""
    points = np.asarray(points, dtype=np.float64)
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    if points.shape[0] <= k:
        raise InsufficientPointsError(
            f"need more than {k} points, got {points.shape[0]}"
        )
    neighbors = _knn_exclude_self(points, k)
    means = points[neighbors].mean(axis=1)
    return np.linalg.norm(points - means, axis=1)


def filter_by_percentile(scene, k, percentile):
    """Drop the splats with the largest neighborhood offsets.

    Removes ceil(percentile * N) splats, worst offsets first with ties
    broken by lower index, and preserves the order of survivors. The
    reported threshold is the smallest offset among the removed.
    """
    if not 0.0 <= percentile < 1.0:
        raise InvalidArgumentError("percentile must lie in [0, 1)")
    n = len(scene)
    if n <= k:
        raise InsufficientPointsError(f"scene has {n} splats, need more than {k}")

    offsets = neighborhood_offsets(scene.positions, k)
    n_remove = int(math.ceil(percentile * n))
    if n_remove == 0:
        report = FilterReport(
            offset_norms=offsets,
            threshold=float(offsets.max()),
            removed=np.empty(0, dtype=np.int64),
        )
        return scene.copy(), report

    order = np.lexsort((np.arange(n), -offsets))
    removed = np.sort(order[:n_remove])
    threshold = float(offsets[order[n_remove - 1]])
    keep = np.ones(n, dtype=bool)
    keep[removed] = False
    report = FilterReport(offset_norms=offsets, threshold=threshold, removed=removed)
    return scene.select(np.nonzero(keep)[0]), report


def quaternion_to_matrix(q):
    """Rotation matrix of a (w, x, y, z) quaternion, normalized first."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise InvalidArgumentError("zero quaternion has no rotation")
    w, x, y, z = q / norm
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def sample_from_splat(splat, n, seed):
    """Draw n points from a splat's Gaussian: mu + R S z, z ~ N(0, I)."""
    if n < 0:
        raise InvalidArgumentError("n must be >= 0")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 3))
    rot = quaternion_to_matrix(splat.rotation)
    scales = np.exp(np.asarray(splat.log_scale, dtype=np.float64))
    return np.asarray(splat.position, dtype=np.float64) + z @ (rot * scales).T


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def sampling_weights(scene):
    """Per-splat precedence weight: opacity times geometric-mean scale."""
    opacity = _sigmoid(scene.logit_opacities)
    geo_mean = np.exp(scene.log_scales.astype(np.float64).mean(axis=1))
    return opacity * geo_mean


def build_point_cloud(scene, extra, seed):
    """Centers of every splat plus ``extra`` Gaussian-sampled points.

    Extra points are allocated across splats by a multinomial draw over the
    precedence weights, then generated with a per-splat derived seed so the
    result does not depend on iteration or execution order.
    """
    n = len(scene)
    if n == 0:
        raise EmptySceneError("cannot sample an empty scene")
    if extra < 0:
        raise InvalidArgumentError("extra must be >= 0")

    centers = scene.positions.astype(np.float64)
    base_colors = dc_to_rgb(scene.sh_dc)
    if extra == 0:
        return PointCloud(
            points=centers,
            source=np.arange(n, dtype=np.int64),
            colors=base_colors,
        )

    weights = sampling_weights(scene)
    total = weights.sum()
    probs = np.full(n, 1.0 / n) if total <= 0.0 else weights / total
    alloc_rng = np.random.default_rng([int(seed), 0])
    counts = alloc_rng.multinomial(extra, probs)

    # Pre-stack the per-splat attributes once; scene properties rebuild the
    # full array on every access, which is far too slow inside this loop.
    positions = scene.positions.astype(np.float64)
    log_scales = scene.log_scales.astype(np.float64)
    rotations = scene.rotations.astype(np.float64)

    chunks = [centers]
    sources = [np.arange(n, dtype=np.int64)]
    empty = np.zeros(0)
    for i in np.nonzero(counts)[0]:
        c = int(counts[i])
        splat = Splat(
            position=positions[i],
            log_scale=log_scales[i],
            rotation=rotations[i],
            logit_opacity=0.0,
            sh_dc=empty,
            sh_rest=empty,
        )
        chunks.append(sample_from_splat(splat, c, seed=[int(seed), 1 + int(i)]))
        sources.append(np.full(c, i, dtype=np.int64))
    points = np.concatenate(chunks, axis=0)
    source = np.concatenate(sources)
    colors = base_colors[source]
    return PointCloud(points=points, source=source, colors=colors)
