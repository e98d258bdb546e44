"""Optimization-free stylization of 3D Gaussian splat scenes.

Builds an oriented KNN graph over a splat scene's pseudo implicit surface,
runs an image-trained style network on it through selection convolution,
and writes the resulting colors back into a standard splat PLY.
"""

from .conv_engine import (
    NetworkManifest,
    SparseDirMatrix,
    WeightStore,
    build_dir_matrices,
    run_network,
    selection_conv,
)
from .errors import (
    EmptySceneError,
    InsufficientPointsError,
    InvalidArgumentError,
    ManifestError,
    NumericError,
    ParseError,
    ShapeError,
    SplatStyleError,
    WeightError,
)
from .preprocess import (
    FilterReport,
    PointCloud,
    build_point_cloud,
    filter_by_percentile,
    neighborhood_offsets,
    sample_from_splat,
)
from .splat_io import (
    SH_C0,
    Splat,
    SplatScene,
    dc_to_rgb,
    make_noisy_sphere,
    parse_splat_ply,
    rgb_to_dc,
    write_splat_ply,
)
from .stylizer import (
    StyleImage,
    TransformSpec,
    encode_style,
    linear_transform,
    load_style_image,
    stylize_graph,
    writeback,
)
from .surface_graph import (
    Frame,
    PoolMap,
    SurfaceGraph,
    assign_selections,
    build_frames,
    build_surface_graph,
    downsample_graph,
    estimate_normals,
    grid_graph,
    knn_edges,
)

__version__ = "0.1.0"
