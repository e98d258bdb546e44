"""Batch command-line pipeline: splat file in, stylized splat file out.

Stage timing follows the preprocessing / stylization split used in the
speed comparisons: preprocessing covers filtering, sampling and graph
construction (everything before the first network layer); stylization
covers the network run and the color writeback. I/O sits outside both but
inside the total.
"""

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .conv_engine import WeightStore
from .errors import InvalidArgumentError, SplatStyleError
from .preprocess import build_point_cloud, filter_by_percentile
from .splat_io import parse_splat_ply, write_splat_ply
from .stylizer import TransformSpec, load_style_image, stylize_graph, writeback
from .surface_graph import build_surface_graph

ABLATION_MODES = ("random-normals", "no-sampling")


@dataclass
class RunConfig:
    input: str
    style: str
    output: str
    weights: str
    knn: int = 16
    filter_percentile: float = 0.0
    samples: int = 0
    up: tuple = (0.0, 0.0, 1.0)
    seed: int = 0
    strength: float = 1.0
    zero_rest: bool = True
    threads: int = 0
    timing_out: str = ""
    ablation: str = ""
    writeback_k: int = 4

    def validate(self):
        if self.knn < 3:
            raise InvalidArgumentError("knn must be >= 3")
        if not 0.0 <= self.filter_percentile < 1.0:
            raise InvalidArgumentError("filter percentile must lie in [0, 1)")
        if self.samples < 0:
            raise InvalidArgumentError("samples must be >= 0")
        if not 0.0 <= self.strength <= 1.0:
            raise InvalidArgumentError("strength must lie in [0, 1]")
        if self.ablation and self.ablation not in ABLATION_MODES:
            raise InvalidArgumentError(f"unknown ablation mode '{self.ablation}'")


@dataclass
class TimingReport:
    preprocess_s: float = 0.0
    stylize_s: float = 0.0
    total_s: float = 0.0
    nodes: int = 0
    edges: int = 0
    splats_in: int = 0
    splats_out: int = 0
    extras: dict = field(default_factory=dict)

    def to_json_dict(self):
        out = {
            "preprocess_s": self.preprocess_s,
            "stylize_s": self.stylize_s,
            "total_s": self.total_s,
            "nodes": self.nodes,
            "edges": self.edges,
            "splats_in": self.splats_in,
            "splats_out": self.splats_out,
        }
        out.update(self.extras)
        return out


class StageError(Exception):
    """Wraps a pipeline failure with the stage it happened in."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _random_unit_normals(n, seed):
    rng = np.random.default_rng([int(seed), 0x5EED])
    v = rng.standard_normal((n, 3))
    lengths = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.maximum(lengths, 1e-12)


def _atomic_write(path, data):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(config):
    """Execute the full pipeline; returns the timing report."""
    config.validate()
    if config.threads:
        kernels.set_num_threads(config.threads)

    report = TimingReport()
    t_start = time.perf_counter()

    with _Stage("load"):
        with open(config.input, "rb") as fh:
            scene = parse_splat_ply(fh.read())
        style = load_style_image(config.style)
        weights = WeightStore.load(config.weights)
    report.splats_in = len(scene)

    t_pre = time.perf_counter()
    filter_report = None
    with _Stage("filter"):
        if config.filter_percentile > 0.0:
            filtered, filter_report = filter_by_percentile(
                scene, config.knn, config.filter_percentile
            )
        else:
            filtered = scene

    samples = 0 if config.ablation == "no-sampling" else config.samples
    with _Stage("sample"):
        cloud = build_point_cloud(filtered, samples, config.seed)

    with _Stage("graph"):
        normals = None
        if config.ablation == "random-normals":
            normals = _random_unit_normals(len(cloud), config.seed)
        graph = build_surface_graph(
            cloud.points, k=config.knn, up=np.asarray(config.up, dtype=np.float64),
            normals=normals,
        )
    report.preprocess_s = time.perf_counter() - t_pre
    report.nodes = graph.n_nodes
    report.edges = graph.n_edges

    t_sty = time.perf_counter()
    with _Stage("stylize"):
        node_rgb = stylize_graph(
            graph,
            cloud.colors,
            style,
            weights.manifest,
            weights,
            TransformSpec(strength=config.strength),
        )

    with _Stage("writeback"):
        removed = filter_report.removed if filter_report is not None else None
        out_scene = writeback(
            scene,
            cloud,
            node_rgb,
            k=config.writeback_k,
            zero_rest=config.zero_rest,
            removed=removed,
            drop_removed=True,
        )
    report.stylize_s = time.perf_counter() - t_sty
    report.splats_out = len(out_scene)

    with _Stage("write"):
        _atomic_write(config.output, write_splat_ply(out_scene))
        report.total_s = time.perf_counter() - t_start
        if filter_report is not None:
            report.extras["filter"] = filter_report.to_json_dict()
        if config.timing_out:
            with open(config.timing_out, "w") as fh:
                json.dump(report.to_json_dict(), fh, indent=2)
                fh.write("\n")
    return report


def report_ablation(config, mode):
    """Run the pipeline with one component degraded for comparison."""
    if mode not in ABLATION_MODES:
        raise InvalidArgumentError(f"unknown ablation mode '{mode}'")
    return run(replace(config, ablation=mode))


def _parse_up(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("up vector must be 'x,y,z'")
    return tuple(float(p) for p in parts)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="splatstyle",
        description="Stylize a 3D Gaussian splat scene with a style image.",
    )
    parser.add_argument("--input", required=True, help="input splat PLY")
    parser.add_argument("--style", required=True, help="style image (PNG/JPEG)")
    parser.add_argument("--output", required=True, help="output splat PLY")
    parser.add_argument("--weights", required=True, help="weight container file")
    parser.add_argument("--knn", type=int, default=16, help="graph neighbor count")
    parser.add_argument(
        "--filter-percentile",
        type=float,
        default=0.0,
        help="fraction of worst-offset splats to remove (0 disables; 0.05 is "
        "a reasonable starting point for noisy scans)",
    )
    parser.add_argument(
        "--samples", type=int, default=0, help="extra points drawn from the Gaussians"
    )
    parser.add_argument(
        "--up", type=_parse_up, default=(0.0, 0.0, 1.0), help="global up vector x,y,z"
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--strength", type=float, default=1.0, help="style blend in [0, 1]"
    )
    parser.add_argument(
        "--zero-rest",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="zero view-dependent SH coefficients of restyled splats",
    )
    parser.add_argument("--threads", type=int, default=0, help="0 = all cores")
    parser.add_argument("--timing-out", default="", help="write timing report JSON")
    parser.add_argument("--ablation", choices=ABLATION_MODES, default="")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    config = RunConfig(
        input=args.input,
        style=args.style,
        output=args.output,
        weights=args.weights,
        knn=args.knn,
        filter_percentile=args.filter_percentile,
        samples=args.samples,
        up=args.up,
        seed=args.seed,
        strength=args.strength,
        zero_rest=args.zero_rest,
        threads=args.threads,
        timing_out=args.timing_out,
        ablation=args.ablation,
    )
    try:
        report = run(config)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except (SplatStyleError, OSError) as exc:
        print(f"error [config] {exc}", file=sys.stderr)
        return 1
    print(
        f"stylized {report.splats_in} -> {report.splats_out} splats "
        f"({report.nodes} nodes, {report.edges} edges) in {report.total_s:.2f}s "
        f"(preprocess {report.preprocess_s:.2f}s, stylize {report.stylize_s:.2f}s)"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
