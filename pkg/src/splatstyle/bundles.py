"""Weight bundle generators.

Produces self-contained weight containers so the pipeline and its tests run
without any externally converted checkpoint: an identity bundle (colors pass
through untouched) and seeded random encoder/decoder networks of arbitrary
width. Also the canonical 3x3-kernel-to-tap splitter used when comparing
against plain image convolution.
"""

import argparse

import numpy as np

from .conv_engine import NetworkManifest, WeightStore
from .surface_graph import GRID_BIN_OFFSETS


def kernel_to_taps(kernel):
    """Split a (C_out, C_in, 3, 3) image kernel into per-bin tap blocks.

    Returns {bin: (C_in, C_out) array}; bin 0 is the center tap, bins 1..8
    follow the grid offsets so that selection convolution on a grid graph
    equals 2D cross-correlation with the original kernel.
    """
    kernel = np.asarray(kernel)
    if kernel.ndim != 4 or kernel.shape[2:] != (3, 3):
        raise ValueError(f"expected (C_out, C_in, 3, 3) kernel, got {kernel.shape}")
    taps = {0: np.ascontiguousarray(kernel[:, :, 1, 1].T)}
    for b, (dr, dc) in GRID_BIN_OFFSETS.items():
        taps[b] = np.ascontiguousarray(kernel[:, :, 1 + dr, 1 + dc].T)
    return taps


def conv_layer_tensors(name, kernel, bias=None):
    """Tensor dict for one conv layer from an image kernel."""
    taps = kernel_to_taps(kernel)
    cout = kernel.shape[0]
    tensors = {f"{name}.w{m}": taps[m].astype(np.float32) for m in taps}
    tensors[f"{name}.bias"] = (
        np.zeros(cout, dtype=np.float32) if bias is None else bias.astype(np.float32)
    )
    return tensors


def make_identity_bundle(channels, path=None):
    """A single conv1x1 layer that reproduces its input exactly."""
    manifest = NetworkManifest(
        [
            {
                "name": "identity",
                "kind": "conv1x1",
                "in_channels": channels,
                "out_channels": channels,
            }
        ]
    )
    tensors = {
        "identity.w0": np.eye(channels, dtype=np.float32),
        "identity.bias": np.zeros(channels, dtype=np.float32),
    }
    store = WeightStore(manifest, tensors)
    if path is not None:
        store.save(path)
    return store


def make_random_net_bundle(seed, widths=(3, 8, 16), pools=1, path=None):
    """Seeded random encoder/transform/decoder bundle.

    The encoder stacks conv+relu blocks through ``widths`` with ``pools``
    pooling steps spread between them; the decoder mirrors the widths back
    down to the input channel count with matching unpools. Weights are
    He-style scaled so activations stay in a sane range.
    """
    if pools > len(widths) - 1:
        raise ValueError("more pools than encoder blocks")
    rng = np.random.default_rng(seed)
    layers = []
    tensors = {}

    def add_conv(name, cin, cout, with_relu):
        layers.append(
            {"name": name, "kind": "conv", "in_channels": cin, "out_channels": cout}
        )
        scale = 1.0 / np.sqrt(9.0 * cin)
        kernel = rng.standard_normal((cout, cin, 3, 3)) * scale
        tensors.update(conv_layer_tensors(name, kernel))
        if with_relu:
            layers.append(
                {
                    "name": f"{name}_relu",
                    "kind": "relu",
                    "in_channels": cout,
                    "out_channels": cout,
                }
            )

    for i in range(len(widths) - 1):
        add_conv(f"enc{i + 1}", widths[i], widths[i + 1], with_relu=True)
        if i < pools:
            c = widths[i + 1]
            layers.append(
                {"name": f"pool{i + 1}", "kind": "pool", "in_channels": c, "out_channels": c}
            )

    deep = widths[-1]
    layers.append(
        {"name": "style", "kind": "transform", "in_channels": deep, "out_channels": deep}
    )

    rev = list(widths[::-1])
    for i in range(len(rev) - 1):
        unpool_slot = len(rev) - 2 - i  # mirror of the encoder pool positions
        if unpool_slot < pools:
            c = rev[i]
            layers.append(
                {"name": f"unpool{unpool_slot + 1}", "kind": "unpool", "in_channels": c, "out_channels": c}
            )
        add_conv(f"dec{i + 1}", rev[i], rev[i + 1], with_relu=i < len(rev) - 2)

    store = WeightStore(NetworkManifest(layers), tensors)
    if path is not None:
        store.save(path)
    return store


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="python -m splatstyle.bundles",
        description="Generate weight bundles for the stylization pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_id = sub.add_parser("identity", help="identity pass-through bundle")
    p_id.add_argument("--channels", type=int, default=3)
    p_id.add_argument("--out", required=True)

    p_rand = sub.add_parser("random-net", help="seeded random encoder/decoder bundle")
    p_rand.add_argument("--seed", type=int, default=0)
    p_rand.add_argument(
        "--widths",
        default="3,8,16",
        help="comma-separated channel widths, input first",
    )
    p_rand.add_argument("--pools", type=int, default=1)
    p_rand.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if args.command == "identity":
        make_identity_bundle(args.channels, args.out)
    else:
        widths = tuple(int(w) for w in args.widths.split(","))
        make_random_net_bundle(args.seed, widths=widths, pools=args.pools, path=args.out)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
