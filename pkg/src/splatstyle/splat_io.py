"""Binary PLY I/O for 3D Gaussian splat scenes.

The on-disk format is the standard 3DGS vertex layout: binary little-endian
PLY with float32 properties

    x, y, z, nx, ny, nz, f_dc_0..2, f_rest_0..44, opacity,
    scale_0..2, rot_0..3

Files missing ``nx,ny,nz`` or the ``f_rest_*`` block still parse; properties
this package does not recognize are carried through opaquely so write(parse())
round-trips third-party exports bit-exactly.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySceneError, InvalidArgumentError, ParseError

# Degree-0 SH basis constant Y_0^0 = 1 / (2 sqrt(pi)); base color is
# rgb = C0 * dc + 0.5 per the 3DGS color convention.
SH_C0 = 1.0 / (2.0 * math.sqrt(math.pi))

_PLY_TO_NUMPY = {
    "char": "i1",
    "int8": "i1",
    "uchar": "u1",
    "uint8": "u1",
    "short": "i2",
    "int16": "i2",
    "ushort": "u2",
    "uint16": "u2",
    "int": "i4",
    "int32": "i4",
    "uint": "u4",
    "uint32": "u4",
    "float": "f4",
    "float32": "f4",
    "double": "f8",
    "float64": "f8",
}

REQUIRED_PROPERTIES = (
    "x",
    "y",
    "z",
    "f_dc_0",
    "f_dc_1",
    "f_dc_2",
    "opacity",
    "scale_0",
    "scale_1",
    "scale_2",
    "rot_0",
    "rot_1",
    "rot_2",
    "rot_3",
)

_REST_NAMES = tuple(f"f_rest_{i}" for i in range(45))

STANDARD_FIELD_ORDER = tuple(
    (name, "float")
    for name in (
        ("x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2")
        + _REST_NAMES
        + ("opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3")
    )
)


@dataclass
class Splat:
    """Attributes of a single Gaussian splat.

    ``rotation`` is the stored (w, x, y, z) quaternion, unnormalized;
    ``log_scale`` holds the log of per-axis standard deviations and
    ``logit_opacity`` maps to opacity through a sigmoid.
    """

    position: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    logit_opacity: float
    sh_dc: np.ndarray
    sh_rest: np.ndarray


class SplatScene:
    """A full splat scene stored column-wise.

    ``data`` maps property name to a 1-D array in the file's dtype;
    ``field_order`` records the PLY property order so serialization is
    bit-exact with respect to the parsed input.
    """

    def __init__(self, data, field_order):
        self.data = data
        self.field_order = list(field_order)
        lengths = {arr.shape[0] for arr in data.values()}
        if len(lengths) > 1:
            raise InvalidArgumentError("property arrays have mismatched lengths")

    def __len__(self):
        return self.data["x"].shape[0]

    @classmethod
    def from_fields(
        cls,
        positions,
        log_scales,
        rotations,
        logit_opacities,
        sh_dc,
        sh_rest=None,
        normals=None,
    ):
        """Assemble a scene with the standard field order from float arrays."""
        n = np.asarray(positions).shape[0]
        positions = np.asarray(positions, dtype=np.float32)
        log_scales = np.asarray(log_scales, dtype=np.float32)
        rotations = np.asarray(rotations, dtype=np.float32)
        logit_opacities = np.asarray(logit_opacities, dtype=np.float32).reshape(n)
        sh_dc = np.asarray(sh_dc, dtype=np.float32)
        sh_rest = (
            np.zeros((n, 45), dtype=np.float32)
            if sh_rest is None
            else np.asarray(sh_rest, dtype=np.float32)
        )
        normals = (
            np.zeros((n, 3), dtype=np.float32)
            if normals is None
            else np.asarray(normals, dtype=np.float32)
        )
        data = {
            "x": positions[:, 0].copy(),
            "y": positions[:, 1].copy(),
            "z": positions[:, 2].copy(),
            "nx": normals[:, 0].copy(),
            "ny": normals[:, 1].copy(),
            "nz": normals[:, 2].copy(),
            "f_dc_0": sh_dc[:, 0].copy(),
            "f_dc_1": sh_dc[:, 1].copy(),
            "f_dc_2": sh_dc[:, 2].copy(),
            "opacity": logit_opacities.copy(),
            "scale_0": log_scales[:, 0].copy(),
            "scale_1": log_scales[:, 1].copy(),
            "scale_2": log_scales[:, 2].copy(),
            "rot_0": rotations[:, 0].copy(),
            "rot_1": rotations[:, 1].copy(),
            "rot_2": rotations[:, 2].copy(),
            "rot_3": rotations[:, 3].copy(),
        }
        for i, name in enumerate(_REST_NAMES):
            data[name] = sh_rest[:, i].copy()
        return cls(data, STANDARD_FIELD_ORDER)

    def _stack(self, names):
        return np.stack([self.data[n] for n in names], axis=1)

    @property
    def positions(self):
        return self._stack(("x", "y", "z"))

    @property
    def log_scales(self):
        return self._stack(("scale_0", "scale_1", "scale_2"))

    @property
    def rotations(self):
        return self._stack(("rot_0", "rot_1", "rot_2", "rot_3"))

    @property
    def logit_opacities(self):
        return self.data["opacity"]

    @property
    def sh_dc(self):
        return self._stack(("f_dc_0", "f_dc_1", "f_dc_2"))

    @property
    def sh_rest(self):
        present = [n for n in _REST_NAMES if n in self.data]
        if not present:
            return np.zeros((len(self), 45), dtype=np.float32)
        out = np.zeros((len(self), 45), dtype=np.float32)
        for i, name in enumerate(_REST_NAMES):
            if name in self.data:
                out[:, i] = self.data[name]
        return out

    def set_sh_dc(self, sh_dc):
        sh_dc = np.asarray(sh_dc)
        for i, name in enumerate(("f_dc_0", "f_dc_1", "f_dc_2")):
            self.data[name] = sh_dc[:, i].astype(self.data[name].dtype)

    def zero_sh_rest(self):
        for name in _REST_NAMES:
            if name in self.data:
                self.data[name] = np.zeros_like(self.data[name])

    def splat(self, i):
        """Lightweight per-splat view, mostly for tests and sampling."""
        return Splat(
            position=self.positions[i],
            log_scale=self.log_scales[i],
            rotation=self.rotations[i],
            logit_opacity=float(self.data["opacity"][i]),
            sh_dc=self.sh_dc[i],
            sh_rest=self.sh_rest[i],
        )

    def select(self, indices):
        """New scene holding the given splats, order and field layout kept."""
        indices = np.asarray(indices)
        data = {name: arr[indices].copy() for name, arr in self.data.items()}
        return SplatScene(data, self.field_order)

    def copy(self):
        data = {name: arr.copy() for name, arr in self.data.items()}
        return SplatScene(data, self.field_order)


def parse_splat_ply(raw):
    """Parse a binary little-endian 3DGS PLY into a :class:`SplatScene`."""
    if not raw.startswith(b"ply"):
        raise ParseError("header", "missing 'ply' magic")
    marker = raw.find(b"end_header")
    if marker < 0:
        raise ParseError("header", "missing 'end_header'")
    body_start = raw.find(b"\n", marker)
    if body_start < 0:
        raise ParseError("header", "no newline after 'end_header'")
    body_start += 1

    try:
        header = raw[:marker].decode("ascii")
    except UnicodeDecodeError as exc:
        raise ParseError("header", f"header is not ASCII: {exc}") from None

    fmt = None
    vertex_count = None
    field_order = []
    current_element = None
    for line in header.splitlines():
        parts = line.split()
        if not parts:
            continue
        keyword = parts[0]
        if keyword in ("ply", "comment", "obj_info"):
            continue
        if keyword == "format":
            if len(parts) < 2:
                raise ParseError("header", "malformed format line")
            fmt = parts[1]
        elif keyword == "element":
            if len(parts) != 3:
                raise ParseError("header", f"malformed element line: {line!r}")
            current_element = parts[1]
            try:
                count = int(parts[2])
            except ValueError:
                raise ParseError("header", f"bad element count: {line!r}") from None
            if current_element == "vertex":
                vertex_count = count
            elif count > 0:
                raise ParseError("header", f"unsupported element '{current_element}'")
        elif keyword == "property":
            if current_element != "vertex":
                continue
            if len(parts) >= 2 and parts[1] == "list":
                raise ParseError("header", "list properties are not supported")
            if len(parts) != 3:
                raise ParseError("header", f"malformed property line: {line!r}")
            ply_type, name = parts[1], parts[2]
            if ply_type not in _PLY_TO_NUMPY:
                raise ParseError("header", f"unknown property type '{ply_type}'")
            field_order.append((name, ply_type))
        else:
            raise ParseError("header", f"unknown header keyword '{keyword}'")

    if fmt is None:
        raise ParseError("header", "missing format line")
    if fmt != "binary_little_endian":
        raise ParseError("unsupported_encoding", f"format '{fmt}' is not supported")
    if vertex_count is None:
        raise ParseError("header", "no vertex element")
    if vertex_count < 1:
        raise ParseError("header", "vertex element declares no vertices")
    names = [name for name, _ in field_order]
    if len(set(names)) != len(names):
        raise ParseError("header", "duplicate property names")
    missing = [p for p in REQUIRED_PROPERTIES if p not in names]
    if missing:
        raise ParseError("header", f"missing required properties: {missing}")

    dtype = np.dtype([(name, "<" + _PLY_TO_NUMPY[t]) for name, t in field_order])
    payload = raw[body_start:]
    needed = vertex_count * dtype.itemsize
    if len(payload) < needed:
        raise ParseError(
            "truncated",
            f"payload holds {len(payload)} bytes, {needed} required "
            f"for {vertex_count} vertices",
        )
    table = np.frombuffer(payload[:needed], dtype=dtype)
    data = {name: np.ascontiguousarray(table[name]) for name, _ in field_order}
    return SplatScene(data, field_order)


def write_splat_ply(scene):
    """Serialize a scene to binary little-endian PLY bytes."""
    if len(scene) == 0:
        raise EmptySceneError("cannot serialize an empty scene")
    lines = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {len(scene)}",
    ]
    for name, ply_type in scene.field_order:
        lines.append(f"property {ply_type} {name}")
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("ascii")

    dtype = np.dtype(
        [(name, "<" + _PLY_TO_NUMPY[t]) for name, t in scene.field_order]
    )
    table = np.empty(len(scene), dtype=dtype)
    for name, _ in scene.field_order:
        table[name] = scene.data[name]
    return header + table.tobytes()


def dc_to_rgb(sh_dc):
    """Convert degree-0 SH coefficients to linear RGB clamped to [0, 1]."""
    return np.clip(np.asarray(sh_dc, dtype=np.float64) * SH_C0 + 0.5, 0.0, 1.0)


def rgb_to_dc(rgb, zero_rest=True):
    """Convert linear RGB in [0, 1] back to SH DC coefficients.

    Returns ``(sh_dc, sh_rest)``; ``sh_rest`` is a zero block when
    ``zero_rest`` is set (view-dependent color removed) and ``None``
    otherwise, meaning "leave existing coefficients alone".
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    sh_dc = (rgb - 0.5) / SH_C0
    if zero_rest:
        shape = rgb.shape[:-1] + (45,)
        return sh_dc, np.zeros(shape, dtype=np.float64)
    return sh_dc, None


def fibonacci_sphere(n):
    """n points on the unit sphere via the golden-angle lattice."""
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def make_noisy_sphere(n_surface, n_noise, seed):
    """Synthetic validation scene: a unit-sphere shell plus cube noise.

    ``n_surface`` equal-sized, fully opaque splats sit at golden-angle
    lattice points on the unit sphere; ``n_noise`` splats are uniform in
    the [-1, 1]^3 cube. Returns the scene and a boolean array flagging the
    noise splats. Deterministic for a fixed seed.
    """
    if n_surface < 1:
        raise InvalidArgumentError("n_surface must be >= 1")
    if n_noise < 0:
        raise InvalidArgumentError("n_noise must be >= 0")
    rng = np.random.default_rng(seed)
    surface = fibonacci_sphere(n_surface)
    noise = rng.uniform(-1.0, 1.0, size=(n_noise, 3))
    positions = np.concatenate([surface, noise], axis=0)
    n = n_surface + n_noise

    log_scales = np.full((n, 3), math.log(0.02), dtype=np.float32)
    rotations = np.zeros((n, 4), dtype=np.float32)
    rotations[:, 0] = 1.0
    logit_opacities = np.full(n, 10.0, dtype=np.float32)  # sigmoid ~ 0.99995
    sh_dc = np.zeros((n, 3), dtype=np.float32)

    scene = SplatScene.from_fields(
        positions, log_scales, rotations, logit_opacities, sh_dc
    )
    ground_truth = np.zeros(n, dtype=bool)
    ground_truth[n_surface:] = True
    return scene, ground_truth
