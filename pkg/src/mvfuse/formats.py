"""On-disk formats: heat-maps (MVHM), priors (MVPP), depth frames (MVDF), joints text, view images.

All binary formats are little-endian.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import AdapterMismatch, BadMagic, CountMismatch, ParseError, TruncatedFile
from .geometry import DepthFrame, ObbFrame, Plane, ProjectedView, ViewLink
from .heatmap import HeatMapStack
from .prior import JointSet, PosePrior

_MVHM = struct.Struct("<4sIIIIB3x")
_MVPP = struct.Struct("<4sIII")
_MVDF = struct.Struct("<4sIII")
_MSRA = struct.Struct("<6I")
VERSION = 1


def _read_bytes(path_or_bytes):
    if isinstance(path_or_bytes, (bytes, bytearray)):
        return bytes(path_or_bytes)
    return Path(path_or_bytes).read_bytes()


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _unpack_header(fmt, buf, magic, name):
    if len(buf) < 4 or buf[:4] != magic:
        raise BadMagic(f"not an {name} file (magic {buf[:4]!r})")
    if len(buf) < fmt.size:
        raise TruncatedFile(f"{name} header truncated")
    return fmt.unpack_from(buf)


def _take(buf, offset, dtype, count, name):
    nbytes = np.dtype(dtype).itemsize * count
    if len(buf) < offset + nbytes:
        raise TruncatedFile(f"{name} payload truncated: need {offset + nbytes} bytes, have {len(buf)}")
    return np.frombuffer(buf, dtype=dtype, count=count, offset=offset), offset + nbytes


# -- heat-maps ---------------------------------------------------------------

def heatmap_to_bytes(stack: HeatMapStack) -> bytes:
    header = _MVHM.pack(b"MVHM", VERSION, stack.k, stack.width, stack.height, int(stack.plane))
    return header + stack.values.astype("<f4").tobytes() + stack.link.as_array().astype("<f8").tobytes()


def heatmap_from_bytes(buf) -> HeatMapStack:
    _, version, k, width, height, plane = _unpack_header(_MVHM, buf, b"MVHM", "MVHM")
    if version != VERSION:
        raise ParseError(f"unsupported MVHM version {version}")
    values, off = _take(buf, _MVHM.size, "<f4", k * height * width, "MVHM")
    link, _ = _take(buf, off, "<f8", 6, "MVHM")
    return HeatMapStack(Plane(plane), values.reshape(k, height, width), ViewLink.from_array(link))


def write_heatmap(path, stack: HeatMapStack):
    atomic_write(path, heatmap_to_bytes(stack))


def read_heatmap(path) -> HeatMapStack:
    return heatmap_from_bytes(_read_bytes(path))


def heatmap_filename(frame_id, plane) -> str:
    return f"{frame_id}_{Plane.parse(plane).name}.mvhm"


# -- pose priors -------------------------------------------------------------

def prior_to_bytes(prior: PosePrior) -> bytes:
    header = _MVPP.pack(b"MVPP", VERSION, prior.k, prior.m)
    return (
        header
        + prior.mean.astype("<f8").tobytes()
        + prior.eigenvalues.astype("<f8").tobytes()
        + prior.components.astype("<f8").tobytes(order="F")
    )


def prior_from_bytes(buf, frame="camera") -> PosePrior:
    """Decode an MVPP record. The format carries no frame tag; the caller supplies it."""
    _, version, k, m = _unpack_header(_MVPP, buf, b"MVPP", "MVPP")
    if version != VERSION:
        raise ParseError(f"unsupported MVPP version {version}")
    mean, off = _take(buf, _MVPP.size, "<f8", 3 * k, "MVPP")
    eig, off = _take(buf, off, "<f8", m, "MVPP")
    comps, _ = _take(buf, off, "<f8", 3 * k * m, "MVPP")
    return PosePrior(mean, comps.reshape(3 * k, m, order="F"), eig, frame)


def write_prior(path, prior: PosePrior):
    atomic_write(path, prior_to_bytes(prior))


def read_prior(path, frame="camera") -> PosePrior:
    return prior_from_bytes(_read_bytes(path), frame)


# -- depth frames ------------------------------------------------------------

def depth_to_bytes(frame: DepthFrame) -> bytes:
    return _MVDF.pack(b"MVDF", VERSION, frame.width, frame.height) + frame.depth.astype("<f4").tobytes()


def depth_from_bytes(buf) -> DepthFrame:
    _, version, width, height = _unpack_header(_MVDF, buf, b"MVDF", "MVDF")
    if version != VERSION:
        raise ParseError(f"unsupported MVDF version {version}")
    depth, _ = _take(buf, _MVDF.size, "<f4", width * height, "MVDF")
    return DepthFrame(depth.reshape(height, width))


def _msra_from_bytes(buf) -> DepthFrame:
    # Experimental: six uint32 (image width, height, crop left, top, right,
    # bottom) followed by float32 depths of the crop, row-major. Pixels
    # outside the crop are background.
    if buf[:4] == b"MVDF":
        raise AdapterMismatch("file is canonical MVDF; use the canonical adapter")
    if len(buf) < _MSRA.size:
        raise TruncatedFile("msra_like header truncated")
    width, height, left, top, right, bottom = _MSRA.unpack_from(buf)
    if not (0 <= left <= right <= width and 0 <= top <= bottom <= height):
        raise AdapterMismatch("msra_like header describes an invalid crop")
    crop, end = _take(buf, _MSRA.size, "<f4", (right - left) * (bottom - top), "msra_like")
    if end != len(buf):
        raise AdapterMismatch(f"msra_like payload size mismatch ({len(buf) - end} trailing bytes)")
    depth = np.zeros((height, width), dtype=np.float32)
    depth[top:bottom, left:right] = crop.reshape(bottom - top, right - left)
    return DepthFrame(depth)


ADAPTERS = {"canonical": depth_from_bytes, "msra_like": _msra_from_bytes}


def write_depth_frame(path, frame: DepthFrame):
    atomic_write(path, depth_to_bytes(frame))


def load_depth_frame(path, adapter="canonical") -> DepthFrame:
    try:
        reader = ADAPTERS[adapter]
    except KeyError:
        raise AdapterMismatch(f"unknown adapter {adapter!r}") from None
    return reader(_read_bytes(path))


# -- joints text -------------------------------------------------------------

def format_joints(poses) -> str:
    poses = list(poses)
    lines = [str(len(poses))]
    for p in poses:
        lines.append(" ".join(f"{v:.17g}" for v in p.vector()))
    return "\n".join(lines) + "\n"


def parse_joints(text, frame="camera", k=None):
    """Parse the joints text format: a frame count, then one line of 3K values per frame."""
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise ParseError("empty joints file", 1)
    lineno, first = lines[0]
    try:
        n = int(first.strip())
    except ValueError:
        raise ParseError(f"expected frame count, got {first.strip()!r}", lineno) from None
    if n < 0:
        raise ParseError("negative frame count", lineno)
    data = lines[1:]
    if len(data) != n:
        raise CountMismatch(f"header declares {n} frames but {len(data)} data lines follow")
    poses = []
    width = None
    for lineno, ln in data:
        try:
            vals = np.array([float(t) for t in ln.split()])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if vals.size == 0 or vals.size % 3:
            raise ParseError(f"{vals.size} values is not a multiple of 3", lineno)
        if k is not None and vals.size != 3 * k:
            raise ParseError(f"expected {3 * k} values, got {vals.size}", lineno)
        if width is not None and vals.size != width:
            raise ParseError(f"inconsistent joint count ({vals.size} values, expected {width})", lineno)
        width = vals.size
        poses.append(JointSet.from_vector(vals, frame))
    return poses


def write_joints_file(path, poses):
    atomic_write(path, format_joints(poses))


def load_joints_file(path, frame="camera", k=None):
    return parse_joints(Path(path).read_text(), frame, k)


# -- key-value sidecars and view images ----------------------------------------

def format_kv(record: dict) -> str:
    out = []
    for key, value in record.items():
        if isinstance(value, (list, tuple, np.ndarray)):
            value = " ".join(f"{float(v):.17g}" for v in np.ravel(value))
        elif isinstance(value, float):
            value = f"{value:.17g}"
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"


def parse_kv(text) -> dict:
    record = {}
    for lineno, ln in enumerate(text.splitlines(), 1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise ParseError(f"expected 'key = value', got {ln!r}", lineno)
        key, value = (s.strip() for s in ln.split("=", 1))
        record[key] = value
    return record


def _floats(s):
    return np.array([float(t) for t in s.split()])


def view_to_pgm(view: ProjectedView) -> bytes:
    """8-bit binary graymap: foreground value v stored as round(254 v), background as 255."""
    img = np.where(view.mask, np.rint(view.values * 254), 255).astype(np.uint8)
    return f"P5\n{view.width} {view.height}\n255\n".encode() + img.tobytes()


def view_metadata(view: ProjectedView, obb: ObbFrame | None = None) -> dict:
    record = {
        "plane": view.plane.name,
        "width": view.width,
        "height": view.height,
        "near": float(view.near),
        "far": float(view.far),
        "normal_offset": float(view.normal_offset),
        "uv_origin": view.uv_origin,
        "uv_scale": view.uv_scale,
    }
    if obb is not None:
        record.update(obb_origin=obb.origin, obb_axes=obb.axes, obb_extents=obb.extents)
    return record


def write_view(path_stem, view: ProjectedView, obb: ObbFrame | None = None):
    """Write ``<stem>.pgm`` and its ``<stem>.meta`` key-value sidecar."""
    stem = Path(path_stem)
    atomic_write(stem.with_suffix(".pgm"), view_to_pgm(view))
    atomic_write(stem.with_suffix(".meta"), format_kv(view_metadata(view, obb)))


def _parse_pgm(buf):
    stream = io.BytesIO(buf)
    tokens = []
    while len(tokens) < 4:
        line = stream.readline()
        if not line:
            raise TruncatedFile("PGM header truncated")
        tokens += line.split(b"#", 1)[0].split()
    if tokens[0] != b"P5":
        raise BadMagic(f"not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:4])
    data = stream.read(width * height)
    if len(data) != width * height or maxval != 255:
        raise TruncatedFile("PGM payload truncated or unsupported maxval")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width)


def read_view(path_stem):
    """Read a view written by :func:`write_view`; returns ``(view, obb_or_None)``."""
    stem = Path(path_stem)
    img = _parse_pgm(stem.with_suffix(".pgm").read_bytes())
    meta = parse_kv(stem.with_suffix(".meta").read_text())
    mask = img != 255
    view = ProjectedView(
        plane=Plane.parse(meta["plane"]),
        values=np.where(mask, img / 254.0, 0.0),
        mask=mask,
        near=float(meta["near"]),
        far=float(meta["far"]),
        uv_origin=_floats(meta["uv_origin"]),
        uv_scale=_floats(meta["uv_scale"]),
        normal_offset=float(meta.get("normal_offset", 0.0)),
    )
    obb = None
    if "obb_origin" in meta:
        obb = ObbFrame(
            _floats(meta["obb_origin"]),
            _floats(meta["obb_axes"]).reshape(3, 3),
            _floats(meta["obb_extents"]),
        )
    return view, obb


# -- reports -----------------------------------------------------------------

def per_joint_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["joint_index", "mean_error_mm"])
    for k, v in enumerate(report.per_joint_mean):
        w.writerow([k, f"{v:.17g}"])
    return buf.getvalue()


def curve_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tolerance_mm", "fraction"])
    for t, f in report.worst_case_curve:
        w.writerow([f"{t:.17g}", f"{f:.17g}"])
    return buf.getvalue()


def rows_csv(rows) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
