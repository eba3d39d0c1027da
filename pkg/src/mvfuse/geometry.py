"""Depth frames, point clouds, the OBB projection frame and the three orthographic views."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateCloud, EmptyFrame, OutOfRange

DEFAULT_RESOLUTION = 96
FRAME_MARGIN = 2
SKEW_TIE = 1e-12


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class Plane(enum.IntEnum):
    """Projection planes of the OBB frame. The integer value is the on-disk tag."""

    XY = 0
    YZ = 1
    ZX = 2

    @property
    def axes(self):
        """OBB axis indices ``(u, v, normal)`` for this plane."""
        return _PLANE_AXES[self]

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        return cls[str(name).upper()]


_PLANE_AXES = {Plane.XY: (0, 1, 2), Plane.YZ: (1, 2, 0), Plane.ZX: (2, 0, 1)}
PLANES = (Plane.XY, Plane.YZ, Plane.ZX)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.image_width and 0 <= self.cy < self.image_height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class DepthFrame:
    """Millimetre depth image; zero marks background or invalid pixels."""

    depth: np.ndarray

    def __post_init__(self):
        d = np.array(self.depth, dtype=np.float32)
        if d.ndim != 2:
            raise ValueError("depth must be a 2-D grid")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("depths must be finite and non-negative")
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]


@dataclass(frozen=True)
class ObbFrame:
    """Oriented bounding box used as the projection coordinate system.

    ``axes`` holds the box axes as columns, ordered by descending variance.
    Local (OBB) coordinates of a camera-space point ``p`` are
    ``axes.T @ (p - origin)``.
    """

    origin: np.ndarray
    axes: np.ndarray
    extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(self.origin).reshape(3))
        object.__setattr__(self, "axes", _frozen(self.axes).reshape(3, 3))
        object.__setattr__(self, "extents", _frozen(self.extents).reshape(3))

    def to_local(self, points):
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.axes

    def to_camera(self, local):
        return np.asarray(local, dtype=np.float64) @ self.axes.T + self.origin

    def contains(self, points, inflate=1.0, tol=0.0):
        local = np.abs(self.to_local(np.atleast_2d(points)))
        return np.all(local <= self.extents * inflate + tol, axis=1)


@dataclass(frozen=True)
class ProjectedView:
    """One normalized-distance orthographic image of a point cloud.

    Pixel ``(row=v, col=u)`` covers plane coordinates whose affine image
    ``uv_origin + uv_scale * (a, b)`` falls inside ``[u, u+1) x [v, v+1)``.
    ``values`` hold the normalized distance of the nearest point; ``near``
    and ``far`` are the distances (mm, from the negative box face along the
    view normal) that map to 0 and 1.
    """

    plane: Plane
    values: np.ndarray
    mask: np.ndarray
    near: float
    far: float
    uv_origin: np.ndarray
    uv_scale: np.ndarray
    normal_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "plane", Plane.parse(self.plane))
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "mask", _frozen(self.mask, dtype=bool))
        object.__setattr__(self, "uv_origin", _frozen(self.uv_origin).reshape(2))
        object.__setattr__(self, "uv_scale", _frozen(self.uv_scale).reshape(2))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def link(self):
        return ViewLink(self.uv_origin, self.uv_scale, (self.width, self.height))

    def plane_to_uv(self, ab):
        return self.uv_origin + self.uv_scale * np.asarray(ab, dtype=np.float64)

    def uv_to_plane(self, uv):
        return (np.asarray(uv, dtype=np.float64) - self.uv_origin) / self.uv_scale


@dataclass(frozen=True)
class ViewLink:
    """Affine map from OBB plane coordinates (mm) to projected-image pixels, plus that image's size."""

    uv_origin: np.ndarray
    uv_scale: np.ndarray
    size: tuple = (DEFAULT_RESOLUTION, DEFAULT_RESOLUTION)

    def __post_init__(self):
        object.__setattr__(self, "uv_origin", _frozen(self.uv_origin).reshape(2))
        object.__setattr__(self, "uv_scale", _frozen(self.uv_scale).reshape(2))
        object.__setattr__(self, "size", (int(self.size[0]), int(self.size[1])))
        if np.any(self.uv_scale == 0):
            raise ValueError("view link affine map is not invertible")

    def plane_to_uv(self, ab):
        return self.uv_origin + self.uv_scale * np.asarray(ab, dtype=np.float64)

    def uv_to_plane(self, uv):
        return (np.asarray(uv, dtype=np.float64) - self.uv_origin) / self.uv_scale

    def as_array(self):
        """Six float64 values: scale_u, scale_v, origin_u, origin_v, width, height."""
        return np.array([*self.uv_scale, *self.uv_origin, *self.size], dtype=np.float64)

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=np.float64)
        return cls(uv_origin=arr[2:4], uv_scale=arr[0:2], size=(int(arr[4]), int(arr[5])))

    def isclose(self, other, rtol=1e-9):
        return (
            self.size == other.size
            and np.allclose(self.uv_origin, other.uv_origin, rtol=rtol, atol=1e-9)
            and np.allclose(self.uv_scale, other.uv_scale, rtol=rtol, atol=0)
        )


def depth_to_pointcloud(frame: DepthFrame, cam: CameraIntrinsics) -> np.ndarray:
    """Back-project every valid pixel through the pinhole model.

    Integer pixel coordinates ``(u, v) = (column, row)`` address pixel
    centers. Returns an ``(N, 3)`` array in camera-space millimetres, one
    row per pixel with positive depth, in row-major pixel order.
    """
    v, u = np.nonzero(frame.depth > 0)
    if u.size == 0:
        raise EmptyFrame("depth frame has no valid pixels")
    d = frame.depth[v, u].astype(np.float64)
    x = (u - cam.cx) * d / cam.fx
    y = (v - cam.cy) * d / cam.fy
    return np.column_stack([x, y, d])


def _fix_sign(axis, centered):
    skew = np.mean((centered @ axis) ** 3)
    if abs(skew) < SKEW_TIE:
        ref = axis[2] if axis[2] != 0 else axis[np.flatnonzero(axis)[0]]
        return -axis if ref < 0 else axis
    return -axis if skew < 0 else axis


def compute_obb(cloud) -> ObbFrame:
    """Fit the PCA-aligned oriented bounding box of a point cloud.

    Axes 1 and 2 are oriented so the third central moment of the points
    along them is non-negative (camera z component as a tie-break); axis 3
    completes a right-handed frame. Points are sorted first so the result
    does not depend on input order.
    """
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyFrame("empty point cloud")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point cloud contains non-finite coordinates")
    if np.all(np.ptp(pts, axis=0) == 0):
        raise DegenerateCloud("all points are identical")
    pts = pts[np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))]

    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    _, vecs = np.linalg.eigh(cov)
    vecs = vecs[:, ::-1]
    a1 = _fix_sign(vecs[:, 0], centered)
    a2 = _fix_sign(vecs[:, 1], centered)
    a3 = np.cross(a1, a2)
    axes = np.column_stack([a1, a2, a3])

    proj = pts @ axes
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    return ObbFrame(origin=axes @ ((lo + hi) / 2), axes=axes, extents=(hi - lo) / 2)


def view_link(obb: ObbFrame, plane, resolution=DEFAULT_RESOLUTION, margin=FRAME_MARGIN) -> ViewLink:
    """Square framing of one OBB face: tight fit with ``margin`` pixels, aspect preserved.

    The face edges land on pixel centers, so ``margin`` whole pixels stay
    empty on each side and the extreme points are never on a bin edge.
    """
    pu, pv, _ = Plane.parse(plane).axes
    half = max(obb.extents[pu], obb.extents[pv])
    scale = (resolution / 2 - margin - 0.5) / half if half > 0 else 1.0
    return ViewLink(
        uv_origin=(resolution / 2, resolution / 2),
        uv_scale=(scale, scale),
        size=(resolution, resolution),
    )


def _median_foreground(values, mask):
    """3x3 median over foreground neighbours, evaluated at foreground pixels only."""
    padded = np.pad(np.where(mask, values, np.nan), 1, constant_values=np.nan)
    h, w = values.shape
    rows, cols = np.nonzero(mask)
    windows = np.stack([padded[rows + dr, cols + dc] for dr in range(3) for dc in range(3)])
    out = np.zeros_like(values)
    out[rows, cols] = np.nanmedian(windows, axis=0)
    return out


def cleanup_view(values, mask):
    """Median filter on foreground values followed by a 3x3 opening of the mask."""
    if not mask.any():
        return values, mask
    filtered = _median_foreground(values, mask)
    opened = ndimage.binary_opening(mask, structure=np.ones((3, 3), dtype=bool))
    return np.where(opened, filtered, 0.0), opened


def rasterize(local, obb: ObbFrame, plane, resolution=DEFAULT_RESOLUTION) -> ProjectedView:
    """Z-buffer OBB-local points onto one plane without any cleanup."""
    plane = Plane.parse(plane)
    pu, pv, pn = plane.axes
    link = view_link(obb, plane, resolution)
    uv = link.plane_to_uv(local[:, [pu, pv]])
    cols = np.clip(np.floor(uv[:, 0]).astype(np.int64), 0, resolution - 1)
    rows = np.clip(np.floor(uv[:, 1]).astype(np.int64), 0, resolution - 1)

    dist = local[:, pn] + obb.extents[pn]
    near, far = float(dist.min()), float(dist.max())
    if far > near:
        norm = (dist - near) / (far - near)
    else:
        norm = np.zeros_like(dist)

    buf = np.full(resolution * resolution, np.inf)
    np.minimum.at(buf, rows * resolution + cols, norm)
    buf = buf.reshape(resolution, resolution)
    mask = np.isfinite(buf)
    return ProjectedView(
        plane=plane,
        values=np.where(mask, buf, 0.0),
        mask=mask,
        near=near,
        far=far,
        uv_origin=link.uv_origin,
        uv_scale=link.uv_scale,
        normal_offset=float(obb.extents[pn]),
    )


def project_to_planes(cloud, obb: ObbFrame, resolution=DEFAULT_RESOLUTION, cleanup=True):
    """Project a camera-space cloud onto the XY, YZ and ZX planes of ``obb``.

    Returns a tuple of three :class:`ProjectedView` in plane order. With
    ``cleanup`` the rasterized images are median filtered and opened.
    """
    local = obb.to_local(np.asarray(cloud, dtype=np.float64).reshape(-1, 3))
    views = []
    for plane in PLANES:
        view = rasterize(local, obb, plane, resolution)
        if cleanup:
            values, mask = cleanup_view(view.values, view.mask)
            view = ProjectedView(
                plane=plane,
                values=values,
                mask=mask,
                near=view.near,
                far=view.far,
                uv_origin=view.uv_origin,
                uv_scale=view.uv_scale,
                normal_offset=view.normal_offset,
            )
        views.append(view)
    return tuple(views)


def unproject_view_value(view: ProjectedView, pixel_uv, value) -> float:
    """Map a normalized pixel value back to the OBB coordinate along the view normal."""
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise OutOfRange(f"normalized value {value} outside [0, 1]")
    dist = view.near + value * (view.far - view.near)
    return dist - view.normal_offset
