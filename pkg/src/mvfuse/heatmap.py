"""Per-view joint heat-maps: synthesis, continuous sampling and noise models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Plane, ViewLink

DEFAULT_SIZE = 18
DEFAULT_SIGMA = 1.0


@dataclass(frozen=True)
class HeatMapStack:
    """K confidence maps for one view, registered to a projected image via ``link``.

    ``values`` has shape ``(k, height, width)`` and is kept as float32 so
    that file round-trips are lossless.
    """

    plane: Plane
    values: np.ndarray
    link: ViewLink

    def __post_init__(self):
        object.__setattr__(self, "plane", Plane.parse(self.plane))
        vals = np.array(self.values, dtype=np.float32)
        if vals.ndim != 3 or vals.shape[0] < 1:
            raise ValueError("heat-map values must have shape (k, height, width) with k >= 1")
        if not np.all(np.isfinite(vals)):
            raise ValueError("heat-map values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def k(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]

    @property
    def ratio(self):
        """Heat-map pixels per projected-image pixel, along (u, v)."""
        return np.array([self.width / self.link.size[0], self.height / self.link.size[1]])

    def replace_values(self, values):
        return HeatMapStack(plane=self.plane, values=values, link=self.link)


def synthesize_heatmaps(joints_uv, link: ViewLink, plane=Plane.XY, sigma=DEFAULT_SIGMA,
                        size=(DEFAULT_SIZE, DEFAULT_SIZE)) -> HeatMapStack:
    """Render one unnormalized Gaussian blob per joint.

    ``joints_uv`` are continuous projected-image pixel coordinates, shape
    ``(k, 2)``. They are rescaled to heat-map pixels and each map is the
    Gaussian with std ``sigma`` (heat-map pixels) evaluated at pixel centers.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    w, h = size
    uv = np.asarray(joints_uv, dtype=np.float64).reshape(-1, 2)
    hm = uv * np.array([w / link.size[0], h / link.size[1]])
    xs = np.arange(w) + 0.5
    ys = np.arange(h) + 0.5
    gx = np.exp(-((xs[None, :] - hm[:, :1]) ** 2) / (2 * sigma**2))
    gy = np.exp(-((ys[None, :] - hm[:, 1:]) ** 2) / (2 * sigma**2))
    values = gy[:, :, None] * gx[:, None, :]
    return HeatMapStack(plane=plane, values=values, link=link)


def _axis_weights(coord, n):
    # coord in pixel-index space (centers at integers); clamp-to-edge.
    f = np.clip(coord, 0.0, n - 1)
    i0 = np.minimum(np.floor(f).astype(np.int64), max(n - 2, 0))
    i1 = np.minimum(i0 + 1, n - 1)
    t = f - i0
    return i0, i1, t


def sample_all(stack: HeatMapStack, uv) -> np.ndarray:
    """Bilinear lookup of every joint map at projected-image coordinates ``uv``.

    Returns shape ``(k, N)``. Negative stored values are treated as zero.
    """
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    maps = np.maximum(stack.values.astype(np.float64), 0.0)
    hm = uv * stack.ratio - 0.5
    c0, c1, tx = _axis_weights(hm[:, 0], stack.width)
    r0, r1, ty = _axis_weights(hm[:, 1], stack.height)
    top = maps[:, r0, c0] * (1 - tx) + maps[:, r0, c1] * tx
    bottom = maps[:, r1, c0] * (1 - tx) + maps[:, r1, c1] * tx
    return top * (1 - ty) + bottom * ty


def sample(stack: HeatMapStack, joint: int, uv):
    """Continuous confidence of ``joint`` at projected-image pixel coordinates ``uv``."""
    if not 0 <= joint < stack.k:
        raise IndexError(f"joint {joint} out of range for k={stack.k}")
    single = np.ndim(uv) == 1
    maps = HeatMapStack(plane=stack.plane, values=stack.values[joint:joint + 1], link=stack.link)
    out = sample_all(maps, uv)[0]
    return float(out[0]) if single else out


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be non-negative")


@dataclass(frozen=True)
class SpuriousHotspot:
    """A second blob at ``uv`` (projected-image pixels); ``joint=None`` applies it to all maps."""

    uv: tuple
    amplitude: float = 1.0
    joint: int | None = None
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("hotspot amplitude must be non-negative")


def add_noise(stack: HeatMapStack, kind, seed=None) -> HeatMapStack:
    values = stack.values.astype(np.float64)
    if isinstance(kind, GaussianNoise):
        if kind.sigma == 0:
            return stack
        rng = np.random.default_rng(seed)
        values = np.maximum(values + rng.normal(0.0, kind.sigma, size=values.shape), 0.0)
    elif isinstance(kind, SpuriousHotspot):
        blob = synthesize_heatmaps([kind.uv], stack.link, stack.plane, kind.sigma,
                                   (stack.width, stack.height)).values[0].astype(np.float64)
        joints = range(stack.k) if kind.joint is None else [kind.joint]
        for j in joints:
            values[j] += kind.amplitude * blob
    else:
        raise TypeError(f"unknown noise kind {kind!r}")
    return stack.replace_values(values)
