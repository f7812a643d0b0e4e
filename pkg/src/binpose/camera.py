"""Pinhole camera: projection, deprojection, depth rendering and cropping.

Pixel ``(u, v)`` is column ``u``, row ``v``; pixel centres sit on integer
coordinates. Depth is the z coordinate in the camera frame (distance along
the optical axis), not the ray length. No lens distortion is modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BehindCamera, EmptyRender, InvalidDepth, OutOfBounds
from .objects import DeformableObject
from .transforms import RigidTransform, invert

CROP_SIZE = 128
CROP_SCALE = 1.3


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 128.0
    fy: float = 128.0
    cx: float = 64.0
    cy: float = 64.0
    width: int = 128
    height: int = 128

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def as_tuple(self) -> tuple:
        return (self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    def contains(self, u: float, v: float) -> bool:
        return -0.5 <= u < self.width - 0.5 and -0.5 <= v < self.height - 0.5


@dataclass
class DepthImage:
    """Row-major depth map in meters; 0 marks pixels with no return."""

    data: np.ndarray

    def __post_init__(self):
        # C order always: reductions over strided views round differently
        self.data = np.ascontiguousarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("depth data must be 2-D (height, width)")
        if not np.all(np.isfinite(self.data)) or np.any(self.data < 0):
            raise ValueError("depth values must be finite and non-negative")

    @classmethod
    def blank(cls, width: int, height: int) -> "DepthImage":
        return cls(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return self.data > 0

    def copy(self) -> "DepthImage":
        return DepthImage(self.data.copy())

    def __eq__(self, other):
        return isinstance(other, DepthImage) and np.array_equal(self.data, other.data)


@dataclass
class RgbImage:
    data: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.uint8)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError("rgb data must have shape (height, width, 3)")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def deproject(pixel: Sequence[float], depth: float, k: CameraIntrinsics) -> np.ndarray:
    u, v = pixel
    if not depth > 0:
        raise InvalidDepth(f"depth must be positive, got {depth!r}")
    if not k.contains(u, v):
        raise OutOfBounds(f"pixel {(u, v)} outside {k.width}x{k.height} image")
    return np.array([(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth])


def project(point: Sequence[float], k: CameraIntrinsics) -> tuple[float, float]:
    x, y, z = (float(c) for c in point)
    if not z > 0:
        raise BehindCamera(f"point has z={z!r}")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def deproject_image(depth: DepthImage, k: CameraIntrinsics) -> np.ndarray:
    """``(h, w, 3)`` camera-frame points; invalid pixels map to the origin."""
    v, u = np.mgrid[0:depth.height, 0:depth.width].astype(float)
    d = depth.data
    return np.stack([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d], axis=-1)


def pixel_rays(k: CameraIntrinsics) -> np.ndarray:
    """Unit ray directions through every pixel centre, shape ``(h * w, 3)``."""
    v, u = np.mgrid[0:k.height, 0:k.width].astype(float)
    d = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1).reshape(-1, 3)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def cast_rays(
    obj: DeformableObject, pose: RigidTransform, origins, dirs
) -> np.ndarray:
    """Ray parameter of the first hit for camera-frame rays against a posed object."""
    to_obj = invert(pose)
    r = to_obj.R
    o = np.atleast_2d(origins) @ r.T + to_obj.t
    d = np.atleast_2d(dirs) @ r.T
    return obj.intersect(o, d)


def _render_into(depth: np.ndarray, obj, pose, rays) -> None:
    center = pose.t
    if center[2] <= 0:
        raise BehindCamera("object centre is behind the camera")
    rb = obj.bounding_radius
    along = rays @ center
    perp2 = center @ center - along * along
    cand = np.flatnonzero((perp2 < rb * rb) & (along > 0))
    if len(cand) == 0:
        return
    t = cast_rays(obj, pose, np.zeros(3), rays[cand])
    z = t * rays[cand, 2]
    flat = depth.reshape(-1)
    cur = flat[cand]
    take = np.isfinite(z) & ((cur == 0) | (z < cur))
    flat[cand[take]] = z[take]


def render_scene_depth(
    objects: Sequence[tuple[DeformableObject, RigidTransform]], k: CameraIntrinsics
) -> DepthImage:
    """Depth of the nearest surface over several posed objects; 0 where none is hit."""
    rays = pixel_rays(k)
    depth = np.zeros((k.height, k.width))
    for obj, pose in objects:
        _render_into(depth, obj, pose, rays)
    return DepthImage(depth)


def render_depth(obj: DeformableObject, pose: RigidTransform, k: CameraIntrinsics) -> DepthImage:
    """Render one object posed in the camera frame."""
    img = render_scene_depth([(obj, pose)], k)
    if not img.valid.any():
        raise EmptyRender("object does not cover any pixel")
    return img


@dataclass(frozen=True)
class CropRule:
    """Square crop about a detection centroid, resampled by nearest neighbour."""

    scale: float = CROP_SCALE
    size: int = CROP_SIZE

    def describe(self) -> str:
        return f"centroid-square scale {self.scale!r} size {self.size} nearest"

    @classmethod
    def parse(cls, text: str) -> "CropRule":
        parts = text.split()
        if len(parts) != 6 or parts[0] != "centroid-square" or parts[5] != "nearest":
            raise ValueError(f"unrecognised crop rule {text!r}")
        return cls(scale=float(parts[2]), size=int(parts[4]))


def silhouette_stats(mask: np.ndarray) -> tuple[tuple[float, float], tuple[int, int, int, int]]:
    """Centroid ``(u, v)`` and bounding box ``(u0, v0, u1, v1)`` (inclusive) of a mask."""
    vs, us = np.nonzero(mask)
    if len(us) == 0:
        raise EmptyRender("empty silhouette")
    return (float(us.mean()), float(vs.mean())), (int(us.min()), int(vs.min()), int(us.max()), int(vs.max()))


def crop(
    depth: DepthImage,
    centroid: tuple[float, float],
    bbox: tuple[int, int, int, int],
    rule: CropRule = CropRule(),
    mask: np.ndarray | None = None,
) -> DepthImage:
    """Square crop of side ``rule.scale * max(bbox side)`` centred on ``centroid``.

    Pixels outside the source image, or outside ``mask`` when given, become 0.
    """
    u0, v0, u1, v1 = bbox
    side = rule.scale * max(u1 - u0 + 1, v1 - v0 + 1)
    step = side / rule.size
    offs = (np.arange(rule.size) + 0.5) * step - side / 2.0
    su = np.floor(centroid[0] + offs + 0.5).astype(int)
    sv = np.floor(centroid[1] + offs + 0.5).astype(int)
    src = depth.data if mask is None else np.where(mask, depth.data, 0.0)
    ok_u = (su >= 0) & (su < depth.width)
    ok_v = (sv >= 0) & (sv < depth.height)
    out = src[np.clip(sv, 0, depth.height - 1)][:, np.clip(su, 0, depth.width - 1)]
    out = out * ok_v[:, None] * ok_u[None, :]
    return DepthImage(out)


def crop_object(depth: DepthImage, rule: CropRule = CropRule()) -> DepthImage:
    """Crop a render that contains a single object, using its own silhouette."""
    centroid, bbox = silhouette_stats(depth.valid)
    return crop(depth, centroid, bbox, rule)


# file formats

def write_depth(path, img: DepthImage) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"DEPTH {img.width} {img.height}\n")
        for row in img.data:
            f.write(" ".join(format(v, ".17g") for v in row) + "\n")


def read_depth(path) -> DepthImage:
    with open(path, encoding="utf-8") as f:
        tokens = f.read().split()
    if len(tokens) < 3 or tokens[0] != "DEPTH":
        raise ValueError("not a DEPTH file")
    w, h = int(tokens[1]), int(tokens[2])
    vals = np.array([float(t) for t in tokens[3:]])
    if len(vals) != w * h:
        raise ValueError(f"expected {w * h} depth values, found {len(vals)}")
    return DepthImage(vals.reshape(h, w))


def write_ppm(path, img: RgbImage) -> None:
    with open(path, "wb") as f:
        f.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(img.data).tobytes())


def read_ppm(path) -> RgbImage:
    with open(path, "rb") as f:
        raw = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P6" or int(fields[3]) != 255:
        raise ValueError("only 8-bit binary P6 files are supported")
    w, h = int(fields[1]), int(fields[2])
    data = np.frombuffer(raw[pos + 1:pos + 1 + 3 * w * h], dtype=np.uint8)
    return RgbImage(data.reshape(h, w, 3).copy())


def depth_to_rgb(img: DepthImage) -> RgbImage:
    """Grey-scale visualisation: near is bright, no-return is black."""
    d = img.data
    out = np.zeros(d.shape, dtype=np.uint8)
    if img.valid.any():
        lo, hi = d[img.valid].min(), d[img.valid].max()
        span = hi - lo if hi > lo else 1.0
        out[img.valid] = (255 - np.round(200 * (d[img.valid] - lo) / span)).astype(np.uint8)
    return RgbImage(np.repeat(out[..., None], 3, axis=2))


def pixel_quantum(depth: float, k: CameraIntrinsics) -> float:
    """Lateral size of one pixel at ``depth``."""
    return depth / min(k.fx, k.fy)


def horizontal_fov(k: CameraIntrinsics) -> float:
    return 2.0 * math.atan2(k.width / 2.0, k.fx)
