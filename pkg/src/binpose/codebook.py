"""View-sphere pose codebook: build, nearest-embedding lookup, pose estimation.

Entries are ordered viewpoint-major, roll-minor. Rotations are object
orientations in the camera frame (``t_camera_object.rotation``) for an
object placed on the optical axis at ``view_distance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from . import rotations as rot
from .camera import (
    CameraIntrinsics,
    CropRule,
    DepthImage,
    crop,
    crop_object,
    deproject,
    render_depth,
    silhouette_stats,
)
from .descriptor import AugmentationConfig, augment
from .descriptor import embed as default_embed
from .errors import DimensionMismatch, EmptyRender
from .lattice import fibonacci_sphere
from .objects import DeformableObject
from .rotations import UnitQuaternion
from .transforms import RigidTransform

UP = np.array([0.0, 1.0, 0.0])
POLE_NUDGE = 1e-3
DEFAULT_VIEW_DISTANCE = 0.5

Embedder = Callable[[DepthImage], np.ndarray]


@dataclass(frozen=True)
class ViewSampling:
    n_views: int = 162
    n_inplane: int = 12

    def __post_init__(self):
        if self.n_views < 1 or self.n_inplane < 1:
            raise ValueError("need n_views >= 1 and n_inplane >= 1")

    @property
    def size(self) -> int:
        return self.n_views * self.n_inplane


def look_at(view_dir: np.ndarray) -> np.ndarray:
    """``R_camera_object`` for a camera sitting along ``view_dir`` from the object.

    ``view_dir`` is the unit vector from the object to the camera, in the
    object frame. The camera z axis points at the object and the camera y
    axis is chosen from the global up vector +y.
    """
    v = np.asarray(view_dir, dtype=float)
    v = v / np.linalg.norm(v)
    if abs(v @ UP) > math.cos(POLE_NUDGE):
        # too close to the up vector for a stable cross product: tilt toward +z
        ang = math.copysign(math.pi / 2 - POLE_NUDGE, v @ UP)
        v = np.array([0.0, math.sin(ang), math.cos(ang)])
    z = -v
    x = np.cross(UP, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    r_object_camera = np.stack([x, y, z], axis=1)
    return r_object_camera.T


def _roll(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def sample_rotations(s: ViewSampling) -> list[UnitQuaternion]:
    views = fibonacci_sphere(s.n_views)
    out = []
    for v in views:
        base = look_at(v)
        for j in range(s.n_inplane):
            out.append(rot.from_matrix(_roll(2.0 * math.pi * j / s.n_inplane) @ base))
    return out


def coverage_radius(rotations: np.ndarray, rng: np.random.Generator, n_probe: int = 10_000) -> float:
    """Largest distance from ``n_probe`` random rotations to their nearest sample.

    A brute-force estimate of the covering radius used as the bound on clean
    retrieval error.
    """
    rotations = np.asarray(rotations, dtype=float)
    probes = rot.sample_uniform_array(rng, n_probe)
    # the farthest probe is the one whose best |dot| is smallest
    worst = 1.0
    for chunk in np.array_split(probes, max(1, n_probe // 500)):
        best = np.abs(chunk @ rotations.T).max(axis=1)
        worst = min(worst, float(best.min()))
    return 2.0 * math.acos(min(worst, 1.0))


def nearest_rotation_distance(q: UnitQuaternion, rotations: np.ndarray) -> float:
    return float(rot.geodesic_distances(q.as_array(), rotations).min())


@dataclass
class PoseCodebook:
    sampling: ViewSampling
    intrinsics: CameraIntrinsics
    crop_rule: CropRule
    view_distance: float
    rotations: list[UnitQuaternion]
    embeddings: np.ndarray  # (n, dim), unit rows

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=float)
        if len(self.rotations) != self.sampling.size or len(self.embeddings) != self.sampling.size:
            raise ValueError("entry count must equal n_views * n_inplane")

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __len__(self) -> int:
        return len(self.rotations)

    def rotation_array(self) -> np.ndarray:
        return np.array([q.as_array() for q in self.rotations])

    def header_lines(self) -> list[str]:
        k = self.intrinsics
        return [
            "CODEBOOK v1",
            f"dim {self.dim}",
            f"views {self.sampling.n_views} inplane {self.sampling.n_inplane}",
            f"crop {self.crop_rule.describe()}",
            "intrinsics " + " ".join(format(v, ".17g") for v in k.as_tuple()),
            f"distance {self.view_distance!r}",
        ]


def render_view(
    obj: DeformableObject,
    q: UnitQuaternion,
    k: CameraIntrinsics,
    view_distance: float,
    rule: CropRule = CropRule(),
) -> DepthImage:
    """Render ``obj`` on the optical axis with orientation ``q`` and crop it."""
    pose = RigidTransform(q, (0.0, 0.0, view_distance))
    return crop_object(render_depth(obj, pose, k), rule)


def build(
    obj: DeformableObject,
    k: CameraIntrinsics,
    s: ViewSampling,
    view_distance: float = DEFAULT_VIEW_DISTANCE,
    rule: CropRule = CropRule(),
    embed: Embedder = default_embed,
) -> PoseCodebook:
    if s.n_views < 4:
        raise ValueError("a codebook needs n_views >= 4")
    rotations = sample_rotations(s)
    rows = []
    for i, q in enumerate(rotations):
        try:
            rows.append(embed(render_view(obj, q, k, view_distance, rule)))
        except EmptyRender as exc:
            raise EmptyRender(f"codebook entry {i}: {exc}", index=i) from exc
    return PoseCodebook(s, k, rule, view_distance, rotations, np.array(rows))


@dataclass(frozen=True)
class Match:
    rotation: UnitQuaternion
    similarity: float
    index: int


def lookup(query: np.ndarray, cb: PoseCodebook) -> Match:
    """Entry with the highest cosine similarity; the first index wins ties."""
    query = np.asarray(query, dtype=float)
    if query.shape != (cb.dim,):
        raise DimensionMismatch(f"query has shape {query.shape}, codebook dim is {cb.dim}")
    sims = cb.embeddings @ query
    i = int(np.argmax(sims))
    return Match(cb.rotations[i], float(np.clip(sims[i], -1.0, 1.0)), i)


def object_mask(depth: DepthImage, pixel: tuple[float, float]) -> np.ndarray:
    """Connected valid region containing ``pixel`` (or the nearest valid pixel)."""
    labels, _ = ndimage.label(depth.valid)
    u, v = int(round(pixel[0])), int(round(pixel[1]))
    u = min(max(u, 0), depth.width - 1)
    v = min(max(v, 0), depth.height - 1)
    lab = labels[v, u]
    if lab == 0:
        vs, us = np.nonzero(labels)
        if len(us) == 0:
            raise EmptyRender("depth image has no valid pixels")
        j = int(np.argmin((us - u) ** 2 + (vs - v) ** 2))
        lab = labels[vs[j], us[j]]
    return labels == lab


def estimate_pose(
    scene_depth: DepthImage,
    centroid: tuple[float, float],
    depth: float,
    cb: PoseCodebook,
    k: CameraIntrinsics,
    mask: np.ndarray | None = None,
    embed: Embedder = default_embed,
) -> RigidTransform:
    """``t_camera_object`` from a detection at pixel ``centroid`` with ``depth``.

    Rotation comes from the codebook match of the object region, cropped
    about its own silhouette exactly as the codebook entries were. Translation
    is the deprojected detection. Without ``mask`` the connected valid region
    under ``centroid`` is used.
    """
    if mask is None:
        mask = object_mask(scene_depth, centroid)
    center, bbox = silhouette_stats(mask)
    patch = crop(scene_depth, center, bbox, cb.crop_rule, mask=mask)
    match = lookup(embed(patch), cb)
    return RigidTransform(match.rotation, tuple(deproject(centroid, depth, k)))


def estimate_from_render(
    scene_depth: DepthImage, cb: PoseCodebook, k: CameraIntrinsics, embed: Embedder = default_embed
) -> tuple[RigidTransform, tuple[float, float]]:
    """Estimate the pose of a singulated object using its silhouette centroid.

    The depth used for the translation is the surface depth at the valid
    pixel nearest the centroid.
    """
    mask = scene_depth.valid
    centroid, _ = silhouette_stats(mask)
    vs, us = np.nonzero(mask)
    j = int(np.argmin((us - centroid[0]) ** 2 + (vs - centroid[1]) ** 2))
    d = float(scene_depth.data[vs[j], us[j]])
    return estimate_pose(scene_depth, centroid, d, cb, k, mask=mask, embed=embed), centroid


# file format

def save(cb: PoseCodebook, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in cb.header_lines():
            f.write(line + "\n")
        for q, e in zip(cb.rotations, cb.embeddings):
            f.write(rot.format_quaternion(q) + "  " + " ".join(format(v, ".17g") for v in e) + "\n")


def load(path) -> PoseCodebook:
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0].strip() != "CODEBOOK v1":
        raise ValueError("not a CODEBOOK v1 file")
    header: dict[str, str] = {}
    i = 1
    while i < len(lines) and lines[i].split(" ", 1)[0] in ("dim", "views", "crop", "intrinsics", "distance"):
        key, _, rest = lines[i].partition(" ")
        header[key] = rest
        i += 1
    dim = int(header["dim"])
    vparts = header["views"].split()
    sampling = ViewSampling(int(vparts[0]), int(vparts[2]))
    kv = [float(x) for x in header["intrinsics"].split()]
    k = CameraIntrinsics(kv[0], kv[1], kv[2], kv[3], int(kv[4]), int(kv[5]))
    rule = CropRule.parse(header["crop"])
    dist = float(header.get("distance", DEFAULT_VIEW_DISTANCE))
    rotations, rows = [], []
    for ln in lines[i:]:
        if not ln.strip():
            continue
        vals = [float(x) for x in ln.split()]
        if len(vals) != 4 + dim:
            raise DimensionMismatch(f"entry has {len(vals) - 4} values, header says {dim}")
        rotations.append(UnitQuaternion.from_array(vals[:4]))
        rows.append(vals[4:])
    return PoseCodebook(sampling, k, rule, dist, rotations, np.array(rows))


def retrieval_errors(
    obj: DeformableObject,
    cb: PoseCodebook,
    queries: Sequence[UnitQuaternion],
    augment_cfg: AugmentationConfig | None = None,
    rng: np.random.Generator | None = None,
    embed: Embedder = default_embed,
    both: bool = False,
):
    """Geodesic error of codebook retrieval for each query orientation.

    With ``augment_cfg`` the rendered crop is augmented before embedding. With
    ``both`` each render is used twice and ``(clean, augmented)`` errors are
    returned.
    """
    clean, aug = [], []
    for q in queries:
        img = render_view(obj, q, cb.intrinsics, cb.view_distance, cb.crop_rule)
        if augment_cfg is None or both:
            clean.append(rot.geodesic_distance(lookup(embed(img), cb).rotation, q))
        if augment_cfg is not None:
            aug_img = augment(img, augment_cfg, rng)
            aug.append(rot.geodesic_distance(lookup(embed(aug_img), cb).rotation, q))
    if both:
        return np.array(clean), np.array(aug)
    return np.array(aug if augment_cfg is not None else clean)


__all__ = [
    "Match", "PoseCodebook", "ViewSampling", "build", "coverage_radius", "estimate_pose",
    "estimate_from_render", "load", "look_at", "lookup", "render_view", "retrieval_errors",
    "sample_rotations", "save",
]
