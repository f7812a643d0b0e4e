"""Bin-picking simulator: scenes of posed objects, flatness-based keypoints,
suction descent with a pressure threshold, and placement scoring.

Everything is expressed in the frame of a camera looking straight down into
the bin: +z points down toward the floor, so "up" is -z. The camera frame
also stands in for the robot base; the calibration chain in ``transforms``
is what links the two on real hardware.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import rotations as rot
from .camera import CameraIntrinsics, DepthImage, cast_rays, deproject, render_scene_depth
from .errors import NoCandidates, PlacementFailed
from .objects import DeformableObject, chicken
from .rotations import UnitQuaternion
from .transforms import (
    RigidTransform,
    TransformTree,
    canonical_goal,
    format_transform_line,
    invert,
    parse_transform_line,
)

# scene camera: 256 px square, ~53 deg field of view
BIN_CAMERA = CameraIntrinsics(fx=256.0, fy=256.0, cx=128.0, cy=128.0, width=256, height=256)
CAMERA_FRAME = "camera"
CUP_FRAME = "cup"

MAX_REJECTIONS = 1000
GEN_PENETRATION = 0.005  # m, allowed at generation time
STRIDE = 4  # keypoint candidate grid, pixels
JUMP = 0.02  # m, depth discontinuity that disqualifies a neighbourhood
CLASS_TILT = math.radians(30.0)


class PoseClass(enum.Enum):
    BREAST_UP = "BreastUp"
    BREAST_DOWN = "BreastDown"
    BREAST_SIDE = "BreastSide"

    @property
    def label(self) -> str:
        return {"BreastUp": "Breast Up", "BreastDown": "Breast Down", "BreastSide": "Breast Side"}[self.value]


POSE_CLASSES = (PoseClass.BREAST_UP, PoseClass.BREAST_DOWN, PoseClass.BREAST_SIDE)


def breast_angle(rotation: UnitQuaternion) -> float:
    """Angle between the object's breast axis (+z) and straight up (-z camera)."""
    breast = rot.to_matrix(rotation)[:, 2]
    return math.acos(max(-1.0, min(1.0, -float(breast[2]))))


def classify_pose(rotation: UnitQuaternion) -> PoseClass:
    a = breast_angle(rotation)
    if a < math.pi / 4:
        return PoseClass.BREAST_UP
    if a > 3 * math.pi / 4:
        return PoseClass.BREAST_DOWN
    return PoseClass.BREAST_SIDE


def _nominal(cls: PoseClass, rng: np.random.Generator) -> np.ndarray:
    """Camera-from-object rotation with the class's nominal breast direction."""
    if cls is PoseClass.BREAST_UP:
        # breast (+z obj) toward -z cam
        return np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, -1.0]])
    if cls is PoseClass.BREAST_DOWN:
        return np.eye(3)
    # lying on a flank: wing axis (+y obj) vertical, either side up
    side = 1.0 if rng.random() < 0.5 else -1.0
    return np.array([[1.0, 0, 0], [0, 0, -side], [0, side, 0]])


def sample_class_rotation(cls: PoseClass, rng: np.random.Generator, tilt: float = CLASS_TILT) -> UnitQuaternion:
    """Nominal class pose, a random heading about the vertical, then a tilt of up to ``tilt``."""
    base = _nominal(cls, rng)
    yaw = rng.uniform(-math.pi, math.pi)
    phi = rng.uniform(-math.pi, math.pi)
    axis = (math.cos(phi), math.sin(phi), 0.0)
    r_yaw = rot.to_matrix(UnitQuaternion.from_axis_angle((0.0, 0.0, 1.0), yaw))
    r_tilt = rot.to_matrix(UnitQuaternion.from_axis_angle(axis, rng.uniform(0.0, tilt)))
    return rot.from_matrix(r_tilt @ r_yaw @ base)


@dataclass(frozen=True)
class BinBounds:
    x: tuple[float, float] = (-0.45, 0.45)
    y: tuple[float, float] = (-0.45, 0.45)
    floor: float = 0.9  # camera-frame z of the bin floor; x and y span the camera footprint there


@dataclass(frozen=True)
class ObjectSpec:
    """Recipe for a bird-like object; the scene file stores these, not meshes."""

    seed: int
    alpha: float = 0.1
    scale: float = 1.0
    protrusions: bool = True

    def build(self) -> DeformableObject:
        return chicken(seed=self.seed, alpha=self.alpha, scale=self.scale, protrusions=self.protrusions)


@dataclass
class SceneObject:
    name: str
    spec: ObjectSpec
    pose: RigidTransform  # t_camera_object
    pose_class: PoseClass
    obj: DeformableObject = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.obj = self.spec.build()


@dataclass
class BinScene:
    objects: list[SceneObject]
    bounds: BinBounds = BinBounds()

    def posed(self) -> list[tuple[DeformableObject, RigidTransform]]:
        return [(o.obj, o.pose) for o in self.objects]

    def render(self, k: CameraIntrinsics = BIN_CAMERA) -> DepthImage:
        return render_scene_depth(self.posed(), k)

    def transform_tree(self) -> TransformTree:
        tree = TransformTree()
        tree.add_frame(CAMERA_FRAME)
        for o in self.objects:
            tree.add_edge(CAMERA_FRAME, o.name, o.pose)
        return tree

    def find(self, name: str) -> SceneObject:
        for o in self.objects:
            if o.name == name:
                return o
        raise KeyError(name)


def penetration(a: DeformableObject, pose_a: RigidTransform, b: DeformableObject, pose_b: RigidTransform,
                n: int = 2000) -> float:
    """Deepest radial penetration between two posed objects, 0 if they are apart.

    Surface samples of each object are tested against the other's radial
    signed distance; the depth reported is along the other object's radius,
    which is never smaller than the true Euclidean depth.
    """
    rel = invert(pose_b) @ pose_a
    if np.linalg.norm(rel.t) > a.bounding_radius + b.bounding_radius:
        return 0.0
    depth = 0.0
    for src, dst, t in ((a, b, rel), (b, a, invert(rel))):
        pts = t.apply(src.surface_points(n))
        depth = max(depth, float(np.max(-dst.signed(pts), initial=0.0)))
    return depth


def _resting_pose(obj: DeformableObject, q: UnitQuaternion, x: float, y: float, floor: float) -> RigidTransform:
    low = (obj.surface_points(2000) @ rot.to_matrix(q).T)[:, 2].max()
    return RigidTransform(q, (x, y, floor - float(low)))


def generate_scene(
    n: int,
    class_mix: Mapping[PoseClass, float],
    rng: np.random.Generator,
    bounds: BinBounds = BinBounds(),
    alpha: float = 0.1,
    protrusions: bool = True,
    max_rejections: int = MAX_REJECTIONS,
) -> BinScene:
    """``n`` objects resting on the floor, classes drawn from ``class_mix``."""
    if n < 1:
        raise ValueError("a scene needs at least one object")
    classes = [c for c in POSE_CLASSES if class_mix.get(c, 0.0) > 0]
    if not classes:
        raise ValueError("class_mix gives no weight to any pose class")
    w = np.array([class_mix[c] for c in classes], dtype=float)
    w /= w.sum()
    placed: list[SceneObject] = []
    rejections = 0
    while len(placed) < n:
        cls = classes[int(rng.choice(len(classes), p=w))]
        spec = ObjectSpec(seed=int(rng.integers(0, 2**31 - 1)), alpha=alpha, protrusions=protrusions)
        obj = spec.build()
        q = sample_class_rotation(cls, rng)
        rb = obj.bounding_radius
        lo_x, hi_x = bounds.x[0] + rb, bounds.x[1] - rb
        lo_y, hi_y = bounds.y[0] + rb, bounds.y[1] - rb
        if lo_x > hi_x or lo_y > hi_y:
            raise PlacementFailed("bin is narrower than one object")
        pose = _resting_pose(obj, q, rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y), bounds.floor)
        if all(penetration(obj, pose, o.obj, o.pose) <= GEN_PENETRATION for o in placed):
            placed.append(SceneObject(f"object{len(placed)}", spec, pose, cls))
            continue
        rejections += 1
        if rejections >= max_rejections:
            raise PlacementFailed(f"could not place {n} objects after {rejections} rejections")
    return BinScene(placed, bounds)


@dataclass(frozen=True)
class SuctionModel:
    cup_radius: float = 0.02  # m
    flatness_threshold: float = math.radians(25.0)  # max normal-cone half-angle
    v0: float = 5.0  # volts at full seal (zero gap)
    k: float = 500.0  # 1/m
    voltage_threshold: float = 2.5  # crossed once the gap is below 2 mm
    step: float = 0.001  # m per descent step
    approach: float = 0.05  # m, start height above the keypoint
    obstruction: float = 0.01  # m above the contact plane that counts as intrusion
    slip_margin: float = 0.8

    def __post_init__(self):
        if self.cup_radius <= 0 or self.step <= 0 or self.approach <= 0 or self.k <= 0:
            raise ValueError("cup radius, step, approach and k must be positive")
        if not self.flatness_threshold > 0:
            raise ValueError("flatness threshold must be positive")
        v_start = self.voltage(self.approach)
        if not v_start < self.voltage_threshold < self.v0:
            raise ValueError("voltage threshold must lie inside the descent's voltage range")

    def voltage(self, gap: float) -> float:
        return self.v0 / (1.0 + self.k * max(gap, 0.0))


def half_angle(points: np.ndarray, radius: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Normal-cone half-angle of a contact patch, with the fitted plane.

    The plane's tilt from horizontal plus a curvature term: a spherical cap
    of radius ``rho`` leaves least-squares residuals of about ``r^2 / 4 rho``,
    so ``atan(4 max|res| / r)`` approximates the rim normal's deviation
    ``r / rho``.
    """
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    n = vt[2]
    if n[2] > 0:
        n = -n  # face the camera
    tilt = math.atan2(math.hypot(n[0], n[1]), abs(float(n[2])))  # acos loses precision near level
    res = (points - c) @ n
    return tilt + math.atan(4.0 * float(np.abs(res).max()) / radius), c, n


@dataclass(frozen=True)
class Keypoint:
    pixel: tuple[int, int]
    score: float
    half_angle: float


def detect_keypoints(depth: DepthImage, k: CameraIntrinsics, cup: SuctionModel) -> list[Keypoint]:
    """Rank grid pixels by the flatness of the cup-sized patch around them.

    Candidates lie on a ``STRIDE`` grid; a candidate is dropped if its disc
    leaves the image, contains a pixel with no return, or spans a depth
    jump above ``JUMP`` between neighbouring pixels.
    """
    d = depth.data
    h, w = d.shape
    f = min(k.fx, k.fy)
    out = []
    for v in range(0, h, STRIDE):
        for u in range(0, w, STRIDE):
            z = d[v, u]
            if z <= 0:
                continue
            rp = cup.cup_radius * f / z
            ri = int(math.ceil(rp))
            if u - ri < 0 or v - ri < 0 or u + ri >= w or v + ri >= h:
                continue
            win = d[v - ri:v + ri + 1, u - ri:u + ri + 1]
            dv, du = np.mgrid[-ri:ri + 1, -ri:ri + 1]
            disc = du * du + dv * dv <= rp * rp
            if np.any(win[disc] <= 0):
                continue
            jx = np.abs(np.diff(win, axis=1)) * (disc[:, 1:] & disc[:, :-1])
            jy = np.abs(np.diff(win, axis=0)) * (disc[1:, :] & disc[:-1, :])
            if max(jx.max(initial=0.0), jy.max(initial=0.0)) > JUMP:
                continue
            zz = win[disc]
            uu = u + du[disc]
            vv = v + dv[disc]
            pts = np.stack([(uu - k.cx) * zz / k.fx, (vv - k.cy) * zz / k.fy, zz], axis=1)
            a, _, _ = half_angle(pts, cup.cup_radius)
            out.append(Keypoint((u, v), round(1.0 / (1.0 + a), 12), a))
    if not out:
        raise NoCandidates("no pixel has a clean cup-sized neighbourhood")
    # stable sort keeps raster order among equal scores
    return sorted(out, key=lambda kp: -kp.score)


def footprint(radius: float) -> np.ndarray:
    """49 lateral offsets: the centre plus three rings of 16."""
    pts = [(0.0, 0.0)]
    for ring in (1, 2, 3):
        r = radius * ring / 3.0
        for j in range(16):
            a = 2.0 * math.pi * j / 16
            pts.append((r * math.cos(a), r * math.sin(a)))
    return np.array(pts)


def surface_below(scene: BinScene, xy: np.ndarray, z_top: float) -> tuple[np.ndarray, np.ndarray]:
    """Camera-frame z of the first surface under each ``(x, y)`` and the object index hit."""
    origins = np.column_stack([xy, np.full(len(xy), z_top)])
    dirs = np.tile([0.0, 0.0, 1.0], (len(xy), 1))
    best = np.full(len(xy), np.inf)
    which = np.full(len(xy), -1)
    for i, (obj, pose) in enumerate(scene.posed()):
        t = cast_rays(obj, pose, origins, dirs)
        closer = t < best
        best[closer] = t[closer]
        which[closer] = i
    return z_top + best, which


class Cause(enum.Enum):
    NONE = "none"
    NOT_FLAT = "not-flat"
    OBSTRUCTED = "obstructed"
    SLIPPED = "slipped"


@dataclass
class Descent:
    voltages: list[float]
    seal: bool
    cause: Cause
    half_angle: float
    contact: np.ndarray | None  # cup position at the threshold crossing
    object_index: int


def simulate_descent(scene: BinScene, keypoint: Sequence[float], cup: SuctionModel) -> Descent:
    """Lower the cup straight down over ``keypoint`` until the voltage trips.

    The cup's lip is the ring of footprint points; the gap is the distance
    from the lip plane to the highest surface point under the footprint.
    """
    p = np.asarray(keypoint, dtype=float)
    offs = footprint(cup.cup_radius)
    z_start = p[2] - cup.approach
    zs, which = surface_below(scene, p[:2] + offs, z_start - 0.1)
    hit = np.isfinite(zs)
    voltages = []
    if not hit.any():
        z = z_start
        for _ in range(int(round(2 * cup.approach / cup.step))):
            voltages.append(0.0)
            z += cup.step
        return Descent(voltages, False, Cause.NOT_FLAT, math.pi / 2, None, -1)

    top = float(zs[hit].min())
    z = z_start
    contact = None
    n_max = int(math.ceil((top - z_start) / cup.step)) + 1
    for _ in range(max(n_max, 1)):
        v = cup.voltage(top - z)
        voltages.append(v)
        if v >= cup.voltage_threshold:
            contact = np.array([p[0], p[1], z])
            break
        z += cup.step
    obj_index = int(which[0]) if which[0] >= 0 else int(np.bincount(which[hit]).argmax())

    if not hit.all():
        return Descent(voltages, False, Cause.NOT_FLAT, math.pi / 2, contact, obj_index)
    pts = np.column_stack([p[:2] + offs, zs])
    a, _, _ = half_angle(pts, cup.cup_radius)
    # intrusion test against the plane through the inner patch
    inner = pts[:17]
    _, c, n = half_angle(inner, cup.cup_radius / 3.0)
    rise = (pts - c) @ n
    crossed = contact is not None
    if not crossed:
        cause = Cause.NOT_FLAT
    elif rise.max() > cup.obstruction:
        cause = Cause.OBSTRUCTED
    elif a > cup.flatness_threshold:
        cause = Cause.NOT_FLAT
    else:
        cause = Cause.NONE
    return Descent(voltages, cause is Cause.NONE, cause, a, contact, obj_index)


@dataclass
class PickAttempt:
    pixel: tuple[int, int]
    point: tuple[float, float, float]
    score: float
    seal: bool
    success: bool
    cause: Cause
    half_angle: float
    voltages: list[float]
    object_name: str | None = None
    t_cup_object: RigidTransform | None = None


def execute_pick(
    scene: BinScene,
    keypoints: Sequence[Keypoint],
    cup: SuctionModel,
    k: CameraIntrinsics = BIN_CAMERA,
    depth: DepthImage | None = None,
    tree: TransformTree | None = None,
) -> PickAttempt:
    """Try the top keypoint. On success the object leaves the scene and is
    re-parented under the cup frame in ``tree``."""
    if not keypoints:
        raise NoCandidates("no keypoints to attempt")
    if depth is None:
        depth = scene.render(k)
    kp = keypoints[0]
    u, v = kp.pixel
    point = deproject((u, v), float(depth.data[v, u]), k)
    desc = simulate_descent(scene, point, cup)
    success = desc.seal
    cause = desc.cause
    if success and desc.half_angle > cup.slip_margin * cup.flatness_threshold:
        success = False
        cause = Cause.SLIPPED
    attempt = PickAttempt((u, v), tuple(float(c) for c in point), kp.score, desc.seal, success, cause,
                          desc.half_angle, desc.voltages)
    if desc.object_index >= 0:
        attempt.object_name = scene.objects[desc.object_index].name
    if success:
        held = scene.objects.pop(desc.object_index)
        if tree is None:
            tree = TransformTree()
            tree.add_frame(CAMERA_FRAME)
        t_camera_cup = RigidTransform.from_translation(desc.contact)
        tree.attach(CAMERA_FRAME, CUP_FRAME, t_camera_cup)
        if held.name in tree:
            parent = tree.parent(held.name)
            if parent is not None:
                tree.remove_edge(parent, held.name)
        t_cup_object = invert(t_camera_cup) @ held.pose
        tree.add_edge(CUP_FRAME, held.name, t_cup_object)
        attempt.t_cup_object = t_cup_object
    return attempt


# canonical pose: neck (+x obj) up, breast (+z obj) facing +y camera
CANONICAL = RigidTransform(
    rot.from_matrix(np.array([[0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0]])),
    (0.0, 0.0, 0.5),
)


@dataclass(frozen=True)
class PlacementResult:
    estimated: RigidTransform
    true_pose: RigidTransform
    final_pose: RigidTransform
    estimation_error: float  # rad
    error: float  # rad, final orientation vs canonical
    success: bool


def evaluate_placement(
    estimated: RigidTransform,
    true_pose: RigidTransform,
    t_wrist_object_true: RigidTransform,
    canonical: RigidTransform,
    tolerance: float,
) -> PlacementResult:
    """Score the canonical placement commanded from an estimated pose.

    The grasp offset the robot believes in comes from the estimate and the
    (known) wrist pose at estimation time; the goal is computed from it, and
    the object ends up wherever the true grasp offset carries it.
    """
    t_camera_wrist = true_pose @ invert(t_wrist_object_true)
    t_wrist_object_est = invert(t_camera_wrist) @ estimated
    goal = canonical_goal(estimated, t_wrist_object_est, canonical)
    final = goal @ t_wrist_object_true
    err = rot.geodesic_distance(final.rotation, canonical.rotation)
    est_err = rot.geodesic_distance(estimated.rotation, true_pose.rotation)
    return PlacementResult(estimated, true_pose, final, est_err, err, err <= tolerance)


# scene files

def write_scene(scene: BinScene, path) -> None:
    b = scene.bounds
    lines = ["SCENE v1", f"bounds {b.x[0]!r} {b.x[1]!r} {b.y[0]!r} {b.y[1]!r} {b.floor!r}"]
    for o in scene.objects:
        s = o.spec
        lines.append(f"object {o.name} class {o.pose_class.value} seed {s.seed} alpha {s.alpha!r} "
                     f"scale {s.scale!r} protrusions {int(s.protrusions)}")
    for o in scene.objects:
        lines.append(format_transform_line(CAMERA_FRAME, o.name, o.pose))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def read_scene(path) -> BinScene:
    with open(path, encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0] != "SCENE v1":
        raise ValueError("not a SCENE v1 file")
    bounds = BinBounds()
    specs: dict[str, tuple[ObjectSpec, PoseClass]] = {}
    order: list[str] = []
    poses: dict[str, RigidTransform] = {}
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "bounds":
            x0, x1, y0, y1, fl = (float(v) for v in parts[1:6])
            bounds = BinBounds((x0, x1), (y0, y1), fl)
        elif parts[0] == "object":
            name = parts[1]
            kv = dict(zip(parts[2::2], parts[3::2]))
            spec = ObjectSpec(int(kv["seed"]), float(kv["alpha"]), float(kv["scale"]), bool(int(kv["protrusions"])))
            specs[name] = (spec, PoseClass(kv["class"]))
            order.append(name)
        else:
            parent, child, t = parse_transform_line(ln)
            if parent != CAMERA_FRAME:
                raise ValueError(f"scene poses must be relative to {CAMERA_FRAME!r}, got {parent!r}")
            poses[child] = t
    missing = [n for n in order if n not in poses]
    if missing:
        raise ValueError(f"objects without a pose: {missing}")
    return BinScene([SceneObject(n, specs[n][0], poses[n], specs[n][1]) for n in order], bounds)
