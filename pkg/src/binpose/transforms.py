"""Rigid transforms, a named-frame transform tree, and the pose chains.

A ``RigidTransform`` named ``t_a_b`` maps coordinates in frame ``b`` into frame
``a`` (``p_a = R p_b + t``). Tree edges are stored the same way: the edge
``(parent, child)`` holds ``t_parent_child``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import rotations as rot
from .errors import CycleDetected, Disconnected, DuplicateChild, UnknownFrame
from .rotations import UnitQuaternion


@dataclass(frozen=True)
class RigidTransform:
    rotation: UnitQuaternion = field(default_factory=UnitQuaternion.identity)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(c) for c in self.translation)
        if len(t) != 3 or not all(math.isfinite(c) for c in t):
            raise ValueError(f"translation must be 3 finite values, got {self.translation!r}")
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls(rot.from_matrix(m[:3, :3]), tuple(m[:3, 3]))

    @classmethod
    def from_translation(cls, t) -> "RigidTransform":
        return cls(UnitQuaternion.identity(), tuple(t))

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation)

    @property
    def R(self) -> np.ndarray:
        return rot.to_matrix(self.rotation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        """Map a point or ``(n, 3)`` points from the child frame to the parent frame."""
        return np.asarray(points, dtype=float) @ self.R.T + self.t

    def inverse(self) -> "RigidTransform":
        return invert(self)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``a @ b``: ``(R_a R_b, R_a t_b + t_a)``."""
    return RigidTransform(rot.multiply(a.rotation, b.rotation), tuple(a.R @ b.t + a.t))


def invert(t: RigidTransform) -> RigidTransform:
    r_inv = rot.inverse(t.rotation)
    return RigidTransform(r_inv, tuple(-(rot.to_matrix(r_inv) @ t.t)))


def compose_all(transforms: Iterable[RigidTransform]) -> RigidTransform:
    out = RigidTransform.identity()
    for t in transforms:
        out = compose(out, t)
    return out


def transform_distance(a: RigidTransform, b: RigidTransform) -> tuple[float, float]:
    """(geodesic rotation error in rad, translation error in m)."""
    return rot.geodesic_distance(a.rotation, b.rotation), float(np.linalg.norm(a.t - b.t))


def calibrate_camera(
    t_base_wrist: RigidTransform,
    t_wrist_aruco: RigidTransform,
    t_aruco_camera: RigidTransform,
) -> RigidTransform:
    """Camera extrinsics from the marker chain base -> wrist -> tag -> camera.

    ``t_aruco_camera`` is the inverse of the tag pose detected in the camera.
    """
    return compose(compose(t_base_wrist, t_wrist_aruco), t_aruco_camera)


def label_object_pose(
    t_base_camera: RigidTransform,
    t_base_wrist: RigidTransform,
    t_wrist_object: RigidTransform,
) -> RigidTransform:
    """Object pose in the camera frame for an object rigidly held by the arm."""
    return compose(compose(invert(t_base_camera), t_base_wrist), t_wrist_object)


def canonical_goal(
    t_base_object_now: RigidTransform,
    t_wrist_object: RigidTransform,
    t_base_object_canonical: RigidTransform,
) -> RigidTransform:
    """Wrist goal that puts a held object at its canonical pose.

    The held object acts as the end effector, so the goal solves
    ``goal @ t_wrist_object == t_base_object_canonical``. The current object
    pose does not enter the solution; it is accepted so callers can pass the
    full grasp state.
    """
    del t_base_object_now
    return compose(t_base_object_canonical, invert(t_wrist_object))


class TransformTree:
    """A forest of named frames joined by rigid transforms.

    Each frame has at most one parent. Lookups walk the unique path through
    the lowest common ancestor.
    """

    def __init__(self):
        self._parent: dict[str, str] = {}
        self._edge: dict[str, RigidTransform] = {}
        self._frames: set[str] = set()

    def __contains__(self, frame: str) -> bool:
        return frame in self._frames

    def __iter__(self) -> Iterator[tuple[str, str, RigidTransform]]:
        for child in sorted(self._parent):
            yield self._parent[child], child, self._edge[child]

    @property
    def frames(self) -> list[str]:
        return sorted(self._frames)

    def add_frame(self, frame: str) -> None:
        _check_name(frame)
        self._frames.add(frame)

    def parent(self, frame: str) -> str | None:
        self._require(frame)
        return self._parent.get(frame)

    def root(self, frame: str) -> str:
        while frame in self._parent:
            frame = self._parent[frame]
        return frame

    def add_edge(self, parent: str, child: str, t: RigidTransform) -> "TransformTree":
        _check_name(parent)
        _check_name(child)
        if child in self._parent:
            raise DuplicateChild(f"frame {child!r} already has parent {self._parent[child]!r}")
        if parent == child or (parent in self._frames and child in self._frames
                               and self.root(parent) == child):
            raise CycleDetected(f"adding {parent!r} -> {child!r} would create a cycle")
        self._frames.update((parent, child))
        self._parent[child] = parent
        self._edge[child] = t
        return self

    def replace_edge(self, parent: str, child: str, t: RigidTransform) -> "TransformTree":
        """Swap the transform of an existing edge, e.g. after a re-grasp."""
        if self._parent.get(child) != parent:
            raise UnknownFrame(f"no edge {parent!r} -> {child!r}")
        self._edge[child] = t
        return self

    def remove_edge(self, parent: str, child: str) -> RigidTransform:
        if self._parent.get(child) != parent:
            raise UnknownFrame(f"no edge {parent!r} -> {child!r}")
        del self._parent[child]
        return self._edge.pop(child)

    def attach(self, parent: str, child: str, t: RigidTransform) -> "TransformTree":
        """Add ``parent -> child``, or replace it if ``child`` already hangs there."""
        if self._parent.get(child) == parent:
            return self.replace_edge(parent, child, t)
        return self.add_edge(parent, child, t)

    def lookup(self, source: str, target: str) -> RigidTransform:
        """``t_source_target``: pose of ``target`` expressed in ``source``."""
        self._require(source)
        self._require(target)
        if source == target:
            return RigidTransform.identity()
        up_s = self._chain(source)
        up_t = self._chain(target)
        if up_s[-1] != up_t[-1]:
            raise Disconnected(f"{source!r} and {target!r} are in different trees")
        ancestors_t = set(up_t)
        lca = next(f for f in up_s if f in ancestors_t)
        return compose(invert(self._from_ancestor(lca, source)),
                       self._from_ancestor(lca, target))

    def _require(self, frame: str) -> None:
        if frame not in self._frames:
            raise UnknownFrame(f"unknown frame {frame!r}")

    def _chain(self, frame: str) -> list[str]:
        out = [frame]
        while frame in self._parent:
            frame = self._parent[frame]
            out.append(frame)
        return out

    def _from_ancestor(self, ancestor: str, frame: str) -> RigidTransform:
        edges = []
        while frame != ancestor:
            edges.append(self._edge[frame])
            frame = self._parent[frame]
        return compose_all(reversed(edges))


def _check_name(frame: str) -> None:
    if not isinstance(frame, str) or not frame or any(c.isspace() for c in frame):
        raise ValueError(f"frame names must be non-empty and whitespace-free, got {frame!r}")


# text format: "parent child w x y z tx ty tz"

def format_transform_line(parent: str, child: str, t: RigidTransform) -> str:
    nums = list(t.rotation.as_array()) + list(t.translation)
    return " ".join([parent, child] + [format(v, ".17g") for v in nums])


def parse_transform_line(line: str) -> tuple[str, str, RigidTransform]:
    parts = line.split()
    if len(parts) != 9:
        raise ValueError(f"transform line needs 9 fields, got {len(parts)}: {line!r}")
    vals = [float(p) for p in parts[2:]]
    return parts[0], parts[1], RigidTransform(UnitQuaternion.from_array(vals[:4]), tuple(vals[4:]))


def read_transforms(path) -> list[tuple[str, str, RigidTransform]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if line:
                out.append(parse_transform_line(line))
    return out


def write_transforms(path, edges: Iterable[tuple[str, str, RigidTransform]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for parent, child, t in edges:
            f.write(format_transform_line(parent, child, t) + "\n")


def tree_from_edges(edges: Iterable[tuple[str, str, RigidTransform]]) -> TransformTree:
    tree = TransformTree()
    for parent, child, t in edges:
        tree.add_edge(parent, child, t)
    return tree


def random_transform(rng: np.random.Generator, scale: float = 1.0) -> RigidTransform:
    return RigidTransform(rot.sample_uniform(rng), tuple(rng.uniform(-scale, scale, 3)))
