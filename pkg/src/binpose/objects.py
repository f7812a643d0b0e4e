"""Star-shaped deformable objects and ray casting against them.

The surface is described by its radius along each unit direction ``u`` in the
object frame::

    R(u) = R_se(u) * (1 + alpha * field(u)) + sum_k size_k * mesa_k(u)

``R_se`` is the radius of a superellipsoid with semi-axes ``(a, b, c)`` and
exponents ``(e1, e2)``. ``field`` is a smooth seeded perturbation in
``[-1, 1]`` (a seeded sum of cubic ridge functions ``p_k(u . d_k)``), and each
``mesa_k`` is a plateau-shaped bump used for wings and legs. Because the
base function is homogeneous, ``R_se`` has the closed form
``F(u) ** (-e1 / 2)`` with ``F`` the usual inside-outside function.

Object frame: +x runs tail to neck, +z points out of the breast, +y completes
the right-handed frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

from .lattice import fibonacci_sphere

MESA_EDGE = 0.25
N_COARSE = 64
HIT_TOL = 1e-6


N_RIDGES = 6


def _ridge_sum(p: np.ndarray, coef: np.ndarray) -> np.ndarray:
    # sum_k p_k * (c1_k + p_k * (c2_k + p_k * c3_k)) for projections p = u . d_k
    return (((p * coef[2] + coef[1]) * p + coef[0]) * p).sum(axis=-1)


@dataclass(frozen=True)
class Protrusion:
    direction: tuple[float, float, float]
    size: float  # radial height, meters
    width: float  # angular radius, radians

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if n == 0 or self.size < 0 or not 0 < self.width < math.pi:
            raise ValueError(f"invalid protrusion {self!r}")
        object.__setattr__(self, "direction", tuple(float(c) for c in d / n))


@dataclass(frozen=True)
class DeformableObject:
    axes: tuple[float, float, float] = (0.11, 0.08, 0.065)
    exponents: tuple[float, float] = (0.5, 0.5)
    alpha: float = 0.0
    seed: int = 0
    protrusions: tuple[Protrusion, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if min(self.axes) <= 0 or min(self.exponents) <= 0:
            raise ValueError("axes and exponents must be positive")
        if not 0.0 <= self.alpha <= 0.3:
            raise ValueError("deformation amplitude must lie in [0, 0.3]")
        object.__setattr__(self, "axes", tuple(float(v) for v in self.axes))
        object.__setattr__(self, "exponents", tuple(float(v) for v in self.exponents))
        object.__setattr__(self, "protrusions", tuple(self.protrusions))

    @classmethod
    def sphere(cls, radius: float = 1.0) -> "DeformableObject":
        return cls(axes=(radius, radius, radius), exponents=(1.0, 1.0))

    @cached_property
    def _ridges(self):
        rng = np.random.default_rng(self.seed)
        dirs = rng.standard_normal((N_RIDGES, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        coef = rng.standard_normal((3, N_RIDGES)) / np.array([[1.0], [2.0], [3.0]])
        u = fibonacci_sphere(4000)
        peak = np.abs(_ridge_sum(u @ dirs.T, coef)).max()
        return dirs.T.copy(), coef / peak

    def base_radius(self, u: np.ndarray) -> np.ndarray:
        a, b, c = self.axes
        e1, e2 = self.exponents
        xy = np.abs(u[..., 0] / a) ** (2.0 / e2) + np.abs(u[..., 1] / b) ** (2.0 / e2)
        f = xy ** (e2 / e1) + np.abs(u[..., 2] / c) ** (2.0 / e1)
        return f ** (-e1 / 2.0)

    def field(self, u: np.ndarray) -> np.ndarray:
        """Seeded cubic polynomial on the sphere, scaled to peak at 1."""
        dirs_t, coef = self._ridges
        return np.clip(_ridge_sum(u @ dirs_t, coef), -1.0, 1.0)

    @cached_property
    def _mesa(self):
        if not self.protrusions:
            return None
        dirs = np.array([p.direction for p in self.protrusions])
        cw = np.cos([p.width for p in self.protrusions])
        sizes = np.array([p.size for p in self.protrusions])
        return dirs.T, cw, 1.0 / ((1.0 - cw) * MESA_EDGE), sizes

    def radius(self, u) -> np.ndarray:
        """Surface radius along unit direction(s) ``u`` (shape ``(..., 3)``)."""
        u = np.asarray(u, dtype=float)
        r = self.base_radius(u)
        if self.alpha:
            r = r * (1.0 + self.alpha * self.field(u))
        if self._mesa is not None:
            dirs_t, cw, inv, sizes = self._mesa
            t = np.clip((u @ dirs_t - cw) * inv, 0.0, 1.0)
            r = r + (t * t * (3.0 - 2.0 * t)) @ sizes
        return r

    def signed(self, p) -> np.ndarray:
        """Radial signed distance: negative inside, zero on the surface."""
        p = np.asarray(p, dtype=float)
        n = np.linalg.norm(p, axis=-1)
        safe = np.where(n > 0, n, 1.0)
        u = p / safe[..., None]
        u = np.where((n > 0)[..., None], u, np.array([0.0, 0.0, 1.0]))
        return n - self.radius(u)

    @cached_property
    def bounding_radius(self) -> float:
        u = fibonacci_sphere(20000)
        return float(1.03 * self.radius(u).max() + 1e-3)

    @cached_property
    def bounding_slabs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Slab normals and their ``(lo, hi)`` extents enclosing the surface.

        The axes, cube diagonals and edge diagonals give a 26-sided bound, tighter
        than the bounding sphere for the rounded-box bodies used here. Extents
        come from dense surface samples widened by a margin, like
        :attr:`bounding_radius`.
        """
        normals = np.array([
            [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
            [1.0, 1.0, 1.0], [1.0, 1.0, -1.0], [1.0, -1.0, 1.0], [-1.0, 1.0, 1.0],
            [1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 0.0, 1.0], [1.0, 0.0, -1.0],
            [0.0, 1.0, 1.0], [0.0, 1.0, -1.0],
        ])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        proj = self.surface_points(20000) @ normals.T
        margin = 0.03 * self.bounding_radius / 1.03 + 1e-3
        return normals, proj.min(axis=0) - margin, proj.max(axis=0) + margin

    def surface_points(self, n: int) -> np.ndarray:
        u = fibonacci_sphere(n)
        return u * self.radius(u)[:, None]

    @cached_property
    def _kernel_params(self):
        dirs_t, coef = self._ridges
        if self._mesa is None:
            mesa = (np.zeros((3, 0)), np.zeros(0), np.zeros(0), np.zeros(0))
        else:
            mesa = self._mesa
        return (
            1.0 / np.array(self.axes), np.array(self.exponents), float(self.alpha),
            np.ascontiguousarray(dirs_t), np.ascontiguousarray(coef),
            np.ascontiguousarray(mesa[0]), mesa[1], mesa[2], mesa[3],
        )

    def intersect(self, origins, dirs) -> np.ndarray:
        """Distance along each ray to the first surface hit, ``inf`` on a miss.

        Rays are in the object frame and ``dirs`` must be unit length. A
        64-step march over the chord through the bounding sphere and slabs
        brackets the first crossing; bisection then refines it to ``HIT_TOL``.
        """
        o = np.atleast_2d(np.asarray(origins, dtype=float))
        d = np.atleast_2d(np.asarray(dirs, dtype=float))
        o, d = np.broadcast_arrays(o, d)
        return _intersect_kernel(
            np.ascontiguousarray(o), np.ascontiguousarray(d),
            self.bounding_radius, *self.bounding_slabs, *self._kernel_params,
        )


@njit(cache=True, inline="always")
def _base_at(ux, uy, uz, inv_axes, exps):
    ax = abs(ux * inv_axes[0])
    ay = abs(uy * inv_axes[1])
    az = abs(uz * inv_axes[2])
    if exps[0] == 0.5 and exps[1] == 0.5:
        # the stock rounded-box shape: all powers reduce to squares and square roots
        ax *= ax
        ay *= ay
        az *= az
        r = 1.0 / math.sqrt(math.sqrt(ax * ax + ay * ay + az * az))
    elif exps[0] == 1.0 and exps[1] == 1.0:
        r = 1.0 / math.sqrt(ax * ax + ay * ay + az * az)
    else:
        e1 = exps[0]
        e2 = exps[1]
        xy = ax ** (2.0 / e2) + ay ** (2.0 / e2)
        r = (xy ** (e2 / e1) + az ** (2.0 / e1)) ** (-e1 / 2.0)
    return r


@njit(cache=True, inline="always")
def _detail_at(r, ux, uy, uz, alpha, rdirs, rcoef, mdirs, mcw, minv, msize):
    if alpha != 0.0:
        s = 0.0
        for k in range(rdirs.shape[1]):
            p = ux * rdirs[0, k] + uy * rdirs[1, k] + uz * rdirs[2, k]
            s += ((p * rcoef[2, k] + rcoef[1, k]) * p + rcoef[0, k]) * p
        s = min(1.0, max(-1.0, s))
        r = r * (1.0 + alpha * s)
    for k in range(mdirs.shape[1]):
        t = (ux * mdirs[0, k] + uy * mdirs[1, k] + uz * mdirs[2, k] - mcw[k]) * minv[k]
        if t > 0.0:
            t = min(1.0, t)
            r += msize[k] * (t * t * (3.0 - 2.0 * t))
    return r


@njit(cache=True, inline="always")
def _inside(px, py, pz, inv_axes, exps, alpha, rdirs, rcoef, mdirs, mcw, minv, msize):
    n2 = px * px + py * py + pz * pz
    if n2 == 0.0:
        return True
    n = math.sqrt(n2)
    inv = 1.0 / n
    ux = px * inv
    uy = py * inv
    uz = pz * inv
    r = _detail_at(_base_at(ux, uy, uz, inv_axes, exps), ux, uy, uz, alpha, rdirs, rcoef, mdirs, mcw, minv, msize)
    return n <= r


@njit(cache=True)
def _intersect_kernel(o, d, rb, normals, lo_s, hi_s, inv_axes, exps, alpha, rdirs, rcoef, mdirs, mcw, minv, msize):
    m = o.shape[0]
    out = np.full(m, np.inf)
    for i in range(m):
        ox, oy, oz = o[i, 0], o[i, 1], o[i, 2]
        dx, dy, dz = d[i, 0], d[i, 1], d[i, 2]
        b = ox * dx + oy * dy + oz * dz
        c = ox * ox + oy * oy + oz * oz - rb * rb
        disc = b * b - c
        if disc <= 0.0:
            continue
        sq = math.sqrt(disc)
        t_far = -b + sq
        if t_far <= 0.0:
            continue
        t0 = max(-b - sq, 0.0)
        # clip the chord to the bounding slabs
        for a in range(normals.shape[0]):
            na = normals[a, 0] * ox + normals[a, 1] * oy + normals[a, 2] * oz
            da = normals[a, 0] * dx + normals[a, 1] * dy + normals[a, 2] * dz
            if da != 0.0:
                ta = (lo_s[a] - na) / da
                tb = (hi_s[a] - na) / da
                if ta > tb:
                    ta, tb = tb, ta
                t0 = max(t0, ta)
                t_far = min(t_far, tb)
            elif na < lo_s[a] or na > hi_s[a]:
                t_far = -1.0
        if t_far <= t0:
            continue
        span = t_far - t0
        prev = t0
        for j in range(N_COARSE + 1):
            t = t0 + span * (j / N_COARSE)
            if _inside(ox + t * dx, oy + t * dy, oz + t * dz,
                       inv_axes, exps, alpha, rdirs, rcoef, mdirs, mcw, minv, msize):
                if j == 0:
                    out[i] = t0
                    break
                lo = prev
                hi = t
                while hi - lo > HIT_TOL:
                    mid = 0.5 * (lo + hi)
                    if _inside(ox + mid * dx, oy + mid * dy, oz + mid * dz,
                               inv_axes, exps, alpha, rdirs, rcoef, mdirs, mcw, minv, msize):
                        hi = mid
                    else:
                        lo = mid
                out[i] = 0.5 * (lo + hi)
                break
            prev = t
    return out


def chicken(
    seed: int = 0,
    alpha: float = 0.1,
    scale: float = 1.0,
    protrusions: bool = True,
) -> DeformableObject:
    """A whole-bird stand-in: rounded box body, wings on the flanks, drumsticks
    raised at the tail end on the breast side, and a short neck stub."""
    parts = ()
    if protrusions:
        parts = (
            Protrusion((0.15, 1.0, -0.25), 0.022 * scale, 0.38),
            Protrusion((0.15, -1.0, -0.25), 0.022 * scale, 0.38),
            Protrusion((-0.8, 0.38, 0.55), 0.035 * scale, 0.30),
            Protrusion((-0.8, -0.38, 0.55), 0.035 * scale, 0.30),
            Protrusion((1.0, 0.0, -0.2), 0.02 * scale, 0.28),
        )
    return DeformableObject(
        axes=(0.11 * scale, 0.08 * scale, 0.065 * scale),
        exponents=(0.5, 0.5),
        alpha=alpha,
        seed=seed,
        protrusions=parts,
    )
