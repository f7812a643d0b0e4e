"""Hand-specified depth descriptor and the augmentation pipeline.

The descriptor stands in for a learned encoder: any callable mapping a
``DepthImage`` crop to a unit vector can be passed wherever ``embed`` is
expected.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .camera import DepthImage
from .errors import EmptyImage

BACKGROUND_MODES = ("zero", "random-plane", "random-clutter")
MIN_VALID = 16


@dataclass(frozen=True)
class DepthDescriptor:
    """Block means of z-scored depth plus a magnitude-weighted orientation histogram.

    The two parts are L2-normalized separately, concatenated, and normalized
    again. For a 128x128 crop the defaults give 16*16 + 4*4*8 = 384 values.
    """

    grid: int = 16
    cells: int = 4
    bins: int = 8

    @property
    def dim(self) -> int:
        return self.grid * self.grid + self.cells * self.cells * self.bins

    def __call__(self, image: DepthImage) -> np.ndarray:
        d = image.data
        h, w = d.shape
        if h % self.grid or w % self.grid or h % self.cells or w % self.cells:
            raise ValueError(f"crop size {w}x{h} does not divide into the descriptor grids")
        valid = d > 0
        n = int(valid.sum())
        if n < MIN_VALID:
            raise EmptyImage(f"only {n} valid pixels, need {MIN_VALID}")

        vals = d[valid]
        mu = vals.mean()
        sd = vals.std()
        z = np.zeros_like(d)
        if sd > 0:
            z[valid] = (vals - mu) / sd

        g = self.grid
        sums = z.reshape(g, h // g, g, w // g).sum(axis=(1, 3))
        counts = valid.reshape(g, h // g, g, w // g).sum(axis=(1, 3))
        blocks = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)

        # central differences over the whole crop; background sits at 0, so
        # silhouette edges contribute alongside the surface relief
        gx = np.zeros_like(z)
        gy = np.zeros_like(z)
        gx[:, 1:-1] = 0.5 * (z[:, 2:] - z[:, :-2])
        gy[1:-1, :] = 0.5 * (z[2:, :] - z[:-2, :])
        mag = np.hypot(gx, gy)
        ang = np.arctan2(gy, gx)
        b = np.floor((ang + math.pi) * (self.bins / (2.0 * math.pi))).astype(int) % self.bins
        c = self.cells
        rows = np.arange(h) * c // h
        cols = np.arange(w) * c // w
        cell = rows[:, None] * c + cols[None, :]
        hist = np.bincount((cell * self.bins + b).ravel(), weights=mag.ravel(),
                           minlength=c * c * self.bins)

        # each part is normalized on its own so both carry equal weight
        parts = []
        for part in (blocks.ravel(), hist):
            pn = np.linalg.norm(part)
            parts.append(part / pn if pn > 0 else part)
        v = np.concatenate(parts)
        norm = np.linalg.norm(v)
        if norm == 0:
            # constant depth over the whole crop: no features, fall back to a fixed direction
            v[0] = 1.0
            return v
        return v / norm


DEFAULT_DESCRIPTOR = DepthDescriptor()


def embed(image: DepthImage) -> np.ndarray:
    return DEFAULT_DESCRIPTOR(image)


@dataclass(frozen=True)
class AugmentationConfig:
    translation_jitter: int = 4  # pixels
    scale_range: tuple[float, float] = (0.95, 1.05)
    occlusion_patches: int = 2
    occlusion_max_side: int = 12  # pixels
    occlusion_min_side: int = 1
    depth_noise_sigma: float = 0.005  # meters
    background_mode: str = "zero"

    def __post_init__(self):
        lo, hi = self.scale_range
        object.__setattr__(self, "scale_range", (float(lo), float(hi)))
        if not (0 < lo <= 1.0 <= hi):
            raise ValueError("scale_range must satisfy 0 < min <= 1 <= max")
        if min(self.translation_jitter, self.occlusion_patches, self.occlusion_max_side,
               self.depth_noise_sigma) < 0:
            raise ValueError("augmentation magnitudes must be non-negative")
        if self.occlusion_patches and not 1 <= self.occlusion_min_side <= self.occlusion_max_side:
            raise ValueError("need 1 <= occlusion_min_side <= occlusion_max_side")
        if self.background_mode not in BACKGROUND_MODES:
            raise ValueError(f"background_mode must be one of {BACKGROUND_MODES}")

    @classmethod
    def none(cls) -> "AugmentationConfig":
        return cls(0, (1.0, 1.0), 0, 0, 1, 0.0, "zero")

    def to_dict(self) -> dict:
        return asdict(self)


def _shift(d: np.ndarray, du: int, dv: int) -> np.ndarray:
    out = np.zeros_like(d)
    h, w = d.shape
    src = d[max(0, -dv):h - max(0, dv), max(0, -du):w - max(0, du)]
    out[max(0, dv):max(0, dv) + src.shape[0], max(0, du):max(0, du) + src.shape[1]] = src
    return out


def _rescale(d: np.ndarray, s: float) -> np.ndarray:
    h, w = d.shape
    cu, cv = (w - 1) / 2.0, (h - 1) / 2.0
    su = np.floor((np.arange(w) - cu) / s + cu + 0.5).astype(int)
    sv = np.floor((np.arange(h) - cv) / s + cv + 0.5).astype(int)
    ok = ((sv >= 0) & (sv < h))[:, None] & ((su >= 0) & (su < w))[None, :]
    out = d[np.clip(sv, 0, h - 1)][:, np.clip(su, 0, w - 1)]
    return np.where(ok, out, 0.0)


def _background(d: np.ndarray, mode: str, rng: np.random.Generator) -> np.ndarray:
    h, w = d.shape
    valid = d > 0
    far = d[valid].max() if valid.any() else 1.0
    v, u = np.mgrid[0:h, 0:w].astype(float)
    base = far + rng.uniform(0.02, 0.15)
    slope = rng.uniform(-1e-3, 1e-3, 2)
    bg = base + slope[0] * (u - w / 2.0) + slope[1] * (v - h / 2.0)
    if mode == "random-clutter":
        for _ in range(int(rng.integers(3, 9))):
            side_u, side_v = rng.integers(6, max(7, w // 3), 2)
            u0 = int(rng.integers(0, w - side_u + 1))
            v0 = int(rng.integers(0, h - side_v + 1))
            bg[v0:v0 + side_v, u0:u0 + side_u] -= rng.uniform(0.0, 0.05)
    bg = np.maximum(bg, 1e-3)
    return np.where(valid, d, bg)


def augment(image: DepthImage, cfg: AugmentationConfig, rng: np.random.Generator) -> DepthImage:
    """Translate, rescale, occlude, add depth noise, then fill the background.

    Depth noise plays the role colour jitter has for RGB input.
    """
    d = image.data.copy()
    h, w = d.shape
    j = cfg.translation_jitter
    if j > 0:
        du, dv = (int(x) for x in rng.integers(-j, j + 1, 2))
        d = _shift(d, du, dv)
    lo, hi = cfg.scale_range
    if hi > lo:
        d = _rescale(d, float(rng.uniform(lo, hi)))
    for _ in range(cfg.occlusion_patches):
        side = int(rng.integers(cfg.occlusion_min_side, cfg.occlusion_max_side + 1))
        side = min(side, h, w)
        u0 = int(rng.integers(0, w - side + 1))
        v0 = int(rng.integers(0, h - side + 1))
        d[v0:v0 + side, u0:u0 + side] = 0.0
    if cfg.depth_noise_sigma > 0:
        valid = d > 0
        noisy = d[valid] + rng.normal(0.0, cfg.depth_noise_sigma, int(valid.sum()))
        d[valid] = np.maximum(noisy, 1e-6)
    if cfg.background_mode != "zero":
        d = _background(d, cfg.background_mode, rng)
    return DepthImage(d)

