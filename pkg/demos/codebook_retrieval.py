#!/usr/bin/env python3
"""Orientation by lookup: render views of the object, embed them, and match.

A small codebook keeps this quick. Each query is a fresh render at a random
orientation; its error is compared with the coverage bound, the worst-case
distance from any rotation to the nearest codebook entry.
"""

import math

import numpy as np

from binpose import codebook as cbm
from binpose import rotations as rot
from binpose.camera import CameraIntrinsics
from binpose.descriptor import AugmentationConfig
from binpose.objects import chicken

obj = chicken()
k = CameraIntrinsics()
cb = cbm.build(obj, k, cbm.ViewSampling(n_views=42, n_inplane=8))
delta = cbm.coverage_radius(cb.rotation_array(), np.random.default_rng(1))
print("\n".join(cb.header_lines()))
print(f"{len(cb)} entries, coverage bound {math.degrees(delta):.1f} deg")

rng = np.random.default_rng(2)
queries = [rot.sample_uniform(rng) for _ in range(100)]
clean, aug = cbm.retrieval_errors(obj, cb, queries, augment_cfg=AugmentationConfig(),
                                  rng=np.random.default_rng(3), both=True)
for name, errs in (("clean", clean), ("augmented", aug)):
    d = np.degrees(errs)
    print(f"{name:>9}: median {np.median(d):5.1f} deg, within bound {np.mean(errs <= delta):.0%}, "
          f"within twice the bound {np.mean(errs <= 2 * delta):.0%}")

# a symmetric body can look alike from opposite sides; the worst misses show it
worst = np.argsort(clean)[-3:]
print("largest clean errors (deg):", ", ".join(f"{math.degrees(clean[i]):.0f}" for i in worst))
