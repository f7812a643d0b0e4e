#!/usr/bin/env python3
"""One pass of the picking loop on a simulated bin.

Render the bin from above, rank candidate suction points by how flat the
cup-sized patch around them is, descend on the best one and report whether
the cup sealed. Writes the depth image as a PPM so the scene can be viewed.
"""

import math
import sys
from pathlib import Path

import numpy as np

from binpose import binsim
from binpose.binsim import BIN_CAMERA, POSE_CLASSES, SuctionModel
from binpose.camera import depth_to_rgb, write_ppm

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 3
out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("demo_out")
out.mkdir(parents=True, exist_ok=True)

scene = binsim.generate_scene(4, {c: 1.0 for c in POSE_CLASSES}, np.random.default_rng(seed))
for o in scene.objects:
    print(f"{o.name}: {o.pose_class.label}, at x={o.pose.t[0]:+.3f} y={o.pose.t[1]:+.3f} m")

depth = scene.render(BIN_CAMERA)
write_ppm(out / "bin_depth.ppm", depth_to_rgb(depth))
binsim.write_scene(scene, out / "bin_scene.txt")

cup = SuctionModel()
keypoints = binsim.detect_keypoints(depth, BIN_CAMERA, cup)
print(f"{len(keypoints)} candidate points; best five:")
for kp in keypoints[:5]:
    print(f"  pixel {kp.pixel}  normal cone {math.degrees(kp.half_angle):5.1f} deg  score {kp.score:.3f}")

attempt = binsim.execute_pick(scene, keypoints, cup, depth=depth)
print(f"descent took {len(attempt.voltages)} steps, final voltage {attempt.voltages[-1]:.2f} V")
if attempt.success:
    print(f"picked {attempt.object_name}; {len(scene.objects)} objects left in the bin")
else:
    print(f"pick failed on {attempt.object_name}: {attempt.cause.value}")
print(f"wrote {out / 'bin_depth.ppm'} and {out / 'bin_scene.txt'}")
