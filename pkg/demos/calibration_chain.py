#!/usr/bin/env python3
"""Camera extrinsics from a tag on the wrist, then auto-labelling a held object.

The arm reports base->wrist, the tag is bolted to the wrist, and the camera
detects the tag. Chaining the three gives the camera in the base frame. With
that, any object rigidly held by the arm gets a pose label in the camera
frame for free.
"""

import numpy as np

from binpose.transforms import (
    calibrate_camera,
    format_transform_line,
    invert,
    label_object_pose,
    random_transform,
    transform_distance,
)

rng = np.random.default_rng(0)

# ground truth the robot does not know
t_base_camera_true = random_transform(rng, 1.0)

t_base_wrist = random_transform(rng, 0.5)  # forward kinematics
t_wrist_aruco = random_transform(rng, 0.1)  # tag mount, measured once
t_camera_aruco = invert(t_base_camera_true) @ t_base_wrist @ t_wrist_aruco  # what the detector sees

t_base_camera = calibrate_camera(t_base_wrist, t_wrist_aruco, invert(t_camera_aruco))
ang, dist = transform_distance(t_base_camera, t_base_camera_true)
print(format_transform_line("base", "camera", t_base_camera))
print(f"recovered extrinsics: rotation error {ang:.2e} rad, translation error {dist:.2e} m")

# the arm now holds an object at a known grasp offset and moves it around
t_wrist_object = random_transform(rng, 0.05)
for i in range(3):
    t_base_wrist = random_transform(rng, 0.5)
    label = label_object_pose(t_base_camera, t_base_wrist, t_wrist_object)
    truth = invert(t_base_camera_true) @ t_base_wrist @ t_wrist_object
    ang, dist = transform_distance(label, truth)
    print(f"label {i}: {format_transform_line('camera', 'object', label)}  (error {ang:.1e} rad, {dist:.1e} m)")
