"""Fit the camera-to-arm transform from noisy point correspondences.

The generating transform comes from the mount geometry, so the fitted
rotation and translation can be checked against a known answer.
"""

import numpy as np

from clearbot.geometry import (
    Frame,
    Point3,
    camera_to_arm_transform,
    estimate_rigid_transform,
    registration_rms,
)
from clearbot.scene import ArmMount, CameraMount


def main() -> None:
    true_t = camera_to_arm_transform(CameraMount(1.05, 0.0, 1.4), ArmMount(0.40, 0.0, 0.15))
    rng = np.random.default_rng(3)

    cam_pts = rng.uniform([-0.5, -0.3, 0.6], [0.5, 0.3, 1.4], size=(12, 3))
    arm_pts = true_t.apply_array(cam_pts) + rng.normal(scale=0.001, size=(12, 3))
    pairs = [
        (Point3(*c, Frame.CAMERA), Point3(*a, Frame.ARM))
        for c, a in zip(cam_pts, arm_pts)
    ]

    est = estimate_rigid_transform(pairs)
    print("true rotation:")
    print(true_t.rotation)
    print("fitted rotation:")
    print(est.rotation.round(4))
    print(f"true translation   {true_t.translation}")
    print(f"fitted translation {est.translation.round(4)}")
    print(f"rms residual {registration_rms(est, pairs) * 1000:.2f} mm "
          f"(1 mm noise on 12 points)")


if __name__ == "__main__":
    main()
