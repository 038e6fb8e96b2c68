"""Construction of the shipped default hand model.

The palm frame has x pointing toward the fingers, y toward the thumb and
z out of the back of the hand, so the rest pose (all joints identity) is
a flat right hand, palm down, fingers spread. Run as a module to
regenerate ``models/default_hand.json``::

    python -m glovecal.default_model
"""

from __future__ import annotations

import sys

import numpy as np

from .hand_model import (
    DISTAL_LINKS,
    FINGER_LINKS,
    FINGERS,
    N_LINKS,
    ContactPose,
    HandModel,
    PoseParams,
    default_model_path,
    save_model,
    solve_contact_pose,
)
from .so3 import axis_angle

N_SHAPE = 10

# finger base position (mm), in-plane spread angle (deg), proximal/middle/tip lengths, radii
_FINGERS = {
    "thumb": ((22.0, 20.0, -10.0), 50.0, (42.0, 32.0, 24.0), (10.0, 9.5, 9.0)),
    "index": ((90.0, 25.0, 0.0), 12.0, (42.0, 25.0, 20.0), (9.0, 8.5, 8.0)),
    "middle": ((94.0, 5.0, 0.0), 0.0, (46.0, 28.0, 22.0), (9.5, 9.0, 8.5)),
    "ring": ((88.0, -14.0, 0.0), -10.0, (43.0, 27.0, 21.0), (9.0, 8.5, 8.0)),
    "little": ((78.0, -32.0, 0.0), -22.0, (34.0, 21.0, 19.0), (8.0, 7.5, 7.0)),
}
_PALM_RADIUS = 22.0

# per-unit-beta length increments of (middle offset, distal offset, tip) for each finger
_LENGTH_GAIN = (2.0, 1.5, 1.2)
# per-coefficient scale, chosen so the contact energy is reasonably conditioned at beta = 0
_BETA_SCALE = np.array([0.4, 0.85, 0.85, 0.85, 0.85, 1.3, 2.0, 2.0, 2.0, 2.0])

# initial guesses for the pinch presets: flexion (deg) of proximal/middle/distal
_PINCH_GUESS = {
    "index": (35.0, 40.0, 30.0),
    "middle": (40.0, 45.0, 30.0),
    "ring": (45.0, 50.0, 30.0),
    "little": (50.0, 55.0, 35.0),
}


def _direction(angle_deg: float, tilt: float = 0.0) -> np.ndarray:
    a = np.radians(angle_deg)
    d = np.array([np.cos(a), np.sin(a), tilt])
    return d / np.linalg.norm(d)


def _flex_axis(angle_deg: float) -> np.ndarray:
    a = np.radians(angle_deg)
    return np.array([-np.sin(a), np.cos(a), 0.0])


def build_geometry() -> HandModel:
    B = N_SHAPE
    parents = np.full(N_LINKS, -1)
    offsets = np.zeros((N_LINKS, 3))
    offset_reg = np.zeros((N_LINKS, 3, B))
    radii = np.zeros(N_LINKS)
    radius_reg = np.zeros((N_LINKS, B))
    capsule_child = np.full(N_LINKS, -1)
    tip = np.zeros((N_LINKS, 3))
    tip_reg = np.zeros((N_LINKS, 3, B))

    radii[0] = _PALM_RADIUS
    capsule_child[0] = FINGER_LINKS["middle"][0]

    for k, name in enumerate(FINGERS):
        base, spread, lengths, rads = _FINGERS[name]
        prox, mid, dist = FINGER_LINKS[name]
        d = _direction(spread, -0.15 if name == "thumb" else 0.0)
        parents[prox], parents[mid], parents[dist] = 0, prox, mid
        capsule_child[prox], capsule_child[mid] = mid, dist
        offsets[prox] = base
        offsets[mid] = lengths[0] * d
        offsets[dist] = lengths[1] * d
        tip[dist] = lengths[2] * d
        radii[[prox, mid, dist]] = rads
        # beta k (0 thumb, 1..4 fingers): whole-finger length, slightly thicker
        offset_reg[mid, :, k] = _LENGTH_GAIN[0] * d
        offset_reg[dist, :, k] = _LENGTH_GAIN[1] * d
        tip_reg[dist, :, k] = _LENGTH_GAIN[2] * d
        radius_reg[[prox, mid], k] = 0.2
        if name == "thumb":
            # beta 5: thumb proportion, longer proximal phalanx and shorter tip
            offset_reg[mid, :, 5] = 2.0 * d
            tip_reg[dist, :, 5] = -1.5 * d
        else:
            # beta 6..9: lateral position of each finger base
            offset_reg[prox, 1, 5 + k] = 1.5

    offset_reg *= _BETA_SCALE
    tip_reg *= _BETA_SCALE
    radius_reg *= _BETA_SCALE
    return HandModel(
        parents, offsets, offset_reg, radii, radius_reg, capsule_child, tip, tip_reg, name="default_hand"
    )


def _guess_pinch(finger: str) -> PoseParams:
    pose = PoseParams.identity()
    _, spread, _, _ = _FINGERS[finger]
    for link, angle in zip(FINGER_LINKS[finger], _PINCH_GUESS[finger]):
        pose.joint_rotations[link - 1] = axis_angle(_flex_axis(spread), np.radians(angle))
    # thumb: oppose across the palm, then flex
    t_prox, t_mid, t_dist = FINGER_LINKS["thumb"]
    thumb_spread = _FINGERS["thumb"][1]
    pose.joint_rotations[t_prox - 1] = axis_angle((1.0, 0.0, 0.0), np.radians(-35.0)) @ axis_angle(
        _flex_axis(thumb_spread), np.radians(20.0)
    )
    pose.joint_rotations[t_mid - 1] = axis_angle(_flex_axis(thumb_spread), np.radians(20.0))
    pose.joint_rotations[t_dist - 1] = axis_angle(_flex_axis(thumb_spread), np.radians(15.0))
    return pose


def pinch_joints(finger: str) -> tuple[int, ...]:
    """Joints adjusted when fitting a pinch pose to a given shape."""
    return FINGER_LINKS["thumb"][:2] + FINGER_LINKS[finger][:2]


def build_default_model() -> HandModel:
    geom = build_geometry()
    beta0 = np.zeros(geom.n_shape)
    thumb_tip = int(geom.fingertips[0])
    contacts = []
    for k, finger in enumerate(FINGERS[1:], start=1):
        pairs = [(thumb_tip, int(geom.fingertips[k]))]
        joints = FINGER_LINKS["thumb"] + FINGER_LINKS[finger]
        pose = solve_contact_pose(geom, beta0, _guess_pinch(finger), pairs, joints, tol=1e-10)
        contacts.append(ContactPose(f"pinch_{finger}", finger, pose, pairs))
    return HandModel(
        geom.parents,
        geom.rest_offsets,
        geom.offset_regressors,
        geom.radii,
        geom.radius_regressors,
        geom.capsule_child,
        geom.tip_offsets,
        geom.tip_regressors,
        contacts=contacts,
        fingertips=geom.fingertips,
        name=geom.name,
    )


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    path = argv[0] if argv else default_model_path()
    save_model(build_default_model(), path)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

__all__ = ["build_default_model", "build_geometry", "pinch_joints", "DISTAL_LINKS"]
