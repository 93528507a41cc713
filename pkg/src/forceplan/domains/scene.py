"""Shared scene scaffolding for the task domains.

A scene owns the frame tree, the arms with their base placements, and the
friction table.  Domain modules build their planning problems on top of
these helpers.

Contact frame conventions used by the joint builders:

* support patches (object resting on a surface) use a frame whose z axis
  points up out of the surface, so pressing loads arrive as negative z
  force and twisting loads as z moment;
* pad grasps (parallel-jaw fingers) use a frame whose z axis is the pad
  normal; the squeeze preload enters as a constant side wrench pressing
  along -z so the friction cone test sees the correct normal balance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..robot import SerialArm, default_arm, fk, ik
from ..spatial import FrameTree, Transform, Wrench, rot_y
from ..stability import (
    GRAVITY,
    CircularPatchJoint,
    PolygonPatchJoint,
    beam_support_forces,
)

__all__ = [
    "Scene",
    "tool_down_rotation",
    "pad_frame",
    "pad_grasp_joint",
    "support_patch_joint",
    "beam_corner_forces",
]


def tool_down_rotation() -> np.ndarray:
    """Hand orientation with the tool axis pointing at the floor."""
    return rot_y(np.pi)


def pad_frame(normal_world, app_to_pad_world) -> Transform:
    """Transform from an application frame into a pad test frame.

    ``normal_world`` is the pad normal; ``app_to_pad_world`` the vector
    from the application origin to the pad center, both in world axes
    (the application frame is assumed world-aligned).
    """
    n = np.asarray(normal_world, dtype=float)
    n = n / np.linalg.norm(n)
    up = np.array([0.0, 0.0, 1.0])
    x = up - np.dot(up, n) * n
    if np.linalg.norm(x) < 1e-9:
        x = np.array([1.0, 0.0, 0.0]) - n[0] * n
    x = x / np.linalg.norm(x)
    y = np.cross(n, x)
    rot = np.vstack([x, y, n])
    translation = rot @ (-np.asarray(app_to_pad_world, dtype=float))
    return Transform(rot, translation)


def pad_grasp_joint(mu, half_extents, squeeze_force, contact_frame=""):
    """Parallel-jaw grasp folded into one pad patch plus its preload wrench.

    Both fingers squeeze with ``squeeze_force``, so the preload pressing
    the object against the pad plane is twice that.
    """
    hx, hy = float(half_extents[0]), float(half_extents[1])
    corners = np.array(
        [[hx, hy, 0.0], [-hx, hy, 0.0], [-hx, -hy, 0.0], [hx, -hy, 0.0]]
    )
    per_corner = float(squeeze_force) / 2.0
    joint = PolygonPatchJoint(
        mu=mu,
        corners=corners,
        corner_normal_forces=[per_corner] * 4,
        contact_frame=contact_frame,
    )
    preload = Wrench([0.0, 0.0, -2.0 * float(squeeze_force)], [0.0, 0.0, 0.0])
    return joint, preload


def support_patch_joint(mu, radius, normal_force, coupled=0.0, contact_frame=""):
    return CircularPatchJoint(
        mu=mu,
        radius_r=radius,
        normal_force_N=normal_force,
        coupled_normal_force=coupled,
        contact_frame=contact_frame,
    )


def beam_corner_forces(length, width, slat_mass, load_mass, load_center):
    """Corner rectangle and per-corner forces for a slat resting on a table.

    The slat's own weight splits evenly; a point load at ``load_center``
    along the slat splits between the end pairs like a simply supported
    beam.  Corners are ordered (+x+y, -x+y, -x-y, +x-y) with x along the
    slat.
    """
    half = length / 2.0
    corners = np.array(
        [
            [half, width / 2.0, 0.0],
            [-half, width / 2.0, 0.0],
            [-half, -width / 2.0, 0.0],
            [half, -width / 2.0, 0.0],
        ]
    )
    own = slat_mass * GRAVITY / 4.0
    forces = np.full(4, own)
    if load_mass > 0.0:
        left, right = beam_support_forces(length, load_mass, load_center + half)
        forces[1] += left / 2.0
        forces[2] += left / 2.0
        forces[0] += right / 2.0
        forces[3] += right / 2.0
    return corners, forces


@dataclass
class Scene:
    """Frames, arms, and material pairs shared by a planning problem."""

    friction: dict
    tree: FrameTree = field(default_factory=FrameTree)
    arms: dict = field(default_factory=dict)
    initial_configs: dict = field(default_factory=dict)

    def add_arm(self, name: str, base_xy, arm: SerialArm | None = None, q0=None):
        arm = arm or default_arm(name=name, base_frame=f"{name}_base")
        base = Transform(np.eye(3), np.array([base_xy[0], base_xy[1], 0.0]))
        self.tree.add_frame(f"{name}_base", "world", base)
        self.arms[name] = arm
        self.initial_configs[name] = (
            np.zeros(arm.dof) if q0 is None else np.asarray(q0, dtype=float)
        )
        return arm

    def arm_base(self, name: str) -> Transform:
        return self.tree.get_transform(f"{name}_base", "world")

    def mu(self, pair: str) -> float:
        if pair not in self.friction:
            raise KeyError(f"no friction entry for {pair}")
        return float(self.friction[pair])

    def reach(self, arm_name: str, world_target: Transform, seed_q=None):
        """IK in the arm's base frame for a world-frame hand target."""
        base = self.arm_base(arm_name)
        local = Transform(
            base.rotation.T @ world_target.rotation,
            base.rotation.T @ (world_target.translation - base.translation),
        )
        return ik(self.arms[arm_name], local, initial_q=seed_q)

    def hand_pose(self, arm_name: str, q) -> Transform:
        base = self.arm_base(arm_name)
        local = fk(self.arms[arm_name], q)
        return Transform(
            base.rotation @ local.rotation,
            base.translation + base.rotation @ local.translation,
        )
