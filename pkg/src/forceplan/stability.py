"""Quasi-static stability of wrench transmission through contact chains.

A forceful kinematic chain is the ordered list of joints (frictional
patches, arm joints, rigid attachments) that an exerted wrench must pass
through on its way from the application frame to the ground.  The chain is
stable exactly when every joint can transmit its share of the wrench, and
its margin is the minimum over the per-joint margins.

Joint test frames
-----------------
Every joint is evaluated in its own contact frame with the z axis along
the contact normal.  For patch joints the caller orients the frame so
that a transmitted force with positive z would pull the contact apart;
compression is then a non-positive z force and is resisted kinematically.
For polygon patches the joint test asks whether the contact can *react*
the transmitted wrench, so the reaction cone membership is evaluated on
the negated wrench.

Margins
-------
* circular patch: 1 minus the ellipsoidal limit-surface quadratic form,
* polygon patch: scale found by bisection, capped at 1 (conic feasibility
  is scale invariant, so any strictly feasible wrench saturates the cap);
  infeasible wrenches get the negated normalized cone residual,
* arm joint: 1 minus the worst torque utilization ratio,
* rigid joint: 1.

In every case margin > 0 exactly when the joint verdict is stable, with
strict inequalities at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.optimize import nnls

from .spatial import FrameTree, Transform, Wrench, transform_wrench

__all__ = [
    "CircularPatchJoint",
    "PolygonPatchJoint",
    "ArmJoint",
    "RigidJoint",
    "JointModel",
    "ForcefulKinematicChain",
    "StabilityVerdict",
    "limit_surface_stable",
    "friction_cone_generators",
    "in_convex_cone",
    "beam_support_forces",
    "joint_stable",
    "chain_stable",
]

GRAVITY = 9.81

# Torsional friction constant of a uniform-pressure circular patch is
# proportional to its radius.
_TWIST_RADIUS_FACTOR = 0.6

_CONE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class StabilityVerdict:
    stable: bool
    margin: float
    failing_joint: int | None = None


@dataclass(frozen=True, eq=False)
class CircularPatchJoint:
    """Circular friction patch with uniform pressure.

    ``coupled_normal_force`` is the portion of ``normal_force_N`` that is
    supplied by the commanded push rather than by a fixed preload or by
    gravity; robustness perturbations scale that portion together with the
    normal component of the applied wrench.
    """

    mu: float
    radius_r: float
    normal_force_N: float
    contact_frame: str = ""
    coupled_normal_force: float = 0.0

    def __post_init__(self):
        if self.mu < 0 or self.radius_r < 0:
            raise ValueError("friction coefficient and radius must be nonnegative")
        if self.normal_force_N < 0:
            raise ValueError("normal force must be nonnegative")
        if not 0 <= self.coupled_normal_force <= self.normal_force_N + 1e-12:
            raise ValueError("coupled normal force must lie within the total")

    @property
    def twist_constant_k(self) -> float:
        # Recomputed from the radius so a perturbed copy can never carry a
        # stale value.
        return _TWIST_RADIUS_FACTOR * self.radius_r

    def to_dict(self) -> dict:
        return {
            "type": "circular_patch",
            "mu": float(self.mu),
            "radius_r": float(self.radius_r),
            "normal_force_N": float(self.normal_force_N),
            "contact_frame": self.contact_frame,
            "coupled_normal_force": float(self.coupled_normal_force),
        }


@dataclass(frozen=True, eq=False)
class PolygonPatchJoint:
    """Planar patch supported at polygon corners with known normal forces."""

    mu: float
    corners: np.ndarray
    corner_normal_forces: np.ndarray
    contact_frame: str = ""

    def __post_init__(self):
        corners = np.asarray(self.corners, dtype=float).reshape(-1, 3).copy()
        forces = np.asarray(self.corner_normal_forces, dtype=float).reshape(-1).copy()
        if self.mu < 0:
            raise ValueError("friction coefficient must be nonnegative")
        if corners.shape[0] < 1:
            raise ValueError("patch needs at least one corner")
        if corners.shape[0] != forces.shape[0]:
            raise ValueError("one normal force per corner required")
        if np.max(np.abs(corners[:, 2])) > 1e-9:
            raise ValueError("corners must be coplanar in the patch z=0 plane")
        if np.any(forces < 0):
            raise ValueError("corner normal forces must be nonnegative")
        corners.flags.writeable = False
        forces.flags.writeable = False
        object.__setattr__(self, "corners", corners)
        object.__setattr__(self, "corner_normal_forces", forces)

    def to_dict(self) -> dict:
        return {
            "type": "polygon_patch",
            "mu": float(self.mu),
            "corners": [[float(v) for v in row] for row in self.corners],
            "corner_normal_forces": [float(v) for v in self.corner_normal_forces],
            "contact_frame": self.contact_frame,
        }


@dataclass(frozen=True, eq=False)
class ArmJoint:
    """Stand-in for a serial arm held at a fixed configuration.

    Stability of this joint is the arm's torque-limit check at ``config_q``
    for the transmitted wrench expressed at the end effector in base axes.
    """

    arm: object
    config_q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.config_q, dtype=float).reshape(-1).copy()
        q.flags.writeable = False
        object.__setattr__(self, "config_q", q)

    def to_dict(self) -> dict:
        return {
            "type": "arm",
            "arm": self.arm.to_dict(),
            "config_q": [float(v) for v in self.config_q],
        }


@dataclass(frozen=True, eq=False)
class RigidJoint:
    """Weld, vise clamp, or rigid grasp; transmits any wrench."""

    contact_frame: str = ""

    def to_dict(self) -> dict:
        return {"type": "rigid", "contact_frame": self.contact_frame}


JointModel = Union[CircularPatchJoint, PolygonPatchJoint, ArmJoint, RigidJoint]


def joint_from_dict(d: dict) -> JointModel:
    kind = d["type"]
    if kind == "circular_patch":
        return CircularPatchJoint(
            d["mu"],
            d["radius_r"],
            d["normal_force_N"],
            d.get("contact_frame", ""),
            d.get("coupled_normal_force", 0.0),
        )
    if kind == "polygon_patch":
        return PolygonPatchJoint(
            d["mu"],
            np.array(d["corners"]),
            np.array(d["corner_normal_forces"]),
            d.get("contact_frame", ""),
        )
    if kind == "arm":
        from .robot import SerialArm

        return ArmJoint(SerialArm.from_dict(d["arm"]), np.array(d["config_q"]))
    if kind == "rigid":
        return RigidJoint(d.get("contact_frame", ""))
    raise ValueError(f"unknown joint type {kind!r}")


@dataclass(frozen=True, eq=False)
class ForcefulKinematicChain:
    """Ordered joints between the wrench application frame and ground.

    ``joints`` holds ``(joint, transform)`` pairs where the transform maps
    application-frame coordinates into that joint's test frame.
    ``gravity_wrenches`` optionally adds a fixed wrench (already expressed
    in the joint test frame) to the transmitted wrench at each joint; used
    for gravity loads and grip preloads.
    """

    application_frame: str
    joints: tuple = ()
    gravity_wrenches: tuple | None = None

    def __post_init__(self):
        joints = tuple((j, t) for j, t in self.joints)
        object.__setattr__(self, "joints", joints)
        if self.gravity_wrenches is not None:
            gw = tuple(self.gravity_wrenches)
            if len(gw) != len(joints):
                raise ValueError("need one gravity wrench slot per joint")
            object.__setattr__(self, "gravity_wrenches", gw)

    def to_dict(self) -> dict:
        return {
            "application_frame": self.application_frame,
            "joints": [
                {"joint": j.to_dict(), "transform": t.to_dict()} for j, t in self.joints
            ],
            "gravity_wrenches": None
            if self.gravity_wrenches is None
            else [None if w is None else w.to_dict() for w in self.gravity_wrenches],
        }

    @staticmethod
    def from_dict(d: dict) -> "ForcefulKinematicChain":
        joints = tuple(
            (joint_from_dict(e["joint"]), Transform.from_dict(e["transform"]))
            for e in d["joints"]
        )
        gw = d.get("gravity_wrenches")
        if gw is not None:
            gw = tuple(None if w is None else Wrench.from_dict(w) for w in gw)
        return ForcefulKinematicChain(d["application_frame"], joints, gw)


def limit_surface_stable(w_planar, joint: CircularPatchJoint) -> StabilityVerdict:
    """Ellipsoidal limit-surface test for a circular patch.

    ``w_planar`` stacks the two tangential force components and the moment
    about the contact normal.  Stable strictly inside the ellipsoid

        (ft_x^2 + ft_y^2) / (N mu)^2 + m_n^2 / (N k mu)^2 < 1,   k = 0.6 r.

    Margin is 1 minus the quadratic form.  A patch with no transmissible
    capacity (zero normal force or zero friction) is unstable for any
    nonzero planar wrench, with a -inf margin sentinel.
    """
    w = np.asarray(w_planar, dtype=float).reshape(3)
    capacity = joint.normal_force_N * joint.mu
    if capacity <= 0.0:
        if np.any(np.abs(w) > 0.0):
            return StabilityVerdict(False, -np.inf)
        return StabilityVerdict(True, 1.0)
    k = joint.twist_constant_k
    form = (w[0] ** 2 + w[1] ** 2) / capacity**2
    if abs(w[2]) > 0.0:
        if k <= 0.0:
            return StabilityVerdict(False, -np.inf)
        form += w[2] ** 2 / (capacity * k) ** 2
    margin = 1.0 - form
    return StabilityVerdict(margin > 0.0, margin)


def friction_cone_generators(joint: PolygonPatchJoint) -> np.ndarray:
    """Wrench-space generators of the patch reaction cone.

    Each loaded corner contributes the four edge directions of its
    linearized friction pyramid, scaled by the corner normal force and
    mapped to the patch frame with the corner lever arm.  Corners with
    zero normal force are dropped; with zero friction the four edges
    coincide and a single normal generator is kept.
    """
    rows = []
    mu = joint.mu
    directions = [(mu, 0.0), (-mu, 0.0), (0.0, mu), (0.0, -mu)]
    if mu == 0.0:
        directions = [(0.0, 0.0)]
    for corner, n_force in zip(joint.corners, joint.corner_normal_forces):
        if n_force <= 0.0:
            continue
        for dx, dy in directions:
            f = n_force * np.array([dx, dy, 1.0])
            rows.append(np.concatenate([f, np.cross(corner, f)]))
    if not rows:
        return np.zeros((0, 6))
    return np.vstack(rows)


def _cone_feasible(w: np.ndarray, generators: np.ndarray, tol: float):
    """NNLS phase-1 feasibility of w = sum(lambda_i g_i), lambda >= 0.

    Returns (feasible, residual) with the residual measured after scaling
    w to unit norm, so the tolerance is relative.
    """
    scale = np.linalg.norm(w)
    if scale <= tol:
        return True, 0.0
    w_n = w / scale
    norms = np.linalg.norm(generators, axis=1)
    keep = norms > 0.0
    if not np.any(keep):
        return False, 1.0
    basis = generators[keep] / norms[keep, None]
    _, residual = nnls(basis.T, w_n)
    return residual <= tol, residual


def in_convex_cone(w, generators, tol: float = _CONE_TOL):
    """Membership of ``w`` in the nonnegative span of ``generators``.

    Returns ``(feasible, margin)``.  The margin for a feasible wrench is
    the largest scale s in [0, 1] such that w/s stays feasible, found by
    bisection and capped at 1 (testing 2w first); conic feasibility is
    scale invariant, so strictly feasible wrenches report the cap.  An
    infeasible wrench reports the negated normalized cone residual.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    generators = np.asarray(generators, dtype=float)
    if generators.size == 0:
        generators = np.zeros((0, w.shape[0]))
    feasible, residual = _cone_feasible(w, generators, tol)
    if not feasible:
        return False, -residual
    if np.linalg.norm(w) <= tol:
        return True, 1.0
    ok2, _ = _cone_feasible(2.0 * w, generators, tol)
    if ok2:
        return True, 1.0
    lo, hi = 0.5, 1.0  # w/hi known feasible, w/lo known infeasible
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        ok, _ = _cone_feasible(w / mid, generators, tol)
        if ok:
            hi = mid
        else:
            lo = mid
    return True, hi


def beam_support_forces(
    beam_length: float,
    load_mass: float,
    load_center: float,
    load_extent: float = 0.0,
    gravity: float = GRAVITY,
):
    """End reactions of a simply supported beam under a uniform load.

    The load of total weight ``load_mass * gravity`` is centered at
    ``load_center`` (measured from the left support) and spans
    ``load_extent``; it must lie fully between the supports.  Returns
    ``(left, right)`` reaction forces.
    """
    if beam_length <= 0:
        raise ValueError("beam length must be positive")
    if load_mass < 0:
        raise ValueError("load mass must be nonnegative")
    if load_extent < 0:
        raise ValueError("load extent must be nonnegative")
    lo = load_center - 0.5 * load_extent
    hi = load_center + 0.5 * load_extent
    if lo < -1e-12 or hi > beam_length + 1e-12:
        raise ValueError(
            f"load spanning [{lo:.4f}, {hi:.4f}] m overhangs the supports "
            f"of a {beam_length:.4f} m beam"
        )
    total = load_mass * gravity
    right = total * load_center / beam_length
    left = total - right
    return left, right


def _circular_patch_stable(joint: CircularPatchJoint, w: Wrench) -> StabilityVerdict:
    f = w.force
    scale = max(joint.normal_force_N, 1.0)
    if f[2] > 1e-9 * scale:
        # Transmitted force pulls the pressing contact apart.
        return StabilityVerdict(False, -f[2] / scale)
    # Compression and the two peel moments are taken up kinematically by
    # the pressing bodies; friction carries the planar components.
    return limit_surface_stable([f[0], f[1], w.torque[2]], joint)


def _polygon_patch_stable(joint: PolygonPatchJoint, w: Wrench) -> StabilityVerdict:
    generators = friction_cone_generators(joint)
    feasible, margin = in_convex_cone(-w.as_array(), generators)
    return StabilityVerdict(feasible and margin > 0.0, margin)


def joint_stable(joint: JointModel, w: Wrench) -> StabilityVerdict:
    """Verdict for a single joint given the transmitted wrench in its frame."""
    if isinstance(joint, RigidJoint):
        return StabilityVerdict(True, 1.0)
    if isinstance(joint, CircularPatchJoint):
        return _circular_patch_stable(joint, w)
    if isinstance(joint, PolygonPatchJoint):
        return _polygon_patch_stable(joint, w)
    if isinstance(joint, ArmJoint):
        from .robot import torque_stable

        return torque_stable(joint.arm, joint.config_q, w)
    raise TypeError(f"unknown joint model {type(joint).__name__}")


def chain_stable(
    chain: ForcefulKinematicChain, w: Wrench, tree: FrameTree | None = None
) -> StabilityVerdict:
    """Transmit ``w`` through every joint of the chain and combine verdicts.

    The wrench may be expressed in any frame the scene tree can resolve to
    the chain's application frame; the verdict does not depend on that
    choice.  Margin is the minimum over joints, and ``failing_joint`` is
    the index of the first unstable joint.
    """
    if w.frame and w.frame != chain.application_frame:
        if tree is None:
            raise ValueError(
                f"wrench in frame {w.frame!r} but chain applies at "
                f"{chain.application_frame!r} and no tree was given"
            )
        w = tree.express(w, chain.application_frame)
    if not chain.joints:
        return StabilityVerdict(True, 1.0)
    margin = np.inf
    failing = None
    for idx, (joint, t_app_joint) in enumerate(chain.joints):
        wj = transform_wrench(w, t_app_joint)
        if chain.gravity_wrenches is not None:
            extra = chain.gravity_wrenches[idx]
            if extra is not None:
                wj = Wrench(wj.force + extra.force, wj.torque + extra.torque)
        verdict = joint_stable(joint, wj)
        if verdict.margin < margin:
            margin = verdict.margin
        if not verdict.stable and failing is None:
            failing = idx
    margin = min(margin, 1.0)
    return StabilityVerdict(failing is None, float(margin), failing)
