"""Loosening a nut on a bolt through a slat resting on a table.

The twist torque at the nut tries to spin the whole slat.  What resists
it is the fixture side: a second arm pinning the slat, dead weights set
on top of it, or nothing but the slat's own weight on the table.  The
hand side either twists the nut directly with the fingers or drives it
through a socket spanner, which adds pick and carry steps but is form
closed at the nut.
"""

from __future__ import annotations

import math

import numpy as np

from ..planner import ActionSchema, Problem, Stream, ValueRegistry
from ..robustness import PerturbationSpec, chain_cost
from ..spatial import Transform, Wrench
from ..stability import (
    GRAVITY,
    ArmJoint,
    ForcefulKinematicChain,
    PolygonPatchJoint,
    RigidJoint,
)
from .scene import Scene, beam_corner_forces, pad_frame, pad_grasp_joint, support_patch_joint, tool_down_rotation
from .bottle import GraspSpec

__all__ = [
    "SCENE_DEFAULTS",
    "OPERATION_DEFAULTS",
    "STRATEGIES",
    "ROUTES",
    "NutWorld",
    "build_world",
    "build_problem",
    "plan_summary",
]

SCENE_DEFAULTS = {
    "beam_center_xy": [0.0, 0.15],
    "beam_length": 0.5,
    "beam_width": 0.06,
    "beam_height": 0.02,
    "beam_mass": 0.4,
    "nut_radius": 0.025,
    "nut_top_height": 0.05,
    "arms": ["arm0", "arm1"],
    "arm_bases": {"arm0": [-0.45, 0.0], "arm1": [0.45, 0.0]},
    "grip_force": 40.0,
    "spanner": True,
    "spanner_xy": [0.2, -0.12],
    "spanner_mass": 0.3,
    "spanner_handle_length": 0.15,
    "spanner_grasp_height": 0.02,
    "spanner_grip_force": 80.0,
    "hand_pad_half_extents": [0.03, 0.02],
    "weights": {"w1": 0.5, "w2": 2.0, "w3": 5.0},
    "weight_xy": {"w1": [-0.2, -0.1], "w2": [-0.1, -0.15], "w3": [-0.25, -0.22]},
    "weight_grasp_height": 0.04,
    "weight_spots": [0.1],
    "friction": {
        "beam-table": 0.1,
        "hand-nut": 0.8,
        "hand-weight": 0.4,
        "hand-spanner": 0.8,
    },
}

OPERATION_DEFAULTS = {"torque": 0.15}

STRATEGIES = ("finger-twist", "spanner-twist")
ROUTES = ("arm-hold", "weight-hold", "rest-hold")


class NutWorld:
    """Scene geometry plus chain builders for the nut twisting variants."""

    def __init__(self, cfg: dict, op: dict):
        self.cfg = cfg
        self.op = op
        self.scene = Scene(friction=dict(cfg["friction"]))
        for name in cfg["arms"]:
            self.scene.add_arm(name, cfg["arm_bases"][name])
        cx, cy = cfg["beam_center_xy"]
        self.nut_top = np.array([cx, cy, cfg["nut_top_height"]])

    # ---- targets ----------------------------------------------------------

    def nut_twist_target(self) -> Transform:
        return Transform(tool_down_rotation(), self.nut_top)

    def spanner_twist_target(self) -> Transform:
        hand = self.nut_top + np.array([-self.cfg["spanner_handle_length"], 0.0, 0.0])
        return Transform(tool_down_rotation(), hand)

    def beam_grasp_target(self) -> Transform:
        cx, cy = self.cfg["beam_center_xy"]
        grip = np.array(
            [cx + self.cfg["beam_length"] / 2.0 - 0.03, cy, self.cfg["beam_height"]]
        )
        return Transform(tool_down_rotation(), grip)

    def object_pose(self, obj: str) -> Transform:
        if obj == "spanner":
            xy = self.cfg["spanner_xy"]
        else:
            xy = self.cfg["weight_xy"][obj]
        return Transform(np.eye(3), np.array([xy[0], xy[1], 0.0]))

    def object_grasp(self, obj: str) -> GraspSpec:
        z = (
            self.cfg["spanner_grasp_height"]
            if obj == "spanner"
            else self.cfg["weight_grasp_height"]
        )
        return GraspSpec(
            Transform(tool_down_rotation(), np.array([0.0, 0.0, z])), f"pinch-{obj}"
        )

    def grasp_target(self, pose: Transform, grasp: GraspSpec) -> Transform:
        return Transform(
            pose.rotation @ grasp.offset.rotation,
            pose.translation + pose.rotation @ grasp.offset.translation,
        )

    def weight_place_target(self, spot: float) -> Transform:
        cx, cy = self.cfg["beam_center_xy"]
        top = np.array(
            [cx + spot, cy, self.cfg["beam_height"] + self.cfg["weight_grasp_height"]]
        )
        return Transform(tool_down_rotation(), top)

    # ---- chains -----------------------------------------------------------

    def nut_wrench(self) -> Wrench:
        return Wrench([0.0, 0.0, 0.0], [0.0, 0.0, self.op["torque"]], frame="nut")

    def _arm_link(self, arm_name: str, q, app_to_ee_world=(0.0, 0.0, 0.0)):
        joint = ArmJoint(self.scene.arms[arm_name], np.asarray(q, dtype=float))
        t = Transform(np.eye(3), -np.asarray(app_to_ee_world, dtype=float))
        return joint, t

    def twist_chain(self, strategy: str, arm_name: str, q):
        cfg = self.cfg
        joints = []
        gravity = []
        if strategy == "finger-twist":
            patch = support_patch_joint(
                self.scene.mu("hand-nut"), cfg["nut_radius"], cfg["grip_force"],
                contact_frame="nut",
            )
            joints.append((patch, Transform.identity()))
            gravity.append(None)
            ee_offset = (0.0, 0.0, 0.0)
        elif strategy == "spanner-twist":
            # Hex socket: form closed about the twist axis.
            joints.append((RigidJoint("socket"), Transform.identity()))
            gravity.append(None)
            pads, preload = pad_grasp_joint(
                self.scene.mu("hand-spanner"),
                cfg["hand_pad_half_extents"],
                cfg["spanner_grip_force"],
                contact_frame="spanner_pads",
            )
            to_handle = (-cfg["spanner_handle_length"], 0.0, 0.0)
            joints.append((pads, pad_frame([0.0, 0.0, 1.0], to_handle)))
            gravity.append(preload)
            ee_offset = to_handle
        else:
            raise KeyError(strategy)
        arm_joint, arm_t = self._arm_link(arm_name, q, ee_offset)
        joints.append((arm_joint, arm_t))
        gravity.append(None)
        chain = ForcefulKinematicChain("nut", tuple(joints), tuple(gravity))
        return chain, self.nut_wrench()

    def fixture_chain(self, route: str, load=None):
        """Slat-side chain.  ``load`` is (mass, spot) for the weighted route."""
        cfg = self.cfg
        if route == "arm-hold":
            chain = ForcefulKinematicChain(
                "nut", ((RigidJoint("arm-hold"), Transform.identity()),)
            )
            return chain, self.nut_wrench()
        if route == "rest-hold":
            mass, spot = 0.0, 0.0
        elif route == "weight-hold":
            mass, spot = load
        else:
            raise KeyError(route)
        corners, forces = beam_corner_forces(
            cfg["beam_length"], cfg["beam_width"], cfg["beam_mass"], mass, spot
        )
        patch = PolygonPatchJoint(
            mu=self.scene.mu("beam-table"),
            corners=corners,
            corner_normal_forces=forces,
            contact_frame="beam_table",
        )
        t = Transform(np.eye(3), np.array([0.0, 0.0, cfg["nut_top_height"]]))
        total = (cfg["beam_mass"] + mass) * GRAVITY
        extra = Wrench(
            [0.0, 0.0, -total], [0.0, spot * mass * GRAVITY, 0.0], frame="beam_table"
        )
        chain = ForcefulKinematicChain("nut", ((patch, t),), (extra,))
        return chain, self.nut_wrench()

    def grasp_hold_chain(self, obj: str, arm_name: str, q):
        cfg = self.cfg
        if obj == "spanner":
            mass, mu, grasp_z = cfg["spanner_mass"], self.scene.mu("hand-spanner"), cfg["spanner_grasp_height"]
        else:
            mass, mu, grasp_z = cfg["weights"][obj], self.scene.mu("hand-weight"), cfg["weight_grasp_height"]
        return self._pinch_carry_chain(mass, mu, grasp_z, arm_name, q)

    def carry_chain(self, mass: float, arm_name: str, q):
        """Pinch-carry of a dead weight of the given mass."""
        return self._pinch_carry_chain(
            mass, self.scene.mu("hand-weight"), self.cfg["weight_grasp_height"],
            arm_name, q,
        )

    def _pinch_carry_chain(self, mass, mu, grasp_z, arm_name, q):
        cfg = self.cfg
        pads, preload = pad_grasp_joint(
            mu, cfg["hand_pad_half_extents"], cfg["grip_force"], contact_frame="pads"
        )
        to_pads = (0.0, 0.0, grasp_z / 2.0)
        joints = [(pads, pad_frame([1.0, 0.0, 0.0], to_pads))]
        gravity = [preload]
        arm_joint, arm_t = self._arm_link(arm_name, q, to_pads)
        joints.append((arm_joint, arm_t))
        gravity.append(None)
        chain = ForcefulKinematicChain("obj", tuple(joints), tuple(gravity))
        w = Wrench([0.0, 0.0, -mass * GRAVITY], [0.0, 0.0, 0.0], frame="obj")
        return chain, w


def build_world(scene_cfg: dict, op_cfg: dict) -> NutWorld:
    return NutWorld(scene_cfg, op_cfg)


def _route_available(world: NutWorld, route: str) -> bool:
    cfg = world.cfg
    if route == "arm-hold":
        return len(cfg["arms"]) >= 2
    if route == "weight-hold":
        return bool(cfg["weights"])
    return True


def build_problem(
    world: NutWorld,
    spec: PerturbationSpec,
    seed: int = 0,
    disable=(),
):
    cfg = world.cfg
    disable = set(disable)
    registry = ValueRegistry()

    statics = []
    init = []
    for arm_name in cfg["arms"]:
        q0 = registry.add("conf", world.scene.initial_configs[arm_name])
        statics += [("Arm", arm_name), ("Conf", arm_name, q0)]
        init += [("AtConf", arm_name, q0), ("HandEmpty", arm_name)]
    for wname in sorted(cfg["weights"]):
        pw = registry.add("pose", world.object_pose(wname))
        statics += [
            ("Weight", wname),
            ("Graspable", wname),
            ("Pose", wname, pw),
        ]
        init.append(("AtPose", wname, pw))
    for spot in cfg["weight_spots"]:
        u = registry.add("spot", float(spot))
        statics.append(("Spot", u))
    if cfg["spanner"]:
        ps = registry.add("pose", world.object_pose("spanner"))
        statics += [("Graspable", "spanner"), ("Pose", "spanner", ps)]
        init.append(("AtPose", "spanner", ps))

    # ---- streams ----------------------------------------------------------

    def sample_grasp(binding, attempt, rng):
        if attempt > 0:
            return []
        return [(world.object_grasp(binding["?o"]),)]

    def ik_results(arm_name, target, attempt):
        if attempt > 0:
            return []
        q = world.scene.reach(arm_name, target)
        return [] if q is None else [(q,)]

    def sample_kin(binding, attempt, rng):
        target = world.grasp_target(binding["?p"].payload, binding["?g"].payload)
        return ik_results(binding["?a"], target, attempt)

    def sample_nut_ready(binding, attempt, rng):
        return ik_results(binding["?a"], world.nut_twist_target(), attempt)

    def sample_spanner_ready(binding, attempt, rng):
        return ik_results(binding["?a"], world.spanner_twist_target(), attempt)

    def sample_beam_grasp(binding, attempt, rng):
        return ik_results(binding["?a"], world.beam_grasp_target(), attempt)

    def sample_spot_kin(binding, attempt, rng):
        target = world.weight_place_target(binding["?u"].payload)
        return ik_results(binding["?a"], target, attempt)

    def sample_motion(binding, attempt, rng):
        if attempt > 0 or binding["?q1"] is binding["?q2"]:
            return []
        return [(np.stack([binding["?q1"].payload, binding["?q2"].payload]),)]

    streams = [
        Stream(
            "grasp-for", ("?o",), (("Graspable", "?o"),), ("?g",),
            (("Grasp", "?o", "?g"),), sample_grasp,
        ),
        Stream(
            "reach-grasp", ("?a", "?o", "?p", "?g"),
            (("Arm", "?a"), ("Pose", "?o", "?p"), ("Grasp", "?o", "?g")),
            ("?q",),
            (("Kin", "?a", "?o", "?p", "?g", "?q"), ("Conf", "?a", "?q")),
            sample_kin,
        ),
        Stream(
            "reach-nut", ("?a",), (("Arm", "?a"),), ("?q",),
            (("NutReady", "?a", "?q"), ("Conf", "?a", "?q")),
            sample_nut_ready,
        ),
        Stream(
            "reach-beam-grip", ("?a",), (("Arm", "?a"),), ("?q",),
            (("BeamGripReady", "?a", "?q"), ("Conf", "?a", "?q")),
            sample_beam_grasp,
        ),
        Stream(
            "reach-weight-spot", ("?a", "?w", "?u", "?g"),
            (("Arm", "?a"), ("Weight", "?w"), ("Spot", "?u"), ("Grasp", "?w", "?g")),
            ("?q",),
            (("SpotKin", "?a", "?w", "?u", "?g", "?q"), ("Conf", "?a", "?q")),
            sample_spot_kin,
        ),
        Stream(
            "connect", ("?a", "?q1", "?q2"),
            (("Conf", "?a", "?q1"), ("Conf", "?a", "?q2")),
            ("?t",),
            (("Motion", "?a", "?q1", "?t", "?q2"),),
            sample_motion,
        ),
    ]
    if cfg["spanner"] and "spanner-twist" not in disable:
        streams.append(
            Stream(
                "reach-spanner-drive", ("?a", "?g"),
                (("Arm", "?a"), ("Grasp", "spanner", "?g")),
                ("?q",),
                (("SpannerReady", "?a", "?g", "?q"), ("Conf", "?a", "?q")),
                sample_spanner_ready,
            )
        )

    # ---- costs ------------------------------------------------------------

    def pick_cost(binding):
        chain, w = world.grasp_hold_chain(
            binding["?o"], binding["?a"], binding["?q"].payload
        )
        return chain_cost(chain, w, spec, seed)

    def twist_cost_fn(strategy, route):
        def fn(binding):
            hand_chain, w = world.twist_chain(
                strategy, binding["?a"], binding["?q"].payload
            )
            cost = chain_cost(hand_chain, w, spec, seed)
            if math.isinf(cost):
                return cost
            load = None
            if route == "weight-hold":
                load = (cfg["weights"][binding["?w"]], binding["?u"].payload)
            fix_chain, w_fix = world.fixture_chain(route, load)
            return cost + chain_cost(fix_chain, w_fix, spec, seed)

        return fn

    # ---- schemas ----------------------------------------------------------

    schemas = [
        ActionSchema(
            name="move",
            params=("?a", "?q1", "?t", "?q2"),
            static_pre=(("Motion", "?a", "?q1", "?t", "?q2"),),
            fluent_pre=(("AtConf", "?a", "?q1"),),
            add=(("AtConf", "?a", "?q2"),),
            delete=(("AtConf", "?a", "?q1"),),
        ),
        ActionSchema(
            name="pick",
            params=("?a", "?o", "?p", "?g", "?q"),
            static_pre=(("Kin", "?a", "?o", "?p", "?g", "?q"),),
            fluent_pre=(
                ("AtPose", "?o", "?p"),
                ("AtConf", "?a", "?q"),
                ("HandEmpty", "?a"),
            ),
            add=(("Holding", "?a", "?o", "?g"),),
            delete=(("AtPose", "?o", "?p"), ("HandEmpty", "?a")),
            cost_fn=pick_cost,
        ),
        ActionSchema(
            name="place-weight",
            params=("?a", "?w", "?u", "?g", "?q"),
            static_pre=(("SpotKin", "?a", "?w", "?u", "?g", "?q"),),
            fluent_pre=(("Holding", "?a", "?w", "?g"), ("AtConf", "?a", "?q")),
            add=(("WeightOn", "?w", "?u"), ("HandEmpty", "?a")),
            delete=(("Holding", "?a", "?w", "?g"),),
        ),
        ActionSchema(
            name="steady-grasp-beam",
            params=("?a", "?q"),
            static_pre=(("BeamGripReady", "?a", "?q"),),
            fluent_pre=(("AtConf", "?a", "?q"), ("HandEmpty", "?a")),
            add=(("BeamHeld", "?a"),),
            delete=(("HandEmpty", "?a"),),
        ),
    ]

    twist_names = {}
    route_extra = {
        "arm-hold": {
            "params": ("?h",),
            "static": (("Arm", "?h"),),
            "fluent": (("BeamHeld", "?h"),),
        },
        "weight-hold": {
            "params": ("?w", "?u"),
            "static": (("Weight", "?w"), ("Spot", "?u")),
            "fluent": (("WeightOn", "?w", "?u"),),
        },
        "rest-hold": {"params": (), "static": (), "fluent": ()},
    }
    for strategy in STRATEGIES:
        if strategy in disable:
            continue
        if strategy == "spanner-twist" and not cfg["spanner"]:
            continue
        for route in ROUTES:
            if route in disable or not _route_available(world, route):
                continue
            name = f"twist-nut--{strategy}--{route}"
            twist_names[name] = (strategy, route)
            extra = route_extra[route]
            neq = (("?a", "?h"),) if route == "arm-hold" else ()
            if strategy == "spanner-twist":
                params = ("?a", "?g", "?q") + extra["params"]
                static = (("SpannerReady", "?a", "?g", "?q"),) + extra["static"]
                fluent = (
                    ("AtConf", "?a", "?q"),
                    ("Holding", "?a", "spanner", "?g"),
                ) + extra["fluent"]
            else:
                params = ("?a", "?q") + extra["params"]
                static = (("NutReady", "?a", "?q"),) + extra["static"]
                fluent = (
                    ("AtConf", "?a", "?q"),
                    ("HandEmpty", "?a"),
                ) + extra["fluent"]
            schemas.append(
                ActionSchema(
                    name=name,
                    params=params,
                    static_pre=static,
                    fluent_pre=fluent,
                    add=(("NutLoosened",),),
                    delete=(),
                    neq=neq,
                    cost_fn=twist_cost_fn(strategy, route),
                )
            )

    problem = Problem(statics, init, [("NutLoosened",)], schemas, streams, registry)
    return problem, twist_names


def plan_summary(result, twist_names: dict) -> dict:
    out = {
        "solved": result.solved,
        "steps": len(result.plan) if result.solved else 0,
        "cost": result.cost,
        "strategy": "",
        "route": "",
    }
    if result.solved:
        for ga in result.plan:
            if ga.schema.name in twist_names:
                out["strategy"], out["route"] = twist_names[ga.schema.name]
                break
    return out
