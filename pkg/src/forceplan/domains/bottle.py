"""Opening a childproof bottle: push down on the cap while twisting it.

The twist needs two things to hold at once: the hand-side chain (how the
cap is twisted: wrapping it, pressing a palm or fingertips on top, or a
gripped driver tool) and the fixture-side chain (what keeps the bottle
body from spinning: table friction, a high-friction mat, the second arm,
or a vise).  Every twist action variant pairs one hand strategy with one
fixture route and prices both chains by Monte Carlo success.

Pressing harder than the cap mechanism requires is allowed and often
necessary: the extra normal force buys friction capacity at the cap and
at the supporting surface, so the planner chooses the press level from a
small grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..planner import ActionSchema, Problem, Stream, ValueRegistry
from ..robustness import PerturbationSpec, chain_cost
from ..spatial import Transform, Wrench, rot_z
from ..stability import GRAVITY, ArmJoint, ForcefulKinematicChain, RigidJoint
from .scene import Scene, pad_frame, pad_grasp_joint, support_patch_joint, tool_down_rotation

__all__ = [
    "SCENE_DEFAULTS",
    "OPERATION_DEFAULTS",
    "HAND_STRATEGIES",
    "STRATEGIES",
    "ROUTES",
    "GraspSpec",
    "BottleWorld",
    "build_world",
    "build_problem",
    "plan_summary",
]

SCENE_DEFAULTS = {
    "bottle_xy": [0.0, 0.18],
    "bottle_mass": 0.3,
    "base_radius": 0.04,
    "cap_radius": 0.03,
    "cap_top_height": 0.16,
    "grasp_height": 0.10,
    "start_surface": "table",
    "arms": ["arm0", "arm1"],
    "arm_bases": {"arm0": [-0.45, 0.0], "arm1": [0.45, 0.0]},
    "mat": True,
    "mat_xy": [0.0, -0.22],
    "vise": True,
    "vise_xy": [0.12, -0.38],
    "tool": True,
    "tool_xy": [-0.2, -0.15],
    "tool_mass": 0.2,
    "tool_grasp_height": 0.05,
    "tool_tip_radius": 0.02,
    "tool_tip_below_pads": 0.06,
    "grip_force": 40.0,
    "tool_grip_force": 80.0,
    "palm_radius": 0.025,
    "fingertip_radius": 0.0125,
    "hand_pad_half_extents": [0.03, 0.02],
    "tool_pad_half_extents": [0.03, 0.02],
    "friction": {
        "bottle-table": 0.55,
        "bottle-mat": 0.8,
        "hand-cap": 0.8,
        "palm-cap": 0.8,
        "fingertip-cap": 0.2,
        "tool-cap": 0.7,
        "hand-tool": 0.8,
        "hand-bottle": 0.8,
    },
}

OPERATION_DEFAULTS = {
    "push_force": 15.0,
    "torque": 0.2,
    "extra_force_levels": [0.0, 15.0, 30.0, 45.0, 60.0],
}

HAND_STRATEGIES = ("wrap-grip", "palm-press", "fingertip-press")
STRATEGIES = HAND_STRATEGIES + ("twist-tool",)
ROUTES = ("table-friction", "mat-friction", "arm-hold", "vise-hold")


@dataclass(frozen=True)
class GraspSpec:
    """Hand pose relative to the object, plus a label for reporting."""

    offset: Transform
    label: str

    def to_dict(self) -> dict:
        return {"offset": self.offset.to_dict(), "label": self.label}

    @staticmethod
    def from_dict(d: dict) -> "GraspSpec":
        return GraspSpec(Transform.from_dict(d["offset"]), d["label"])


class BottleWorld:
    """Scene geometry plus the chain builders for every strategy and route."""

    def __init__(self, cfg: dict, op: dict):
        self.cfg = cfg
        self.op = op
        self.scene = Scene(friction=dict(cfg["friction"]))
        for name in cfg["arms"]:
            self.scene.add_arm(name, cfg["arm_bases"][name])
        self.bottle_pose = Transform(
            np.eye(3), np.array([cfg["bottle_xy"][0], cfg["bottle_xy"][1], 0.0])
        )
        self.tool_pose = Transform(
            np.eye(3), np.array([cfg["tool_xy"][0], cfg["tool_xy"][1], 0.0])
        )

    # ---- geometry helpers -------------------------------------------------

    def cap_top(self, bottle_pose: Transform) -> np.ndarray:
        return bottle_pose.translation + np.array([0.0, 0.0, self.cfg["cap_top_height"]])

    def twist_hand_target(self, bottle_pose: Transform) -> Transform:
        return Transform(tool_down_rotation(), self.cap_top(bottle_pose))

    def cap_removal_target(self, bottle_pose: Transform) -> Transform:
        # Fresh grip, rotated a quarter turn, for spinning the loose cap off.
        return Transform(
            tool_down_rotation() @ rot_z(np.pi / 2.0), self.cap_top(bottle_pose)
        )

    def tool_twist_target(self, bottle_pose: Transform) -> Transform:
        ee = self.cap_top(bottle_pose) + np.array(
            [0.0, 0.0, self.cfg["tool_tip_below_pads"]]
        )
        return Transform(tool_down_rotation(), ee)

    def grasp_target(self, obj: str, pose: Transform, grasp: GraspSpec) -> Transform:
        return Transform(
            pose.rotation @ grasp.offset.rotation,
            pose.translation + pose.rotation @ grasp.offset.translation,
        )

    def object_grasp(self, obj: str) -> GraspSpec:
        if obj == "bottle":
            offset = Transform(
                tool_down_rotation(), np.array([0.0, 0.0, self.cfg["grasp_height"]])
            )
        elif obj == "tool":
            offset = Transform(
                tool_down_rotation(),
                np.array([0.0, 0.0, self.cfg["tool_grasp_height"]]),
            )
        else:
            raise KeyError(obj)
        return GraspSpec(offset, f"pinch-{obj}")

    # ---- chains -----------------------------------------------------------

    def cap_wrench(self, extra: float) -> Wrench:
        return Wrench(
            [0.0, 0.0, -(self.op["push_force"] + extra)],
            [0.0, 0.0, self.op["torque"]],
            frame="cap",
        )

    def _arm_link(self, arm_name: str, q, app_to_ee_world=(0.0, 0.0, 0.0)):
        # Arm bases are axis-aligned with the world, so the torque check
        # frame only shifts the moment origin to the end effector.
        joint = ArmJoint(self.scene.arms[arm_name], np.asarray(q, dtype=float))
        t = Transform(np.eye(3), -np.asarray(app_to_ee_world, dtype=float))
        return joint, t

    def twist_chain(self, strategy: str, extra: float, arm_name: str, q):
        """Hand-side chain for one twist variant, rooted at the cap."""
        push = self.op["push_force"] + extra
        cfg = self.cfg
        joints = []
        gravity = []
        if strategy == "wrap-grip":
            patch = support_patch_joint(
                self.scene.mu("hand-cap"), cfg["cap_radius"], cfg["grip_force"],
                contact_frame="cap",
            )
            joints.append((patch, Transform.identity()))
            gravity.append(None)
            ee_offset = (0.0, 0.0, 0.0)
        elif strategy == "palm-press":
            patch = support_patch_joint(
                self.scene.mu("palm-cap"), cfg["palm_radius"], push, coupled=push,
                contact_frame="cap",
            )
            joints.append((patch, Transform.identity()))
            gravity.append(None)
            ee_offset = (0.0, 0.0, 0.0)
        elif strategy == "fingertip-press":
            patch = support_patch_joint(
                self.scene.mu("fingertip-cap"), cfg["fingertip_radius"], push,
                coupled=push, contact_frame="cap",
            )
            joints.append((patch, Transform.identity()))
            gravity.append(None)
            ee_offset = (0.0, 0.0, 0.0)
        elif strategy == "twist-tool":
            tip = support_patch_joint(
                self.scene.mu("tool-cap"), cfg["tool_tip_radius"], push, coupled=push,
                contact_frame="cap",
            )
            joints.append((tip, Transform.identity()))
            gravity.append(None)
            pads, preload = pad_grasp_joint(
                self.scene.mu("hand-tool"),
                cfg["tool_pad_half_extents"],
                cfg["tool_grip_force"],
                contact_frame="tool_pads",
            )
            rise = (0.0, 0.0, cfg["tool_tip_below_pads"])
            joints.append((pads, pad_frame([1.0, 0.0, 0.0], rise)))
            gravity.append(preload)
            ee_offset = rise
        else:
            raise KeyError(strategy)
        arm_joint, arm_t = self._arm_link(arm_name, q, ee_offset)
        joints.append((arm_joint, arm_t))
        gravity.append(None)
        chain = ForcefulKinematicChain("cap", tuple(joints), tuple(gravity))
        return chain, self.cap_wrench(extra)

    def fixture_chain(self, route: str, extra: float):
        """Bottle-body chain resisting the twist reaction."""
        cfg = self.cfg
        if route in ("table-friction", "mat-friction"):
            surface = "table" if route == "table-friction" else "mat"
            patch = support_patch_joint(
                self.scene.mu(f"bottle-{surface}"),
                cfg["base_radius"],
                cfg["bottle_mass"] * GRAVITY + extra,
                coupled=extra,
                contact_frame=f"bottle_{surface}",
            )
            t = Transform(np.eye(3), np.array([0.0, 0.0, cfg["cap_top_height"]]))
            chain = ForcefulKinematicChain("cap", ((patch, t),))
        elif route in ("arm-hold", "vise-hold"):
            chain = ForcefulKinematicChain(
                "cap", ((RigidJoint(route), Transform.identity()),)
            )
        else:
            raise KeyError(route)
        return chain, self.cap_wrench(extra)

    def grasp_hold_chain(self, obj: str, arm_name: str, q):
        """Carrying an object in the pinch grasp, loaded by its own weight."""
        cfg = self.cfg
        if obj == "bottle":
            mass, mu, grasp_z = cfg["bottle_mass"], self.scene.mu("hand-bottle"), cfg["grasp_height"]
        elif obj == "tool":
            mass, mu, grasp_z = cfg["tool_mass"], self.scene.mu("hand-tool"), cfg["tool_grasp_height"]
        else:
            raise KeyError(obj)
        pads, preload = pad_grasp_joint(
            mu, cfg["hand_pad_half_extents"], cfg["grip_force"], contact_frame="pads"
        )
        com_height = grasp_z / 2.0
        to_pads = (0.0, 0.0, grasp_z - com_height)
        joints = [(pads, pad_frame([1.0, 0.0, 0.0], to_pads))]
        gravity = [preload]
        arm_joint, arm_t = self._arm_link(arm_name, q, to_pads)
        joints.append((arm_joint, arm_t))
        gravity.append(None)
        chain = ForcefulKinematicChain("obj", tuple(joints), tuple(gravity))
        w = Wrench([0.0, 0.0, -mass * GRAVITY], [0.0, 0.0, 0.0], frame="obj")
        return chain, w


def build_world(scene_cfg: dict, op_cfg: dict) -> BottleWorld:
    return BottleWorld(scene_cfg, op_cfg)


def _route_available(world: BottleWorld, route: str) -> bool:
    cfg = world.cfg
    if route == "mat-friction":
        return bool(cfg["mat"]) or cfg["start_surface"] == "mat"
    if route == "vise-hold":
        return bool(cfg["vise"])
    if route == "arm-hold":
        return len(cfg["arms"]) >= 2
    return True


def build_problem(
    world: BottleWorld,
    spec: PerturbationSpec,
    seed: int = 0,
    disable=(),
):
    """Planning problem for the configured scene.

    ``disable`` removes strategies or routes by name; absent scene pieces
    (no mat, one arm, no vise) remove their routes automatically.
    """
    cfg = world.cfg
    disable = set(disable)
    registry = ValueRegistry()

    statics = []
    init = []
    values_q0 = {}
    for arm_name in cfg["arms"]:
        q0 = registry.add("conf", world.scene.initial_configs[arm_name])
        values_q0[arm_name] = q0
        statics += [("Arm", arm_name), ("Conf", arm_name, q0)]
        init += [("AtConf", arm_name, q0), ("HandEmpty", arm_name)]
    p0 = registry.add("pose", world.bottle_pose)
    statics += [
        ("Pose", "bottle", p0),
        ("Placement", "bottle", p0, cfg["start_surface"]),
        ("Graspable", "bottle"),
    ]
    init.append(("AtPose", "bottle", p0))
    if cfg["mat"] and cfg["start_surface"] != "mat":
        statics.append(("Placeable", "bottle", "mat"))
    if cfg["vise"]:
        statics.append(("Placeable", "bottle", "vise"))
    if cfg["tool"]:
        pt = registry.add("pose", world.tool_pose)
        statics += [
            ("Pose", "tool", pt),
            ("Placement", "tool", pt, "table"),
            ("Graspable", "tool"),
        ]
        init.append(("AtPose", "tool", pt))

    # ---- streams ----------------------------------------------------------

    def sample_placement(binding, attempt, rng):
        if attempt > 0:
            return []
        surface = binding["?s"]
        if surface == "mat":
            xy = cfg["mat_xy"]
        elif surface == "vise":
            xy = cfg["vise_xy"]
        else:
            return []
        return [(Transform(np.eye(3), np.array([xy[0], xy[1], 0.0])),)]

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
        target = world.grasp_target(
            binding["?o"], binding["?p"].payload, binding["?g"].payload
        )
        return ik_results(binding["?a"], target, attempt)

    def sample_twist_ready(binding, attempt, rng):
        target = world.twist_hand_target(binding["?p"].payload)
        return ik_results(binding["?a"], target, attempt)

    def sample_removal_ready(binding, attempt, rng):
        target = world.cap_removal_target(binding["?p"].payload)
        return ik_results(binding["?a"], target, attempt)

    def sample_tool_ready(binding, attempt, rng):
        target = world.tool_twist_target(binding["?p"].payload)
        return ik_results(binding["?a"], target, attempt)

    def sample_motion(binding, attempt, rng):
        if attempt > 0 or binding["?q1"] is binding["?q2"]:
            return []
        return [(np.stack([binding["?q1"].payload, binding["?q2"].payload]),)]

    def sample_force(binding, attempt, rng):
        if attempt > 0:
            return []
        return [(float(e),) for e in world.op["extra_force_levels"]]

    streams = [
        Stream(
            "place-on", ("?o", "?s"), (("Placeable", "?o", "?s"),), ("?p",),
            (("Placement", "?o", "?p", "?s"), ("Pose", "?o", "?p")),
            sample_placement,
        ),
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
            "reach-cap-twist", ("?a", "?p"),
            (("Arm", "?a"), ("Pose", "bottle", "?p")),
            ("?q",),
            (("TwistReady", "?a", "?p", "?q"), ("Conf", "?a", "?q")),
            sample_twist_ready,
        ),
        Stream(
            "reach-cap-removal", ("?a", "?p"),
            (("Arm", "?a"), ("Pose", "bottle", "?p")),
            ("?q",),
            (("RemovalReady", "?a", "?p", "?q"), ("Conf", "?a", "?q")),
            sample_removal_ready,
        ),
        Stream(
            "connect", ("?a", "?q1", "?q2"),
            (("Conf", "?a", "?q1"), ("Conf", "?a", "?q2")),
            ("?t",),
            (("Motion", "?a", "?q1", "?t", "?q2"),),
            sample_motion,
        ),
        Stream(
            "press-levels", (), (), ("?e",), (("Force", "?e"),), sample_force,
        ),
    ]
    if cfg["tool"] and "twist-tool" not in disable:
        streams.append(
            Stream(
                "reach-tool-twist", ("?a", "?p", "?g"),
                (("Arm", "?a"), ("Pose", "bottle", "?p"), ("Grasp", "tool", "?g")),
                ("?q",),
                (("ToolTwistReady", "?a", "?p", "?g", "?q"), ("Conf", "?a", "?q")),
                sample_tool_ready,
            )
        )

    # ---- costs ------------------------------------------------------------

    def pick_cost(binding):
        obj = binding["?o"]
        if obj not in ("bottle", "tool"):
            return 0.0
        chain, w = world.grasp_hold_chain(obj, binding["?a"], binding["?q"].payload)
        return chain_cost(chain, w, spec, seed)

    def twist_cost_fn(strategy, route):
        def fn(binding):
            extra = binding["?e"].payload
            hand_chain, w = world.twist_chain(
                strategy, extra, binding["?a"], binding["?q"].payload
            )
            cost = chain_cost(hand_chain, w, spec, seed)
            if math.isinf(cost):
                return cost
            fix_chain, w_fix = world.fixture_chain(route, extra)
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
            name="place",
            params=("?a", "?o", "?p", "?g", "?q"),
            static_pre=(("Kin", "?a", "?o", "?p", "?g", "?q"),),
            fluent_pre=(("Holding", "?a", "?o", "?g"), ("AtConf", "?a", "?q")),
            add=(("AtPose", "?o", "?p"), ("HandEmpty", "?a")),
            delete=(("Holding", "?a", "?o", "?g"),),
        ),
        ActionSchema(
            name="secure-vise",
            params=("?p",),
            static_pre=(("Placement", "bottle", "?p", "vise"),),
            fluent_pre=(("AtPose", "bottle", "?p"),),
            add=(("ViseSecured", "bottle"),),
            delete=(),
        ),
        ActionSchema(
            name="steady-grasp",
            params=("?a", "?p", "?g", "?q"),
            static_pre=(("Kin", "?a", "bottle", "?p", "?g", "?q"),),
            fluent_pre=(
                ("AtPose", "bottle", "?p"),
                ("AtConf", "?a", "?q"),
                ("HandEmpty", "?a"),
            ),
            add=(("SteadyHold", "bottle", "?a"),),
            delete=(("HandEmpty", "?a"),),
        ),
        ActionSchema(
            name="remove-cap",
            params=("?a", "?p", "?q"),
            static_pre=(("RemovalReady", "?a", "?p", "?q"),),
            fluent_pre=(
                ("CapLoose",),
                ("AtPose", "bottle", "?p"),
                ("AtConf", "?a", "?q"),
                ("HandEmpty", "?a"),
            ),
            add=(("CapRemoved",),),
            delete=(("HandEmpty", "?a"),),
        ),
    ]

    twist_names = {}
    route_static = {
        "table-friction": (("Placement", "bottle", "?p", "table"),),
        "mat-friction": (("Placement", "bottle", "?p", "mat"),),
        "vise-hold": (("Placement", "bottle", "?p", "vise"),),
        "arm-hold": (("Arm", "?h"),),
    }
    route_fluent = {
        "table-friction": (),
        "mat-friction": (),
        "vise-hold": (("ViseSecured", "bottle"),),
        "arm-hold": (("SteadyHold", "bottle", "?h"),),
    }
    for strategy in STRATEGIES:
        if strategy in disable:
            continue
        if strategy == "twist-tool" and not cfg["tool"]:
            continue
        for route in ROUTES:
            if route in disable or not _route_available(world, route):
                continue
            name = f"twist-cap--{strategy}--{route}"
            twist_names[name] = (strategy, route)
            extra_params = ("?h",) if route == "arm-hold" else ()
            neq = (("?a", "?h"),) if route == "arm-hold" else ()
            if strategy == "twist-tool":
                params = ("?a", "?p", "?g", "?q", "?e") + extra_params
                static = (
                    ("ToolTwistReady", "?a", "?p", "?g", "?q"),
                    ("Force", "?e"),
                ) + route_static[route]
                fluent = (
                    ("AtPose", "bottle", "?p"),
                    ("AtConf", "?a", "?q"),
                    ("Holding", "?a", "tool", "?g"),
                ) + route_fluent[route]
            else:
                params = ("?a", "?p", "?q", "?e") + extra_params
                static = (
                    ("TwistReady", "?a", "?p", "?q"),
                    ("Force", "?e"),
                ) + route_static[route]
                fluent = (
                    ("AtPose", "bottle", "?p"),
                    ("AtConf", "?a", "?q"),
                    ("HandEmpty", "?a"),
                ) + route_fluent[route]
            schemas.append(
                ActionSchema(
                    name=name,
                    params=params,
                    static_pre=static,
                    fluent_pre=fluent,
                    add=(("CapLoose",),),
                    delete=(),
                    neq=neq,
                    cost_fn=twist_cost_fn(strategy, route),
                )
            )

    problem = Problem(statics, init, [("CapRemoved",)], schemas, streams, registry)
    return problem, twist_names


def plan_summary(result, twist_names: dict) -> dict:
    """Strategy, route, and step count of a solved plan."""
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
