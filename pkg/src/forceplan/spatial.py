"""Rigid transforms, wrenches, and the scene frame tree.

Conventions used throughout the package:

* A ``Transform`` maps coordinates in a source frame into a target frame:
  ``p_target = R @ p_source + t``.  Stored as a 3x3 rotation matrix and a
  3-vector translation.
* A ``Wrench`` stacks force before torque, ``(f, tau)``, with the torque
  taken about the origin of the frame named by ``frame``.
* Frames are plain string identifiers registered in a ``FrameTree``; the
  transform between any two frames is found by composing along tree paths.

Twists stack linear before angular velocity, ``(v, omega)``, with the
linear velocity taken at the frame origin.  Under a change of frame the
force is the free vector of a wrench while the angular velocity is the
free vector of a twist; the two maps are adjoint to each other, which is
what keeps the power pairing ``f . v + tau . omega`` frame invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Transform",
    "Wrench",
    "FrameTree",
    "compose",
    "invert",
    "transform_wrench",
    "transform_twist",
    "rot_x",
    "rot_y",
    "rot_z",
]

_ORTHONORMAL_TOL = 1e-9


def _as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    return v.copy()


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Transform:
    """Rigid transform from a source frame into a target frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3).copy()
        t = _as_vec3(self.translation)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise ValueError("transform entries must be finite")
        # Orthonormal with determinant +1; reject reflections and shears.
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-8:
            raise ValueError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-8:
            raise ValueError("rotation matrix must have determinant +1")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Transform":
        return Transform()

    def apply_point(self, p) -> np.ndarray:
        return self.rotation @ _as_vec3(p) + self.translation

    def to_dict(self) -> dict:
        return {
            "rotation": [[float(v) for v in row] for row in self.rotation],
            "translation": [float(v) for v in self.translation],
        }

    @staticmethod
    def from_dict(d: dict) -> "Transform":
        return Transform(np.array(d["rotation"]), np.array(d["translation"]))


@dataclass(frozen=True, eq=False)
class Wrench:
    """Force and torque about the origin of ``frame``."""

    force: np.ndarray
    torque: np.ndarray
    frame: str = ""

    def __post_init__(self):
        f = _as_vec3(self.force)
        tau = _as_vec3(self.torque)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(tau))):
            raise ValueError("wrench components must be finite")
        f.flags.writeable = False
        tau.flags.writeable = False
        object.__setattr__(self, "force", f)
        object.__setattr__(self, "torque", tau)

    @staticmethod
    def zero(frame: str = "") -> "Wrench":
        return Wrench(np.zeros(3), np.zeros(3), frame)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    @staticmethod
    def from_array(w, frame: str = "") -> "Wrench":
        w = np.asarray(w, dtype=float).reshape(6)
        return Wrench(w[:3], w[3:], frame)

    def add(self, other: "Wrench") -> "Wrench":
        if other.frame and self.frame and other.frame != self.frame:
            raise ValueError(
                f"cannot add wrench in frame {other.frame!r} to frame {self.frame!r}"
            )
        return Wrench(self.force + other.force, self.torque + other.torque, self.frame)

    def scaled(self, s: float) -> "Wrench":
        return Wrench(self.force * s, self.torque * s, self.frame)

    def to_dict(self) -> dict:
        return {
            "force": [float(v) for v in self.force],
            "torque": [float(v) for v in self.torque],
            "frame": self.frame,
        }

    @staticmethod
    def from_dict(d: dict) -> "Wrench":
        return Wrench(np.array(d["force"]), np.array(d["torque"]), d.get("frame", ""))


def compose(a: Transform, b: Transform) -> Transform:
    """Transform applying ``b`` first, then ``a``."""
    return Transform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: Transform) -> Transform:
    R = t.rotation.T
    return Transform(R, -R @ t.translation)


def transform_wrench(w: Wrench, t: Transform, frame: str = "") -> Wrench:
    """Re-express ``w`` under ``t`` mapping its frame into the target frame.

    The translation picks up a moment: f' = R f, tau' = R tau + t x (R f).
    """
    f = t.rotation @ w.force
    tau = t.rotation @ w.torque + np.cross(t.translation, f)
    return Wrench(f, tau, frame)


def transform_twist(linear, angular, t: Transform) -> tuple[np.ndarray, np.ndarray]:
    """Re-express a twist ``(v, omega)`` under ``t``.

    Here the angular part is the free vector and the linear velocity at the
    target origin picks up the lever term: omega' = R omega,
    v' = R v + t x (R omega).
    """
    omega = t.rotation @ _as_vec3(angular)
    v = t.rotation @ _as_vec3(linear) + np.cross(t.translation, omega)
    return v, omega


class FrameTree:
    """Registry of named frames connected by parent-child transforms."""

    def __init__(self, root: str = "world"):
        self.root = root
        # name -> (parent name, Transform mapping child coords into parent coords)
        self._parents: dict[str, tuple[str | None, Transform]] = {
            root: (None, Transform.identity())
        }

    def add_frame(self, name: str, parent: str, t_parent_child: Transform) -> None:
        if name in self._parents:
            raise ValueError(f"frame {name!r} already registered")
        if parent not in self._parents:
            raise KeyError(f"unknown parent frame {parent!r}")
        self._parents[name] = (parent, t_parent_child)

    def set_transform(self, name: str, t_parent_child: Transform) -> None:
        parent, _ = self._parents[name]
        if parent is None:
            raise ValueError("cannot reparent the root frame")
        self._parents[name] = (parent, t_parent_child)

    def has_frame(self, name: str) -> bool:
        return name in self._parents

    def frames(self) -> list[str]:
        return list(self._parents)

    def _path_to_root(self, name: str) -> list[str]:
        if name not in self._parents:
            raise KeyError(f"unknown frame {name!r}")
        path = [name]
        while True:
            parent, _ = self._parents[path[-1]]
            if parent is None:
                return path
            path.append(parent)

    def transform_to_root(self, name: str) -> Transform:
        t = Transform.identity()
        node = name
        while True:
            parent, rel = self._parents[node]
            if parent is None:
                return t
            t = compose(rel, t)
            node = parent

    def get_transform(self, source: str, target: str) -> Transform:
        """Transform mapping coordinates in ``source`` into ``target``."""
        if source not in self._parents:
            raise KeyError(f"unknown frame {source!r}")
        if target not in self._parents:
            raise KeyError(f"unknown frame {target!r}")
        t_root_src = self.transform_to_root(source)
        t_root_tgt = self.transform_to_root(target)
        return compose(invert(t_root_tgt), t_root_src)

    def express(self, w: Wrench, target: str) -> Wrench:
        if not w.frame:
            raise ValueError("wrench has no frame annotation")
        t = self.get_transform(w.frame, target)
        return transform_wrench(w, t, frame=target)
