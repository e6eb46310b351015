"""Serial-chain manipulator description and the model file format.

Frame convention
----------------
Every link ``k`` owns a body frame whose origin sits on its joint and whose
local z axis is the joint axis.  The rotation mapping link-``k`` coordinates
into parent coordinates is ``fixed_rotation @ Rz(q_k)``.  ``joint_offset`` is
the constant vector from the parent frame origin to this joint's origin,
expressed in the parent frame (the base frame for the first link).
``com_offset`` and ``inertia`` are expressed in the link's own frame.  The
end-effector frame sits at ``tool_offset`` in the last link frame with
identity rotation.

Model file
----------
An INI-style text file read with :mod:`configparser`::

    [robot]
    gravity = 0 0 -9.81
    base_angular_velocity = 0 0 0
    base_angular_acceleration = 0 0 0
    base_linear_acceleration = 0 0 0
    tool_offset = 0.126 0 0

    [link1]
    mass = 3.0
    com_offset = 0 0 0.2
    joint_offset = 0 0 0
    inertia = ixx iyy izz ixy ixz iyz
    fixed_rotation = r11 r12 r13 r21 r22 r23 r31 r32 r33
    armature = 0.2

Links are numbered from 1 and must be contiguous.  ``armature`` is the rotor
inertia reflected through the gearbox onto the joint axis; it adds
``armature * qdd`` to the joint torque and defaults to zero.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ModelError",
    "LinkParams",
    "RobotModel",
    "Pose",
    "rot_x",
    "rot_y",
    "rot_z",
    "rod_inertia",
    "ur5_default",
    "planar_arm",
    "load_model",
    "save_model",
    "dumps_model",
    "loads_model",
    "UR5_LENGTHS",
    "UR5_MASSES",
    "UR5_ARMATURE",
    "INERTIA_PAD",
]

UR5_LENGTHS = (0.40, 0.20, 0.20, 0.17, 0.17, 0.126)
UR5_MASSES = (3.0, 0.5, 0.5, 0.5, 0.5, 0.4)
# reflected rotor inertia per joint; sized so dt * mrac_lambda / armature = 0.5 at
# dt = 5 ms, which keeps dt * gain / inertia below 1 for every published velocity gain
UR5_ARMATURE = (0.2, 0.2, 0.15, 0.1, 0.06, 0.02)
INERTIA_PAD = 1e-4
_ORTHO_TOL = 1e-10


class ModelError(ValueError):
    """Raised for malformed model files or violated model invariants."""


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _vec3(x, name: str) -> np.ndarray:
    v = np.array(x, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise ModelError(f"{name} must have 3 entries, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ModelError(f"{name} must be finite")
    return v


def _check_rotation(R: np.ndarray, name: str) -> None:
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ModelError(f"{name} must be a finite 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL:
        raise ModelError(f"{name} must be orthonormal (R^T R = I)")
    if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
        raise ModelError(f"{name} must have det(R) = +1")


@dataclass(frozen=True, eq=False)
class LinkParams:
    """Mass properties and fixed geometry of one revolute link."""

    mass: float
    com_offset: np.ndarray
    joint_offset: np.ndarray
    inertia: np.ndarray
    fixed_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    armature: float = 0.0

    def __post_init__(self):
        arm = float(self.armature)
        if not np.isfinite(arm) or arm < 0.0:
            raise ModelError(f"armature >= 0 violated (armature = {self.armature})")
        object.__setattr__(self, "armature", arm)
        mass = float(self.mass)
        if not np.isfinite(mass) or mass <= 0.0:
            raise ModelError(f"mass > 0 violated (mass = {self.mass})")
        com = _vec3(self.com_offset, "com_offset")
        off = _vec3(self.joint_offset, "joint_offset")
        inertia = np.array(self.inertia, dtype=float)
        if inertia.shape != (3, 3) or not np.all(np.isfinite(inertia)):
            raise ModelError("inertia must be a finite 3x3 matrix")
        if np.max(np.abs(inertia - inertia.T)) > 1e-12 * max(1.0, np.max(np.abs(inertia))):
            raise ModelError("inertia must be symmetric")
        if np.linalg.eigvalsh(inertia)[0] < -1e-12:
            raise ModelError("inertia must be positive semidefinite")
        R = np.array(self.fixed_rotation, dtype=float)
        _check_rotation(R, "fixed_rotation")
        for name, val in (("mass", mass), ("com_offset", com), ("joint_offset", off),
                          ("inertia", inertia), ("fixed_rotation", R)):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)

    def __eq__(self, other):
        if not isinstance(other, LinkParams):
            return NotImplemented
        return (self.mass == other.mass
                and self.armature == other.armature
                and np.array_equal(self.com_offset, other.com_offset)
                and np.array_equal(self.joint_offset, other.joint_offset)
                and np.array_equal(self.inertia, other.inertia)
                and np.array_equal(self.fixed_rotation, other.fixed_rotation))


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Immutable kinematic chain plus gravity and base motion.

    The packed arrays in :attr:`arrays` feed the compiled dynamics kernels.
    """

    links: tuple
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    base_angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_angular_acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_linear_acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tool_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        links = tuple(self.links)
        if len(links) < 1:
            raise ModelError("a model needs at least one link (N >= 1)")
        for i, link in enumerate(links):
            if not isinstance(link, LinkParams):
                raise ModelError(f"links[{i}] is not a LinkParams")
        object.__setattr__(self, "links", links)
        for name in ("gravity", "base_angular_velocity", "base_angular_acceleration",
                     "base_linear_acceleration", "tool_offset"):
            v = _vec3(getattr(self, name), name)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

        arrays = {
            "fixed_rotation": np.stack([l.fixed_rotation for l in links]),
            "joint_offset": np.stack([l.joint_offset for l in links]),
            "com_offset": np.stack([l.com_offset for l in links]),
            "mass": np.array([l.mass for l in links]),
            "inertia": np.stack([l.inertia for l in links]),
            "armature": np.array([l.armature for l in links]),
        }
        for v in arrays.values():
            v.setflags(write=False)
        object.__setattr__(self, "arrays", arrays)

    @property
    def n(self) -> int:
        return len(self.links)

    def with_gravity(self, gravity) -> "RobotModel":
        return RobotModel(self.links, np.asarray(gravity, dtype=float),
                          self.base_angular_velocity, self.base_angular_acceleration,
                          self.base_linear_acceleration, self.tool_offset)

    def __eq__(self, other):
        if not isinstance(other, RobotModel):
            return NotImplemented
        return (self.links == other.links
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("gravity", "base_angular_velocity",
                                  "base_angular_acceleration",
                                  "base_linear_acceleration", "tool_offset")))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: ``rotation`` maps local coordinates into the base frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        _check_rotation(R, "rotation")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", _vec3(self.translation, "translation"))

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


def rod_inertia(mass: float, length: float, direction, pad: float = INERTIA_PAD) -> np.ndarray:
    """Thin uniform rod inertia about its centre, padded on the diagonal."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return mass * length**2 / 12.0 * (np.eye(3) - np.outer(d, d)) + pad * np.eye(3)


def ur5_default(armature=UR5_ARMATURE) -> RobotModel:
    """Six-link UR5-like arm with rod-approximated links.

    Joint 1 is vertical, joints 2-4 share a lateral axis, joint 5 points along
    the forearm/wrist-1 link and joint 6 along the wrist-2 link.  Each link is a
    thin rod starting at its own joint with the CoM at the midpoint; the
    next joint sits at the rod tip and the tool frame at the tip of link 6.
    ``armature`` is the reflected rotor inertia of each joint (pass zeros for
    the bare rigid-body chain).
    """
    L, m = UR5_LENGTHS, UR5_MASSES
    ex, ez = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
    rod_dirs = [ez, ex, ex, ex, ex, ex]
    fixed = [np.eye(3), rot_x(np.pi / 2), np.eye(3), np.eye(3),
             rot_y(np.pi / 2), rot_y(np.pi / 2)]
    links = []
    prev_tip = np.zeros(3)
    for k in range(6):
        d = rod_dirs[k]
        links.append(LinkParams(
            mass=m[k],
            com_offset=0.5 * L[k] * d,
            joint_offset=prev_tip,
            inertia=rod_inertia(m[k], L[k], d),
            fixed_rotation=_clean(fixed[k]),
            armature=armature[k],
        ))
        prev_tip = L[k] * d
    return RobotModel(tuple(links), tool_offset=prev_tip)


def planar_arm(masses, lengths, com_fractions=None, izz=None,
               gravity=(0.0, -9.81, 0.0)) -> RobotModel:
    """Planar chain with parallel z joint axes; links are rods along local x.

    ``izz`` gives each link's inertia about its CoM around z (defaults to the
    thin-rod value).  Gravity lies in the x-y plane by default.
    """
    masses = list(masses)
    lengths = list(lengths)
    n = len(masses)
    fr = [0.5] * n if com_fractions is None else list(com_fractions)
    links = []
    prev_tip = np.zeros(3)
    for k in range(n):
        iz = masses[k] * lengths[k] ** 2 / 12.0 if izz is None else izz[k]
        links.append(LinkParams(
            mass=masses[k],
            com_offset=np.array([fr[k] * lengths[k], 0.0, 0.0]),
            joint_offset=prev_tip,
            inertia=np.diag([INERTIA_PAD, iz, iz]),
        ))
        prev_tip = np.array([lengths[k], 0.0, 0.0])
    return RobotModel(tuple(links), gravity=np.array(gravity, dtype=float),
                      tool_offset=prev_tip)


def _clean(R: np.ndarray) -> np.ndarray:
    # exact zeros/ones so the default model serializes without 6e-17 noise
    R = np.where(np.abs(R) < 1e-15, 0.0, R)
    return np.where(np.abs(np.abs(R) - 1.0) < 1e-15, np.sign(R), R)


# --------------------------------------------------------------------------
# serialization

_ROBOT_KEYS = ("gravity", "base_angular_velocity", "base_angular_acceleration",
               "base_linear_acceleration", "tool_offset")


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).reshape(-1))


def dumps_model(model: RobotModel) -> str:
    """Canonical text form of ``model``."""
    lines = ["# hybridarm robot model", "[robot]"]
    for key in _ROBOT_KEYS:
        lines.append(f"{key} = {_fmt(getattr(model, key))}")
    for i, link in enumerate(model.links, start=1):
        I = link.inertia
        lines += [
            "",
            f"[link{i}]",
            f"mass = {_fmt([link.mass])}",
            f"com_offset = {_fmt(link.com_offset)}",
            f"joint_offset = {_fmt(link.joint_offset)}",
            f"inertia = {_fmt([I[0, 0], I[1, 1], I[2, 2], I[0, 1], I[0, 2], I[1, 2]])}",
            f"fixed_rotation = {_fmt(link.fixed_rotation)}",
            f"armature = {_fmt([link.armature])}",
        ]
    return "\n".join(lines) + "\n"


def _floats(parser, section: str, key: str, count: int) -> np.ndarray:
    if not parser.has_option(section, key):
        raise ModelError(f"[{section}] missing field '{key}'")
    raw = parser.get(section, key)
    try:
        vals = np.array([float(tok) for tok in raw.split()])
    except ValueError as exc:
        raise ModelError(f"[{section}] {key}: cannot parse '{raw}' ({exc})") from None
    if vals.size != count:
        raise ModelError(f"[{section}] {key}: expected {count} numbers, got {vals.size}")
    return vals


def loads_model(text: str, source: str = "<string>") -> RobotModel:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ModelError(f"{source}: {exc}") from None
    if not parser.has_section("robot"):
        raise ModelError(f"{source}: missing [robot] section")
    link_sections = [s for s in parser.sections() if s != "robot"]
    expected = [f"link{i}" for i in range(1, len(link_sections) + 1)]
    if sorted(link_sections, key=lambda s: (len(s), s)) != expected:
        raise ModelError(f"{source}: link sections must be link1..linkN, got {link_sections}")
    robot = {k: _floats(parser, "robot", k, 3) for k in _ROBOT_KEYS
             if parser.has_option("robot", k)}
    links = []
    for sec in expected:
        ixx, iyy, izz, ixy, ixz, iyz = _floats(parser, sec, "inertia", 6)
        inertia = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
        fixed = (_floats(parser, sec, "fixed_rotation", 9).reshape(3, 3)
                 if parser.has_option(sec, "fixed_rotation") else np.eye(3))
        try:
            links.append(LinkParams(
                mass=_floats(parser, sec, "mass", 1)[0],
                com_offset=_floats(parser, sec, "com_offset", 3),
                joint_offset=_floats(parser, sec, "joint_offset", 3),
                inertia=inertia,
                fixed_rotation=fixed,
                armature=(_floats(parser, sec, "armature", 1)[0]
                          if parser.has_option(sec, "armature") else 0.0),
            ))
        except ModelError as exc:
            raise ModelError(f"{source} [{sec}]: {exc}") from None
    try:
        return RobotModel(tuple(links), **robot)
    except ModelError as exc:
        raise ModelError(f"{source} [robot]: {exc}") from None


def load_model(path) -> RobotModel:
    path = Path(path)
    return loads_model(path.read_text(), source=str(path))


def save_model(model: RobotModel, path) -> None:
    Path(path).write_text(dumps_model(model))
