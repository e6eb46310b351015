"""Recursive Newton-Euler inverse and forward dynamics.

Torques follow ``M(q) qdd + C(q, qd) qd + G(q) + J^T w_e = tau`` where ``w_e``
is the wrench (``SpatialLoad``) the end-effector exerts on its environment,
expressed in the tool frame.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels as K
from .model import Pose, RobotModel

__all__ = [
    "DynamicsError",
    "JointState",
    "SpatialLoad",
    "KinematicPropagation",
    "propagate_kinematics",
    "rneida",
    "mass_matrix",
    "bias_vector",
    "gravity_vector",
    "coriolis_matrix",
    "rnefda",
    "forward_kinematics",
]

_Z3 = np.zeros(3)


class DynamicsError(RuntimeError):
    """The joint-space mass matrix could not be factorized or solved."""


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        qd = np.array(self.qd, dtype=float).reshape(-1)
        if q.shape != qd.shape:
            raise ValueError(f"q and qd lengths differ ({q.size} vs {qd.size})")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("joint state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)

    @classmethod
    def zeros(cls, n: int) -> "JointState":
        return cls(np.zeros(n), np.zeros(n))


@dataclass(frozen=True)
class SpatialLoad:
    end_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    end_torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("end_force", "end_torque"):
            v = np.array(getattr(self, name), dtype=float).reshape(-1)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class KinematicPropagation:
    """Per-link motion, each row expressed in that link's own frame.

    ``rotation[k]`` maps link-k coordinates into the base frame.
    """

    omega: np.ndarray
    domega: np.ndarray
    acc_origin: np.ndarray
    acc_com: np.ndarray
    rotation: np.ndarray

    def __len__(self):
        return self.omega.shape[0]


def _vec(x, n: int, name: str) -> np.ndarray:
    v = np.ascontiguousarray(x, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got {v.size}")
    return v


def _load(load) -> tuple[np.ndarray, np.ndarray]:
    if load is None:
        return _Z3, _Z3
    return load.end_force, load.end_torque


def _base(model: RobotModel, gravity: bool = True):
    g = model.gravity if gravity else _Z3
    return (model.base_angular_velocity, model.base_angular_acceleration,
            model.base_linear_acceleration, g)


def propagate_kinematics(model: RobotModel, q, qd, qdd) -> KinematicPropagation:
    """Outward velocity/acceleration recursion (gravity not included)."""
    n = model.n
    q, qd, qdd = _vec(q, n, "q"), _vec(qd, n, "qd"), _vec(qdd, n, "qdd")
    a = model.arrays
    Rs = K.rotations(a["fixed_rotation"], q)
    out = [np.empty((n, 3)) for _ in range(5)]
    w0, dw0, a0, _ = _base(model)
    K.forward_pass(Rs, a["joint_offset"], a["com_offset"], qd, qdd, w0, dw0, a0, _Z3, *out)
    R0 = np.empty((n, 3, 3))
    acc = np.eye(3)
    for k in range(n):
        acc = acc @ Rs[k]
        R0[k] = acc
    return KinematicPropagation(out[0], out[1], out[2], out[3], R0)


def rneida(model: RobotModel, q, qd, qdd, load: SpatialLoad | None = None,
           *, gravity: bool = True) -> np.ndarray:
    """Joint torques realizing ``qdd`` at ``(q, qd)`` under ``load``."""
    n = model.n
    q, qd, qdd = _vec(q, n, "q"), _vec(qd, n, "qd"), _vec(qdd, n, "qdd")
    a = model.arrays
    Rs = K.rotations(a["fixed_rotation"], q)
    fe, ne = _load(load)
    return K.rne(Rs, a["joint_offset"], a["com_offset"], a["mass"], a["inertia"],
                 model.tool_offset, a["armature"], qd, qdd, *_base(model, gravity),
                 fe, ne)


def mass_matrix(model: RobotModel, q) -> np.ndarray:
    """Joint-space inertia, one unit-acceleration inverse-dynamics call per column.

    Columns are evaluated with gravity, base motion and end loads all zero, so
    only the inertial response to ``qdd = e_j`` remains.
    """
    q = _vec(q, model.n, "q")
    a = model.arrays
    Rs = K.rotations(a["fixed_rotation"], q)
    return K.mass_matrix(Rs, a["joint_offset"], a["com_offset"], a["mass"],
                         a["inertia"], model.tool_offset, a["armature"])


def bias_vector(model: RobotModel, q, qd, load: SpatialLoad | None = None,
                *, gravity: bool = True) -> np.ndarray:
    """``h(q, qd) = C(q, qd) qd + G(q)`` plus the end-load reaction."""
    return rneida(model, q, qd, np.zeros(model.n), load, gravity=gravity)


def gravity_vector(model: RobotModel, q) -> np.ndarray:
    n = model.n
    return rneida(model, q, np.zeros(n), np.zeros(n))


def coriolis_matrix(model: RobotModel, q, qd) -> np.ndarray:
    """Christoffel-consistent ``C(q, qd)`` recovered from bias probes.

    The velocity part of the bias is a quadratic form ``Q(v)``; polarization
    gives column ``j`` as ``(Q(qd + e_j) - Q(qd - e_j)) / 4``.  The result
    satisfies ``C(q, qd) qd = Q(qd)`` and the skew property of ``dM/dt - 2C``.
    """
    n = model.n
    q, qd = _vec(q, n, "q"), _vec(qd, n, "qd")
    C = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        C[:, j] = 0.25 * (bias_vector(model, q, qd + e, gravity=False)
                          - bias_vector(model, q, qd - e, gravity=False))
    return C


def rnefda(model: RobotModel, q, qd, tau, load: SpatialLoad | None = None) -> np.ndarray:
    """Joint accelerations from ``M(q) qdd = tau - h(q, qd)``.

    Uses a Cholesky solve.  If that fails a pivoted LU solve is attempted
    with a warning, and :class:`DynamicsError` is raised if it fails too.
    """
    n = model.n
    q, qd, tau = _vec(q, n, "q"), _vec(qd, n, "qd"), _vec(tau, n, "tau")
    a = model.arrays
    fe, ne = _load(load)
    qdd, ok = K.forward_dynamics(a["fixed_rotation"], a["joint_offset"], a["com_offset"],
                                 a["mass"], a["inertia"], model.tool_offset,
                                 a["armature"],
                                 q, qd, tau, *_base(model), fe, ne)
    if ok:
        return qdd
    M = mass_matrix(model, q)
    warnings.warn("mass matrix is not positive definite; using a pivoted solve",
                  RuntimeWarning, stacklevel=2)
    try:
        qdd = scipy.linalg.solve(M, tau - bias_vector(model, q, qd, load))
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise DynamicsError(f"mass matrix is singular at q={q}: {exc}") from None
    if not np.all(np.isfinite(qdd)):
        raise DynamicsError(f"non-finite accelerations at q={q}")
    return qdd


def forward_kinematics(model: RobotModel, q) -> list[Pose]:
    """Base-frame poses of every link frame followed by the tool frame."""
    q = _vec(q, model.n, "q")
    a = model.arrays
    Rs = K.rotations(a["fixed_rotation"], q)
    R = np.eye(3)
    p = np.zeros(3)
    poses = []
    for k in range(model.n):
        p = p + R @ a["joint_offset"][k]
        R = R @ Rs[k]
        poses.append(Pose(R, p))
    poses.append(Pose(R, p + R @ model.tool_offset))
    return poses
