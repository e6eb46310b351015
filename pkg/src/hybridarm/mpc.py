"""Finite-candidate predictive layer on top of a feedback law.

The feedback torque is scaled by each entry of a selection vector, every
candidate is expanded into a decaying preview sequence, rolled out through the
forward dynamics and scored; the first torque of the cheapest feasible
sequence is applied (receding horizon).
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels as K
from .dynamics import JointState
from .feedback import TORQUE_BOUNDS, FeedbackController, saturate
from .model import RobotModel

__all__ = [
    "Q_BOUNDS",
    "QD_BOUNDS",
    "MpcConfig",
    "CandidateRollout",
    "HmpcDiagnostics",
    "candidate_torques",
    "preview_sequence",
    "rollout_cost",
    "rollout_all",
    "select_optimal",
    "hmpc_step",
    "load_mpc_config",
    "save_mpc_config",
]

Q_BOUNDS = np.pi * np.array([1.0, 0.8, 0.8, 1.0, 1.0, 1.0])
QD_BOUNDS = np.full(6, 0.81 * np.pi)

# Reference sampler: times (T,) -> (q_ref (T, N), qd_ref (T, N))
RefSampler = Callable[[np.ndarray], tuple]


def _default_selection():
    return np.round(np.arange(0.5, 1.5 + 1e-9, 0.1), 10)


@dataclass
class MpcConfig:
    """Candidate set, horizon, cost weights and bounds.

    ``w_e``, ``w_ed``, ``w_xi``, ``w_slide``, ``w_dhat`` are the diagonal blocks
    of the error weight over the five error features; ``w_tau`` the diagonal of
    the torque weight.  ``temporal_weights`` holds one scalar per preview step
    (applied to all joints).
    """

    selection: np.ndarray = field(default_factory=_default_selection)
    horizon: int = 5
    temporal_weights: np.ndarray | None = None
    w_e: np.ndarray = field(default_factory=lambda: np.full(6, 100.0))
    w_ed: np.ndarray = field(default_factory=lambda: np.full(6, 1.0))
    w_xi: np.ndarray = field(default_factory=lambda: np.zeros(6))
    w_slide: np.ndarray = field(default_factory=lambda: np.zeros(6))
    w_dhat: np.ndarray = field(default_factory=lambda: np.zeros(6))
    w_tau: np.ndarray = field(default_factory=lambda: np.full(6, 1e-4))
    q_min: np.ndarray = field(default_factory=lambda: -Q_BOUNDS)
    q_max: np.ndarray = field(default_factory=lambda: Q_BOUNDS.copy())
    qd_min: np.ndarray = field(default_factory=lambda: -QD_BOUNDS)
    qd_max: np.ndarray = field(default_factory=lambda: QD_BOUNDS.copy())
    torque_bounds: np.ndarray = field(default_factory=lambda: TORQUE_BOUNDS.copy())
    dt: float = 0.005

    def __post_init__(self):
        self.selection = np.atleast_1d(np.array(self.selection, dtype=float))
        if self.selection.size == 0 or np.any(np.diff(self.selection) <= 0):
            raise ValueError("selection must be non-empty and strictly increasing")
        self.horizon = int(self.horizon)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.temporal_weights is None:
            self.temporal_weights = 1.0 - 0.05 * np.arange(self.horizon)
        self.temporal_weights = np.atleast_1d(np.array(self.temporal_weights, dtype=float))
        if self.temporal_weights.size != self.horizon:
            raise ValueError("temporal_weights length must equal horizon")
        for name in ("w_e", "w_ed", "w_xi", "w_slide", "w_dhat", "w_tau"):
            v = np.array(getattr(self, name), dtype=float)
            if np.any(v < 0):
                raise ValueError(f"{name} entries must be >= 0")
            setattr(self, name, v)
        for name in ("q_min", "q_max", "qd_min", "qd_max", "torque_bounds"):
            v = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite")
            setattr(self, name, v)
        if np.any(self.q_min >= self.q_max) or np.any(self.qd_min >= self.qd_max):
            raise ValueError("state bounds need min < max")
        if np.any(self.torque_bounds <= 0):
            raise ValueError("torque bounds must be > 0")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")

    def preview_matrices(self) -> list[np.ndarray]:
        n = self.torque_bounds.size
        return [w * np.eye(n) for w in self.temporal_weights]


@dataclass
class CandidateRollout:
    scalar: float
    torques: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    cost: float
    feasible: bool
    violation_step: int = -1


@dataclass
class HmpcDiagnostics:
    costs: np.ndarray
    feasible: np.ndarray
    chosen_scalar: float
    fallback: bool
    tau_fb: np.ndarray


def candidate_torques(tau_fb, cfg: MpcConfig) -> list[np.ndarray]:
    tau_fb = np.asarray(tau_fb, dtype=float)
    return [saturate(w * tau_fb, cfg.torque_bounds) for w in cfg.selection]


def preview_sequence(candidate, cfg: MpcConfig) -> list[np.ndarray]:
    candidate = np.asarray(candidate, dtype=float)
    return [saturate(w * candidate, cfg.torque_bounds) for w in cfg.temporal_weights]


def _kernel_args(model: RobotModel):
    a = model.arrays
    return (a["fixed_rotation"], a["joint_offset"], a["com_offset"], a["mass"], a["inertia"],
            model.tool_offset, a["armature"], model.base_angular_velocity,
            model.base_angular_acceleration, model.base_linear_acceleration, model.gravity)


def _lambda(fb) -> np.ndarray:
    return fb.gains.smc_lambda if fb is not None else None


def rollout_all(model: RobotModel, state: JointState, ref: RefSampler, t: float,
                cands: np.ndarray, cfg: MpcConfig, fb_ctx: FeedbackController | None = None):
    """Roll out every candidate row of ``cands`` with the configured preview weights.

    Returns the raw kernel tuple ``(costs, feasible, violation_step, q, qd)``.
    """
    times = t + cfg.dt * np.arange(1, cfg.horizon + 1)
    qref, qdref = ref(times)
    n = state.q.size
    lam = _lambda(fb_ctx) if fb_ctx is not None else np.zeros(n)
    return K.rollout_candidates(
        *_kernel_args(model), state.q, state.qd,
        np.ascontiguousarray(cands, dtype=float), cfg.temporal_weights,
        np.ascontiguousarray(qref, dtype=float), np.ascontiguousarray(qdref, dtype=float),
        cfg.w_e, cfg.w_ed, cfg.w_slide, lam, cfg.w_tau,
        cfg.q_min, cfg.q_max, cfg.qd_min, cfg.qd_max, cfg.torque_bounds, cfg.dt)


def _static_cost(cfg: MpcConfig, E) -> float:
    # xi and dhat are not predicted; they add the same constant to every candidate
    if E is None:
        return 0.0
    per_step = float(np.sum(cfg.w_xi * E.xi**2) + np.sum(cfg.w_dhat * E.dhat**2))
    return per_step * cfg.horizon


def rollout_cost(model: RobotModel, state: JointState, ref: RefSampler, seq, cfg: MpcConfig,
                 fb_ctx: FeedbackController | None = None, t: float = 0.0,
                 scalar: float = float("nan"), E=None) -> CandidateRollout:
    """Simulate an explicit torque sequence over the horizon and score it.

    ``ref(times)`` returns the reference at the predicted instants
    ``t + j*dt`` (j = 1..T_N).  Infeasible rollouts get ``cost = inf``.
    """
    seq = np.asarray(seq, dtype=float)
    if seq.shape[0] != cfg.horizon:
        raise ValueError(f"sequence length {seq.shape[0]} != horizon {cfg.horizon}")
    times = t + cfg.dt * np.arange(1, cfg.horizon + 1)
    qref, qdref = ref(times)
    n = state.q.size
    lam = _lambda(fb_ctx) if fb_ctx is not None else np.zeros(n)
    J = 0.0
    q, qd = state.q.copy(), state.qd.copy()
    qs, qds = np.zeros((cfg.horizon, n)), np.zeros((cfg.horizon, n))
    feasible, viol = True, -1
    for j in range(cfg.horizon):
        costs, feas, v, pq, pqd = K.rollout_candidates(
            *_kernel_args(model), q, qd, saturate(seq[j], cfg.torque_bounds)[None, :],
            np.ones(1), np.ascontiguousarray(qref[j:j + 1]), np.ascontiguousarray(qdref[j:j + 1]),
            cfg.w_e, cfg.w_ed, cfg.w_slide, lam, cfg.w_tau,
            cfg.q_min, cfg.q_max, cfg.qd_min, cfg.qd_max, cfg.torque_bounds, cfg.dt)
        if not feas[0]:
            feasible, viol = False, j if v[0] >= 0 else int(v[0])
            break
        J += costs[0]
        q, qd = pq[0, 0], pqd[0, 0]
        qs[j], qds[j] = q, qd
    cost = J + _static_cost(cfg, E) if feasible else float("inf")
    return CandidateRollout(scalar, seq, qs, qds, cost, feasible, viol)


def _tie_key(r: CandidateRollout):
    return (r.cost, abs(r.scalar - 1.0), r.scalar)


def select_optimal(rollouts: list[CandidateRollout], tau_fb=None, bounds=None):
    """First torque of the cheapest feasible rollout.

    Ties go to the scalar closest to 1.0, then the smaller scalar.  Returns
    ``(tau, chosen_scalar, fallback)``; when nothing is feasible the saturated
    ``tau_fb`` is returned with ``fallback = True`` (``chosen_scalar`` is nan).
    """
    if not rollouts:
        raise ValueError("no rollouts to select from")
    feasible = [r for r in rollouts if r.feasible]
    if not feasible:
        if tau_fb is None:
            raise ValueError("all rollouts infeasible and no feedback torque given")
        fb = np.asarray(tau_fb, dtype=float)
        return (saturate(fb, bounds) if bounds is not None else fb), float("nan"), True
    best = min(feasible, key=_tie_key)
    return np.asarray(best.torques[0], dtype=float), best.scalar, False


def hmpc_step(model: RobotModel, state: JointState, ref: RefSampler, fb: FeedbackController,
              cfg: MpcConfig, t: float, ref_now=None):
    """One control period of the hybrid controller.

    ``ref_now`` optionally supplies ``(q_ref, qd_ref)`` at time ``t``; otherwise
    it is sampled from ``ref``.  Advances ``fb``'s memory exactly as the bare
    feedback law would.  Returns ``(tau, HmpcDiagnostics)``.
    """
    if ref_now is None:
        rq, rqd = ref(np.array([t]))
        ref_now = (rq[0], rqd[0])
    tau_fb, E = fb(state, ref_now[0], ref_now[1], cfg.dt)
    cands = np.array(candidate_torques(tau_fb, cfg))
    costs, feas, _, _, _ = rollout_all(model, state, ref, t, cands, cfg, fb)
    costs = costs + _static_cost(cfg, E)
    if not feas.any():
        return (saturate(tau_fb, cfg.torque_bounds),
                HmpcDiagnostics(costs, feas, float("nan"), True, tau_fb))
    # total order: cost, distance of the scalar from 1.0, then the scalar itself
    order = sorted(np.flatnonzero(feas),
                   key=lambda i: (costs[i], abs(cfg.selection[i] - 1.0), cfg.selection[i]))
    best = order[0]
    tau = saturate(cfg.temporal_weights[0] * cands[best], cfg.torque_bounds)
    return tau, HmpcDiagnostics(costs, feas, float(cfg.selection[best]), False, tau_fb)


# --------------------------------------------------------------------------
# config file

_MPC_VEC = ("selection", "temporal_weights", "w_e", "w_ed", "w_xi", "w_slide", "w_dhat",
            "w_tau", "q_min", "q_max", "qd_min", "qd_max", "torque_bounds")


def save_mpc_config(cfg: MpcConfig, path) -> None:
    cp = configparser.ConfigParser()
    sec = {"horizon": str(cfg.horizon), "dt": repr(cfg.dt)}
    for k in _MPC_VEC:
        sec[k] = " ".join(repr(float(x)) for x in getattr(cfg, k))
    cp["mpc"] = sec
    with open(path, "w") as fh:
        cp.write(fh)


def load_mpc_config(path) -> MpcConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(Path(path).read_text(), source=str(path))
    kw = {}
    if cp.has_option("mpc", "horizon"):
        kw["horizon"] = cp.getint("mpc", "horizon")
    if cp.has_option("mpc", "dt"):
        kw["dt"] = cp.getfloat("mpc", "dt")
    for k in _MPC_VEC:
        if cp.has_option("mpc", k):
            kw[k] = np.array([float(t) for t in cp.get("mpc", k).split()])
    return MpcConfig(**kw)
