"""Closed-loop simulation, tracking metrics and experiment campaigns."""
from __future__ import annotations

import configparser
import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .dynamics import DynamicsError, JointState, rnefda
from .feedback import LAWS, FeedbackController, FeedbackGains, published_gains, saturate
from .model import RobotModel, ur5_default
from .mpc import QD_BOUNDS, Q_BOUNDS, MpcConfig, hmpc_step

__all__ = [
    "MODES",
    "METRIC_NAMES",
    "METRIC_WEIGHTS",
    "SETTLE_THRESHOLD",
    "Condition",
    "EpisodeConfig",
    "EpisodeTrace",
    "MetricSet",
    "builtin_conditions",
    "reference",
    "reference_sampler",
    "inject_disturbance",
    "step",
    "clamp_state",
    "run_episode",
    "compute_metrics",
    "composite_score",
    "CampaignSpec",
    "CampaignResult",
    "load_campaign",
    "run_campaign",
    "write_trace_csv",
    "read_trace_csv",
]

MODES = ("fb", "hmpc", "lmpc")
METRIC_NAMES = ("rmse", "mae", "p95", "peak", "settle", "dedt_rms")
METRIC_WEIGHTS = np.array([0.1, 0.1, 0.1, 0.1, 0.3, 0.3])
SETTLE_THRESHOLD = np.deg2rad(1.0)
DEFAULT_DISTURBANCE = np.array([1.0, 1.0, 5.0, 5.0, 10.0, 10.0])


@dataclass
class Condition:
    """Sinusoidal point-to-point reference plus an impulsive disturbance."""

    Q: np.ndarray
    f: np.ndarray
    T: float = 5.0
    disturbance: np.ndarray = field(default_factory=lambda: DEFAULT_DISTURBANCE.copy())
    trigger: float = 2.0
    name: str = ""

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        self.disturbance = np.asarray(self.disturbance, dtype=float)
        if self.T <= 0:
            raise ValueError("T must be > 0")
        if np.any(self.f <= 0):
            raise ValueError("frequencies must be > 0")


def builtin_conditions() -> list[Condition]:
    pi = np.pi
    Q1 = np.array([-pi / 4, pi / 6, -pi / 6, -pi / 4, pi / 2, pi / 2])
    Q3 = np.array([-pi / 3, pi / 4, -pi / 6, -pi / 6, pi / 3, pi / 2])
    Q4 = np.full(6, pi / 2)
    f1, f4 = np.full(6, 0.1), np.full(6, 0.05)
    specs = [(Q1, f1), (-Q1, f1), (Q3, f1), (Q4, f4), (-Q4, f4)]
    return [Condition(Q.copy(), f.copy(), name=f"cond{k}") for k, (Q, f) in enumerate(specs, 1)]


def reference(cond: Condition, t):
    """Reference position and velocity at time(s) ``t``.

    Scalar ``t`` gives N-vectors; an array of times gives (len(t), N) arrays.
    """
    t_arr = np.asarray(t, dtype=float)
    phase = 2.0 * np.pi * cond.f * (t_arr[..., None] - cond.T / 2.0)
    q = 0.5 * cond.Q * (1.0 + np.sin(phase))
    qd = np.pi * cond.Q * cond.f * np.cos(phase)
    return q, qd


def reference_sampler(cond: Condition):
    return lambda times: reference(cond, times)


def inject_disturbance(cond: Condition, t: float, dt: float) -> np.ndarray:
    """Disturbance torque for the control period ``[t, t + dt)``; zero elsewhere."""
    tol = 1e-9 * dt
    if t - tol <= cond.trigger < t + dt - tol:
        return cond.disturbance.copy()
    return np.zeros_like(cond.disturbance)


def step(model: RobotModel, state: JointState, tau, dt: float) -> JointState:
    """Semi-implicit Euler: velocity first, then position with the new velocity."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    qdd = rnefda(model, state.q, state.qd, tau)
    qd = state.qd + dt * qdd
    return JointState(state.q + dt * qd, qd)


def _fast_step(model: RobotModel, q, qd, tau, dt):
    a = model.arrays
    z = np.zeros(3)
    q1, qd1, ok = K.semi_implicit_step(
        a["fixed_rotation"], a["joint_offset"], a["com_offset"], a["mass"], a["inertia"],
        model.tool_offset, a["armature"], q, qd, np.asarray(tau, dtype=float), dt,
        model.base_angular_velocity, model.base_angular_acceleration,
        model.base_linear_acceleration, model.gravity, z, z)
    if not ok:
        # fall back to the checked path, which warns or raises
        s = step(model, JointState(q, qd), tau, dt)
        return s.q, s.qd
    return q1, qd1


def clamp_state(state: JointState, q_bounds=Q_BOUNDS, qd_bounds=QD_BOUNDS):
    """Clip to the admissible box; returns ``(state, clamped)``."""
    q = np.clip(state.q, -q_bounds, q_bounds)
    qd = np.clip(state.qd, -qd_bounds, qd_bounds)
    clamped = bool(np.any(q != state.q) or np.any(qd != state.qd))
    return JointState(q, qd), clamped


@dataclass
class EpisodeConfig:
    dt: float = 0.005
    init_noise: float = 0.01
    mpc: MpcConfig = field(default_factory=MpcConfig)
    gains: FeedbackGains = field(default_factory=published_gains)
    q_bounds: np.ndarray = field(default_factory=lambda: Q_BOUNDS.copy())
    qd_bounds: np.ndarray = field(default_factory=lambda: QD_BOUNDS.copy())
    record_fb_state: bool = False


@dataclass
class EpisodeTrace:
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    q_ref: np.ndarray
    qd_ref: np.ndarray
    tau: np.ndarray
    tau_fb: np.ndarray
    error: np.ndarray
    latency: np.ndarray
    clamped: np.ndarray
    meta: dict = field(default_factory=dict)
    fb_states: np.ndarray | None = None

    def __len__(self):
        return self.t.size

    @property
    def mean_abs_error(self) -> np.ndarray:
        return np.mean(np.abs(self.error), axis=1)


def _initial_state(cond: Condition, seed: int, noise: float) -> JointState:
    q0, qd0 = reference(cond, 0.0)
    rng = np.random.default_rng(seed)
    return JointState(q0 + rng.uniform(-noise, noise, q0.size), np.zeros_like(q0))


def run_episode(model: RobotModel, mode: str, law: str, cond: Condition,
                cfg: EpisodeConfig | None = None, seed: int = 0, net=None) -> EpisodeTrace:
    """Simulate one closed-loop episode from ``t = 0`` to ``cond.T``.

    The controller output is saturated, the disturbance is added on top of it
    (it is an external torque, not subject to actuator limits) and the plant
    is advanced with the shared semi-implicit integrator.  States leaving the
    admissible box are clipped and flagged in ``trace.clamped``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cfg = cfg or EpisodeConfig()
    dt = cfg.dt
    if mode == "lmpc" and net is None:
        raise ValueError("LMPC mode requires a trained emulator network")
    if mode == "lmpc":
        from .emulator import lmpc_step
    mpc_cfg = cfg.mpc
    if mpc_cfg.dt != dt:
        mpc_cfg = MpcConfig(**{**mpc_cfg.__dict__, "dt": dt})
    fb = FeedbackController(law, cfg.gains)
    sampler = reference_sampler(cond)
    steps = int(round(cond.T / dt))
    times = dt * np.arange(steps + 1)
    q_ref, qd_ref = reference(cond, times)
    n = model.n
    out = {k: np.zeros((steps + 1, n)) for k in ("q", "qd", "tau", "tau_fb", "error")}
    latency = np.zeros(steps + 1)
    clamped = np.zeros(steps + 1, dtype=bool)
    fb_states = [] if cfg.record_fb_state else None
    bounds = cfg.gains.torque_bounds
    js = _initial_state(cond, seed, cfg.init_noise)
    for k in range(steps + 1):
        t = times[k]
        if fb_states is not None:
            fb_states.append(fb.state.as_array())
        t0 = time.perf_counter()
        if mode == "fb":
            tau, E = fb(js, q_ref[k], qd_ref[k], dt)
            tau_fb = tau
        elif mode == "hmpc":
            tau, diag = hmpc_step(model, js, sampler, fb, mpc_cfg, t, (q_ref[k], qd_ref[k]))
            tau_fb = diag.tau_fb
        else:
            tau, tau_fb = lmpc_step(net, js, q_ref[k], qd_ref[k], fb, dt, return_fb=True)
        latency[k] = time.perf_counter() - t0
        tau = saturate(tau, bounds)
        out["q"][k], out["qd"][k] = js.q, js.qd
        out["tau"][k], out["tau_fb"][k] = tau, tau_fb
        out["error"][k] = q_ref[k] - js.q
        if k == steps:
            break
        applied = tau + inject_disturbance(cond, t, dt)
        q1, qd1 = _fast_step(model, js.q, js.qd, applied, dt)
        js, clamped[k + 1] = clamp_state(JointState(q1, qd1), cfg.q_bounds, cfg.qd_bounds)
    meta = {"mode": mode, "law": law, "condition": cond.name, "seed": seed, "dt": dt,
            "clamp_events": int(clamped.sum())}
    return EpisodeTrace(times, out["q"], out["qd"], q_ref, qd_ref, out["tau"], out["tau_fb"],
                        out["error"], latency, clamped, meta,
                        np.array(fb_states) if fb_states is not None else None)


# --------------------------------------------------------------------------
# metrics

@dataclass
class MetricSet:
    rmse: float
    mae: float
    p95: float
    peak: float
    settle: float
    dedt_rms: float
    censored: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in METRIC_NAMES])


def _settle_time(t, ebar, trigger, threshold):
    after = t >= trigger - 1e-12
    ta, ea = t[after], ebar[after]
    if ta.size == 0:
        return 0.0, False
    above = np.flatnonzero(ea >= threshold)
    if above.size == 0:
        return 0.0, False
    last = above[-1]
    if last == ea.size - 1:
        return float(t[-1] - trigger), True
    # linear interpolation of the final downward crossing
    e0, e1 = ea[last], ea[last + 1]
    frac = (e0 - threshold) / (e0 - e1)
    return float(ta[last] + frac * (ta[last + 1] - ta[last]) - trigger), False


def compute_metrics(trace_or_t, ebar=None, trigger: float = 2.0,
                    settle_threshold: float = SETTLE_THRESHOLD) -> MetricSet:
    """Tracking metrics of the joint-averaged absolute error.

    Accepts an :class:`EpisodeTrace` or explicit ``(t, ebar)`` arrays.  The
    settling time is measured from ``trigger`` to the last downward crossing
    of the threshold; an episode still above it at the end reports
    ``T - trigger`` with ``censored = True``.
    """
    if isinstance(trace_or_t, EpisodeTrace):
        t = trace_or_t.t
        ebar = trace_or_t.mean_abs_error
    else:
        t = np.asarray(trace_or_t, dtype=float)
        ebar = np.asarray(ebar, dtype=float)
    if t.size == 0:
        raise ValueError("empty trace")
    settle, censored = _settle_time(t, ebar, trigger, settle_threshold)
    if t.size > 1:
        dedt = np.diff(ebar) / np.diff(t)
        dedt_rms = float(np.sqrt(np.mean(dedt**2)))
    else:
        dedt_rms = 0.0
    return MetricSet(
        rmse=float(np.sqrt(np.mean(ebar**2))),
        mae=float(np.mean(np.abs(ebar))),
        p95=float(np.percentile(ebar, 95)),
        peak=float(np.max(np.abs(ebar))),
        settle=settle,
        dedt_rms=dedt_rms,
        censored=censored,
    )


def composite_score(metric_sets: dict, weights=METRIC_WEIGHTS) -> dict:
    """Weighted sum of min-max normalized metrics across the compared set (lower is better)."""
    weights = np.asarray(weights, dtype=float)
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("metric weights must sum to 1")
    if len(metric_sets) < 2:
        raise ValueError("composite scoring needs at least two controllers")
    names = list(metric_sets)
    X = np.array([metric_sets[k].as_array() for k in names])
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    norm = np.where(span > 0, (X - lo) / np.where(span > 0, span, 1.0), 0.0)
    scores = norm @ weights
    return {k: float(s) for k, s in zip(names, scores)}


# --------------------------------------------------------------------------
# trace files

def write_trace_csv(trace: EpisodeTrace, path) -> None:
    n = trace.q.shape[1]
    header = (["t"] + [f"q{i}" for i in range(1, n + 1)] + [f"ref{i}" for i in range(1, n + 1)]
              + [f"e{i}" for i in range(1, n + 1)] + [f"tau{i}" for i in range(1, n + 1)]
              + ["latency"])
    data = np.column_stack([trace.t, trace.q, trace.q_ref, trace.error, trace.tau,
                            trace.latency])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(x)) for x in row])


def read_trace_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(header)}


# --------------------------------------------------------------------------
# campaigns

@dataclass
class CampaignSpec:
    laws: list = field(default_factory=lambda: ["pd", "pid"])
    modes: list = field(default_factory=lambda: ["fb", "hmpc"])
    conditions: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    dt: float = 0.005
    horizon: int = 5
    output: str | None = None
    net: str | None = None
    write_traces: bool = True

    def __post_init__(self):
        bad = [l for l in self.laws if l not in LAWS] + [m for m in self.modes if m not in MODES]
        if bad:
            raise ValueError(f"unknown laws/modes in campaign: {bad}")


def load_campaign(path) -> CampaignSpec:
    """Parse a ``[campaign]`` INI section (space-separated lists)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(Path(path).read_text(), source=str(path))
    sec = cp["campaign"]
    kw = {}
    for key in ("laws", "modes"):
        if key in sec:
            kw[key] = sec[key].split()
    for key in ("conditions", "seeds"):
        if key in sec:
            kw[key] = [int(x) for x in sec[key].split()]
    if "dt" in sec:
        kw["dt"] = float(sec["dt"])
    if "horizon" in sec:
        kw["horizon"] = int(sec["horizon"])
    for key in ("output", "net"):
        if key in sec:
            kw[key] = sec[key]
    if "write_traces" in sec:
        kw["write_traces"] = sec.getboolean("write_traces")
    return CampaignSpec(**kw)


@dataclass
class CampaignResult:
    """Per-cell metrics and the aggregated table.

    ``table`` maps law -> {"score": {mode: mean score}, "eta": {mode: %},
    "latency_ms": {mode: mean per-cycle latency}}.
    """

    cells: list
    table: dict
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def run_campaign(spec: CampaignSpec, model: RobotModel | None = None,
                 episode_cfg: EpisodeConfig | None = None, net=None) -> CampaignResult:
    """Run every law x mode x condition x seed cell and aggregate.

    Scores are min-max normalized across all cells sharing a condition and
    seed, then averaged over conditions and seeds per (law, mode).
    """
    model = model or ur5_default()
    base = episode_cfg or EpisodeConfig()
    mpc_kw = {**base.mpc.__dict__, "dt": spec.dt, "horizon": spec.horizon}
    if len(base.mpc.temporal_weights) != spec.horizon:
        mpc_kw["temporal_weights"] = None
    cfg = EpisodeConfig(**{**base.__dict__, "dt": spec.dt, "mpc": MpcConfig(**mpc_kw)})
    if net is None and spec.net and "lmpc" in spec.modes:
        from .emulator import load_net
        net = load_net(spec.net)
    conds = builtin_conditions()
    out_dir = Path(spec.output) if spec.output else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    cells, failures = [], []
    for ci in spec.conditions:
        for seed in spec.seeds:
            for law in spec.laws:
                for mode in spec.modes:
                    cell = {"law": law, "mode": mode, "condition": ci, "seed": seed}
                    try:
                        tr = run_episode(model, mode, law, conds[ci - 1], cfg, seed, net)
                    except (DynamicsError, ValueError, FloatingPointError) as exc:
                        failures.append({**cell, "error": str(exc)})
                        continue
                    ms = compute_metrics(tr, trigger=conds[ci - 1].trigger)
                    cell.update(metrics=ms, latency=float(np.mean(tr.latency)),
                                clamp_events=tr.meta["clamp_events"])
                    cells.append(cell)
                    if out_dir and spec.write_traces:
                        write_trace_csv(tr, out_dir / f"trace_{law}_{mode}_c{ci}_s{seed}.csv")
    for cell in cells:
        cell["score"] = float("nan")
    groups = {}
    for cell in cells:
        groups.setdefault((cell["condition"], cell["seed"]), []).append(cell)
    for group in groups.values():
        if len(group) < 2:
            continue
        scores = composite_score({i: c["metrics"] for i, c in enumerate(group)})
        for i, c in enumerate(group):
            c["score"] = scores[i]
    table = {}
    for law in spec.laws:
        row = {"score": {}, "eta": {}, "latency_ms": {}}
        for mode in spec.modes:
            sel = [c for c in cells if c["law"] == law and c["mode"] == mode]
            if sel:
                row["score"][mode] = float(np.mean([c["score"] for c in sel]))
                row["latency_ms"][mode] = 1e3 * float(np.mean([c["latency"] for c in sel]))
        fb_score = row["score"].get("fb")
        for mode in spec.modes:
            if mode != "fb" and fb_score and mode in row["score"]:
                row["eta"][mode] = 100.0 * (fb_score - row["score"][mode]) / fb_score
        table[law] = row
    result = CampaignResult(cells, table, failures)
    if out_dir:
        _write_campaign(result, spec, out_dir)
    return result


def _write_campaign(result: CampaignResult, spec: CampaignSpec, out_dir: Path) -> None:
    summary = {
        "laws": spec.laws, "modes": spec.modes, "conditions": spec.conditions,
        "seeds": spec.seeds, "dt": spec.dt, "horizon": spec.horizon,
        "table": result.table, "failures": result.failures,
        "cells": [{k: (v.__dict__ if isinstance(v, MetricSet) else v) for k, v in c.items()}
                  for c in result.cells],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    with open(out_dir / "table1.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["controller", "FB", "eta_H", "eta_L", "t_H_ms", "t_L_ms"])
        for law, row in result.table.items():
            w.writerow([law, row["score"].get("fb", ""), row["eta"].get("hmpc", ""),
                        row["eta"].get("lmpc", ""), row["latency_ms"].get("hmpc", ""),
                        row["latency_ms"].get("lmpc", "")])
