"""Raw state pools from feedback-law episodes and expert labeling by hybrid MPC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsError, JointState
from .emulator import ExpertDataset, state_vector
from .feedback import LAWS, FeedbackController, FeedbackGains, FeedbackState, published_gains
from .model import RobotModel
from .mpc import MpcConfig, hmpc_step
from .sampling import build_regions, region_index
from .sim import Condition, EpisodeConfig, reference_sampler, run_episode

__all__ = ["StatePool", "random_conditions", "build_pool", "label_with_expert"]


def random_conditions(count: int, seed: int = 0, T: float = 5.0) -> list[Condition]:
    """Seeded operating conditions for data collection.

    Amplitudes are uniform within half of each joint's position bound and
    frequencies uniform in [0.05, 0.15] Hz; the disturbance matches the
    evaluation conditions.
    """
    rng = np.random.default_rng(seed)
    span = 0.5 * np.pi * np.array([1.0, 0.8, 0.8, 1.0, 1.0, 1.0])
    return [Condition(rng.uniform(-span, span), rng.uniform(0.05, 0.15, 6), T=T,
                      name=f"pool{k}") for k in range(count)]


@dataclass
class StatePool:
    """Per-step records of feedback episodes, enough to replay the controller.

    ``fb_state`` holds the controller memory *before* the step, so a
    controller rebuilt from it reproduces ``tau_fb`` exactly.
    """

    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    ref_q: np.ndarray
    ref_qd: np.ndarray
    tau_fb: np.ndarray
    fb_state: np.ndarray
    law: np.ndarray
    condition: np.ndarray
    region: np.ndarray
    conditions: list

    def __len__(self):
        return self.t.size

    def states(self, idx=None) -> np.ndarray:
        idx = slice(None) if idx is None else idx
        return np.hstack([self.q[idx], self.ref_q[idx] - self.q[idx], self.qd[idx],
                          self.ref_qd[idx] - self.qd[idx], self.tau_fb[idx]])


def build_pool(model: RobotModel, conditions, laws=LAWS, cfg: EpisodeConfig | None = None,
               regions=None, seed: int = 0) -> StatePool:
    """Run every law on every condition in feedback mode and collect the visited states."""
    cfg = cfg or EpisodeConfig()
    cfg = EpisodeConfig(**{**cfg.__dict__, "record_fb_state": True})
    parts = {k: [] for k in ("t", "q", "qd", "ref_q", "ref_qd", "tau_fb", "fb_state", "law",
                             "condition")}
    for ci, cond in enumerate(conditions):
        for li, law in enumerate(laws):
            tr = run_episode(model, "fb", law, cond, cfg, seed=seed + ci)
            n = len(tr)
            for k, v in (("t", tr.t), ("q", tr.q), ("qd", tr.qd), ("ref_q", tr.q_ref),
                         ("ref_qd", tr.qd_ref), ("tau_fb", tr.tau_fb),
                         ("fb_state", tr.fb_states)):
                parts[k].append(v)
            parts["law"].append(np.full(n, LAWS.index(law)))
            parts["condition"].append(np.full(n, ci))
    arr = {k: np.concatenate(v) for k, v in parts.items()}
    T = max(c.T for c in conditions)
    regions = regions or build_regions(T)
    return StatePool(region=region_index(regions, arr["t"]), conditions=list(conditions), **arr)


def label_with_expert(model: RobotModel, pool: StatePool, indices=None,
                      mpc_cfg: MpcConfig | None = None, gains: FeedbackGains | None = None):
    """Hybrid MPC torque at each selected pool state.

    Returns ``(dataset, kept_indices, dropped)``; states whose expert call
    fails are dropped and counted.
    """
    mpc_cfg = mpc_cfg or MpcConfig()
    gains = gains or published_gains()
    idx = np.arange(len(pool)) if indices is None else np.asarray(indices, dtype=int)
    samplers = [reference_sampler(c) for c in pool.conditions]
    S, T, kept = [], [], []
    dropped = 0
    for i in idx:
        memory = FeedbackState.from_array(pool.fb_state[i])
        fb = FeedbackController(LAWS[pool.law[i]], gains, memory)
        js = JointState(pool.q[i], pool.qd[i])
        ref_now = (pool.ref_q[i], pool.ref_qd[i])
        try:
            tau, diag = hmpc_step(model, js, samplers[pool.condition[i]], fb, mpc_cfg,
                                  float(pool.t[i]), ref_now)
        except (DynamicsError, ValueError, FloatingPointError):
            dropped += 1
            continue
        S.append(state_vector(js, *ref_now, diag.tau_fb))
        T.append(tau)
        kept.append(i)
    kept = np.array(kept, dtype=int)
    data = ExpertDataset(np.array(S).reshape(-1, 30), np.array(T).reshape(-1, 6),
                         pool.region[kept], gains.torque_bounds)
    return data, kept, dropped
