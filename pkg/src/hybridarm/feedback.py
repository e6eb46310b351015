"""Tracking-error features and the six baseline feedback laws.

Every law is split into a pure map ``law_map(law, E, gains, fb_state)`` from
the error features to a pre-saturation torque, and the stateful update that
advances integrators/observers/adaptive parameters once per control period.
:class:`FeedbackController` bundles both for simulation use.
"""
from __future__ import annotations

import configparser
import copy
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .dynamics import JointState

__all__ = [
    "LAWS",
    "TORQUE_BOUNDS",
    "ErrorVector",
    "FeedbackGains",
    "FeedbackState",
    "FeedbackController",
    "published_gains",
    "error_vector",
    "law_map",
    "saturate",
    "pd_torque",
    "pid_torque",
    "adrc_torque",
    "smc_torque",
    "mrac_torque",
    "hinf_torque",
    "hinf_static_gains",
    "load_gains",
    "save_gains",
]

LAWS = ("pd", "pid", "adrc", "hinf", "smc", "mrac")
TORQUE_BOUNDS = np.array([102.0, 102.0, 66.0, 34.0, 34.0, 34.0])

# diag M(0) of ur5_default, used as the per-joint plant scale of the H-inf stand-in
HINF_NOMINAL_INERTIA = np.array([0.6549, 0.6384, 0.3056, 0.1247, 0.07658, 0.02222])


def _a(x) -> np.ndarray:
    return np.array(x, dtype=float)


@dataclass
class ErrorVector:
    e: np.ndarray
    ed: np.ndarray
    xi: np.ndarray
    slide: np.ndarray
    dhat: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ErrorVector":
        return cls(*(np.zeros(n) for _ in range(5)))

    def replace(self, **kw) -> "ErrorVector":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update({k: _a(v) for k, v in kw.items()})
        return ErrorVector(**d)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.e, self.ed, self.xi, self.slide, self.dhat])


def makeweight_corner(dc: float, hf: float, crossover: float = 1.0) -> float:
    """Pole of the weight ``(hf s + w0 dc) / (s + w0)`` placed so ``|W(j crossover)| = 1``."""
    return crossover * np.sqrt((1.0 - hf**2) / (dc**2 - 1.0))


def hinf_static_gains(ws=(10.0, 1.0, 0.01), wu=(0.1, 1.0, 10.0),
                      inertia=HINF_NOMINAL_INERTIA, alpha_ref: float = 0.2):
    """Static loop-shaped stiffness/damping pair standing in for mixed-sensitivity synthesis.

    The loop targets a closed-loop natural frequency at the control-weight
    corner (effort is penalized above it) with damping ratio 1/sqrt(2), and
    multiplies the resulting per-joint PD by the sensitivity weight's DC gain
    for low-frequency disturbance rejection.  Gains are normalized so that the
    design is recovered exactly at ``alpha = alpha_ref``.
    """
    dc_s, _, hf_s = ws
    dc_u, _, hf_u = wu
    w_n = makeweight_corner(dc_u, hf_u, wu[1])
    zeta = 1.0 / np.sqrt(2.0)
    scale = dc_s / alpha_ref * _a(inertia)
    return scale * w_n**2, scale * 2.0 * zeta * w_n


@dataclass
class FeedbackGains:
    """Gain sets of all six laws; defaults are the published UR5 values."""

    kp: np.ndarray = field(default_factory=lambda: _a([25, 150, 65, 25, 2, 1]))
    kd: np.ndarray = field(default_factory=lambda: _a([1, 5, 2, 0.6, 0.1, 0.05]))
    ki: np.ndarray = field(default_factory=lambda: _a([0.3, 0.4, 0.3, 0.1, 0.03, 0.03]))
    b0: np.ndarray = field(default_factory=lambda: _a([0.015, 0.125, 0.070, 0.025, 0.008, 0.0001]))
    omega_o: float = 50.0
    omega_c: float = 20.0
    smc_lambda: np.ndarray = field(default_factory=lambda: _a([5, 3, 3, 5, 2, 0.05]))
    smc_k: np.ndarray = field(default_factory=lambda: _a([0.05, 0.10, 0.10, 0.15, 0.20, 0.005]))
    smc_eps: np.ndarray = field(default_factory=lambda: np.full(6, 0.02))
    smc_keq: np.ndarray = field(default_factory=lambda: _a([10, 20, 15, 8, 3, 1]))
    mrac_alpha: np.ndarray = field(default_factory=lambda: _a([0.5, 0.5, 0.5, 0.5, 0.2, 0.2]))
    mrac_gamma: np.ndarray = field(default_factory=lambda: _a([5, 5, 4, 3, 1, 0.2]))
    mrac_lambda: np.ndarray = field(default_factory=lambda: _a([20, 20, 15, 10, 6, 2]))
    hinf_alpha: np.ndarray = field(default_factory=lambda: np.full(6, 0.2))
    hinf_ks: np.ndarray = field(default_factory=lambda: hinf_static_gains()[0])
    hinf_ku: np.ndarray = field(default_factory=lambda: hinf_static_gains()[1])
    torque_bounds: np.ndarray = field(default_factory=lambda: TORQUE_BOUNDS.copy())

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, tuple, np.ndarray)):
                v = _a(v)
                if np.any(v < 0):
                    raise ValueError(f"gain '{f.name}' must be >= 0")
                setattr(self, f.name, v)
        if np.any(self.b0 <= 0):
            raise ValueError("b0 must be > 0")
        if np.any(self.smc_eps <= 0) or np.any(self.torque_bounds <= 0):
            raise ValueError("boundary layer widths and torque bounds must be > 0")

    @property
    def n(self) -> int:
        return self.kp.size

    @property
    def eso_gains(self) -> tuple[float, float, float]:
        w = self.omega_o
        return 3.0 * w, 3.0 * w**2, w**3


def published_gains() -> FeedbackGains:
    return FeedbackGains()


@dataclass
class FeedbackState:
    """Per-episode controller memory; all fields are N-vectors."""

    n: int = 6
    xi: np.ndarray = None
    prev_e: np.ndarray = None
    z1: np.ndarray = None
    z2: np.ndarray = None
    z3: np.ndarray = None
    last_u: np.ndarray = None
    theta: np.ndarray = None
    prev_ref_qd: np.ndarray = None
    started: bool = False

    def __post_init__(self):
        for name in ("xi", "prev_e", "z1", "z2", "z3", "last_u", "theta", "prev_ref_qd"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.n))

    def reset(self) -> None:
        for name in ("xi", "prev_e", "z1", "z2", "z3", "last_u", "theta", "prev_ref_qd"):
            getattr(self, name)[:] = 0.0
        self.started = False

    def copy(self) -> "FeedbackState":
        return copy.deepcopy(self)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.xi, self.prev_e, self.z1, self.z2, self.z3,
                               self.last_u, self.theta, self.prev_ref_qd, [float(self.started)]])

    @classmethod
    def from_array(cls, arr) -> "FeedbackState":
        arr = _a(arr)
        n = (arr.size - 1) // 8
        parts = [arr[i * n:(i + 1) * n].copy() for i in range(8)]
        return cls(n, *parts, started=bool(arr[-1]))


def saturate(tau, bounds) -> np.ndarray:
    bounds = _a(bounds)
    if np.any(bounds <= 0):
        raise ValueError("saturation bounds must be > 0")
    return np.clip(_a(tau), -bounds, bounds)


def error_vector(state: JointState, ref_q, ref_qd, fb_state: FeedbackState, law: str,
                 gains: FeedbackGains | None = None) -> ErrorVector:
    """Collect the error features the given law consumes; unused ones are zero."""
    _check_law(law)
    e = _a(ref_q) - state.q
    ed = _a(ref_qd) - state.qd
    n = e.size
    zero = np.zeros(n)
    gains = gains or published_gains()
    xi = fb_state.xi.copy() if law == "pid" else zero
    slide = ed + gains.smc_lambda * e if law == "smc" else zero.copy()
    dhat = fb_state.z3.copy() if law == "adrc" else zero.copy()
    return ErrorVector(e, ed, xi, slide, dhat)


def _check_law(law: str) -> None:
    if law not in LAWS:
        raise ValueError(f"unknown feedback law '{law}', expected one of {LAWS}")


def _sat_unit(x):
    return np.clip(x, -1.0, 1.0)


def law_map(law: str, E: ErrorVector, gains: FeedbackGains,
            fb_state: FeedbackState | None = None, regressor=None) -> np.ndarray:
    """Instantaneous pre-saturation torque as a function of the error features.

    Memory enters only through ``E.xi``, ``E.dhat`` and the MRAC parameter
    estimate, so this map is what the local stability analysis differentiates.
    """
    _check_law(law)
    if law == "pd":
        return gains.kp * E.e + gains.kd * E.ed
    if law == "pid":
        return gains.kp * E.e + gains.ki * E.xi + gains.kd * E.ed
    if law == "adrc":
        wc = gains.omega_c
        return (wc**2 * E.e + 2.0 * wc * E.ed - E.dhat) / gains.b0
    if law == "smc":
        s = E.ed + gains.smc_lambda * E.e
        return gains.smc_keq * s + gains.smc_k * _sat_unit(s / gains.smc_eps)
    if law == "mrac":
        s = E.ed + gains.mrac_alpha * E.e
        theta = np.zeros_like(s) if fb_state is None else fb_state.theta
        phi = np.zeros_like(s) if regressor is None else _a(regressor)
        return gains.mrac_lambda * s + theta * phi
    return gains.hinf_alpha * (gains.hinf_ks * E.e + gains.hinf_ku * E.ed)


def pd_torque(E: ErrorVector, gains: FeedbackGains) -> np.ndarray:
    return saturate(law_map("pd", E, gains), gains.torque_bounds)


def pid_torque(E: ErrorVector, gains: FeedbackGains, fb_state: FeedbackState,
               dt: float) -> np.ndarray:
    """PID with trapezoidal integral and conditional-integration anti-windup.

    The integral is frozen for any joint whose output would saturate in the
    same direction as its error.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not fb_state.started:
        fb_state.prev_e[:] = E.e
        fb_state.started = True
    xi_new = fb_state.xi + 0.5 * dt * (E.e + fb_state.prev_e)
    raw = gains.kp * E.e + gains.ki * xi_new + gains.kd * E.ed
    windup = (np.abs(raw) > gains.torque_bounds) & (np.sign(raw) == np.sign(E.e))
    fb_state.xi[:] = np.where(windup, fb_state.xi, xi_new)
    fb_state.prev_e[:] = E.e
    E.xi = fb_state.xi.copy()
    return saturate(law_map("pid", E, gains), gains.torque_bounds)


def eso_update(fb_state: FeedbackState, q, gains: FeedbackGains, dt: float) -> None:
    """One explicit-Euler step of the per-joint third-order observer."""
    b1, b2, b3 = gains.eso_gains
    err = _a(q) - fb_state.z1
    z1, z2, z3 = fb_state.z1.copy(), fb_state.z2.copy(), fb_state.z3.copy()
    fb_state.z1[:] = z1 + dt * (z2 + b1 * err)
    fb_state.z2[:] = z2 + dt * (z3 + gains.b0 * fb_state.last_u + b2 * err)
    fb_state.z3[:] = z3 + dt * (b3 * err)


def adrc_torque(E: ErrorVector, state: JointState, gains: FeedbackGains,
                fb_state: FeedbackState, dt: float) -> np.ndarray:
    """Observer update with the measured position, then the bandwidth-parameterized law."""
    if not fb_state.started:
        fb_state.z1[:] = state.q
        fb_state.z2[:] = state.qd
        fb_state.z3[:] = 0.0
        fb_state.started = True
    else:
        eso_update(fb_state, state.q, gains, dt)
    E.dhat = fb_state.z3.copy()
    u = saturate(law_map("adrc", E, gains), gains.torque_bounds)
    fb_state.last_u[:] = u
    return u


def smc_torque(E: ErrorVector, gains: FeedbackGains) -> np.ndarray:
    return saturate(law_map("smc", E, gains), gains.torque_bounds)


def mrac_torque(E: ErrorVector, gains: FeedbackGains, fb_state: FeedbackState, dt: float,
                regressor=None) -> np.ndarray:
    """Adaptive feedforward on the reference-acceleration regressor plus ``Lambda s``."""
    s = E.ed + gains.mrac_alpha * E.e
    phi = np.zeros_like(s) if regressor is None else _a(regressor)
    fb_state.theta[:] = fb_state.theta + dt * gains.mrac_gamma * s * phi
    return saturate(law_map("mrac", E, gains, fb_state, phi), gains.torque_bounds)


def hinf_torque(E: ErrorVector, gains: FeedbackGains) -> np.ndarray:
    return saturate(law_map("hinf", E, gains), gains.torque_bounds)


class FeedbackController:
    """A feedback law with its gains and per-episode memory."""

    def __init__(self, law: str, gains: FeedbackGains | None = None,
                 state: FeedbackState | None = None):
        _check_law(law)
        self.law = law
        self.gains = gains or published_gains()
        self.state = state or FeedbackState(self.gains.n)

    def reset(self) -> None:
        self.state.reset()

    def snapshot(self) -> "FeedbackController":
        return FeedbackController(self.law, self.gains, self.state.copy())

    def __call__(self, js: JointState, ref_q, ref_qd, dt: float):
        """Advance one control period; returns ``(saturated torque, ErrorVector)``."""
        g, st = self.gains, self.state
        E = error_vector(js, ref_q, ref_qd, st, self.law, g)
        if self.law == "pd":
            tau = pd_torque(E, g)
        elif self.law == "pid":
            tau = pid_torque(E, g, st, dt)
        elif self.law == "adrc":
            tau = adrc_torque(E, js, g, st, dt)
        elif self.law == "smc":
            tau = smc_torque(E, g)
        elif self.law == "hinf":
            tau = hinf_torque(E, g)
        else:
            ref_qd = _a(ref_qd)
            if not st.started:
                st.prev_ref_qd[:] = ref_qd
                st.started = True
            phi = (ref_qd - st.prev_ref_qd) / dt
            st.prev_ref_qd[:] = ref_qd
            tau = mrac_torque(E, g, st, dt, phi)
        return tau, E


# --------------------------------------------------------------------------
# gains file

def save_gains(gains: FeedbackGains, path) -> None:
    cp = configparser.ConfigParser()
    cp["gains"] = {f.name: " ".join(repr(float(x)) for x in np.atleast_1d(getattr(gains, f.name)))
                   for f in fields(gains)}
    with open(path, "w") as fh:
        cp.write(fh)


def load_gains(path) -> FeedbackGains:
    """Read a ``[gains]`` section; missing keys keep the published defaults."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(Path(path).read_text(), source=str(path))
    kw = {}
    scalar = {"omega_o", "omega_c"}
    for f in fields(FeedbackGains):
        if cp.has_option("gains", f.name):
            vals = [float(t) for t in cp.get("gains", f.name).split()]
            kw[f.name] = vals[0] if f.name in scalar else np.array(vals)
    return FeedbackGains(**kw)
