"""Numerical check of the local Lyapunov stability conditions.

Matrix norms written ``||.||_max`` are induced infinity norms (max absolute
row sum); the bare ``||P||`` is the spectral norm.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import coriolis_matrix, gravity_vector, mass_matrix
from .feedback import ErrorVector, FeedbackGains, FeedbackState, law_map
from .model import RobotModel

__all__ = [
    "StabilityConfig",
    "StabilityReport",
    "DynamicsBounds",
    "published_stability_config",
    "lyapunov_value",
    "numeric_jacobians",
    "gravity_jacobian",
    "dynamics_bounds",
    "check_theorem1",
    "inf_norm",
]


def inf_norm(A) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return float(np.max(np.sum(np.abs(A), axis=1)))


@dataclass
class StabilityConfig:
    P: np.ndarray
    beta: float
    eps: float = 1e-3
    fd_step: float = 1e-6

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if not np.allclose(self.P, self.P.T, atol=1e-12):
            raise ValueError("P must be symmetric")
        if np.linalg.eigvalsh(self.P)[0] <= 0:
            raise ValueError("P must be positive definite")
        if self.beta <= 0 or self.eps <= 0 or self.fd_step <= 0:
            raise ValueError("beta, eps and fd_step must be > 0")


def published_stability_config(eps: float = 1e-3) -> StabilityConfig:
    return StabilityConfig(P=np.diag([25.0, 150.0, 65.0, 25.0, 2.0, 1.0]), beta=1e-6, eps=eps)


@dataclass
class DynamicsBounds:
    lambda_max_M: float
    C_max: float
    Gq_max: float


@dataclass
class StabilityReport:
    lambda_min_Fd: float
    lambda_min_Fe: float
    rhs1: float
    rhs2: float
    lhs3: float
    rhs3: float
    cond1: bool
    cond2: bool
    cond3: bool
    overall: bool
    context: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=float)


def lyapunov_value(e, ed, M, cfg: StabilityConfig) -> float:
    e, ed, M = np.asarray(e, float), np.asarray(ed, float), np.asarray(M, float)
    return float(0.5 * ed @ M @ ed + 0.5 * e @ cfg.P @ e + cfg.beta * e @ M @ ed)


def _sym_lambda_min(A) -> float:
    # eigenvalues of the symmetric part; equals the plain spectrum for diagonal Jacobians
    A = np.atleast_2d(A)
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def numeric_jacobians(law: str, gains: FeedbackGains, fb_state: FeedbackState | None = None,
                      E0: ErrorVector | None = None, cfg: StabilityConfig | None = None,
                      fd_step: float | None = None):
    """Central-difference ``d phi / d e`` and ``d phi / d ed`` of the pre-saturation law."""
    n = gains.n
    E0 = E0 if E0 is not None else ErrorVector.zeros(n)
    h = fd_step if fd_step is not None else (cfg.fd_step if cfg is not None else 1e-6)
    if h <= 0:
        raise ValueError("fd_step must be > 0")
    Fe = np.empty((n, n))
    Fd = np.empty((n, n))
    for j in range(n):
        d = np.zeros(n)
        d[j] = h
        for J, field_name in ((Fe, "e"), (Fd, "ed")):
            base = getattr(E0, field_name)
            plus = law_map(law, E0.replace(**{field_name: base + d}), gains, fb_state)
            minus = law_map(law, E0.replace(**{field_name: base - d}), gains, fb_state)
            col = (plus - minus) / (2.0 * h)
            if not np.all(np.isfinite(col)):
                raise FloatingPointError(f"non-finite output of law '{law}'")
            J[:, j] = col
    return Fe, Fd


def gravity_jacobian(model: RobotModel, q, h: float = 1e-6) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = q.size
    J = np.empty((n, n))
    for j in range(n):
        d = np.zeros(n)
        d[j] = h
        J[:, j] = (gravity_vector(model, q + d) - gravity_vector(model, q - d)) / (2 * h)
    return J


def dynamics_bounds(model: RobotModel, region, samples: int, seed: int = 0,
                    fd_step: float = 1e-6) -> DynamicsBounds:
    """Monte-Carlo maxima of ``lambda_max(M)``, ``||C||_inf`` and ``||dG/dq||_inf``.

    ``region`` is ``(q_lo, q_hi, qd_lo, qd_hi)``; each may be a scalar or an
    N-vector.  Samples are uniform in the box and seeded.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = model.n
    q_lo, q_hi, qd_lo, qd_hi = (np.broadcast_to(np.asarray(b, float), (n,)) for b in region)
    rng = np.random.default_rng(seed)
    lam = cmax = gmax = 0.0
    for _ in range(samples):
        q = rng.uniform(q_lo, q_hi)
        qd = rng.uniform(qd_lo, qd_hi)
        lam = max(lam, float(np.linalg.eigvalsh(mass_matrix(model, q))[-1]))
        cmax = max(cmax, inf_norm(coriolis_matrix(model, q, qd)))
        gmax = max(gmax, inf_norm(gravity_jacobian(model, q, fd_step)))
    return DynamicsBounds(lam, cmax, gmax)


def check_theorem1(Fe, Fd, bounds: DynamicsBounds, cfg: StabilityConfig,
                   context: dict | None = None) -> StabilityReport:
    """Evaluate the damping, stiffness and coupling inequalities."""
    Fe, Fd = np.atleast_2d(np.asarray(Fe, float)), np.atleast_2d(np.asarray(Fd, float))
    b, eps = cfg.beta, cfg.eps
    lam_M, C, Gq = bounds.lambda_max_M, bounds.C_max, bounds.Gq_max
    P_norm = float(np.linalg.norm(cfg.P, 2))
    lmin_d = _sym_lambda_min(Fd)
    lmin_e = _sym_lambda_min(Fe)
    rhs1 = b * lam_M + C + eps
    rhs2 = Gq + (P_norm + b * C) / b + eps
    lhs3 = float(np.linalg.norm(b * Fe - cfg.P, 2))
    rhs3 = (2.0 / b) * (lmin_d - b * lam_M - C) * (b * lmin_d - b**2 * Gq)
    c1, c2, c3 = lmin_d > rhs1, lmin_e > rhs2, lhs3 < rhs3
    ctx = {"lambda_max_M": lam_M, "C_max": C, "Gq_max": Gq, "P_norm": P_norm,
           "beta": b, "eps": eps}
    ctx.update(context or {})
    return StabilityReport(lmin_d, lmin_e, rhs1, rhs2, lhs3, rhs3,
                           bool(c1), bool(c2), bool(c3), bool(c1 and c2 and c3), ctx)
