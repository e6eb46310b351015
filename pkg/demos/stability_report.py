"""Lyapunov sufficient conditions for every feedback law on the UR5 model.

The published gains are evaluated literally; with beta = 1e-6 the stiffness
condition asks for eigenvalues of order 1e8, so the reports mostly read False.
"""
import numpy as np

from hybridarm.feedback import LAWS, published_gains
from hybridarm.model import ur5_default
from hybridarm.stability import check_theorem1, dynamics_bounds, numeric_jacobians, published_stability_config

model = ur5_default()
cfg = published_stability_config()
bounds = dynamics_bounds(model, (-np.pi / 2, np.pi / 2, -1.0, 1.0), samples=200)
print(f"bounds: lambda_max(M) {bounds.lambda_max_M:.3f}, |dG/dq| {bounds.Gq_max:.3f}, "
      f"|C| {bounds.C_max:.3f}\n")
for law in LAWS:
    Fe, Fd = numeric_jacobians(law, published_gains(), cfg=cfg)
    r = check_theorem1(Fe, Fd, bounds, cfg)
    print(f"{law:5s} damping {r.cond1!s:5s} ({r.lambda_min_Fd:.3g} vs {r.rhs1:.3g})  "
          f"stiffness {r.cond2!s:5s} ({r.lambda_min_Fe:.3g} vs {r.rhs2:.3g})  "
          f"coupling {r.cond3!s:5s}")
