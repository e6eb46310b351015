"""End-to-end learned MPC at small scale: pool, expert labels, training, closed loop.

Defaults finish in a few minutes on one core; raise --conditions, --budget and
--epochs towards the full setup (20 conditions, 50k samples, 300 epochs).
"""
import argparse

import numpy as np

from hybridarm.emulator import TrainConfig, evaluate_mse, train
from hybridarm.expert import build_pool, label_with_expert, random_conditions
from hybridarm.model import ur5_default
from hybridarm.sampling import allocate_samples, build_regions, make_plan
from hybridarm.sim import builtin_conditions, compute_metrics, run_episode


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--conditions", type=int, default=2)
    ap.add_argument("--budget", type=int, default=3000)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--fb", default="pd")
    args = ap.parse_args()

    model = ur5_default()
    pool = build_pool(model, random_conditions(args.conditions, seed=0))
    print(f"pool: {len(pool)} states from {args.conditions} conditions x 6 laws")
    plan = make_plan(build_regions(5.0), args.budget, "optimal")
    idx = allocate_samples(pool.region, plan, seed=0)
    data, _, dropped = label_with_expert(model, pool, idx)
    print(f"labelled {len(data)} states with hybrid MPC ({dropped} dropped), "
          f"region counts {plan.counts.tolist()}")

    net, hist = train(data, cfg=TrainConfig(epochs=args.epochs, seed=0))
    print(f"trained {net.sizes}: train {hist.train[-1]:.4f}, val {hist.val[-1]:.4f} (normalized), "
          f"physical MSE {evaluate_mse(net, data, normalized=False):.3f}")

    cond = builtin_conditions()[0]
    for mode in ("fb", "hmpc", "lmpc"):
        tr = run_episode(model, mode, args.fb, cond, net=net)
        m = compute_metrics(tr, trigger=cond.trigger)
        print(f"{mode:4s} rmse {m.rmse:.4f}  peak {m.peak:.4f}  "
              f"latency {1e3 * np.mean(tr.latency[1:]):.3f} ms")


if __name__ == "__main__":
    main()
