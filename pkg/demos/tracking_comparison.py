"""Feedback alone vs feedback refined by hybrid MPC on the built-in conditions.

Runs one law in FB and HMPC mode on each condition, prints the six tracking
metrics and the composite score of each pair, and writes the traces.

    python3 demos/tracking_comparison.py --fb pd --out runs/
"""
import argparse
from pathlib import Path

from hybridarm.model import ur5_default
from hybridarm.sim import builtin_conditions, composite_score, compute_metrics, run_episode, write_trace_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fb", default="pd")
    ap.add_argument("--conditions", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    model = ur5_default()
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    conds = builtin_conditions()
    for ci in args.conditions:
        cond = conds[ci - 1]
        metrics = {}
        for mode in ("fb", "hmpc"):
            tr = run_episode(model, mode, args.fb, cond, seed=args.seed)
            metrics[mode] = compute_metrics(tr, trigger=cond.trigger)
            if args.out:
                write_trace_csv(tr, args.out / f"{args.fb}_{mode}_c{ci}.csv")
            m = metrics[mode]
            print(f"cond {ci} {mode:4s}  rmse {m.rmse:.4f}  peak {m.peak:.4f}  "
                  f"settle {m.settle:.3f}{'+' if m.censored else ''}  "
                  f"latency {1e3 * tr.latency.mean():.2f} ms")
        score = composite_score(metrics)
        print(f"cond {ci} composite  fb {score['fb']:.3f}  hmpc {score['hmpc']:.3f}\n")


if __name__ == "__main__":
    main()
