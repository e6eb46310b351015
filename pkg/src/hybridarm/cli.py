"""Command-line interface: ``hybridarm <command> ...`` (or ``python -m hybridarm``)."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .feedback import LAWS, FeedbackController, load_gains, published_gains
from .model import ModelError, dumps_model, load_model, ur5_default

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _model(path):
    return ur5_default() if path in (None, "ur5") else load_model(path)


def _gains(path):
    return load_gains(path) if path else published_gains()


def _mpc_cfg(args):
    from .mpc import MpcConfig, load_mpc_config
    base = load_mpc_config(args.mpc_config) if getattr(args, "mpc_config", None) else MpcConfig()
    kw = dict(base.__dict__)
    if getattr(args, "horizon", None) is not None and args.horizon != base.horizon:
        kw["horizon"] = args.horizon
        kw["temporal_weights"] = None
    if getattr(args, "dt", None) is not None:
        kw["dt"] = args.dt
    return MpcConfig(**kw)


def _episode_cfg(args):
    from .sim import EpisodeConfig
    mpc = _mpc_cfg(args)
    return EpisodeConfig(dt=mpc.dt, mpc=mpc, gains=_gains(getattr(args, "gains", None)))


def _print_json(obj):
    print(json.dumps(obj, indent=2, default=float))


# --------------------------------------------------------------------------
# model

def cmd_model(args):
    try:
        model = _model(args.path)
    except (ModelError, OSError) as exc:
        print(f"invalid model: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.action == "validate":
        print(f"ok: {args.path} defines a {model.n}-link model")
        return EXIT_OK
    from .dynamics import gravity_vector, mass_matrix
    q0 = np.zeros(model.n)
    print(dumps_model(model), end="")
    print(f"# links: {model.n}, total mass {sum(l.mass for l in model.links):.4g} kg")
    print("# diag M(0): " + " ".join(f"{x:.5g}" for x in np.diag(mass_matrix(model, q0))))
    print("# G(0):      " + " ".join(f"{x:.5g}" for x in gravity_vector(model, q0)))
    return EXIT_OK


# --------------------------------------------------------------------------
# stability

def _parse_box(text: str, n: int):
    """``qlo:qhi,qdlo:qdhi`` with scalar or comma-free space-separated vectors."""
    try:
        qpart, qdpart = text.split(",")
        lo, hi = (np.array(s.split(), float) for s in qpart.split(":"))
        dlo, dhi = (np.array(s.split(), float) for s in qdpart.split(":"))
    except ValueError:
        raise ValueError(f"region must look like 'qlo:qhi,qdlo:qdhi', got '{text}'") from None
    box = [np.broadcast_to(v, (n,)).copy() for v in (lo, hi, dlo, dhi)]
    if np.any(box[0] > box[1]) or np.any(box[2] > box[3]):
        raise ValueError("region lower bounds exceed upper bounds")
    return tuple(box)


def cmd_check_stability(args):
    from .stability import StabilityConfig, check_theorem1, dynamics_bounds, numeric_jacobians
    model = _model(args.model)
    gains = _gains(args.gains)
    try:
        region = _parse_box(args.region, model.n)
    except ValueError as exc:
        print(f"bad --region: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cfg = StabilityConfig(np.diag(gains.kp) if args.p_from_kp else np.diag(args.P),
                          args.beta, args.eps, args.fd_step)
    Fe, Fd = numeric_jacobians(args.fb, gains, cfg=cfg)
    bounds = dynamics_bounds(model, region, args.samples, seed=args.seed)
    report = check_theorem1(Fe, Fd, bounds, cfg,
                            context={"law": args.fb, "region": args.region,
                                     "samples": args.samples, "seed": args.seed})
    if args.json:
        print(report.to_json())
    else:
        print(f"law {args.fb}: lambda_min(Fd) = {report.lambda_min_Fd:.6g}, "
              f"lambda_min(Fe) = {report.lambda_min_Fe:.6g}")
        print(f"  damping   {report.lambda_min_Fd:.6g} > {report.rhs1:.6g}: {report.cond1}")
        print(f"  stiffness {report.lambda_min_Fe:.6g} > {report.rhs2:.6g}: {report.cond2}")
        print(f"  coupling  {report.lhs3:.6g} < {report.rhs3:.6g}: {report.cond3}")
        print(f"  overall: {report.overall}")
    return EXIT_OK


# --------------------------------------------------------------------------
# emulator

def cmd_sample(args):
    from .emulator import save_dataset
    from .expert import build_pool, label_with_expert, random_conditions
    from .sampling import allocate_samples, build_regions, make_plan
    model = _model(args.model)
    cfg = _episode_cfg(args)
    pool = build_pool(model, random_conditions(args.conditions, args.pool_seed), cfg=cfg)
    regions = build_regions(5.0)
    plan = make_plan(regions, args.budget, args.plan)
    try:
        idx = allocate_samples(pool.region, plan, args.seed)
    except ValueError as exc:
        print(f"sampling failed: {exc}; raise --conditions", file=sys.stderr)
        return EXIT_FAIL
    data, _, dropped = label_with_expert(model, pool, idx, cfg.mpc, cfg.gains)
    save_dataset(data, args.out)
    print(f"plan {args.plan}: weights {np.round(plan.weights, 4).tolist()}, "
          f"counts {plan.counts.tolist()}")
    print(f"wrote {len(data)} samples to {args.out} ({dropped} dropped)")
    return EXIT_OK


def cmd_train(args):
    from .emulator import TrainConfig, load_dataset, save_net, train
    data = load_dataset(args.data)
    cfg = TrainConfig(batch_size=args.batch, lr=args.lr, epochs=args.epochs,
                      val_fraction=args.val_fraction, seed=args.seed)
    net, hist = train(data, cfg=cfg, hidden=tuple(args.hidden))
    save_net(net, args.out)
    last_t = hist.train[-1] if hist.train else float("nan")
    last_v = hist.val[-1] if hist.val else float("nan")
    print(f"trained {net.sizes} for {cfg.epochs} epochs: train {last_t:.6g}, val {last_v:.6g}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args):
    from .emulator import evaluate_mse, load_dataset, load_net
    net = load_net(args.net)
    if args.data:
        data = load_dataset(args.data)
        _print_json({"samples": len(data), "mse_normalized": evaluate_mse(net, data),
                     "mse_physical": evaluate_mse(net, data, normalized=False)})
        return EXIT_OK
    from .sim import builtin_conditions, compute_metrics, run_episode
    model = _model(args.model)
    cfg = _episode_cfg(args)
    out = {}
    for ci in args.condition:
        cond = builtin_conditions()[ci - 1]
        tr = run_episode(model, "lmpc", args.fb, cond, cfg, seed=args.seed, net=net)
        out[f"cond{ci}"] = compute_metrics(tr, trigger=cond.trigger).__dict__
    _print_json(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulation

def cmd_run(args):
    from .sim import builtin_conditions, compute_metrics, run_episode, write_trace_csv
    model = _model(args.model)
    cfg = _episode_cfg(args)
    net = None
    if args.mode == "lmpc":
        if not args.net:
            print("--mode lmpc needs --net", file=sys.stderr)
            return EXIT_USAGE
        from .emulator import load_net
        net = load_net(args.net)
    cond = builtin_conditions()[args.condition - 1]
    tr = run_episode(model, args.mode, args.fb, cond, cfg, seed=args.seed, net=net)
    if args.out:
        write_trace_csv(tr, args.out)
    ms = compute_metrics(tr, trigger=cond.trigger)
    _print_json({**tr.meta, "metrics": ms.__dict__,
                 "latency_ms": 1e3 * float(np.mean(tr.latency))})
    return EXIT_OK


def cmd_score(args):
    from .sim import composite_score, compute_metrics, read_trace_csv
    metrics = {}
    for path in args.traces:
        cols = read_trace_csv(path)
        n = sum(1 for k in cols if k.startswith("e"))
        ebar = np.mean(np.abs(np.column_stack([cols[f"e{i}"] for i in range(1, n + 1)])), axis=1)
        metrics[path] = compute_metrics(cols["t"], ebar, trigger=args.trigger)
    out = {p: m.__dict__ for p, m in metrics.items()}
    if len(metrics) >= 2:
        for p, s in composite_score(metrics).items():
            out[p]["composite"] = s
    _print_json(out)
    return EXIT_OK


def cmd_campaign(args):
    from .sim import load_campaign, run_campaign
    spec = load_campaign(args.spec)
    if args.output:
        spec.output = args.output
    result = run_campaign(spec, _model(args.model))
    for law, row in result.table.items():
        parts = [f"{law:5s}"] + [f"{m}={v:.4f}" for m, v in row["score"].items()]
        parts += [f"eta_{m}={v:.1f}%" for m, v in row["eta"].items()]
        print("  ".join(parts))
    for f in result.failures:
        print(f"FAILED cell {f}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_FAIL


def cmd_bench(args):
    from .dynamics import JointState
    from .emulator import init_net, lmpc_step, load_net
    from .mpc import hmpc_step
    from .sim import _fast_step, builtin_conditions, reference, reference_sampler
    model = _model(args.model)
    cfg = _episode_cfg(args)
    net = load_net(args.net) if args.net else init_net()
    cond = builtin_conditions()[args.condition - 1]
    times = cfg.dt * np.arange(args.steps)
    rq, rqd = reference(cond, times)
    lat = {}
    for mode in ("fb", "hmpc", "lmpc"):
        fb = FeedbackController(args.fb, cfg.gains)
        js = JointState(rq[0], rqd[0])
        samples = []
        for k in range(args.steps):
            t0 = time.perf_counter()
            if mode == "fb":
                tau, _ = fb(js, rq[k], rqd[k], cfg.dt)
            elif mode == "hmpc":
                tau, _ = hmpc_step(model, js, reference_sampler(cond), fb, cfg.mpc, times[k],
                                   (rq[k], rqd[k]))
            else:
                tau = lmpc_step(net, js, rq[k], rqd[k], fb, cfg.dt)
            samples.append(time.perf_counter() - t0)
            js = JointState(*_fast_step(model, js.q, js.qd, tau, cfg.dt))
        lat[mode] = 1e3 * float(np.mean(samples[1:] if len(samples) > 1 else samples))
    lat["hmpc_over_lmpc"] = lat["hmpc"] / lat["lmpc"]
    _print_json({"law": args.fb, "steps": args.steps, "latency_ms": lat})
    return EXIT_OK


# --------------------------------------------------------------------------

def _add_ctrl_flags(p, mode=True):
    p.add_argument("--model", help="model file (default: built-in ur5)")
    p.add_argument("--gains", help="feedback gains file (default: published gains)")
    p.add_argument("--mpc-config", help="MPC config file")
    p.add_argument("--fb", choices=LAWS, default="pd", help="feedback law")
    if mode:
        p.add_argument("--mode", choices=("fb", "hmpc", "lmpc"), default="fb")
    p.add_argument("--horizon", type=int, help="MPC preview horizon")
    p.add_argument("--dt", type=float, help="control and integration period [s]")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridarm", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="validate or show a model file")
    p.add_argument("action", choices=("validate", "show"))
    p.add_argument("path", help="model file, or 'ur5' for the built-in model")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("check-stability", help="evaluate the Lyapunov sufficient conditions")
    p.add_argument("--fb", choices=LAWS, default="pd")
    p.add_argument("--region", default="-0.5:0.5,-1:1",
                   help="state box 'qlo:qhi,qdlo:qdhi' (scalars or quoted vectors)")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float, default=1e-6)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--fd-step", type=float, default=1e-6)
    p.add_argument("--P", type=float, nargs="+", default=[25, 150, 65, 25, 2, 1],
                   help="diagonal of P")
    p.add_argument("--p-from-kp", action="store_true", help="use P = diag(Kp)")
    p.add_argument("--model")
    p.add_argument("--gains")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_check_stability)

    p = sub.add_parser("sample", help="build and label an expert dataset")
    p.add_argument("--budget", type=int, default=50000)
    p.add_argument("--plan", choices=("optimal", "uniform"), default="optimal")
    p.add_argument("--conditions", type=int, default=20, help="pool conditions (x 6 laws)")
    p.add_argument("--pool-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--out", default="expert.csv")
    _add_ctrl_flags(p, mode=False)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train the torque emulator")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--hidden", type=int, nargs="+", default=[128, 128])
    p.add_argument("--out", default="emulator.npz")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained emulator")
    p.add_argument("--net", required=True)
    p.add_argument("--data", help="labeled dataset; without it, run closed-loop episodes")
    p.add_argument("--condition", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--seed", type=int, default=0)
    _add_ctrl_flags(p, mode=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="simulate one episode")
    p.add_argument("--condition", type=int, choices=range(1, 6), default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--net")
    p.add_argument("--out", help="write the trace CSV here")
    _add_ctrl_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="metrics and composite scores of trace CSVs")
    p.add_argument("traces", nargs="+")
    p.add_argument("--trigger", type=float, default=2.0)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("campaign", help="run a campaign spec file")
    p.add_argument("spec")
    p.add_argument("--output", help="override the output directory")
    p.add_argument("--model")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("bench", help="per-step controller latency: fb vs hmpc vs lmpc")
    p.add_argument("--condition", type=int, choices=range(1, 6), default=1)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--net", help="emulator file (default: untrained net of the default size)")
    _add_ctrl_flags(p, mode=False)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
