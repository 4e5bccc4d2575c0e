"""Command-line front end.

Four subcommands: ``run`` executes a YAML scenario (optionally sweeping
seeds across worker processes), ``validate`` just parses one, ``fluid``
integrates the aggregate queue-delay model and reports its fixed point,
and ``wifi-estimate`` runs the link-rate estimator over a recorded or
synthesized acknowledgment trace.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ConfigError, ScenarioConfig, load_scenario
from .engine import Simulation
from .metrics import (MetricsLog, delay_percentile, flow_throughputs, jain_index,
                      steady_window, utilization, write_outputs)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accelbrake",
        description="Packet-level simulator for explicit window-control congestion signaling")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a YAML scenario")
    run.add_argument("--config", required=True, help="scenario file")
    run.add_argument("--out", help="directory for summary and per-flow/per-hop CSVs")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--seeds", help="comma-separated seed sweep, e.g. 1,2,3")
    run.add_argument("--duration", type=float, help="override duration (seconds)")
    run.add_argument("--jobs", type=int, default=0,
                     help="worker processes for a seed sweep (default: one per seed)")
    run.add_argument("--validate-only", action="store_true",
                     help="parse and validate the scenario, then exit")

    val = sub.add_parser("validate", help="check a scenario file without running it")
    val.add_argument("--config", required=True)

    fluid = sub.add_parser("fluid", help="integrate the aggregate queue-delay model")
    fluid.add_argument("--rate-mbps", type=float, default=12.0)
    fluid.add_argument("--rtt-ms", type=float, default=100.0)
    fluid.add_argument("--flows", type=int, default=1)
    fluid.add_argument("--eta", type=float, default=0.98)
    fluid.add_argument("--delta-ms", type=float, default=133.0)
    fluid.add_argument("--target-delay-ms", type=float, default=50.0)
    fluid.add_argument("--ai-interval-ms", type=float, default=100.0)
    fluid.add_argument("--horizon-s", type=float, default=20.0)
    fluid.add_argument("--step-ms", type=float, help="integration step (default rtt/100)")
    fluid.add_argument("--initial-delay-ms", type=float, default=0.0,
                       help="queueing delay held over the first round trip")
    fluid.add_argument("--out", help="write the trajectory as CSV (t_s,x_s)")

    wifi = sub.add_parser("wifi-estimate", help="estimate link rate from a block-ACK trace")
    src = wifi.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help="CSV of acknowledgment events")
    src.add_argument("--generate", action="store_true",
                     help="synthesize a trace instead of reading one")
    wifi.add_argument("--window-ms", type=float, default=40.0)
    wifi.add_argument("--cap-factor", type=float, default=2.0)
    wifi.add_argument("--per-user", action="store_true",
                      help="estimate each station's share separately")
    wifi.add_argument("--out", help="write estimates as CSV (time_us,mu_hat_bps)")
    gen = wifi.add_argument_group("synthesis (--generate)")
    gen.add_argument("--phy-rate-mbps", type=float, default=72.0)
    gen.add_argument("--max-batch", type=int, default=16)
    gen.add_argument("--frame-bytes", type=int, default=1500)
    gen.add_argument("--overhead-us", type=float, default=1000.0)
    gen.add_argument("--overhead-std-us", type=float, default=200.0)
    gen.add_argument("--load-mbps", type=float, default=40.0)
    gen.add_argument("--duration-s", type=float, default=10.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--save-trace", help="also write the synthesized trace as CSV")
    return parser


# ---------------------------------------------------------------------------
# run / validate


def _describe(cfg: ScenarioConfig, path: str) -> str:
    topo = cfg.topology
    lines = [f"{path}: ok",
             f"  duration {cfg.duration_us / 1e6:g}s, seed {cfg.seed}"]
    for hop in topo.hops:
        lines.append(f"  hop {hop.hop_id}: {hop.kind}, buffer {hop.buffer_pkts} pkts")
    for flow in topo.flows:
        rtt = topo.path_rtt_us(flow) / 1000
        lines.append(f"  flow {flow.flow_id}: {flow.scheme}, base rtt {rtt:g}ms")
    if topo.shorts is not None:
        lines.append(f"  short flows: {topo.shorts.load_bps / 1e6:g} Mbit/s offered")
    return "\n".join(lines)


def _summarize(log: MetricsLog, topo) -> str:
    start, end = steady_window(log)
    rates = flow_throughputs(log, start, end)
    long_ids = [f.flow_id for f in topo.flows]
    lines = [f"seed {log.seed}: {len(log.deliveries)} delivered, {len(log.drops)} dropped"]
    for hop_id in log.hop_stats:
        util = utilization(log, hop_id)
        p95 = delay_percentile(log, hop_id, 0.95)
        drops = log.hop_stats[hop_id].drops
        lines.append(f"  hop {hop_id}: utilization {util:.3f}, "
                     f"p95 queue delay {p95 / 1000:.2f}ms, drops {drops}")
    for fid in long_ids:
        lines.append(f"  flow {fid}: {rates.get(fid, 0.0) / 1e6:.3f} Mbit/s steady")
    if len(long_ids) > 1:
        vals = [rates.get(f, 0.0) for f in long_ids]
        if all(v > 0 for v in vals):
            lines.append(f"  fairness across long flows: {jain_index(vals):.4f}")
    return "\n".join(lines)


def _run_one(config_path: str, seed: int, duration_us, out_dir) -> str:
    cfg = load_scenario(config_path)
    cfg.seed = seed
    if duration_us is not None:
        cfg.duration_us = duration_us
    sim = Simulation(cfg.topology, cfg.duration_us, seed=cfg.seed,
                     flow_sample_interval_us=cfg.sample_interval_us,
                     log_router_rows=cfg.log_router_rows,
                     receiver_coalesce=cfg.receiver_coalesce)
    log = sim.run()
    if out_dir is not None:
        write_outputs(log, out_dir)
    return _summarize(log, cfg.topology)


def _cmd_run(args) -> int:
    try:
        cfg = load_scenario(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.validate_only:
        print(_describe(cfg, args.config))
        return 0

    seeds = [cfg.seed if args.seed is None else args.seed]
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            print(f"error: --seeds must be integers, got {args.seeds!r}", file=sys.stderr)
            return 2
        if not seeds:
            print("error: --seeds is empty", file=sys.stderr)
            return 2
    duration_us = None if args.duration is None else int(round(args.duration * 1e6))

    def out_for(seed: int):
        if args.out is None:
            return None
        return args.out if len(seeds) == 1 else os.path.join(args.out, f"seed_{seed}")

    if len(seeds) == 1:
        print(_run_one(args.config, seeds[0], duration_us, out_for(seeds[0])))
        return 0
    jobs = args.jobs if args.jobs > 0 else min(len(seeds), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_one, args.config, s, duration_us, out_for(s))
                   for s in seeds]
        for fut in futures:
            print(fut.result())
    return 0


def _cmd_validate(args) -> int:
    try:
        cfg = load_scenario(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(_describe(cfg, args.config))
    return 0


# ---------------------------------------------------------------------------
# fluid


def _cmd_fluid(args) -> int:
    from .fluid import (FluidParams, fixed_point_delay, fixed_point_rate, integrate,
                        settling_time)
    try:
        params = FluidParams(eta=args.eta, delta_s=args.delta_ms / 1000,
                             target_delay_s=args.target_delay_ms / 1000,
                             n_flows=args.flows, mu_bps=args.rate_mbps * 1e6,
                             tau_s=args.rtt_ms / 1000,
                             ai_interval_s=args.ai_interval_ms / 1000)
        step = None if args.step_ms is None else args.step_ms / 1000
        t, x = integrate(params, args.initial_delay_ms / 1000, args.horizon_s, step)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    x_star = fixed_point_delay(params)
    ratio = params.delta_s / params.tau_s
    print(f"drift {params.drift:+.4f} pkts/rtt per rtt, "
          f"delta/tau {ratio:.3f} ({'stable' if params.stable else 'not provably stable'})")
    print(f"fixed point: queue delay {x_star * 1000:.3f}ms, "
          f"rate {fixed_point_rate(params) / 1e6:.3f} Mbit/s")
    t_settle = settling_time(t, x, x_star)
    if t_settle is not None and t_settle < args.horizon_s:
        print(f"settles within 1% at t={t_settle:.3f}s")
    else:
        print(f"does not settle within the {args.horizon_s:g}s horizon "
              f"(final delay {x[-1] * 1000:.3f}ms)")
    if args.out:
        import csv
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "queue_delay_s"])
            w.writerows(zip(map(float, t), map(float, x)))
        print(f"trajectory written to {args.out} ({len(t)} points)")
    return 0


# ---------------------------------------------------------------------------
# wifi


def _cmd_wifi(args) -> int:
    from . import wifi
    if args.generate:
        try:
            profile = wifi.LinkProfile(
                phy_rate_bps=args.phy_rate_mbps * 1e6,
                max_batch=args.max_batch,
                frame_bits=args.frame_bytes * 8,
                overhead=wifi.OverheadModel(args.overhead_us, args.overhead_std_us,
                                            min(200.0, args.overhead_us / 2)))
            events = wifi.generate_mac_trace(profile, args.load_mbps * 1e6,
                                             args.duration_s, seed=args.seed)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        truth = profile.true_capacity()
        print(f"synthesized {len(events)} acknowledgments, "
              f"true backlogged rate {truth / 1e6:.3f} Mbit/s")
        if args.save_trace:
            wifi.write_mac_trace(events, args.save_trace)
            print(f"trace written to {args.save_trace}")
    else:
        try:
            events = wifi.read_mac_trace(args.trace)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if not events:
            print(f"error: {args.trace}: no events", file=sys.stderr)
            return 2

    window_us = int(round(args.window_ms * 1000))

    def report(points, label=""):
        tail = points[len(points) // 3:] or points
        mean = sum(p.capped_bps for p in tail) / len(tail)
        capped = sum(1 for p in tail if p.capped_bps < p.raw_bps) / len(tail)
        print(f"{label}estimate {mean / 1e6:.3f} Mbit/s over the last two thirds "
              f"({capped:.0%} of samples limited by the current-rate cap)")

    if args.per_user:
        per = wifi.estimate_capacity_per_user(events, window_us, args.cap_factor)
        for user, points in per.items():
            report(points, label=f"user {user}: ")
        flat = sorted((p for pts in per.values() for p in pts), key=lambda p: p.time_us)
        if args.out:
            wifi.write_estimates(flat, args.out)
    else:
        points = wifi.estimate_capacity(events, window_us, args.cap_factor)
        report(points)
        if args.out:
            wifi.write_estimates(points, args.out)
    if args.out:
        print(f"estimates written to {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "validate": _cmd_validate,
               "fluid": _cmd_fluid, "wifi-estimate": _cmd_wifi}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
