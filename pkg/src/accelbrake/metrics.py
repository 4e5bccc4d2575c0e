"""Run log and the statistics derived from it.

The simulator appends one record per delivered packet (with per-hop
enqueue/dequeue stamps), one per drop, and per-hop byte totals.  The
functions here turn those into link utilization, queuing-delay
percentiles, per-flow throughput, and Jain's fairness index, and write
the CSV/summary artifacts for a scenario run.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .core import SimTime, US_PER_S


@dataclass(slots=True, frozen=True)
class DeliveryRecord:
    flow_id: str
    seq: int
    size_bytes: int
    send_time: SimTime
    deliver_time: SimTime
    # ((hop_id, enqueue_time, dequeue_time), ...) in path order.
    hops: tuple = ()


@dataclass(slots=True, frozen=True)
class DropRecord:
    flow_id: str
    seq: int
    hop_id: str
    time: SimTime


@dataclass(slots=True)
class HopStats:
    opportunity_bytes: float = 0.0
    dequeued_bytes: int = 0
    dequeues: int = 0
    drops: int = 0


@dataclass
class MetricsLog:
    duration_us: SimTime = 0
    seed: int = 0
    deliveries: list = field(default_factory=list)
    drops: list = field(default_factory=list)
    hop_stats: dict = field(default_factory=dict)
    # Optional detailed traces, filled in when a run asks for them.
    flow_samples: dict = field(default_factory=dict)    # flow -> [(t, w_abc, w_cubic, inflight, rate_bps)]
    router_samples: dict = field(default_factory=dict)  # hop -> [(t, queue, f, tr, cr, x_us, token, mark)]

    def record_delivery(self, rec: DeliveryRecord) -> None:
        self.deliveries.append(rec)

    def record_drop(self, rec: DropRecord) -> None:
        self.drops.append(rec)
        stats = self.hop_stats.get(rec.hop_id)
        if stats is not None:
            stats.drops += 1


def utilization(log: MetricsLog, hop_id: str) -> float:
    """Bytes the hop actually sent divided by the bytes it could have sent."""
    stats = log.hop_stats.get(hop_id)
    if stats is None:
        raise KeyError(f"unknown hop {hop_id!r}")
    if stats.opportunity_bytes <= 0:
        raise ValueError(f"hop {hop_id!r} had no delivery opportunities")
    return stats.dequeued_bytes / stats.opportunity_bytes


def hop_delays_us(log: MetricsLog, hop_id: str,
                  start: SimTime = 0, end: Optional[SimTime] = None) -> list[int]:
    """Per-packet queuing delays at one hop, for packets dequeued in [start, end]."""
    out = []
    for rec in log.deliveries:
        for hid, enq, deq in rec.hops:
            if hid == hop_id and deq >= start and (end is None or deq <= end):
                out.append(deq - enq)
    return out


def delay_percentile(log: MetricsLog, hop_id: str, p: float,
                     start: SimTime = 0, end: Optional[SimTime] = None) -> int:
    """Nearest-rank p-quantile of queuing delay at a hop, in microseconds."""
    if not 0 < p <= 1:
        raise ValueError(f"percentile must be in (0, 1], got {p}")
    delays = hop_delays_us(log, hop_id, start, end)
    if not delays:
        raise ValueError(f"no delivered packets crossed hop {hop_id!r} in the window")
    delays.sort()
    return delays[math.ceil(p * len(delays)) - 1]


def jain_index(values: Sequence[float]) -> float:
    """Jain's fairness index: 1.0 when all shares are equal, 1/n at worst."""
    if not values:
        raise ValueError("fairness index needs at least one allocation")
    if any(v < 0 for v in values):
        raise ValueError("allocations must be non-negative")
    total = sum(values)
    if total == 0:
        raise ValueError("fairness index is undefined when all allocations are zero")
    return total * total / (len(values) * sum(v * v for v in values))


def flow_throughputs(log: MetricsLog, start: SimTime, end: SimTime,
                     flows: Optional[Iterable[str]] = None) -> dict[str, float]:
    """Delivered bits/s per flow over ``(start, end]``.

    When ``flows`` is given, every listed flow appears in the result even
    if it delivered nothing in the window.
    """
    if end <= start:
        raise ValueError("throughput window must have positive width")
    delivered: dict[str, int] = {f: 0 for f in flows} if flows else {}
    for rec in log.deliveries:
        if start < rec.deliver_time <= end:
            delivered[rec.flow_id] = delivered.get(rec.flow_id, 0) + rec.size_bytes
    return {fid: b * 8 * US_PER_S / (end - start) for fid, b in delivered.items()}


def steady_window(log: MetricsLog) -> tuple[SimTime, SimTime]:
    """The final two-thirds of the run, used for steady-state statistics."""
    return log.duration_us // 3, log.duration_us


# ---------------------------------------------------------------------------
# Output writers


def write_outputs(log: MetricsLog, out_dir: str, extras: Optional[dict] = None) -> None:
    """Write summary.txt, flows/<id>.csv and routers/<hop>.csv under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    _write_summary(log, os.path.join(out_dir, "summary.txt"), extras or {})

    flows_dir = os.path.join(out_dir, "flows")
    os.makedirs(flows_dir, exist_ok=True)
    for flow_id, samples in sorted(log.flow_samples.items()):
        with open(os.path.join(flows_dir, f"{flow_id}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_us", "w_abc", "w_cubic", "inflight", "send_rate_bps"])
            w.writerows(samples)

    routers_dir = os.path.join(out_dir, "routers")
    os.makedirs(routers_dir, exist_ok=True)
    for hop_id, samples in sorted(log.router_samples.items()):
        with open(os.path.join(routers_dir, f"{hop_id}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_us", "queue", "accel_fraction", "target_rate_bps",
                        "dequeue_rate_bps", "queue_delay_us", "token", "mark"])
            w.writerows(samples)


def _write_summary(log: MetricsLog, path: str, extras: dict) -> None:
    t0, t1 = steady_window(log)
    lines = [
        f"duration_s={log.duration_us / US_PER_S:.6f}",
        f"seed={log.seed}",
        f"delivered_packets={len(log.deliveries)}",
        f"dropped_packets={len(log.drops)}",
    ]
    for hop_id, stats in sorted(log.hop_stats.items()):
        prefix = f"hop.{hop_id}"
        lines.append(f"{prefix}.dequeued_bytes={stats.dequeued_bytes}")
        lines.append(f"{prefix}.drops={stats.drops}")
        if stats.opportunity_bytes > 0:
            lines.append(f"{prefix}.utilization={utilization(log, hop_id):.6f}")
        delays = hop_delays_us(log, hop_id)
        if delays:
            delays.sort()
            p50 = delays[math.ceil(0.5 * len(delays)) - 1]
            p95 = delays[math.ceil(0.95 * len(delays)) - 1]
            lines.append(f"{prefix}.delay_p50_ms={p50 / 1000:.3f}")
            lines.append(f"{prefix}.delay_p95_ms={p95 / 1000:.3f}")
    if t1 > t0:
        for flow_id, bps in sorted(flow_throughputs(log, t0, t1).items()):
            lines.append(f"flow.{flow_id}.steady_throughput_mbps={bps / 1e6:.4f}")
    for key, value in sorted(extras.items()):
        lines.append(f"{key}={value}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
