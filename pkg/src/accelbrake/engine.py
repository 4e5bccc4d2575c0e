"""Deterministic discrete-event loop tying senders, hops and receivers together.

Topologies are single-path: every flow's packets enter hop 0, traverse
the hops in order, and are delivered to a receiver that sends ACKs back
over a pure propagation delay (the reverse path never queues).  Events
firing at the same microsecond are processed in scheduling order, and
all randomness (short-flow arrivals) comes from one seeded generator, so
two runs with the same seed produce identical logs.

ACK clocking is emergent: the engine never paces a sender directly, it
only delivers ACKs; transmissions happen when a window opens.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Optional

from .core import Packet, SimTime, US_PER_S
from .legacy import DroptailRouter, short_flow_schedule
from .links import LinkProcess, OracleRateView
from .metrics import DeliveryRecord, DropRecord, HopStats, MetricsLog
from .receiver import EchoState
from .router import AbcParams, AbcRouter
from .sender import AbcSender, CubicSender, FlowSender

DELACK_TIMEOUT_US = 40_000


@dataclass
class HopSpec:
    """One bottleneck hop: a queue discipline attached to a link process."""

    hop_id: str
    link: LinkProcess
    kind: str = "abc"  # "abc" | "droptail"
    buffer_pkts: int = 250
    abc_params: AbcParams = field(default_factory=AbcParams)
    oracle_window_us: SimTime = 20_000
    ecn_threshold_pkts: Optional[int] = None
    fixed_fraction: Optional[float] = None
    delay_to_next_us: SimTime = 0
    capacity_view: Optional[object] = None  # override the oracle (e.g. replayed estimates)
    initial_weight: float = 1.0


@dataclass
class FlowSpec:
    flow_id: str
    scheme: str = "abc"  # "abc" | "cubic"
    start_us: SimTime = 0
    stop_us: Optional[SimTime] = None
    fwd_delay_us: SimTime = 10_000
    rev_delay_us: SimTime = 40_000
    initial_window: float = 10.0
    additive_increase: bool = True
    bytes_budget: Optional[int] = None


@dataclass
class ShortFlowLoad:
    """Poisson stream of small legacy transfers sharing the path."""

    load_bps: float
    flow_bytes: int = 10_000
    fwd_delay_us: SimTime = 10_000
    rev_delay_us: SimTime = 40_000
    initial_window: float = 10.0


@dataclass
class Topology:
    hops: list
    flows: list
    shorts: Optional[ShortFlowLoad] = None

    def validate(self) -> None:
        if not self.hops:
            raise ValueError("topology needs at least one hop")
        if not self.flows and self.shorts is None:
            raise ValueError("topology needs at least one flow")
        seen = set()
        for hop in self.hops:
            if hop.kind not in ("abc", "droptail"):
                raise ValueError(f"hop {hop.hop_id!r}: unknown kind {hop.kind!r}")
            if hop.hop_id in seen:
                raise ValueError(f"duplicate hop id {hop.hop_id!r}")
            seen.add(hop.hop_id)
        ids = set()
        for flow in self.flows:
            if flow.scheme not in ("abc", "cubic"):
                raise ValueError(f"flow {flow.flow_id!r}: unknown scheme {flow.scheme!r}")
            if flow.flow_id in ids:
                raise ValueError(f"duplicate flow id {flow.flow_id!r}")
            ids.add(flow.flow_id)

    def path_rtt_us(self, flow: FlowSpec) -> SimTime:
        inter = sum(h.delay_to_next_us for h in self.hops)
        return flow.fwd_delay_us + inter + flow.rev_delay_us


@dataclass
class _FlowRuntime:
    sender: FlowSender
    fwd_delay_us: SimTime
    rev_delay_us: SimTime
    rto_us: SimTime
    is_short: bool = False
    rto_armed: bool = False
    prev_sample_bytes: int = 0


class Simulation:
    def __init__(self, topology: Topology, duration_us: SimTime, seed: int = 0,
                 flow_sample_interval_us: SimTime = 0, log_router_rows: bool = False,
                 receiver_coalesce: int = 2):
        topology.validate()
        if duration_us < 0:
            raise ValueError(f"duration must be non-negative, got {duration_us}")
        self.topology = topology
        self.duration_us = int(duration_us)
        self.seed = seed
        self.receiver_coalesce = receiver_coalesce
        self._rng = random.Random(seed)
        self._heap: list = []
        self._counter = 0
        self.now: SimTime = 0

        self.routers: list = []
        self._busy: list[bool] = []
        self._last_dequeue: list[SimTime] = []
        self.log = MetricsLog(duration_us=self.duration_us, seed=seed)
        for hop in topology.hops:
            if hop.kind == "abc":
                view = hop.capacity_view or OracleRateView(hop.link, hop.oracle_window_us)
                router = AbcRouter(hop.hop_id, hop.abc_params, view,
                                   buffer_pkts=hop.buffer_pkts,
                                   fixed_fraction=hop.fixed_fraction,
                                   initial_weight=hop.initial_weight,
                                   log_rows=log_router_rows)
                router.weight_log = [(0, router.weight_abc)]
                self._push(hop.abc_params.weight_interval_us, ("weights", len(self.routers)))
            else:
                router = DroptailRouter(hop.hop_id, hop.buffer_pkts, hop.ecn_threshold_pkts)
            self.routers.append(router)
            self._busy.append(False)
            self._last_dequeue.append(-1)
            self.log.hop_stats[hop.hop_id] = HopStats()

        self.flows: dict[str, _FlowRuntime] = {}
        self.echo: dict[str, EchoState] = {}
        self._delack_epoch: dict[str, int] = {}
        for spec in topology.flows:
            sender = self._make_sender(spec)
            rtt = topology.path_rtt_us(spec)
            self.flows[spec.flow_id] = _FlowRuntime(
                sender, spec.fwd_delay_us, spec.rev_delay_us, rto_us=self._rto_for(rtt))
            self._push(spec.start_us, ("start", spec.flow_id))
            if spec.stop_us is not None:
                self._push(spec.stop_us, ("stop", spec.flow_id))

        self._short_count = 0
        if topology.shorts is not None and topology.shorts.load_bps > 0:
            arrivals = short_flow_schedule(topology.shorts.load_bps, topology.shorts.flow_bytes,
                                           self.duration_us, self._rng)
            for t in arrivals:
                self._push(t, ("short",))

        self.flow_sample_interval_us = int(flow_sample_interval_us)
        if self.flow_sample_interval_us > 0:
            self._push(self.flow_sample_interval_us, ("sample",))

        self._sent = 0
        self._delivered = 0
        self._dropped = 0

    # -- setup helpers -------------------------------------------------------

    def _make_sender(self, spec: FlowSpec) -> FlowSender:
        rtt = self.topology.path_rtt_us(spec)
        if spec.scheme == "abc":
            return AbcSender(spec.flow_id, spec.initial_window, rtt,
                             additive_increase=spec.additive_increase,
                             bytes_budget=spec.bytes_budget)
        return CubicSender(spec.flow_id, spec.initial_window, rtt,
                           bytes_budget=spec.bytes_budget)

    @staticmethod
    def _rto_for(rtt_us: SimTime) -> SimTime:
        # Liveness guard only: fires when an entire window (data or ACKs)
        # vanished, e.g. a full tail-drop burst.  Generous on purpose.
        return max(4 * rtt_us, 500_000)

    def _push(self, time: SimTime, event: tuple) -> None:
        heapq.heappush(self._heap, (time, self._counter, event))
        self._counter += 1

    # -- main loop ------------------------------------------------------------

    def run(self) -> MetricsLog:
        while self._heap:
            time, _, event = self._heap[0]
            if time > self.duration_us:
                break
            heapq.heappop(self._heap)
            self.now = time
            self._dispatch(event)
        self.now = self.duration_us
        for hop, router in zip(self.topology.hops, self.routers):
            stats = self.log.hop_stats[hop.hop_id]
            stats.opportunity_bytes = hop.link.opportunity_bytes(0, self.duration_us)
            if getattr(router, "rows", None):
                self.log.router_samples[hop.hop_id] = router.rows
        return self.log

    def _dispatch(self, event: tuple) -> None:
        kind = event[0]
        if kind == "arrive":
            self._on_arrive(event[1], event[2])
        elif kind == "dequeue":
            self._on_dequeue(event[1])
        elif kind == "deliver":
            self._on_deliver(event[1])
        elif kind == "ack":
            self._on_ack(event[1])
        elif kind == "delack":
            self._on_delack(event[1], event[2])
        elif kind == "start":
            runtime = self.flows[event[1]]
            self._dispatch_sends(runtime, runtime.sender.start(self.now))
        elif kind == "stop":
            self.flows[event[1]].sender.stopped = True
        elif kind == "weights":
            self._on_weights(event[1])
        elif kind == "rto":
            self._on_rto(event[1])
        elif kind == "short":
            self._spawn_short()
        elif kind == "sample":
            self._on_sample()
        else:  # pragma: no cover - defensive
            raise RuntimeError(f"unknown event kind {kind!r}")

    # -- packet path ----------------------------------------------------------

    def _on_arrive(self, hop_idx: int, pkt: Packet) -> None:
        router = self.routers[hop_idx]
        victim = router.enqueue(pkt, self.now)
        if victim is not pkt:
            self._schedule_dequeue_if_idle(hop_idx)
        if victim is not None:
            self._dropped += 1
            hop_id = self.topology.hops[hop_idx].hop_id
            self.log.record_drop(DropRecord(victim.flow_id, victim.seq, hop_id, self.now))

    def _schedule_dequeue_if_idle(self, hop_idx: int) -> None:
        if self._busy[hop_idx]:
            return
        link = self.topology.hops[hop_idx].link
        t = link.next_delivery(self.now)
        if t is not None and t <= self._last_dequeue[hop_idx]:
            t = link.next_delivery(self.now, after=True)
        if t is None:
            return
        self._busy[hop_idx] = True
        self._push(t, ("dequeue", hop_idx))

    def _on_dequeue(self, hop_idx: int) -> None:
        router = self.routers[hop_idx]
        if router.backlog() == 0:
            self._busy[hop_idx] = False
            return
        pkt, enqueued_at = router.on_dequeue(self.now)
        self._last_dequeue[hop_idx] = self.now
        hop = self.topology.hops[hop_idx]
        stats = self.log.hop_stats[hop.hop_id]
        stats.dequeued_bytes += pkt.size_bytes
        stats.dequeues += 1
        pkt.hop_trace.append((hop.hop_id, enqueued_at, self.now))
        arrival = self.now + hop.delay_to_next_us
        if hop_idx + 1 < len(self.routers):
            self._push(arrival, ("arrive", hop_idx + 1, pkt))
        else:
            self._push(arrival, ("deliver", pkt))
        t = hop.link.next_delivery(self.now, after=True)
        if t is None:
            self._busy[hop_idx] = False
        else:
            self._push(t, ("dequeue", hop_idx))

    def _on_deliver(self, pkt: Packet) -> None:
        self._delivered += 1
        self.log.record_delivery(DeliveryRecord(
            pkt.flow_id, pkt.seq, pkt.size_bytes, pkt.send_time, self.now,
            tuple(pkt.hop_trace)))
        echo = self.echo.get(pkt.flow_id)
        if echo is None:
            echo = self.echo[pkt.flow_id] = EchoState(pkt.flow_id, self.receiver_coalesce)
            self._delack_epoch[pkt.flow_id] = 0
        acks = echo.on_packet(pkt, self.now)
        runtime = self.flows[pkt.flow_id]
        if acks:
            self._delack_epoch[pkt.flow_id] += 1
            for ack in acks:
                self._push(self.now + runtime.rev_delay_us, ("ack", ack))
        elif echo.pending_count > 0:
            self._push(self.now + DELACK_TIMEOUT_US,
                       ("delack", pkt.flow_id, self._delack_epoch[pkt.flow_id]))

    def _on_delack(self, flow_id: str, epoch: int) -> None:
        if self._delack_epoch.get(flow_id) != epoch:
            return
        echo = self.echo[flow_id]
        ack = echo.flush(self.now)
        if ack is not None:
            self._delack_epoch[flow_id] += 1
            self._push(self.now + self.flows[flow_id].rev_delay_us, ("ack", ack))

    def _on_ack(self, ack) -> None:
        runtime = self.flows.get(ack.flow_id)
        if runtime is None:
            return
        self._dispatch_sends(runtime, runtime.sender.on_ack(ack, self.now))

    def _dispatch_sends(self, runtime: _FlowRuntime, pkts: list[Packet]) -> None:
        for pkt in pkts:
            self._sent += 1
            self._push(self.now + runtime.fwd_delay_us, ("arrive", 0, pkt))
        if runtime.sender.unacked and not runtime.rto_armed:
            runtime.rto_armed = True
            self._push(self.now + runtime.rto_us, ("rto", runtime.sender.flow_id))

    def _on_rto(self, flow_id: str) -> None:
        runtime = self.flows[flow_id]
        sender = runtime.sender
        if not sender.unacked:
            runtime.rto_armed = False
            return
        deadline = sender.last_progress + runtime.rto_us
        if deadline > self.now:
            self._push(deadline, ("rto", flow_id))
            return
        runtime.rto_armed = False
        self._dispatch_sends(runtime, sender.on_timeout(self.now))

    # -- housekeeping ----------------------------------------------------------

    def _on_weights(self, router_idx: int) -> None:
        router = self.routers[router_idx]
        router.update_weights(self.now)
        router.weight_log.append((self.now, router.weight_abc))
        self._push(self.now + router.params.weight_interval_us, ("weights", router_idx))

    def _spawn_short(self) -> None:
        shorts = self.topology.shorts
        self._short_count += 1
        flow_id = f"short{self._short_count:06d}"
        rtt = shorts.fwd_delay_us + sum(h.delay_to_next_us for h in self.topology.hops) \
            + shorts.rev_delay_us
        sender = CubicSender(flow_id, initial_window=shorts.initial_window,
                             base_rtt_us=rtt, bytes_budget=shorts.flow_bytes)
        runtime = _FlowRuntime(sender, shorts.fwd_delay_us, shorts.rev_delay_us,
                               rto_us=self._rto_for(rtt), is_short=True)
        self.flows[flow_id] = runtime
        self._dispatch_sends(runtime, sender.start(self.now))

    def _on_sample(self) -> None:
        interval = self.flow_sample_interval_us
        for flow_id, runtime in self.flows.items():
            if runtime.is_short:
                continue
            sender = runtime.sender
            rate = (sender.bytes_sent - runtime.prev_sample_bytes) * 8 * US_PER_S / interval
            runtime.prev_sample_bytes = sender.bytes_sent
            w_abc = round(sender.w_abc, 4) if isinstance(sender, AbcSender) else ""
            self.log.flow_samples.setdefault(flow_id, []).append(
                (self.now, w_abc, round(sender.w_cubic, 4), sender.inflight, round(rate, 1)))
        self._push(self.now + interval, ("sample",))

    # -- diagnostics ------------------------------------------------------------

    def census(self) -> dict:
        """Packet conservation snapshot: sent = delivered + dropped + queued + in flight."""
        queued = sum(r.backlog() for r in self.routers)
        in_flight = sum(1 for _, _, ev in self._heap if ev[0] in ("arrive", "deliver"))
        return {
            "sent": self._sent,
            "delivered": self._delivered,
            "dropped": self._dropped,
            "queued": queued,
            "in_flight": in_flight,
        }
