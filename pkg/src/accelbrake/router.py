"""Queue discipline for an accel/brake bottleneck.

On every dequeue the router computes a target rate from the link capacity
and the queue's head-of-line sojourn, converts the ratio of target to
current dequeue rate into a marking fraction, and meters accelerate marks
through a token bucket so that the fraction is honored exactly over any
packet run.  Packets already braked stay braked: a brake from any hop on
the path survives to the receiver, so the sender reacts to the most
congested bottleneck.

When legacy traffic shares the hop, packets are split into two queues
served by deficit round-robin, and the ABC queue's capacity share is
re-derived every weight interval from a max-min allocation over the
heaviest flows seen in each queue.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .core import EcnCodepoint, MTU_BYTES, Packet, SimTime, US_PER_S
from .topk import SpaceSavingSketch

ABC_QUEUE = "abc"
LEGACY_QUEUE = "legacy"


@dataclass
class AbcParams:
    """Control knobs for the target-rate computation and marking.

    ``delta_us`` sets how fast standing queue is drained (larger is
    gentler); ``target_delay_us`` is the queuing delay the controller
    tolerates before it starts subtracting capacity.  ``eta`` keeps the
    operating point slightly below the link rate so the queue can drain.
    """

    eta: float = 0.98
    delta_us: SimTime = 133_000
    target_delay_us: SimTime = 50_000
    token_limit: float = 2.0
    rate_window_us: SimTime = 20_000
    weight_interval_us: SimTime = 100_000
    demand_headroom: float = 0.10
    demand_smoothing: float = 0.25
    demand_memory: int = 10
    sketch_size: int = 10

    def validate(self) -> None:
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.delta_us <= 0:
            raise ValueError(f"delta must be positive, got {self.delta_us}")
        if self.target_delay_us < 0:
            raise ValueError(f"target delay must be non-negative, got {self.target_delay_us}")
        if self.token_limit < 1:
            raise ValueError(f"token limit must be at least 1, got {self.token_limit}")
        if not 0 < self.demand_smoothing <= 1:
            raise ValueError(
                f"demand smoothing must be in (0, 1], got {self.demand_smoothing}")
        if self.demand_memory < 1:
            raise ValueError(
                f"demand memory must be at least 1, got {self.demand_memory}")


def target_rate(params: AbcParams, mu_bps: float, queue_delay_us: SimTime) -> float:
    """Rate the controller wants ABC traffic to enqueue at, in bits/s.

    High-water behavior: once the head-of-line delay exceeds the target
    by a full ``delta``, the raw value goes negative and is clamped to 0
    (the controller can only brake as hard as "mark everything").
    """
    excess = max(0, queue_delay_us - params.target_delay_us)
    raw = params.eta * mu_bps - (mu_bps / params.delta_us) * excess
    return max(0.0, raw)


def accel_fraction(target_bps: float, dequeue_bps: float) -> float:
    """Fraction of outgoing packets to leave accelerated.

    Each accelerate adds roughly one packet per RTT at the sender while a
    brake removes one, so holding the enqueue rate at the target requires
    marking half of the target-to-current ratio.  An idle link (zero
    dequeue rate) accelerates everything.
    """
    if target_bps < 0 or dequeue_bps < 0:
        raise ValueError("rates must be non-negative")
    if dequeue_bps == 0:
        return 1.0
    return min(0.5 * target_bps / dequeue_bps, 1.0)


class RateWindow:
    """Sliding-window dequeue rate: bytes sent in the last ``window_us``."""

    def __init__(self, window_us: SimTime):
        if window_us <= 0:
            raise ValueError(f"rate window must be positive, got {window_us}")
        self.window_us = int(window_us)
        self._events: deque[tuple[SimTime, int]] = deque()
        self._bytes = 0

    def add(self, now: SimTime, n_bytes: int) -> None:
        self._events.append((now, n_bytes))
        self._bytes += n_bytes
        self._evict(now)

    def rate(self, now: SimTime) -> float:
        """Current rate in bits/s (bytes in window divided by the window)."""
        self._evict(now)
        return self._bytes * 8 * US_PER_S / self.window_us

    def _evict(self, now: SimTime) -> None:
        cutoff = now - self.window_us
        events = self._events
        while events and events[0][0] <= cutoff:
            self._bytes -= events.popleft()[1]


class MarkerState:
    """Token bucket that meters accelerate marks to a requested fraction.

    Every outgoing packet deposits the current fraction into the bucket;
    an accelerated packet may stay accelerated only by spending one full
    token.  Over any run of n packets at fraction f this admits at most
    n*f + token_limit accelerates, and a braked packet is never promoted,
    so the surviving accelerate fraction along a multi-hop path is the
    minimum of the per-hop fractions.
    """

    def __init__(self, token_limit: float = 2.0, initial_token: float = 0.0):
        if token_limit < 1:
            raise ValueError(f"token limit must be at least 1, got {token_limit}")
        if not 0 <= initial_token <= token_limit:
            raise ValueError("initial token must lie within [0, token_limit]")
        self.token = float(initial_token)
        self.token_limit = float(token_limit)

    def mark(self, pkt: Packet, fraction: float) -> Packet:
        if not 0 <= fraction <= 1:
            raise ValueError(f"marking fraction must be in [0, 1], got {fraction}")
        self.token = min(self.token + fraction, self.token_limit)
        if pkt.ecn is EcnCodepoint.ACCEL:
            if self.token > 1:
                self.token -= 1
            else:
                pkt.ecn = EcnCodepoint.BRAKE
        # BRAKE stays braked; NOT_ECT and ECN_SET pass through untouched.
        return pkt


class DualQueue:
    """Two FIFO queues sharing one buffer, served by deficit round-robin.

    The scheduler grants each queue ``weight * quantum`` bytes of deficit
    per visit and is work-conserving: a lone backlogged queue is always
    served regardless of its weight.  With both queues backlogged,
    service converges to the weight split within one packet.
    """

    # An arrival is accepted only while its queue is shorter than this
    # multiple of the free buffer space (a dynamic threshold in the
    # shared-memory-switch tradition): a queue hogging the buffer caps
    # itself while slack remains, so it can never starve the other
    # queue's arrivals, yet all losses stay classic tail drops.
    THRESHOLD_RATIO = 2.0

    def __init__(self, capacity_pkts: int, quantum_bytes: int = MTU_BYTES):
        if capacity_pkts < 1:
            raise ValueError(f"buffer capacity must be at least 1 packet, got {capacity_pkts}")
        self.capacity_pkts = capacity_pkts
        self.quantum_bytes = quantum_bytes
        self.weight_abc = 1.0
        self._tags = (ABC_QUEUE, LEGACY_QUEUE)
        self._queues: dict[str, deque] = {t: deque() for t in self._tags}
        self._deficit = {t: 0.0 for t in self._tags}
        self._ptr = 0
        self._fresh_visit = True

    def _weight(self, tag: str) -> float:
        return self.weight_abc if tag == ABC_QUEUE else 1.0 - self.weight_abc

    def backlog(self, tag: Optional[str] = None) -> int:
        if tag is not None:
            return len(self._queues[tag])
        return sum(len(q) for q in self._queues.values())

    def enqueue(self, tag: str, pkt: Packet, now: SimTime) -> Optional[Packet]:
        """Append to one queue; returns the arriving packet if it was dropped."""
        free = self.capacity_pkts - self.backlog()
        if len(self._queues[tag]) >= self.THRESHOLD_RATIO * free:
            return pkt
        self._queues[tag].append((pkt, now))
        return None

    def head_sojourn(self, tag: str, now: SimTime) -> SimTime:
        """Waiting time of the oldest packet in a queue; 0 when empty."""
        q = self._queues[tag]
        if not q:
            return 0
        return now - q[0][1]

    def dequeue(self, now: SimTime) -> tuple[str, Packet, SimTime]:
        """Pop the next packet per DRR; returns (queue tag, packet, enqueue time)."""
        busy = [t for t in self._tags if self._queues[t]]
        if not busy:
            raise IndexError("dequeue from an empty dual queue")
        if len(busy) == 1:
            # Work conservation: serve the lone busy queue and restart the
            # round cleanly so no credit is banked across idle periods.
            tag = busy[0]
            self._deficit = {t: 0.0 for t in self._tags}
            self._ptr = self._tags.index(tag) ^ 1
            self._fresh_visit = True
            pkt, enq = self._queues[tag].popleft()
            return tag, pkt, enq
        while True:
            tag = self._tags[self._ptr]
            if self._fresh_visit:
                self._deficit[tag] += self._weight(tag) * self.quantum_bytes
                self._fresh_visit = False
            head = self._queues[tag][0][0]
            if self._deficit[tag] >= head.size_bytes:
                self._deficit[tag] -= head.size_bytes
                pkt, enq = self._queues[tag].popleft()
                return tag, pkt, enq
            self._ptr ^= 1
            self._fresh_visit = True


def water_fill(demands: list[float], capacity: float) -> list[float]:
    """Max-min fair allocation of ``capacity`` across ``demands``.

    Progressive filling: repeatedly grant every demand below the equal
    share of the remaining capacity, then split what is left evenly among
    the rest.  No entity receives more than it asked for.
    """
    if capacity < 0:
        raise ValueError(f"capacity must be non-negative, got {capacity}")
    if any(d < 0 for d in demands):
        raise ValueError("demands must be non-negative")
    alloc = [0.0] * len(demands)
    active = sorted(range(len(demands)), key=lambda i: (demands[i], i))
    remaining = capacity
    while active and remaining > 0:
        share = remaining / len(active)
        satisfied = [i for i in active if demands[i] <= share]
        if not satisfied:
            for i in active:
                alloc[i] = share
            return alloc
        for i in satisfied:
            alloc[i] = demands[i]
            remaining -= demands[i]
        active = [i for i in active if demands[i] > share]
    return alloc


class AbcRouter:
    """Dual-queue bottleneck discipline with accel/brake marking.

    ``capacity_view`` supplies the link rate estimate mu(t) (an oracle over
    the attached link, or a replayed wireless estimate).  ``fixed_fraction``
    pins the marking fraction instead of deriving it from rates, which is
    useful for controlled experiments on the marking machinery itself.
    """

    def __init__(self, hop_id: str, params: AbcParams, capacity_view,
                 buffer_pkts: int = 250, fixed_fraction: Optional[float] = None,
                 initial_weight: float = 1.0, log_rows: bool = False):
        params.validate()
        if fixed_fraction is not None and not 0 <= fixed_fraction <= 1:
            raise ValueError(f"fixed fraction must be in [0, 1], got {fixed_fraction}")
        self.hop_id = hop_id
        self.params = params
        self.capacity_view = capacity_view
        self.fixed_fraction = fixed_fraction
        self.queue = DualQueue(buffer_pkts)
        self.queue.weight_abc = initial_weight
        self.marker = MarkerState(params.token_limit)
        self.rate_window = RateWindow(params.rate_window_us)
        self.log_rows = log_rows
        self.rows: list[tuple] = []
        self._sketches = {t: SpaceSavingSketch(params.sketch_size) for t in (ABC_QUEUE, LEGACY_QUEUE)}
        self._epoch_bytes = {ABC_QUEUE: 0, LEGACY_QUEUE: 0}
        self._last_weight_update: SimTime = 0
        # Recent per-flow rate samples, one per weight interval.  A flow's
        # demand is its *peak* over the last few intervals: a loss-cycling
        # legacy flow still wants its pre-cut rate while it recovers, and
        # averaging the dips would hand its share away for good.
        self._rate_hist: dict[tuple[str, str], deque] = {}
        self._epoch = 0
        self._shorts_ewma = {ABC_QUEUE: 0.0, LEGACY_QUEUE: 0.0}

    @property
    def weight_abc(self) -> float:
        return self.queue.weight_abc

    @staticmethod
    def classify(pkt: Packet) -> str:
        return ABC_QUEUE if pkt.ecn.is_abc else LEGACY_QUEUE

    def enqueue(self, pkt: Packet, now: SimTime) -> Optional[Packet]:
        """Queue a packet; returns the dropped packet on overflow, else None."""
        return self.queue.enqueue(self.classify(pkt), pkt, now)

    def backlog(self) -> int:
        return self.queue.backlog()

    def queue_delay_estimate(self, now: SimTime) -> SimTime:
        return self.queue.head_sojourn(ABC_QUEUE, now)

    def on_dequeue(self, now: SimTime) -> tuple[Packet, SimTime]:
        """Serve one packet: mark it if it is ABC traffic, account its bytes."""
        tag, pkt, enqueued_at = self.queue.dequeue(now)
        self._sketches[tag].record(pkt.flow_id, pkt.size_bytes)
        self._epoch_bytes[tag] += pkt.size_bytes
        if tag == ABC_QUEUE:
            sojourn_us = now - enqueued_at
            self.rate_window.add(now, pkt.size_bytes)
            if self.fixed_fraction is not None:
                fraction = self.fixed_fraction
                target = current = 0.0
            else:
                mu = self.capacity_view.capacity(now) * self.queue.weight_abc
                current = self.rate_window.rate(now)
                target = target_rate(self.params, mu, sojourn_us)
                fraction = accel_fraction(target, current)
            self.marker.mark(pkt, fraction)
            if self.log_rows:
                self.rows.append((now, tag, round(fraction, 6), round(target, 1),
                                  round(current, 1), sojourn_us,
                                  round(self.marker.token, 6), pkt.ecn.name))
        elif self.log_rows:
            self.rows.append((now, tag, "", "", "", now - enqueued_at, "", pkt.ecn.name))
        return pkt, enqueued_at

    def update_weights(self, now: SimTime) -> float:
        """Recompute the ABC queue's capacity share from observed flow rates.

        The heaviest flows in each queue (tracked by a Space Saving sketch)
        are assumed to want a little more than they currently get; the
        remainder of each queue's bytes is treated as one aggregate of
        short flows that wants exactly what it gets.  A max-min allocation
        of the link capacity over those demands gives each queue's share.
        """
        interval = now - self._last_weight_update
        self._last_weight_update = now
        if interval <= 0:
            return self.queue.weight_abc
        capacity = self.capacity_view.capacity(now)
        alpha = self.params.demand_smoothing
        hist = self._rate_hist
        for tag in (ABC_QUEUE, LEGACY_QUEUE):
            sketch = self._sketches[tag]
            counts, errors = sketch.counts(), sketch.errors()
            for flow_id, rate in sketch.top_rates(interval):
                # A counter dominated by inherited error is a churn artifact
                # (many short flows recycled through the same slot), not a
                # long flow; its bytes belong with the short-flow aggregate.
                if errors[flow_id] > counts[flow_id] / 2:
                    continue
                hist.setdefault((tag, flow_id), deque()).append(
                    (self._epoch, rate))
        self._epoch += 1
        horizon = self._epoch - self.params.demand_memory
        line_sum = {ABC_QUEUE: 0.0, LEGACY_QUEUE: 0.0}
        demands: list[float] = []
        owners: list[str] = []
        for key in sorted(hist):
            samples = hist[key]
            while samples and samples[0][0] < horizon:
                samples.popleft()
            if not samples or max(r for _, r in samples) < 1e3:
                del hist[key]
                continue
            # One sighting is a short transfer passing through; a flow
            # only becomes a demand line once it has recurred.  Its demand
            # is then its peak rate over the history window, so a legacy
            # flow recovering from a loss (or briefly crowded out of the
            # sketch) keeps claiming its pre-dip share.
            if len(samples) < 2:
                continue
            tag, _flow = key
            peak = max(r for _, r in samples)
            demands.append(peak * (1.0 + self.params.demand_headroom))
            owners.append(tag)
            if samples[-1][0] == self._epoch - 1:
                line_sum[tag] += samples[-1][1]
        for tag in (ABC_QUEUE, LEGACY_QUEUE):
            total = self._epoch_bytes[tag] * 8 * US_PER_S / interval
            agg = self._shorts_ewma[tag]
            residue = max(0.0, total - line_sum[tag])
            self._shorts_ewma[tag] = (
                residue if agg == 0.0 else (1 - alpha) * agg + alpha * residue)
            self._sketches[tag].clear()
            self._epoch_bytes[tag] = 0
        shorts = dict(self._shorts_ewma)
        if capacity <= 0 or (not any(d > 0 for d in demands)
                             and not any(shorts.values())):
            return self.queue.weight_abc
        # Short transfers want exactly what they already get, so they are
        # carved out first; the long flows' padded demands then share what
        # remains max-min fairly.
        agg = shorts[ABC_QUEUE] + shorts[LEGACY_QUEUE]
        if agg > capacity:
            scale = capacity / agg
            shorts = {t: s * scale for t, s in shorts.items()}
            agg = capacity
        alloc = water_fill(demands, capacity - agg)
        total = sum(alloc) + agg
        abc_share = shorts[ABC_QUEUE] + sum(
            a for a, o in zip(alloc, owners) if o == ABC_QUEUE)
        if total > 0:
            # Normalizing by the allocated total (not raw capacity) keeps
            # the weights summing to 1 when demand leaves the link
            # underloaded; under contention the two denominators agree.
            self.queue.weight_abc = min(1.0, max(0.0, abc_share / total))
        return self.queue.weight_abc
