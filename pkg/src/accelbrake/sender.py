"""Sender-side congestion control.

An accel/brake sender keeps two windows.  The primary window moves one
packet up or down per acknowledged packet according to the echoed mark,
plus a one-packet-per-RTT additive increase that lets competing flows
converge to equal shares.  A shadow window follows standard Cubic rules
and reacts to classic ECN echoes and losses; the effective window is the
minimum of the two, so the flow never outcompetes loss-based traffic at
a legacy bottleneck.  Both windows are capped at twice the packets in
flight: feedback can at most double the send rate over one RTT, so any
larger window is stale information.
"""

from __future__ import annotations

import math
from typing import Optional

from .core import Ack, EcnCodepoint, MTU_BYTES, Packet, SimTime
from .legacy import CubicWindow

WINDOW_FLOOR = 1.0


def steady_state_window(accel_fraction: float) -> float:
    """Fixed-point window under a constant marking fraction f < 1/2.

    Per acknowledged packet the window moves by ``2f - 1`` plus the
    additive-increase share ``1/w``; the drift cancels at w = 1/(1 - 2f).
    At f >= 1/2 the window grows without bound (no fixed point).
    """
    if not 0 <= accel_fraction < 0.5:
        raise ValueError(f"steady-state window is undefined for fraction {accel_fraction}")
    return 1.0 / (1.0 - 2.0 * accel_fraction)


def lost_ack_drift(accel_fraction: float, delivery_prob: float, window: float) -> float:
    """Expected per-RTT window change when ACKs are dropped independently.

    Each surviving ACK moves the window by +1 or -1 (ignoring additive
    increase), so with delivery probability p the expected drift over a
    window of w packets is ``(2f - 1) * p * w`` -- lost ACKs scale the
    reaction down but never flip its sign.
    """
    if not 0 <= accel_fraction <= 1:
        raise ValueError(f"fraction must be in [0, 1], got {accel_fraction}")
    if not 0 <= delivery_prob <= 1:
        raise ValueError(f"delivery probability must be in [0, 1], got {delivery_prob}")
    return (2.0 * accel_fraction - 1.0) * delivery_prob * window


class FlowSender:
    """Window bookkeeping common to both sender flavors."""

    scheme = "base"

    def __init__(self, flow_id: str, initial_window: float = 10.0,
                 base_rtt_us: SimTime = 100_000, bytes_budget: Optional[int] = None):
        self.flow_id = flow_id
        self.base_rtt_us = base_rtt_us
        self.initial_window = float(initial_window)
        self.next_seq = 0
        self.unacked: dict[int, tuple[int, SimTime]] = {}  # seq -> (bytes, sent_at)
        self.inflight = 0
        self.stopped = False
        self.bytes_budget = bytes_budget
        self._budget_left = bytes_budget
        self.bytes_sent = 0
        self.cap_violations = 0
        self.last_progress: SimTime = 0
        self.srtt_us: Optional[SimTime] = None

    # -- interface used by the event loop -----------------------------------

    def start(self, now: SimTime) -> list[Packet]:
        self.last_progress = now
        return self.transmit(now)

    def effective_window(self) -> float:
        raise NotImplementedError

    def on_ack(self, ack: Ack, now: SimTime) -> list[Packet]:
        raise NotImplementedError

    def on_timeout(self, now: SimTime) -> list[Packet]:
        """Declare everything in flight lost and restart the ACK clock."""
        self.unacked.clear()
        self.inflight = 0
        self.last_progress = now
        return self.transmit(now)

    def done(self) -> bool:
        return (self._budget_left is not None and self._budget_left <= 0
                and not self.unacked)

    # -- internals -----------------------------------------------------------

    def _initial_mark(self) -> EcnCodepoint:
        return EcnCodepoint.NOT_ECT

    def transmit(self, now: SimTime) -> list[Packet]:
        out: list[Packet] = []
        while not self.stopped and self.inflight < self.effective_window():
            size = MTU_BYTES
            if self._budget_left is not None:
                if self._budget_left <= 0:
                    break
                size = min(size, self._budget_left)
                self._budget_left -= size
            pkt = Packet(self.flow_id, self.next_seq, size, self._initial_mark(), now)
            self.unacked[self.next_seq] = (size, now)
            self.next_seq += 1
            self.inflight += 1
            self.bytes_sent += size
            out.append(pkt)
        return out

    def _retire(self, acked_seq: int, now: SimTime) -> tuple[int, int]:
        """Drop everything at or below the cumulative ACK point.

        Returns (packets retired, bytes retired).  Sequence holes below
        the ACK point are packets the receiver never saw -- they are
        retired too (there is no retransmission) and the caller treats
        them as losses.
        """
        retired_pkts = 0
        retired_bytes = 0
        sent_at = None
        for seq in list(self.unacked):
            if seq > acked_seq:
                break
            size, sent_at = self.unacked.pop(seq)
            retired_bytes += size
            retired_pkts += 1
        self.inflight -= retired_pkts
        if sent_at is not None:
            sample = now - sent_at
            self.srtt_us = sample if self.srtt_us is None \
                else (7 * self.srtt_us + sample) // 8
        return retired_pkts, retired_bytes

    def rtt_estimate(self) -> SimTime:
        """Smoothed round trip including queueing, floored at the base path."""
        return max(self.base_rtt_us, self.srtt_us or 0)

    def _apply_cap(self) -> None:
        # Feedback is at most one RTT old, so a window beyond twice the
        # packets in flight could only have come from stale state.
        limit = 2.0 * max(self.inflight, 1)
        self._clamp_windows(limit)

    def _clamp_windows(self, limit: float) -> None:
        raise NotImplementedError

    def _check_cap(self) -> None:
        limit = 2.0 * max(self.inflight, 1)
        if self.effective_window() > limit + 1e-9:
            self.cap_violations += 1


class AbcSender(FlowSender):
    """Dual-window sender driven by accelerate/brake echoes."""

    scheme = "abc"

    def __init__(self, flow_id: str, initial_window: float = 10.0,
                 base_rtt_us: SimTime = 100_000, additive_increase: bool = True,
                 bytes_budget: Optional[int] = None):
        super().__init__(flow_id, initial_window, base_rtt_us, bytes_budget)
        self.w_abc = float(initial_window)
        self.cubic = CubicWindow(initial_window, rtt_guard_us=base_rtt_us)
        self.additive_increase = additive_increase

    @property
    def w_cubic(self) -> float:
        return self.cubic.cwnd

    def effective_window(self) -> float:
        return min(self.w_abc, self.cubic.cwnd)

    def _initial_mark(self) -> EcnCodepoint:
        # Packets leave the sender accelerated; routers may demote them.
        return EcnCodepoint.ACCEL

    def on_ack(self, ack: Ack, now: SimTime) -> list[Packet]:
        retired_pkts, retired_bytes = self._retire(ack.acked_seq, now)
        if retired_pkts == 0 and ack.bytes_newly_acked == 0:
            return []  # duplicate or stale
        self.last_progress = now
        delta = ack.bytes_newly_acked / MTU_BYTES
        if ack.echo_mark is EcnCodepoint.ACCEL:
            self.w_abc += delta * (1.0 + 1.0 / self.w_abc) if self.additive_increase else delta
        elif ack.echo_mark is EcnCodepoint.BRAKE:
            self.w_abc += delta * (-1.0 + 1.0 / self.w_abc) if self.additive_increase else -delta
        self.w_abc = max(WINDOW_FLOOR, self.w_abc)
        lost = retired_bytes > ack.bytes_newly_acked
        self.cubic.rtt_guard_us = self.rtt_estimate()
        if ack.ece or lost:
            self.cubic.on_congestion(now)
        else:
            self.cubic.on_ack(delta, now)
        self._apply_cap()
        out = self.transmit(now)
        self._check_cap()
        return out

    def on_timeout(self, now: SimTime) -> list[Packet]:
        self.cubic.on_timeout(now)
        out = super().on_timeout(now)
        self._apply_cap()
        return out

    def _clamp_windows(self, limit: float) -> None:
        self.w_abc = max(WINDOW_FLOOR, min(self.w_abc, limit))
        self.cubic.cwnd = max(WINDOW_FLOOR, min(self.cubic.cwnd, limit))


class CubicSender(FlowSender):
    """Loss/ECN-driven legacy sender (long flows and short transfers)."""

    scheme = "cubic"

    def __init__(self, flow_id: str, initial_window: float = 10.0,
                 base_rtt_us: SimTime = 100_000, bytes_budget: Optional[int] = None):
        super().__init__(flow_id, initial_window, base_rtt_us, bytes_budget)
        self.cubic = CubicWindow(initial_window, rtt_guard_us=base_rtt_us)

    @property
    def w_cubic(self) -> float:
        return self.cubic.cwnd

    def effective_window(self) -> float:
        return self.cubic.cwnd

    def on_ack(self, ack: Ack, now: SimTime) -> list[Packet]:
        retired_pkts, retired_bytes = self._retire(ack.acked_seq, now)
        if retired_pkts == 0 and ack.bytes_newly_acked == 0:
            return []
        self.last_progress = now
        lost = retired_bytes > ack.bytes_newly_acked
        self.cubic.rtt_guard_us = self.rtt_estimate()
        if ack.ece or lost:
            self.cubic.on_congestion(now)
        else:
            self.cubic.on_ack(ack.bytes_newly_acked / MTU_BYTES, now)
        self._apply_cap()
        out = self.transmit(now)
        self._check_cap()
        return out

    def on_timeout(self, now: SimTime) -> list[Packet]:
        self.cubic.on_timeout(now)
        return super().on_timeout(now)

    def _clamp_windows(self, limit: float) -> None:
        self.cubic.cwnd = max(WINDOW_FLOOR, min(self.cubic.cwnd, limit))
