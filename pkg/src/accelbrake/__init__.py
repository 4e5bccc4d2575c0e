"""Packet-level simulator for explicit window-control congestion signaling.

The protocol under study lets routers split acknowledgment-clocked
traffic into accelerate and brake feedback: each acknowledged packet
tells the sender to grow or shrink its window, so the router controls
the aggregate rate one round trip later without keeping per-flow state.

Modules:

- ``core``      packet/ACK records, codepoints, unit helpers
- ``links``     fixed, stepped and trace-driven link processes
- ``router``    marking control law, token bucket, dual-queue scheduling
- ``sender``    window arithmetic for marked and legacy flows
- ``receiver``  feedback echo with coalescing
- ``legacy``    cubic window growth and droptail/ECN queues
- ``engine``    the discrete-event loop
- ``metrics``   run logs, summaries, CSV output
- ``fluid``     delay-differential model of the aggregate queue
- ``wifi``      link-rate estimation from frame-aggregation ACKs
- ``config``    YAML scenario files
- ``cli``       the ``accelbrake`` command
"""

from .core import Ack, EcnCodepoint, Packet, MTU_BYTES
from .engine import FlowSpec, HopSpec, ShortFlowLoad, Simulation, Topology
from .links import FixedLink, OracleRateView, StepLink, TraceLink, load_trace_file
from .metrics import MetricsLog, jain_index
from .router import AbcParams, AbcRouter, accel_fraction, target_rate
from .sender import AbcSender, CubicSender, lost_ack_drift, steady_state_window

__all__ = [
    "Ack", "EcnCodepoint", "Packet", "MTU_BYTES",
    "FlowSpec", "HopSpec", "ShortFlowLoad", "Simulation", "Topology",
    "FixedLink", "OracleRateView", "StepLink", "TraceLink", "load_trace_file",
    "MetricsLog", "jain_index",
    "AbcParams", "AbcRouter", "accel_fraction", "target_rate",
    "AbcSender", "CubicSender", "lost_ack_drift", "steady_state_window",
]

__version__ = "0.1.0"
