"""Deterministic discrete-event core.

Provides the simulated clock and event queue, the frame-overhead rules for
the two wire formats, and the link transit model. All simulation time is
integer nanoseconds; sub-nanosecond serialization remainders are carried in
a per-channel deficit counter so long runs do not drift.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum
from typing import Any


class FrameMode(Enum):
    """Wire format: standard RoCE framing or the reduced-overhead format."""

    ROCE = "roce"
    ENHANCED = "enhanced"


# Header/trailer bytes around the payload: Ethernet incl. preamble (26),
# IPv4 (20), UDP (8), InfiniBand (14), CRC (4).
ROCE_OVERHEAD_BYTES = 62
ETHERNET_HEADER_BYTES = 26
ROCE_MIN_FRAME_BYTES = 64
ENHANCED_MIN_FRAME_BYTES = 32
ROCE_INTER_PACKET_GAP_BYTES = 20
MAX_PAYLOAD_BYTES = 4096


class PayloadTooLarge(ValueError):
    """Payload exceeds the maximum packet size; caller must segment."""


class SchedulingError(RuntimeError):
    """An event was scheduled in the past; this is a fatal logic error."""


def frame_overhead(mode: FrameMode, payload_bytes: int) -> int:
    """Total frame bytes on the wire for a payload in the given mode.

    RoCE carries the full 62-byte overhead and a 64-byte minimum frame.
    Enhanced drops the Ethernet header (26 bytes) and lowers the minimum
    frame to 32 bytes.
    """
    if payload_bytes < 0:
        raise ValueError(f"negative payload: {payload_bytes}")
    if payload_bytes > MAX_PAYLOAD_BYTES:
        raise PayloadTooLarge(
            f"payload {payload_bytes} exceeds {MAX_PAYLOAD_BYTES} bytes"
        )
    if mode is FrameMode.ROCE:
        return max(payload_bytes + ROCE_OVERHEAD_BYTES, ROCE_MIN_FRAME_BYTES)
    return max(
        payload_bytes + ROCE_OVERHEAD_BYTES - ETHERNET_HEADER_BYTES,
        ENHANCED_MIN_FRAME_BYTES,
    )


def min_frame_bytes(mode: FrameMode) -> int:
    if mode is FrameMode.ROCE:
        return ROCE_MIN_FRAME_BYTES
    return ENHANCED_MIN_FRAME_BYTES


@dataclass(frozen=True)
class Link:
    """A physical cable between two ports.

    ``endpoints`` is a descriptive pair of (kind, id, port) tuples; the
    topology layer owns the actual wiring tables. Copper links attach nodes
    to switches or switches within a group; optical links connect groups.
    """

    bandwidth_gbps: float
    propagation_ns: int
    medium: str  # "copper" | "optical"
    endpoints: tuple

    def __post_init__(self):
        if self.bandwidth_gbps <= 0:
            raise ValueError("link bandwidth must be positive")


def link_transit(link: Link, frame_bytes: int, mode: FrameMode) -> float:
    """Exact duration in ns for a frame to cross a link.

    Serialization plus propagation; RoCE additionally pays a 20-byte-time
    inter-packet gap on the serialization term, enhanced mode pays none.
    """
    if frame_bytes < min_frame_bytes(mode):
        raise ValueError(
            f"frame {frame_bytes} below minimum for {mode.value}"
        )
    wire_bytes = frame_bytes
    if mode is FrameMode.ROCE:
        wire_bytes += ROCE_INTER_PACKET_GAP_BYTES
    return wire_bytes * 8 / link.bandwidth_gbps + link.propagation_ns


class Packet:
    """One simulated unit of transfer.

    ``path`` is the ordered switch-id sequence fixed at injection (source
    routing); ``hop_ports`` records the egress port actually used at each
    switch, for reverse-direction congestion advertisement.
    """

    __slots__ = (
        "id",
        "src",
        "dst",
        "payload_bytes",
        "frame_bytes",
        "tclass",
        "path",
        "hop_idx",
        "hop_ports",
        "inject_time",
        "deliver_time",
        "job",
        "msg_id",
        "msg_last",
    )

    def __init__(self, pkt_id, src, dst, payload_bytes, frame_bytes, tclass,
                 path, job=None, msg_id=None, msg_last=False):
        self.id = pkt_id
        self.src = src
        self.dst = dst
        self.payload_bytes = payload_bytes
        self.frame_bytes = frame_bytes
        self.tclass = tclass
        self.path = path
        self.hop_idx = 0
        self.hop_ports = []
        self.inject_time = -1
        self.deliver_time = -1
        self.job = job
        self.msg_id = msg_id
        self.msg_last = msg_last

    def __repr__(self):
        return (f"Packet({self.id}, {self.src}->{self.dst}, "
                f"{self.payload_bytes}B, tc={self.tclass})")


class EventQueue:
    """Time-ordered event queue with FIFO tie-break for equal timestamps.

    Events are arbitrary payloads; pop order is (time, insertion order),
    which makes runs reproducible regardless of payload contents.
    """

    def __init__(self):
        self._heap: list[tuple[int, int, Any]] = []
        self._seq = 0
        self.now = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, time_ns: int, item: Any) -> int:
        if time_ns < self.now:
            raise SchedulingError(
                f"event scheduled at t={time_ns} but clock is at {self.now}"
            )
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (time_ns, seq, item))
        return seq

    def pop(self) -> tuple[int, Any]:
        time_ns, _, item = heapq.heappop(self._heap)
        self.now = time_ns
        return time_ns, item

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None


class Channel:
    """One direction of a link: serializer state plus transit bookkeeping.

    Serialization times are tracked with an integer carry in units of
    1/bandwidth_mbps ns so that N frames take exactly the ideal total time
    rounded down, with no accumulating drift.
    """

    __slots__ = ("link", "bw_mbps", "free_at", "_carry", "busy_bits")

    def __init__(self, link: Link):
        self.link = link
        self.bw_mbps = round(link.bandwidth_gbps * 1000)
        if self.bw_mbps <= 0:
            raise ValueError("channel bandwidth too small")
        self.free_at = 0
        self._carry = 0
        self.busy_bits = 0  # total bits serialized, for capacity audits

    def serialization_ns(self, wire_bytes: int) -> int:
        """Consume carry state and return integer ns for this frame."""
        num = wire_bytes * 8 * 1000 + self._carry
        ticks = num // self.bw_mbps
        self._carry = num % self.bw_mbps
        return ticks

    def push(self, earliest_start: int, wire_bytes: int) -> tuple[int, int]:
        """Occupy the channel for one frame; returns (start, end) ns."""
        start = max(earliest_start, self.free_at)
        end = start + self.serialization_ns(wire_bytes)
        self.free_at = end
        self.busy_bits += wire_bytes * 8
        return start, end
