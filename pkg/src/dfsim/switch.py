"""The 64-port tiled switch model.

Tile geometry maps ports to a four-row, eight-column grid with two ports
per tile; a packet crosses at most two internal hops (row bus, then column
channel). The runtime model is virtual output queued: arrivals are buffered
per (input port, output port, class), a request becomes visible to the
output arbiter after the request-plane latency, and the output port grants
one frame per service slot, picking classes by credit/priority and inputs
round-robin. The sampled per-switch traversal latency covers the whole
request/grant/crossbar pipeline; the egress channel's occupancy paces
throughput independently, which approximates cut-through timing.

Lossless classes never drop: when an input's class buffer runs low on
headroom the upstream egress is paused for that class until it drains.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass

from .engine import Packet
from .qos import ClassScheduler, QosConfig, partition_buffer

TILE_ROWS = 4
TILE_COLS = 8
PORTS_PER_TILE = 2
NUM_PORTS = TILE_ROWS * TILE_COLS * PORTS_PER_TILE


@dataclass(frozen=True)
class TileCoord:
    row: int
    col: int

    @property
    def index(self) -> int:
        return TILE_COLS * self.row + self.col


def tile_of_port(port: int) -> TileCoord:
    """Tile t = port // 2; row-major over four rows of eight tiles."""
    if not (0 <= port < NUM_PORTS):
        raise ValueError(f"port {port} out of range 0..{NUM_PORTS - 1}")
    t = port // PORTS_PER_TILE
    return TileCoord(t // TILE_COLS, t % TILE_COLS)


def internal_hops(in_port: int, out_port: int) -> int:
    """1 when the output tile sits on the input tile's row, else 2."""
    a, b = tile_of_port(in_port), tile_of_port(out_port)
    return 1 if a.row == b.row else 2


@dataclass
class SwitchConfig:
    traversal_min_ns: int = 300
    traversal_max_ns: int = 400
    request_latency_ns: int = 50
    grant_latency_ns: int = 50
    input_buffer_bytes: int = 256 * 1024
    pause_headroom_frames: int = 2
    resume_headroom_frames: int = 6
    max_frame_bytes: int = 4158
    trace: bool = False


def traversal_latency(rng: random.Random, lo: int = 300, hi: int = 400) -> int:
    """One traversal sample in ns; uniform over [lo, hi], mean 350 default."""
    return rng.randint(lo, hi)


class Voq:
    __slots__ = ("q", "bytes")

    def __init__(self):
        self.q = deque()
        self.bytes = 0


class OutputPort:
    """Egress state for one switch port: arbiter, credits, channel."""

    __slots__ = (
        "sw", "port_id", "channel", "prop_ns", "wire_extra",
        "on_forward", "sched", "pending", "pending_total", "rr_ptr",
        "paused", "busy", "queued_bytes",
    )

    def __init__(self, sw: "SwitchSim", port_id: int, channel, prop_ns: int,
                 wire_extra: int, on_forward, qos_cfg: QosConfig):
        self.sw = sw
        self.port_id = port_id
        self.channel = channel
        self.prop_ns = prop_ns
        self.wire_extra = wire_extra  # inter-packet gap bytes, mode-dependent
        self.on_forward = on_forward
        self.sched = ClassScheduler(qos_cfg)
        self.pending: dict[int, dict[int, int]] = {}
        self.pending_total: dict[int, int] = {}
        self.rr_ptr: dict[int, int] = {}
        self.paused: set[int] = set()
        self.busy = False
        self.queued_bytes = 0

    # -- backpressure interface called by the downstream input buffer ----

    def pause(self, cls: int) -> None:
        self.paused.add(cls)

    def resume(self, cls: int) -> None:
        if cls in self.paused:
            self.paused.discard(cls)
            self.sw.fabric.schedule(self.sw.fabric.eq.now,
                                    lambda: self.sw.wake(self))


class SwitchSim:
    """One switch instance, owned by a single simulation's event loop."""

    def __init__(self, sw_id: int, cfg: SwitchConfig, qos_cfg: QosConfig,
                 fabric, seed):
        self.sw_id = sw_id
        self.cfg = cfg
        self.qos_cfg = qos_cfg
        self.fabric = fabric
        self.rng = random.Random(f"{seed}:sw{sw_id}")
        self.lossless = {c.id: c.lossless for c in qos_cfg.classes}
        self.reserved, self.pool_cap = partition_buffer(
            qos_cfg, cfg.input_buffer_bytes)
        self.voqs: dict[tuple[int, int, int], Voq] = {}
        self.in_bytes: dict[tuple[int, int], int] = {}
        self.pool_used: dict[int, int] = {}
        self.paused_in: set[tuple[int, int]] = set()
        self.upstream: dict[int, object] = {}  # in_port -> upstream egress
        self.out_ports: dict[int, OutputPort] = {}
        self.ports_to: dict[int, list[OutputPort]] = {}  # next switch -> ports
        self.eject: dict[int, OutputPort] = {}  # endpoint -> port
        self.trace: list[tuple] | None = [] if cfg.trace else None

    # -- wiring (done by the fabric before the run) -----------------------

    def add_output(self, port_id: int, channel, prop_ns: int, wire_extra: int,
                   on_forward) -> OutputPort:
        port = OutputPort(self, port_id, channel, prop_ns, wire_extra,
                          on_forward, self.qos_cfg)
        self.out_ports[port_id] = port
        return port

    # -- buffer accounting -------------------------------------------------

    def _overflow(self, in_port: int, cls: int, occupancy: int) -> int:
        return max(0, occupancy - self.reserved[cls])

    def can_admit(self, in_port: int, cls: int, nbytes: int) -> bool:
        used = self.in_bytes.get((in_port, cls), 0)
        delta = self._overflow(in_port, cls, used + nbytes) - \
            self._overflow(in_port, cls, used)
        return self.pool_used.get(in_port, 0) + delta <= self.pool_cap

    def _admit(self, in_port: int, cls: int, nbytes: int) -> None:
        used = self.in_bytes.get((in_port, cls), 0)
        delta = self._overflow(in_port, cls, used + nbytes) - \
            self._overflow(in_port, cls, used)
        self.in_bytes[(in_port, cls)] = used + nbytes
        self.pool_used[in_port] = self.pool_used.get(in_port, 0) + delta
        self._check_pause(in_port, cls)

    def _release(self, in_port: int, cls: int, nbytes: int) -> None:
        used = self.in_bytes[(in_port, cls)]
        delta = self._overflow(in_port, cls, used) - \
            self._overflow(in_port, cls, used - nbytes)
        self.in_bytes[(in_port, cls)] = used - nbytes
        self.pool_used[in_port] -= delta
        self._check_resume(in_port, cls)

    def _headroom(self, in_port: int, cls: int) -> int:
        used = self.in_bytes.get((in_port, cls), 0)
        free_reserved = max(0, self.reserved[cls] - used)
        return free_reserved + self.pool_cap - self.pool_used.get(in_port, 0)

    def _check_pause(self, in_port: int, cls: int) -> None:
        key = (in_port, cls)
        if key in self.paused_in or not self.lossless[cls]:
            return
        if self._headroom(in_port, cls) < \
                self.cfg.pause_headroom_frames * self.cfg.max_frame_bytes:
            up = self.upstream.get(in_port)
            if up is not None:
                self.paused_in.add(key)
                up.pause(cls)

    def _check_resume(self, in_port: int, cls: int) -> None:
        key = (in_port, cls)
        if key not in self.paused_in:
            return
        if self._headroom(in_port, cls) >= \
                self.cfg.resume_headroom_frames * self.cfg.max_frame_bytes:
            self.paused_in.discard(key)
            self.upstream[in_port].resume(cls)

    # -- datapath ----------------------------------------------------------

    def choose_output(self, pkt: Packet) -> OutputPort:
        if pkt.hop_idx == len(pkt.path) - 1:
            return self.eject[pkt.dst]
        nxt = pkt.path[pkt.hop_idx + 1]
        ports = self.ports_to[nxt]
        if len(ports) == 1:
            return ports[0]
        return min(ports, key=lambda p: (p.queued_bytes, p.port_id))

    def handle_arrival(self, in_port: int, pkt: Packet, head_ns: int,
                       tail_ns: int) -> None:
        cls = pkt.tclass
        port = self.choose_output(pkt)
        if not self.lossless[cls] and not self.can_admit(
                in_port, cls, pkt.frame_bytes):
            self.fabric.on_drop(pkt, self.sw_id)
            return
        self._admit(in_port, cls, pkt.frame_bytes)
        t = traversal_latency(self.rng, self.cfg.traversal_min_ns,
                              self.cfg.traversal_max_ns)
        key = (in_port, port.port_id, cls)
        voq = self.voqs.get(key)
        if voq is None:
            voq = self.voqs[key] = Voq()
        voq.q.append((pkt, head_ns + t, tail_ns))
        voq.bytes += pkt.frame_bytes
        port.queued_bytes += pkt.frame_bytes
        req_at = head_ns + self.cfg.request_latency_ns
        if self.trace is not None:
            self.trace.append(("req", req_at, in_port, port.port_id, pkt.id))
        self.fabric.schedule(
            req_at, lambda: self.on_request(port, cls, in_port))

    def on_request(self, port: OutputPort, cls: int, in_port: int) -> None:
        per_in = port.pending.get(cls)
        if per_in is None:
            per_in = port.pending[cls] = {}
        per_in[in_port] = per_in.get(in_port, 0) + 1
        port.pending_total[cls] = port.pending_total.get(cls, 0) + 1
        self.wake(port)

    def _select_input(self, port: OutputPort, cls: int) -> int:
        ready = sorted(p for p, n in port.pending[cls].items() if n > 0)
        ptr = port.rr_ptr.get(cls, -1)
        for p in ready:
            if p > ptr:
                port.rr_ptr[cls] = p
                return p
        port.rr_ptr[cls] = ready[0]
        return ready[0]

    def wake(self, port: OutputPort) -> None:
        if port.busy:
            return
        backlogged = tuple(sorted(
            cls for cls, n in port.pending_total.items()
            if n > 0 and cls not in port.paused))
        if not backlogged:
            return
        now = self.fabric.eq.now
        cls = port.sched.pick(backlogged)
        in_port = self._select_input(port, cls)
        voq = self.voqs[(in_port, port.port_id, cls)]
        pkt, earliest, tail = voq.q.popleft()
        voq.bytes -= pkt.frame_bytes
        port.pending[cls][in_port] -= 1
        port.pending_total[cls] -= 1
        port.queued_bytes -= pkt.frame_bytes
        self._release(in_port, cls, pkt.frame_bytes)
        port.sched.charge(cls, pkt.frame_bytes + port.wire_extra, backlogged)
        wire = pkt.frame_bytes + port.wire_extra
        # the frame's last bit cannot leave before it has arrived
        ser_est = wire * 8 * 1000 // port.channel.bw_mbps
        start, end = port.channel.push(max(now, earliest, tail - ser_est), wire)
        port.busy = True
        if self.trace is not None:
            self.trace.append(("grant", now, in_port, port.port_id, pkt.id))
            self.trace.append(("data", start, in_port, port.port_id, pkt.id))
        pkt.hop_ports.append((self.sw_id, port.port_id))
        pkt.hop_idx += 1
        self.fabric.schedule(end, lambda: self.on_tx_done(port))
        port.on_forward(pkt, start + port.prop_ns, end + port.prop_ns)

    def on_tx_done(self, port: OutputPort) -> None:
        port.busy = False
        self.wake(port)
