"""Fabric simulation: one deterministic event loop over the whole network.

Builds the topology, a switch model per switch, a NIC per endpoint, and the
per-pair congestion control state, then drives workload generators through
injection, forwarding, delivery, and acknowledgement. Acknowledgements do
not occupy fabric links; they return after the reverse path's propagation
and switch latencies and carry the queue-depth advertisements consumed by
adaptive routing, with their four bytes per forward packet charged to a
counter.

A simulation instance owns all its state; instances are independent and
can run in parallel processes with identical results.
"""

from __future__ import annotations

from collections import deque
from dataclasses import replace

from .congestion import CongestionControl
from .engine import (
    Channel,
    EventQueue,
    FrameMode,
    Link,
    MAX_PAYLOAD_BYTES,
    Packet,
    ROCE_INTER_PACKET_GAP_BYTES,
    frame_overhead,
)
from .qos import classify as qos_classify
from .qos import validate as qos_validate
from .routing import ACK_INFO_BYTES, CongestionTable, RouterState, choose_path
from .switch import SwitchSim
from .topology import build_dragonfly
from .traffic import allocate_nodes, make_workload, segment_message

ACK_HOP_NS = 350  # reverse-path per-switch latency for teleported acks
ACK_SER_NS = 2  # per-link serialization of the small ack frame


class MsgRec:
    __slots__ = ("remaining_inject", "remaining_deliver", "on_injected",
                 "on_delivered")

    def __init__(self, n, on_injected, on_delivered):
        self.remaining_inject = n
        self.remaining_deliver = n
        self.on_injected = on_injected
        self.on_delivered = on_delivered


class SimStats:
    def __init__(self):
        self.injected = 0
        self.delivered = 0
        self.dropped = 0
        self.dropped_by_class: dict[int, int] = {}
        self.delivered_wire_by_job: dict[str, int] = {}
        self.win_bytes: dict[tuple[str, int], int] = {}
        self.latencies: dict[str, list[int]] = {}
        self.reverse_overhead_bytes = 0


class NicSim:
    """Endpoint NIC: window-deferred pair queues plus a serializing egress."""

    __slots__ = ("fabric", "ep", "sw", "in_port", "chan", "prop_ns",
                 "wire_extra", "queues", "pair_pending", "paused", "busy",
                 "priority")

    def __init__(self, fabric, ep, sw, in_port, chan, prop_ns, wire_extra):
        self.fabric = fabric
        self.ep = ep
        self.sw = sw
        self.in_port = in_port
        self.chan = chan
        self.prop_ns = prop_ns
        self.wire_extra = wire_extra
        self.queues: dict[int, deque] = {}
        self.pair_pending: dict[int, deque] = {}
        self.paused: set[int] = set()
        self.busy = False
        self.priority = {c.id: c.priority for c in fabric.qos_cfg.classes}

    # downstream switch input buffer calls these
    def pause(self, cls: int) -> None:
        self.paused.add(cls)

    def resume(self, cls: int) -> None:
        if cls in self.paused:
            self.paused.discard(cls)
            self.fabric.schedule(self.fabric.eq.now, self.pump)

    def enqueue(self, pkt: Packet) -> None:
        q = self.queues.get(pkt.tclass)
        if q is None:
            q = self.queues[pkt.tclass] = deque()
        q.append(pkt)
        self.pump()

    def pump(self) -> None:
        if self.busy:
            return
        ready = [cls for cls in sorted(self.queues)
                 if self.queues[cls] and cls not in self.paused]
        if not ready:
            return
        cls = max(ready, key=lambda c: (self.priority[c], -c))
        pkt = self.queues[cls].popleft()
        now = self.fabric.eq.now
        start, end = self.chan.push(now, pkt.frame_bytes + self.wire_extra)
        self.busy = True
        self.fabric.schedule(end, self._tx_done)
        head, tail = start + self.prop_ns, end + self.prop_ns
        sw = self.sw
        self.fabric.schedule(
            head, lambda: sw.handle_arrival(self.in_port, pkt, head, tail))
        # a message counts as injected once its last packet is on the wire;
        # closed-loop senders key their next post off this
        msg = self.fabric.messages.get(pkt.msg_id)
        if msg is not None:
            msg.remaining_inject -= 1
            if msg.remaining_inject == 0 and msg.on_injected is not None:
                self.fabric.schedule(now, msg.on_injected)

    def _tx_done(self) -> None:
        self.busy = False
        self.pump()

    def pump_pair(self, dst: int) -> None:
        fab = self.fabric
        q = self.pair_pending.get(dst)
        while q:
            pkt = q[0]
            if not fab.cc.on_inject(self.ep, dst, pkt.frame_bytes):
                return
            q.popleft()
            fab.admit(self, pkt)

    def buffered_count(self) -> int:
        return sum(len(q) for q in self.queues.values())


class FabricSim:
    def __init__(self, scenario, topo=None):
        sc = scenario
        self.sc = sc
        qos_validate(sc.qos_cfg)
        self.qos_cfg = sc.qos_cfg
        self.topo = topo if topo is not None else build_dragonfly(sc.topo_params)
        self.mode = sc.frame_mode
        self.wire_extra = (ROCE_INTER_PACKET_GAP_BYTES
                           if sc.frame_mode is FrameMode.ROCE else 0)
        self.max_frame = frame_overhead(sc.frame_mode, MAX_PAYLOAD_BYTES)
        self.eq = EventQueue()
        self.stats = SimStats()
        self.cc = CongestionControl(sc.cc_cfg, self.max_frame,
                                    sc.topo_params.link_bandwidth_gbps)
        swcfg = replace(sc.switch_cfg, max_frame_bytes=self.max_frame)
        self.switch_cfg = swcfg
        self.switches = [
            SwitchSim(i, swcfg, sc.qos_cfg, self, sc.seed)
            for i in range(self.topo.num_switches)
        ]
        self._wire_fabric_links()
        self._wire_endpoints()
        bias = sc.routing_cfg.bias_bytes
        rcfg = sc.routing_cfg if bias else replace(sc.routing_cfg,
                                                   bias_bytes=self.max_frame)
        self.routing_cfg = rcfg
        self.routers = [
            RouterState(self.topo, i, rcfg,
                        CongestionTable(self._local_depth_fn(i)), sc.seed)
            for i in range(self.topo.num_switches)
        ]
        self._ordered = {c.id: c.ordered for c in sc.qos_cfg.classes}
        self.messages: dict[int, MsgRec] = {}
        self._msg_seq = 0
        self._pkt_seq = 0
        self.iteration_log: dict[str, list[int]] = {}
        self.iteration_hooks: list = []
        self.window_ns = getattr(sc, "window_ns", 10_000)
        self.record_latency_jobs = set(getattr(sc, "record_latency_jobs", ()))
        self._tick_scheduled = False
        self._stop = False
        self.workloads = []
        self.victim_nodes: list[int] = []
        self.aggressor_nodes: list[int] = []
        self._make_workloads()

    # -- construction ------------------------------------------------------

    def _wire_fabric_links(self):
        for rec in self.topo.links:
            link = Link(rec.bandwidth_gbps, rec.propagation_ns,
                        "copper" if rec.medium == "intra" else "optical",
                        ((rec.sw_a, rec.port_a), (rec.sw_b, rec.port_b)))
            for sw_src, p_src, sw_dst, p_dst in (
                    (rec.sw_a, rec.port_a, rec.sw_b, rec.port_b),
                    (rec.sw_b, rec.port_b, rec.sw_a, rec.port_a)):
                src = self.switches[sw_src]
                port = src.add_output(
                    p_src, Channel(link), rec.propagation_ns,
                    self.wire_extra, self._fabric_forward(sw_dst, p_dst))
                src.ports_to.setdefault(sw_dst, []).append(port)
                self.switches[sw_dst].upstream[p_dst] = port

    def _fabric_forward(self, dst_switch: int, in_port: int):
        sw = self.switches  # bound late; dst_switch fixed per closure
        eq = self.eq

        def fwd(pkt, head, tail):
            eq.schedule(head, lambda: sw[dst_switch].handle_arrival(
                in_port, pkt, head, tail))

        return fwd

    def _wire_endpoints(self):
        p = self.topo.params
        self.nics: list[NicSim] = []
        for ep in range(self.topo.num_endpoints):
            sw_id = self.topo.switch_of_endpoint(ep)
            sw = self.switches[sw_id]
            in_port = self.topo.endpoint_port(ep)
            link = Link(p.link_bandwidth_gbps, p.propagation_copper_ns,
                        "copper", (("ep", ep), (sw_id, in_port)))
            nic = NicSim(self, ep, sw, in_port, Channel(link),
                         p.propagation_copper_ns, self.wire_extra)
            self.nics.append(nic)
            eject = sw.add_output(in_port, Channel(link),
                                  p.propagation_copper_ns, self.wire_extra,
                                  self._eject_forward())
            sw.eject[ep] = eject
            sw.upstream[in_port] = nic

    def _eject_forward(self):
        def fwd(pkt, head, tail):
            self.eq.schedule(tail, lambda: self._deliver(pkt, tail))

        return fwd

    def _local_depth_fn(self, sw_id: int):
        sw = self.switches[sw_id]

        def depth(next_sw: int) -> int:
            return min(p.queued_bytes for p in sw.ports_to[next_sw])

        return depth

    def _make_workloads(self):
        sc = self.sc
        victim_nodes, aggressor_nodes = allocate_nodes(
            sc.allocation, sc.split, self.topo.num_endpoints, sc.seed)
        if getattr(sc, "victim_nodes", None) is not None:
            victim_nodes = list(sc.victim_nodes)
        if getattr(sc, "aggressor_nodes", None) is not None:
            aggressor_nodes = list(sc.aggressor_nodes)
        self.victim_nodes = victim_nodes
        self.aggressor_nodes = aggressor_nodes
        if sc.victim is not None:
            self.workloads.append(make_workload(
                self, "victim", victim_nodes, sc.victim, ppn=1))
        if sc.aggressor is not None:
            self.workloads.append(make_workload(
                self, "aggressor", aggressor_nodes, sc.aggressor, sc.ppn))

    # -- event plumbing ----------------------------------------------------

    def schedule(self, t: int, fn) -> None:
        self.eq.schedule(t, fn)

    def start(self) -> None:
        for w in self.workloads:
            w.start()

    def stop(self) -> None:
        self._stop = True

    def run(self, max_time_ns: int | None = None) -> None:
        eq = self.eq
        while len(eq) and not self._stop:
            if max_time_ns is not None and eq.peek_time() > max_time_ns:
                break
            _, fn = eq.pop()
            fn()

    # -- datapath ----------------------------------------------------------

    def post_message(self, job, src, dst, msg_bytes, dscp,
                     on_injected=None, on_delivered=None) -> int:
        payloads = segment_message(msg_bytes)
        msg_id = self._msg_seq
        self._msg_seq += 1
        self.messages[msg_id] = MsgRec(len(payloads), on_injected,
                                       on_delivered)
        cls = qos_classify(self.qos_cfg, dscp)
        nic = self.nics[src]
        pending = nic.pair_pending.get(dst)
        for i, pl in enumerate(payloads):
            pkt = Packet(self._pkt_seq, src, dst, pl,
                         frame_overhead(self.mode, pl), cls, None,
                         job, msg_id, i == len(payloads) - 1)
            self._pkt_seq += 1
            if (pending and len(pending)) or not self.cc.on_inject(
                    src, dst, pkt.frame_bytes):
                if pending is None:
                    pending = nic.pair_pending[dst] = deque()
                pending.append(pkt)
            else:
                self.admit(nic, pkt)
        self._ensure_tick()
        return msg_id

    def admit(self, nic: NicSim, pkt: Packet) -> None:
        router = self.routers[nic.sw.sw_id]
        path = choose_path(router, pkt.src, pkt.dst, pkt.tclass,
                           self._ordered[pkt.tclass])
        pkt.path = path.switches
        pkt.inject_time = self.eq.now
        self.stats.injected += 1
        nic.enqueue(pkt)

    def _deliver(self, pkt: Packet, now: int) -> None:
        pkt.deliver_time = now
        st = self.stats
        st.delivered += 1
        st.delivered_wire_by_job[pkt.job] = \
            st.delivered_wire_by_job.get(pkt.job, 0) + pkt.frame_bytes
        key = (pkt.job, now // self.window_ns)
        st.win_bytes[key] = st.win_bytes.get(key, 0) + pkt.frame_bytes
        if pkt.job in self.record_latency_jobs:
            st.latencies.setdefault(pkt.job, []).append(
                now - pkt.inject_time)
        msg = self.messages[pkt.msg_id]
        msg.remaining_deliver -= 1
        if msg.remaining_deliver == 0:
            del self.messages[pkt.msg_id]
            if msg.on_delivered is not None:
                msg.on_delivered()
        delay = self._ack_delay(pkt)
        self.eq.schedule(now + delay, lambda: self._ack(pkt))

    def _ack_delay(self, pkt: Packet) -> int:
        props = 2 * self.topo.params.propagation_copper_ns
        for sw_id, port in pkt.hop_ports[:-1]:
            kind, idx = self.topo.port_map[sw_id][port]
            props += self.topo.links[idx].propagation_ns
        n_sw = len(pkt.path)
        return props + ACK_HOP_NS * n_sw + ACK_SER_NS * (n_sw + 1)

    def _ack(self, pkt: Packet) -> None:
        now = self.eq.now
        self.cc.on_ack(pkt.src, pkt.dst, pkt.frame_bytes, now,
                       now - pkt.inject_time)
        self.stats.reverse_overhead_bytes += ACK_INFO_BYTES
        # acks carry downstream queue depths back along the path
        path = pkt.path
        for i in range(len(path) - 1):
            nxt_sw, nxt_port = pkt.hop_ports[i + 1]
            depth = self.switches[nxt_sw].out_ports[nxt_port].queued_bytes
            self.routers[path[i]].tables.on_ack_info(
                nxt_sw, {nxt_port: depth}, now)
        self.nics[pkt.src].pump_pair(pkt.dst)
        for src, dst in self.cc.adjust_windows(now):
            self.nics[src].pump_pair(dst)

    def on_drop(self, pkt: Packet, sw_id: int) -> None:
        st = self.stats
        st.dropped += 1
        st.dropped_by_class[pkt.tclass] = \
            st.dropped_by_class.get(pkt.tclass, 0) + 1
        # the window must not leak on loss; no retry is modeled
        self.cc.on_ack(pkt.src, pkt.dst, pkt.frame_bytes, self.eq.now)
        self.nics[pkt.src].pump_pair(pkt.dst)

    # -- congestion-control tick --------------------------------------------

    def _ensure_tick(self) -> None:
        if self._tick_scheduled or not self.cc.cfg.enabled:
            return
        self._tick_scheduled = True
        self.eq.schedule(self.eq.now + self.cc.cfg.tick_ns, self._tick)

    def _tick(self) -> None:
        now = self.eq.now
        for src, dst in self.cc.adjust_windows(now):
            self.nics[src].pump_pair(dst)
        live = any(self.cc.dst_outstanding.values()) or any(
            q for nic in self.nics for q in nic.pair_pending.values())
        if live:
            self.eq.schedule(now + self.cc.cfg.tick_ns, self._tick)
        else:
            self._tick_scheduled = False

    # -- measurement hooks ---------------------------------------------------

    def record_iteration(self, job: str, duration_ns: int) -> None:
        self.iteration_log.setdefault(job, []).append(duration_ns)
        for hook in self.iteration_hooks:
            hook(job)

    def buffered_count(self) -> int:
        n = sum(nic.buffered_count() for nic in self.nics)
        for sw in self.switches:
            n += sum(len(v.q) for v in sw.voqs.values())
        return n

    def job_bandwidth_gbps(self, job: str, t0: int, t1: int) -> float:
        """Delivered wire bandwidth for a job over a window, in Gb/s."""
        total = 0
        w = self.window_ns
        for (j, idx), nbytes in self.stats.win_bytes.items():
            if j == job and t0 <= idx * w < t1:
                total += nbytes
        return total * 8 / max(t1 - t0, 1)
