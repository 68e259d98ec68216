"""Synthetic workloads: aggressor and victim kernels plus node allocation.

Generators are closed-loop state machines driven by the fabric's delivery
and injection callbacks: a sender posts its next message when the previous
one has fully entered its NIC, and collective rounds advance when every
message of the round has been delivered (bulk synchronous). ``ppn``
replicates a pattern into that many concurrently running instances.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field


class TrafficError(ValueError):
    pass


WORKLOAD_KINDS = ("incast", "alltoall", "bursty_incast", "allreduce",
                  "pingpong", "bisection_stream", "halo3d")


@dataclass
class WorkloadSpec:
    kind: str
    msg_bytes: int = 4096
    iterations: int = 0  # 0 = run until externally stopped
    burst_size: int | None = None
    burst_gap_ns: int | None = None
    grid: tuple[int, int, int] | None = None
    dscp: int = 0
    start_ns: int = 0
    duration_ns: int | None = None
    compute_ns: int = 0
    target_rotation: bool = False

    def validate(self) -> None:
        if self.kind not in WORKLOAD_KINDS:
            raise TrafficError(f"unknown workload kind {self.kind!r}")
        if self.msg_bytes < 1:
            raise TrafficError("msg_bytes must be positive")
        if self.kind == "bursty_incast":
            if not self.burst_size or self.burst_size < 1:
                raise TrafficError("bursty_incast needs burst_size >= 1")
            if self.burst_gap_ns is None or self.burst_gap_ns < 0:
                raise TrafficError("bursty_incast needs burst_gap_ns")
        elif self.burst_size is not None or self.burst_gap_ns is not None:
            raise TrafficError("burst fields only apply to bursty_incast")
        if self.kind == "halo3d":
            if self.grid is None or len(self.grid) != 3:
                raise TrafficError("halo3d needs a 3d grid")
        elif self.grid is not None:
            raise TrafficError("grid only applies to halo3d")


ALLOCATION_STRATEGIES = ("linear", "interleaved", "random")


def allocate_nodes(strategy: str, split: tuple[int, int], n_endpoints: int,
                   seed) -> tuple[list[int], list[int]]:
    """Assign endpoint ids to (victim, aggressor) jobs.

    linear packs the victim first; interleaved alternates by the reduced
    split ratio; random shuffles with the scenario seed.
    """
    v, a = split
    if v < 0 or a < 0 or v + a > n_endpoints:
        raise TrafficError(f"split {split} exceeds {n_endpoints} endpoints")
    if strategy == "linear":
        return list(range(v)), list(range(v, v + a))
    if strategy == "interleaved":
        if v and a:
            g = math.gcd(v, a)
            pat_v, pat_a = v // g, a // g
        else:
            pat_v, pat_a = (1, 0) if v else (0, 1)
        victims, aggressors = [], []
        pos = 0
        for ep in range(n_endpoints):
            if len(victims) == v and len(aggressors) == a:
                break
            take_victim = pos % (pat_v + pat_a) < pat_v
            if take_victim and len(victims) < v:
                victims.append(ep)
            elif len(aggressors) < a:
                aggressors.append(ep)
            else:
                victims.append(ep)
            pos += 1
        return victims, aggressors
    if strategy == "random":
        ids = list(range(n_endpoints))
        random.Random(f"{seed}:alloc").shuffle(ids)
        return sorted(ids[:v]), sorted(ids[v:v + a])
    raise TrafficError(f"unknown allocation strategy {strategy!r}")


def segment_message(msg_bytes: int, max_payload: int = 4096) -> list[int]:
    """Payload sizes per packet: full packets plus the remainder."""
    full, rem = divmod(msg_bytes, max_payload)
    return [max_payload] * full + ([rem] if rem else [])


class Workload:
    """Base: one job's communication pattern over a fixed node set."""

    def __init__(self, fabric, job: str, nodes: list[int], spec: WorkloadSpec,
                 ppn: int = 1):
        spec.validate()
        if not nodes:
            raise TrafficError(f"job {job!r} has no nodes")
        self.fabric = fabric
        self.job = job
        self.nodes = list(nodes)
        self.spec = spec
        self.ppn = ppn
        self.iterations_done = 0
        self.stopped = False

    def start(self) -> None:
        self.fabric.schedule(self.spec.start_ns, self._begin)

    def _begin(self) -> None:
        raise NotImplementedError

    def _should_stop(self) -> bool:
        if self.stopped:
            return True
        s = self.spec
        if s.iterations and self.iterations_done >= s.iterations:
            return True
        if s.duration_ns is not None and \
                self.fabric.eq.now >= s.start_ns + s.duration_ns:
            return True
        return False

    def stop(self) -> None:
        self.stopped = True

    def post(self, src: int, dst: int, on_injected=None, on_delivered=None):
        self.fabric.post_message(self.job, src, dst, self.spec.msg_bytes,
                                 self.spec.dscp, on_injected, on_delivered)


class IncastWorkload(Workload):
    """Sources continuously post one-sided transfers to a single target."""

    def __init__(self, fabric, job, nodes, spec, ppn=1):
        super().__init__(fabric, job, nodes, spec, ppn)
        if len(nodes) < 2:
            raise TrafficError("incast needs a target and at least one source")
        self.target = self.nodes[0]
        self.sources = self.nodes[1:]
        self._sent: dict[tuple[int, int], int] = {}

    def _begin(self) -> None:
        for rep in range(self.ppn):
            for src in self.sources:
                self._post_next(src, rep)

    def _target_for(self, src: int, rep: int) -> int:
        if not self.spec.target_rotation:
            return self.target
        k = self._sent.get((src, rep), 0)
        others = [n for n in self.nodes if n != src]
        return others[k % len(others)]

    def _post_next(self, src: int, rep: int) -> None:
        if self._should_stop():
            return
        dst = self._target_for(src, rep)
        self._sent[(src, rep)] = self._sent.get((src, rep), 0) + 1
        self.post(src, dst,
                  on_injected=lambda: self._post_next(src, rep))


class BurstyIncastWorkload(IncastWorkload):
    """Incast in bursts: burst_size messages back to back, then a gap."""

    def _post_next(self, src: int, rep: int) -> None:
        if self._should_stop():
            return
        sent = self._sent.get((src, rep), 0)
        dst = self._target_for(src, rep)
        self._sent[(src, rep)] = sent + 1

        def advance():
            if (sent + 1) % self.spec.burst_size == 0:
                self.fabric.schedule(
                    self.fabric.eq.now + self.spec.burst_gap_ns,
                    lambda: self._post_next(src, rep))
            else:
                self._post_next(src, rep)

        self.post(src, dst, on_injected=advance)


class RoundBasedWorkload(Workload):
    """Bulk-synchronous rounds; an iteration is one pass over the plan.

    Subclasses provide ``_round_plan() -> list[list[(src, dst)]]``. Each ppn
    replica runs its own copy of the plan concurrently; the iteration time
    is taken from replica 0 (the replicas are statistically identical).
    """

    def __init__(self, fabric, job, nodes, spec, ppn=1):
        super().__init__(fabric, job, nodes, spec, ppn)
        self.plan = self._round_plan()
        if not self.plan:
            raise TrafficError("empty communication plan")

    def _round_plan(self) -> list[list[tuple[int, int]]]:
        raise NotImplementedError

    def _begin(self) -> None:
        for rep in range(self.ppn):
            self._start_iteration(rep)

    def _start_iteration(self, rep: int) -> None:
        if self._should_stop():
            return
        state = {"round": 0, "left": 0, "t0": self.fabric.eq.now}
        self._start_round(rep, state)

    def _start_round(self, rep: int, state: dict) -> None:
        msgs = self.plan[state["round"]]
        state["left"] = len(msgs)

        def one_done():
            state["left"] -= 1
            if state["left"]:
                return
            state["round"] += 1
            if state["round"] < len(self.plan):
                self._start_round(rep, state)
                return
            if rep == 0:
                self.iterations_done += 1
                self.fabric.record_iteration(
                    self.job, self.fabric.eq.now - state["t0"])
            nxt = lambda: self._start_iteration(rep)
            if self.spec.compute_ns:
                self.fabric.schedule(self.fabric.eq.now + self.spec.compute_ns,
                                     nxt)
            else:
                nxt()

        for src, dst in msgs:
            self.post(src, dst, on_delivered=one_done)


class AlltoallWorkload(RoundBasedWorkload):
    """Ring-shifted pairwise exchange: round r sends i -> (i + r) mod P."""

    def _round_plan(self):
        p = len(self.nodes)
        if p < 2:
            raise TrafficError("alltoall needs at least two nodes")
        return [[(self.nodes[i], self.nodes[(i + r) % p]) for i in range(p)]
                for r in range(1, p)]


class AllreduceWorkload(RoundBasedWorkload):
    """Recursive doubling with fold-in pre/post rounds for non-powers of two."""

    def _round_plan(self):
        p = len(self.nodes)
        if p < 2:
            raise TrafficError("allreduce needs at least two nodes")
        m = 1 << (p.bit_length() - 1)  # largest power of two <= p
        extras = p - m
        plan = []
        if extras:
            plan.append([(self.nodes[m + j], self.nodes[j])
                         for j in range(extras)])
        bit = 1
        while bit < m:
            plan.append([(self.nodes[i], self.nodes[i ^ bit])
                         for i in range(m)])
            bit <<= 1
        if extras:
            plan.append([(self.nodes[j], self.nodes[m + j])
                         for j in range(extras)])
        return plan


class PingPongWorkload(RoundBasedWorkload):
    """Two nodes bounce one message; an iteration is a round trip."""

    def _round_plan(self):
        if len(self.nodes) < 2:
            raise TrafficError("pingpong needs two nodes")
        a, b = self.nodes[0], self.nodes[1]
        return [[(a, b)], [(b, a)]]


class Halo3dWorkload(RoundBasedWorkload):
    """3d stencil halo exchange on a non-periodic grid."""

    def _round_plan(self):
        gx, gy, gz = self.spec.grid
        if gx * gy * gz != len(self.nodes):
            raise TrafficError(
                f"grid {self.spec.grid} does not match {len(self.nodes)} nodes")

        def rank(x, y, z):
            return self.nodes[(z * gy + y) * gx + x]

        msgs = []
        for z in range(gz):
            for y in range(gy):
                for x in range(gx):
                    me = rank(x, y, z)
                    for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                                       (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                        nx, ny, nz = x + dx, y + dy, z + dz
                        if 0 <= nx < gx and 0 <= ny < gy and 0 <= nz < gz:
                            msgs.append((me, rank(nx, ny, nz)))
        return [msgs]

    def neighbors_of(self, node: int) -> int:
        return sum(1 for round_ in self.plan for s, _ in round_ if s == node)


class BisectionStreamWorkload(Workload):
    """Halves exchange continuously: node i of one half pairs with node i
    of the other, both directions saturated."""

    def __init__(self, fabric, job, nodes, spec, ppn=1):
        super().__init__(fabric, job, nodes, spec, ppn)
        if len(nodes) % 2 or len(nodes) < 2:
            raise TrafficError("bisection stream needs an even node count")
        h = len(nodes) // 2
        self.pairs = list(zip(self.nodes[:h], self.nodes[h:]))

    def _begin(self) -> None:
        for rep in range(self.ppn):
            for a, b in self.pairs:
                self._post_next(a, b)
                self._post_next(b, a)

    def _post_next(self, src: int, dst: int) -> None:
        if self._should_stop():
            return
        self.post(src, dst, on_injected=lambda: self._post_next(src, dst))


WORKLOAD_CLASSES = {
    "incast": IncastWorkload,
    "bursty_incast": BurstyIncastWorkload,
    "alltoall": AlltoallWorkload,
    "allreduce": AllreduceWorkload,
    "pingpong": PingPongWorkload,
    "halo3d": Halo3dWorkload,
    "bisection_stream": BisectionStreamWorkload,
}


def make_workload(fabric, job: str, nodes: list[int], spec: WorkloadSpec,
                  ppn: int = 1) -> Workload:
    try:
        cls = WORKLOAD_CLASSES[spec.kind]
    except KeyError:
        raise TrafficError(f"unknown workload kind {spec.kind!r}") from None
    return cls(fabric, job, nodes, spec, ppn)
