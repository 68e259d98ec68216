"""Dragonfly topology construction, path enumeration, and bandwidth bounds.

Groups of switches are pairwise fully connected with copper links; groups
are connected to each other by a fixed number of optical links per group
pair, spread round-robin across each group's switches. Every switch hosts a
fixed number of endpoints on its lowest ports. Topologies are immutable
after construction and safe to share between simulation instances.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

SWITCH_RADIX = 64


class TopologyError(ValueError):
    pass


class PortBudgetExceeded(TopologyError):
    pass


class AsymmetricGlobal(TopologyError):
    """Global links cannot be spread across a group within the port budget."""


class OddPartition(TopologyError):
    pass


@dataclass(frozen=True)
class DragonflyParams:
    num_groups: int
    switches_per_group: int
    endpoints_per_switch: int = 16
    intra_links_per_pair: int = 1
    global_links_per_group_pair: int = 1
    link_bandwidth_gbps: float = 200.0
    global_bandwidth_taper: float = 1.0
    propagation_copper_ns: int = 10
    propagation_optical_ns: int = 250
    radix: int = SWITCH_RADIX

    def validate(self) -> None:
        if self.num_groups < 1:
            raise TopologyError("need at least one group")
        if self.switches_per_group < 1:
            raise TopologyError("need at least one switch per group")
        if self.endpoints_per_switch < 1:
            raise TopologyError("need at least one endpoint per switch")
        if self.intra_links_per_pair < 0:
            raise TopologyError("negative intra link count")
        if self.num_groups > 1 and self.global_links_per_group_pair < 1:
            raise TopologyError("groups must be connected")
        if not (0.0 < self.global_bandwidth_taper <= 1.0):
            raise TopologyError("taper must be in (0, 1]")
        s = self.switches_per_group
        intra_ports = (s - 1) * self.intra_links_per_pair
        global_total = (self.num_groups - 1) * self.global_links_per_group_pair
        base = self.endpoints_per_switch + intra_ports
        if base + -(-global_total // s) > self.radix:
            # ceil load per switch does not fit
            if base + global_total // s > self.radix:
                raise PortBudgetExceeded(
                    f"switch needs {base + global_total // s} ports, "
                    f"radix is {self.radix}"
                )
            raise AsymmetricGlobal(
                f"global links per group ({global_total}) cannot be spread "
                f"over {s} switches within the port budget"
            )

    @property
    def global_bandwidth_gbps(self) -> float:
        return self.link_bandwidth_gbps * self.global_bandwidth_taper


@dataclass(frozen=True)
class LinkRec:
    """One physical switch-to-switch cable (both directions)."""

    index: int
    medium: str  # "intra" (copper) | "global" (optical)
    sw_a: int
    port_a: int
    sw_b: int
    port_b: int
    bandwidth_gbps: float
    propagation_ns: int


@dataclass(frozen=True)
class Path:
    """A switch-id sequence from source switch to destination switch.

    ``width`` counts the distinct parallel-link combinations realizing the
    same switch sequence.
    """

    switches: tuple[int, ...]
    kind: str  # "minimal" | "nonminimal"
    width: int = 1

    @property
    def hops(self) -> int:
        return len(self.switches) - 1


class Topology:
    def __init__(self, params: DragonflyParams):
        params.validate()
        self.params = params
        g, s = params.num_groups, params.switches_per_group
        self.num_switches = g * s
        self.num_endpoints = self.num_switches * params.endpoints_per_switch
        self.links: list[LinkRec] = []
        # per switch: port -> ("ep", endpoint) | ("link", link index)
        self.port_map: list[dict[int, tuple[str, int]]] = [
            {} for _ in range(self.num_switches)
        ]
        # per switch: neighbor switch -> [link index, ...]
        self.neighbors: list[dict[int, list[int]]] = [
            {} for _ in range(self.num_switches)
        ]
        self._next_port = [0] * self.num_switches
        self._build()

    # -- identity helpers ------------------------------------------------

    def group_of(self, sw: int) -> int:
        return sw // self.params.switches_per_group

    def switch_in_group(self, group: int, index: int) -> int:
        return group * self.params.switches_per_group + index

    def switch_of_endpoint(self, ep: int) -> int:
        return ep // self.params.endpoints_per_switch

    def endpoints_of_switch(self, sw: int) -> range:
        k = self.params.endpoints_per_switch
        return range(sw * k, (sw + 1) * k)

    def endpoint_port(self, ep: int) -> int:
        # endpoints sit on the lowest ports of their home switch
        return ep % self.params.endpoints_per_switch

    def ports_used(self, sw: int) -> int:
        return len(self.port_map[sw])

    def links_between(self, sw_a: int, sw_b: int) -> list[int]:
        return self.neighbors[sw_a].get(sw_b, [])

    # -- construction ----------------------------------------------------

    def _claim_port(self, sw: int) -> int:
        port = self._next_port[sw]
        if port >= self.params.radix:
            raise PortBudgetExceeded(f"switch {sw} exceeds {self.params.radix} ports")
        self._next_port[sw] = port + 1
        return port

    def _add_link(self, medium: str, sw_a: int, sw_b: int,
                  bandwidth: float, propagation: int) -> None:
        idx = len(self.links)
        port_a = self._claim_port(sw_a)
        port_b = self._claim_port(sw_b)
        rec = LinkRec(idx, medium, sw_a, port_a, sw_b, port_b,
                      bandwidth, propagation)
        self.links.append(rec)
        self.port_map[sw_a][port_a] = ("link", idx)
        self.port_map[sw_b][port_b] = ("link", idx)
        self.neighbors[sw_a].setdefault(sw_b, []).append(idx)
        self.neighbors[sw_b].setdefault(sw_a, []).append(idx)

    def _build(self) -> None:
        p = self.params
        g, s = p.num_groups, p.switches_per_group
        # endpoint ports first (lowest port numbers)
        for sw in range(self.num_switches):
            for ep in self.endpoints_of_switch(sw):
                port = self._claim_port(sw)
                self.port_map[sw][port] = ("ep", ep)
        # intra-group full mesh, ascending group then pair order
        for grp in range(g):
            for i in range(s):
                for j in range(i + 1, s):
                    for _ in range(p.intra_links_per_pair):
                        self._add_link(
                            "intra",
                            self.switch_in_group(grp, i),
                            self.switch_in_group(grp, j),
                            p.link_bandwidth_gbps,
                            p.propagation_copper_ns,
                        )
        # global links: per-group rotating pointer balances switch load
        pointer = [0] * g
        for ga in range(g):
            for gb in range(ga + 1, g):
                for _ in range(p.global_links_per_group_pair):
                    sa = self.switch_in_group(ga, pointer[ga] % s)
                    sb = self.switch_in_group(gb, pointer[gb] % s)
                    pointer[ga] += 1
                    pointer[gb] += 1
                    self._add_link(
                        "global", sa, sb,
                        p.global_bandwidth_gbps,
                        p.propagation_optical_ns,
                    )

    # -- export / import -------------------------------------------------

    def export_text(self) -> str:
        p = self.params
        lines = [
            f"# dragonfly groups={p.num_groups} switches_per_group="
            f"{p.switches_per_group} endpoints_per_switch={p.endpoints_per_switch}",
            f"# intra_links_per_pair={p.intra_links_per_pair} "
            f"global_links_per_group_pair={p.global_links_per_group_pair} "
            f"link_bandwidth_gbps={p.link_bandwidth_gbps:g} "
            f"global_bandwidth_taper={p.global_bandwidth_taper:g}",
        ]
        for rec in self.links:
            lines.append(
                f"{rec.medium} {rec.sw_a}:{rec.port_a} {rec.sw_b}:{rec.port_b} "
                f"{rec.bandwidth_gbps:g}"
            )
        return "\n".join(lines) + "\n"


def import_text(text: str) -> Topology:
    """Rebuild a topology from its adjacency export and verify it matches."""
    header: dict[str, str] = {}
    link_lines = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    header[k] = v
            continue
        link_lines.append(line)
    try:
        params = DragonflyParams(
            num_groups=int(header["groups"]),
            switches_per_group=int(header["switches_per_group"]),
            endpoints_per_switch=int(header["endpoints_per_switch"]),
            intra_links_per_pair=int(header["intra_links_per_pair"]),
            global_links_per_group_pair=int(header["global_links_per_group_pair"]),
            link_bandwidth_gbps=float(header["link_bandwidth_gbps"]),
            global_bandwidth_taper=float(header["global_bandwidth_taper"]),
        )
    except KeyError as exc:
        raise TopologyError(f"missing header field {exc}") from exc
    topo = Topology(params)
    if len(link_lines) != len(topo.links):
        raise TopologyError(
            f"file has {len(link_lines)} links, expected {len(topo.links)}"
        )
    for line, rec in zip(link_lines, topo.links):
        medium, a, b, bw = line.split()
        sw_a, port_a = (int(x) for x in a.split(":"))
        sw_b, port_b = (int(x) for x in b.split(":"))
        if (medium != rec.medium or sw_a != rec.sw_a or port_a != rec.port_a
                or sw_b != rec.sw_b or port_b != rec.port_b
                or abs(float(bw) - rec.bandwidth_gbps) > 1e-9):
            raise TopologyError(f"link mismatch at: {line}")
    return topo


def build_dragonfly(params: DragonflyParams) -> Topology:
    return Topology(params)


def max_system(radix: int, endpoints_per_switch: int,
               addressing_limit: int | None = None) -> dict[str, int]:
    """Largest balanced single-level dragonfly for a given switch radix.

    Uses the balanced construction: twice as many switches per group as
    endpoints per switch, a fully connected group, and every remaining port
    used as a global link, one link per group pair.
    """
    if radix <= endpoints_per_switch:
        raise TopologyError("radix must exceed endpoints per switch")
    a = 2 * endpoints_per_switch
    intra = a - 1
    h = radix - endpoints_per_switch - intra
    if h < 1:
        raise TopologyError("no ports left for global links")
    groups = a * h + 1
    if addressing_limit is not None:
        groups = min(groups, addressing_limit)
    return {"groups": groups, "endpoints": groups * a * endpoints_per_switch}


# -- path enumeration ----------------------------------------------------


def switch_bfs_dist(topo: Topology, src_sw: int) -> list[int]:
    dist = [-1] * topo.num_switches
    dist[src_sw] = 0
    q = deque([src_sw])
    while q:
        u = q.popleft()
        for v in topo.neighbors[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def switch_diameter(topo: Topology) -> int:
    worst = 0
    for sw in range(topo.num_switches):
        worst = max(worst, max(switch_bfs_dist(topo, sw)))
    return worst


def minimal_paths(topo: Topology, src_ep: int, dst_ep: int) -> list[Path]:
    """All shortest switch sequences between two endpoints' home switches.

    A same-switch pair yields the single zero-hop path. ``width`` carries
    the number of parallel-link combinations per sequence.
    """
    if src_ep == dst_ep:
        raise TopologyError("source and destination endpoints are equal")
    src_sw = topo.switch_of_endpoint(src_ep)
    dst_sw = topo.switch_of_endpoint(dst_ep)
    if src_sw == dst_sw:
        return [Path((src_sw,), "minimal")]
    dist = switch_bfs_dist(topo, src_sw)
    target = dist[dst_sw]
    # walk backward from dst along strictly distance-decreasing edges
    seqs: list[tuple[int, ...]] = []
    widths: list[int] = []

    def back(seq: list[int], width: int) -> None:
        head = seq[0]
        if head == src_sw:
            seqs.append(tuple(seq))
            widths.append(width)
            return
        for prev, link_ids in topo.neighbors[head].items():
            if dist[prev] == dist[head] - 1:
                back([prev] + seq, width * len(link_ids))

    back([dst_sw], 1)
    assert all(len(s) - 1 == target for s in seqs)
    out = [Path(s, "minimal", w) for s, w in zip(seqs, widths)]
    out.sort(key=lambda pth: pth.switches)
    return out


def nonminimal_paths(topo: Topology, src_ep: int, dst_ep: int, k: int,
                     rng: random.Random) -> list[Path]:
    """Up to ``k`` one-intermediate detours, sampled with the scenario RNG.

    Intra-group pairs detour through another switch of the group;
    inter-group pairs detour through a switch of an intermediate group that
    is directly wired to the source switch and to the destination group.
    """
    if k <= 0:
        return []
    src_sw = topo.switch_of_endpoint(src_ep)
    dst_sw = topo.switch_of_endpoint(dst_ep)
    if src_sw == dst_sw:
        return []
    min_hops = switch_bfs_dist(topo, src_sw)[dst_sw]
    gs, gd = topo.group_of(src_sw), topo.group_of(dst_sw)
    cands: list[tuple[int, ...]] = []
    if gs == gd:
        for mid in range(topo.params.switches_per_group):
            m = topo.switch_in_group(gs, mid)
            if m not in (src_sw, dst_sw):
                cands.append((src_sw, m, dst_sw))
    else:
        for m in topo.neighbors[src_sw]:
            gm = topo.group_of(m)
            if gm in (gs, gd):
                continue
            for entry in topo.neighbors[m]:
                if topo.group_of(entry) != gd:
                    continue
                if entry == dst_sw:
                    cands.append((src_sw, m, dst_sw))
                else:
                    cands.append((src_sw, m, entry, dst_sw))
    # a detour that happens to tie the shortest hop count is minimal, not
    # nonminimal; small instances hit this regularly
    cands = sorted({seq for seq in cands if len(seq) - 1 > min_hops})
    if len(cands) > k:
        cands = rng.sample(cands, k)
        cands.sort()
    return [Path(seq, "nonminimal") for seq in cands]


# -- bandwidth bounds ----------------------------------------------------


def bisection_bound(topo: Topology, partition) -> float:
    """Peak bisection bandwidth in Gb/s for a balanced group split.

    Counts physical global links crossing the cut, times per-direction
    bandwidth, times two for traffic flowing both ways.
    """
    side_a = set(partition)
    g = topo.params.num_groups
    if g % 2 != 0 or len(side_a) != g // 2:
        raise OddPartition(f"partition {sorted(side_a)} does not halve {g} groups")
    if not side_a <= set(range(g)):
        raise TopologyError("partition contains unknown groups")
    total = 0.0
    for rec in topo.links:
        if rec.medium != "global":
            continue
        ga, gb = topo.group_of(rec.sw_a), topo.group_of(rec.sw_b)
        if (ga in side_a) != (gb in side_a):
            total += rec.bandwidth_gbps * 2
    return total


def all_to_all_bound(topo: Topology) -> float:
    """Peak uniform all-to-all bandwidth in Gb/s.

    With G groups, a fraction (G-1)/G of traffic crosses global links, so
    the directed global capacity divided by that fraction bounds the
    deliverable aggregate.
    """
    g = topo.params.num_groups
    if g < 2:
        raise TopologyError("all-to-all bound needs at least two groups")
    directed = sum(rec.bandwidth_gbps * 2 for rec in topo.links
                   if rec.medium == "global")
    return g / (g - 1) * directed
