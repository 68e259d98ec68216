"""Per-packet adaptive routing at the injection switch.

For each packet the source switch assembles up to four candidate paths
(minimal plus sampled one-intermediate detours), scores each by the queued
bytes on its first hop plus any advertised depth for its second hop, adds a
length penalty for detours, and picks the cheapest. Ordered traffic classes
bypass adaptivity and stick to one flow-hashed minimal path. Remote depth
information arrives on acknowledgements and only ever overwrites older
entries.
"""

from __future__ import annotations

import random
import zlib
from dataclasses import dataclass, field

from .topology import Path, Topology, minimal_paths, nonminimal_paths

ACK_INFO_BYTES = 4  # reverse-direction overhead per forward packet


@dataclass
class RoutingConfig:
    adaptive: bool = True
    bias_bytes: int = 4158  # per extra hop; one maximum frame by default
    candidates_minimal: int = 2
    candidates_nonminimal: int = 2


@dataclass
class PathCandidate:
    path: Path
    length_class: str  # "minimal" | "nonminimal"
    congestion_score: int
    extra_hops: int = 0


class CongestionTable:
    """Per-switch view of queue depths: local exact, remote ack-borne."""

    def __init__(self, local_depth_fn):
        # local_depth_fn(next_sw) -> exact queued bytes toward that switch
        self.local_depth = local_depth_fn
        self.remote: dict[tuple[int, int], tuple[int, int]] = {}

    def on_ack_info(self, neighbor_sw: int, depths: dict[int, int],
                    stamp: int) -> int:
        """Fold advertised per-port depths in; stale stamps are ignored.

        Returns the reverse-direction byte overhead charged for the update.
        """
        for port, depth in depths.items():
            key = (neighbor_sw, port)
            old = self.remote.get(key)
            if old is None or stamp >= old[0]:
                self.remote[key] = (stamp, depth)
        return ACK_INFO_BYTES

    def remote_depth(self, neighbor_sw: int, ports) -> int:
        best = None
        for port in ports:
            entry = self.remote.get((neighbor_sw, port))
            if entry is not None and (best is None or entry[1] < best):
                best = entry[1]
        return 0 if best is None else best


class RouterState:
    """Routing state owned by one injection switch."""

    def __init__(self, topo: Topology, sw_id: int, cfg: RoutingConfig,
                 tables: CongestionTable, seed):
        self.topo = topo
        self.sw_id = sw_id
        self.cfg = cfg
        self.tables = tables
        self.rng = random.Random(f"{seed}:rt{sw_id}")
        self._minimal_cache: dict[tuple[int, int], list[Path]] = {}

    def minimal_for(self, src_ep: int, dst_ep: int) -> list[Path]:
        dst_sw = self.topo.switch_of_endpoint(dst_ep)
        key = (self.sw_id, dst_sw)
        paths = self._minimal_cache.get(key)
        if paths is None:
            paths = minimal_paths(self.topo, src_ep, dst_ep)
            self._minimal_cache[key] = paths
        return paths


def _first_hop_ports(topo: Topology, sw: int, nxt: int) -> list[int]:
    ports = []
    for idx in topo.links_between(sw, nxt):
        rec = topo.links[idx]
        ports.append(rec.port_a if rec.sw_a == sw else rec.port_b)
    return ports


def candidates(state: RouterState, src_ep: int, dst_ep: int) -> list[PathCandidate]:
    """Up to two minimal plus up to two sampled nonminimal candidates."""
    topo, cfg = state.topo, state.cfg
    mins = state.minimal_for(src_ep, dst_ep)
    if mins[0].hops == 0:
        return [PathCandidate(mins[0], "minimal", 0)]
    min_hops = mins[0].hops
    if len(mins) > cfg.candidates_minimal:
        mins = sorted(state.rng.sample(mins, cfg.candidates_minimal),
                      key=lambda p: p.switches)
    out = []
    for p in mins:
        out.append(PathCandidate(p, "minimal", _score_path(state, p), 0))
    if cfg.adaptive:
        for p in nonminimal_paths(topo, src_ep, dst_ep,
                                  cfg.candidates_nonminimal, state.rng):
            out.append(PathCandidate(p, "nonminimal", _score_path(state, p),
                                     p.hops - min_hops))
    return out


def _score_path(state: RouterState, path: Path) -> int:
    """Queued bytes on the first hop plus advertised depth on the second."""
    topo = state.topo
    if path.hops == 0:
        return 0
    score = state.tables.local_depth(path.switches[1])
    if path.hops >= 2:
        ports = _first_hop_ports(topo, path.switches[1], path.switches[2])
        score += state.tables.remote_depth(path.switches[1], ports)
    return score


def score(c: PathCandidate, bias: int) -> int:
    """Congestion estimate plus a length penalty for nonminimal routes."""
    if c.length_class == "nonminimal":
        return c.congestion_score + bias * max(1, c.extra_hops)
    return c.congestion_score


def select(cands: list[PathCandidate], bias: int) -> Path:
    """Cheapest candidate; ties prefer minimal, then lowest switch ids."""
    if not cands:
        raise ValueError("no path candidates")
    best = min(cands, key=lambda c: (score(c, bias),
                                     0 if c.length_class == "minimal" else 1,
                                     c.path.switches))
    return best.path


def flow_hash_minimal(state: RouterState, src_ep: int, dst_ep: int,
                      tclass: int) -> Path:
    """Deterministic single minimal path for ordered classes."""
    mins = state.minimal_for(src_ep, dst_ep)
    h = zlib.crc32(f"{src_ep}:{dst_ep}:{tclass}".encode())
    return mins[h % len(mins)]


def choose_path(state: RouterState, src_ep: int, dst_ep: int,
                tclass: int, ordered: bool, bias: int | None = None) -> Path:
    """Full per-packet routing decision at the injection switch."""
    if ordered or not state.cfg.adaptive:
        return flow_hash_minimal(state, src_ep, dst_ep, tclass)
    b = state.cfg.bias_bytes if bias is None else bias
    return select(candidates(state, src_ep, dst_ep), b)
