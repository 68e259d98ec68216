"""Traffic classes: DSCP classification and bandwidth share enforcement.

Each class carries a priority, a minimum and maximum fraction of link
bandwidth, ordering and lossiness flags. Backlogged classes are granted
their minimum share; leftover bandwidth always goes to the backlogged class
with the lowest current share, capped at its maximum. A per-port credit
scheduler (surplus round robin) realizes the shares at packet granularity:
sending a frame charges the sender's credit and refills every backlogged
class in proportion to its share, so long-run byte ratios converge to the
allocation regardless of frame sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class QosError(ValueError):
    pass


class OverSubscribedMin(QosError):
    pass


class OverlappingDscp(QosError):
    pass


class MinExceedsMax(QosError):
    pass


@dataclass(frozen=True)
class TrafficClassSpec:
    id: int
    dscp_values: frozenset[int] = frozenset()
    priority: int = 0  # larger wins
    min_bw: float = 0.0
    max_bw: float = 1.0
    ordered: bool = False
    lossless: bool = True
    routing_bias_override: int | None = None


@dataclass(frozen=True)
class QosConfig:
    classes: tuple[TrafficClassSpec, ...]
    default_class: int = 0

    def spec(self, class_id: int) -> TrafficClassSpec:
        for c in self.classes:
            if c.id == class_id:
                return c
        raise QosError(f"unknown traffic class {class_id}")

    @property
    def class_ids(self) -> list[int]:
        return [c.id for c in self.classes]


def default_qos_config() -> QosConfig:
    """Single lossless best-effort class covering all traffic."""
    return QosConfig((TrafficClassSpec(id=0, min_bw=1.0, max_bw=1.0),), 0)


def validate(cfg: QosConfig) -> None:
    if not cfg.classes:
        raise QosError("no traffic classes configured")
    ids = [c.id for c in cfg.classes]
    if len(set(ids)) != len(ids):
        raise QosError("duplicate traffic class ids")
    if cfg.default_class not in ids:
        raise QosError(f"default class {cfg.default_class} not configured")
    seen: set[int] = set()
    total_min = 0.0
    for c in cfg.classes:
        if not (0.0 <= c.min_bw and c.max_bw <= 1.0):
            raise QosError(f"class {c.id}: bandwidth fractions out of range")
        if c.min_bw > c.max_bw:
            raise MinExceedsMax(
                f"class {c.id}: min {c.min_bw} exceeds max {c.max_bw}")
        overlap = seen & c.dscp_values
        if overlap:
            raise OverlappingDscp(
                f"class {c.id}: dscp values {sorted(overlap)} already mapped")
        if any(not (0 <= d <= 63) for d in c.dscp_values):
            raise QosError(f"class {c.id}: dscp value out of 0..63")
        seen |= c.dscp_values
        total_min += c.min_bw
    if total_min > 1.0 + 1e-9:
        raise OverSubscribedMin(
            f"minimum bandwidth guarantees sum to {total_min:.3f} > 1")


def classify(cfg: QosConfig, dscp: int) -> int:
    """Per-packet DSCP lookup; unmapped values land in the default class."""
    if not (0 <= dscp <= 63):
        raise QosError(f"dscp {dscp} out of range")
    for c in cfg.classes:
        if dscp in c.dscp_values:
            return c.id
    return cfg.default_class


def allocate_shares(cfg: QosConfig, backlogged) -> dict[int, float]:
    """Bandwidth fraction per class given the set of backlogged classes.

    Backlogged classes start at their guaranteed minimum; the unclaimed
    remainder (including idle classes' minimums) is handed to the
    backlogged class with the lowest current share, up to its maximum,
    repeating until nothing is left. Idle classes get zero.
    """
    active = sorted(set(backlogged))
    shares = {c.id: 0.0 for c in cfg.classes}
    if not active:
        return shares
    specs = {c.id: c for c in cfg.classes}
    for cid in active:
        shares[cid] = min(specs[cid].min_bw, specs[cid].max_bw)
    surplus = 1.0 - sum(shares[cid] for cid in active)
    while surplus > 1e-12:
        open_ids = [cid for cid in active
                    if shares[cid] < specs[cid].max_bw - 1e-12]
        if not open_ids:
            break
        cid = min(open_ids, key=lambda i: (shares[i], i))
        give = min(specs[cid].max_bw - shares[cid], surplus)
        shares[cid] += give
        surplus -= give
    return shares


class ClassScheduler:
    """Per-link credit state realizing the allocated shares.

    Credits are in bytes. ``pick`` prefers the highest-priority class with
    positive credit; with no positive credit it falls back to the largest
    credit, which keeps the link work-conserving.
    """

    def __init__(self, cfg: QosConfig):
        self.cfg = cfg
        self.priority = {c.id: c.priority for c in cfg.classes}
        self.credit = {c.id: 0.0 for c in cfg.classes}
        self._was_backlogged: set[int] = set()
        self._share_cache: dict[tuple[int, ...], dict[int, float]] = {}

    def shares_for(self, backlogged: tuple[int, ...]) -> dict[int, float]:
        cached = self._share_cache.get(backlogged)
        if cached is None:
            cached = allocate_shares(self.cfg, backlogged)
            self._share_cache[backlogged] = cached
        return cached

    def pick(self, backlogged: tuple[int, ...]) -> int:
        """Select the next class to serve among backlogged class ids."""
        for cid in backlogged:
            if cid not in self._was_backlogged:
                self.credit[cid] = 0.0  # returning from idle: clean slate
        self._was_backlogged = set(backlogged)
        eligible = [cid for cid in backlogged if self.credit[cid] > 0.0]
        if eligible:
            return max(eligible, key=lambda i: (self.priority[i], -i))
        return max(backlogged,
                   key=lambda i: (self.credit[i], self.priority[i], -i))

    def charge(self, cid: int, wire_bytes: int,
               backlogged: tuple[int, ...]) -> None:
        shares = self.shares_for(backlogged)
        for k in backlogged:
            self.credit[k] += shares[k] * wire_bytes
        self.credit[cid] -= wire_bytes


def schedule_next(queues: dict[int, list], sched: ClassScheduler):
    """Pop the next packet to send from per-class queues, or None when idle.

    ``queues`` maps class id to a FIFO of objects with ``frame_bytes``.
    Used directly by tests and by the standalone link model; the switch
    output ports drive ``pick``/``charge`` themselves.
    """
    backlogged = tuple(sorted(cid for cid, q in queues.items() if q))
    if not backlogged:
        return None
    cid = sched.pick(backlogged)
    pkt = queues[cid].pop(0)
    sched.charge(cid, pkt.frame_bytes, backlogged)
    return pkt


def partition_buffer(cfg: QosConfig, total_bytes: int) -> tuple[dict[int, int], int]:
    """Split an input buffer into per-class reservations plus a shared pool.

    Reservations follow the minimum-bandwidth shares; whatever is left is
    dynamically allocated across classes on demand.
    """
    reserved = {c.id: int(total_bytes * c.min_bw) for c in cfg.classes}
    pool = total_bytes - sum(reserved.values())
    return reserved, pool
