"""Scenario configuration: one YAML file describes a whole experiment.

Sections: topology, switch, routing, cc, qos, workload, harness, sweep.
All randomness in a run flows from the single top-level seed. The
SIM_TCLASS environment variable, when set, overrides the victim job's
traffic class. See the README for a fully annotated example.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import yaml

from .congestion import CcConfig
from .engine import FrameMode
from .qos import QosConfig, TrafficClassSpec, default_qos_config
from .qos import validate as qos_validate
from .routing import RoutingConfig
from .switch import SwitchConfig
from .topology import DragonflyParams
from .traffic import ALLOCATION_STRATEGIES, WorkloadSpec


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    seed: int = 1
    frame_mode: FrameMode = FrameMode.ENHANCED
    topo_params: DragonflyParams = field(
        default_factory=lambda: DragonflyParams(2, 2, 2, 1, 1))
    switch_cfg: SwitchConfig = field(default_factory=SwitchConfig)
    routing_cfg: RoutingConfig = field(default_factory=RoutingConfig)
    cc_cfg: CcConfig = field(default_factory=CcConfig)
    qos_cfg: QosConfig = field(default_factory=default_qos_config)
    victim: WorkloadSpec | None = None
    aggressor: WorkloadSpec | None = None
    split: tuple[int, int] = (0, 0)
    allocation: str = "linear"
    ppn: int = 1
    window_ns: int = 10_000
    record_latency_jobs: tuple[str, ...] = ()
    # explicit node pinning overrides split/allocation when present
    victim_nodes: tuple[int, ...] | None = None
    aggressor_nodes: tuple[int, ...] | None = None


def _take(d: dict, key: str, default=None):
    return d[key] if key in d else default


def _workload_from(d: dict, label: str) -> WorkloadSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"{label}: needs at least a 'kind'")
    known = {"kind", "msg_bytes", "iterations", "burst_size", "burst_gap_ns",
             "grid", "dscp", "start_ns", "duration_ns", "compute_ns",
             "target_rotation"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{label}: unknown keys {sorted(unknown)}")
    grid = d.get("grid")
    spec = WorkloadSpec(
        kind=d["kind"],
        msg_bytes=int(d.get("msg_bytes", 4096)),
        iterations=int(d.get("iterations", 0)),
        burst_size=d.get("burst_size"),
        burst_gap_ns=d.get("burst_gap_ns"),
        grid=tuple(grid) if grid else None,
        dscp=int(d.get("dscp", 0)),
        start_ns=int(d.get("start_ns", 0)),
        duration_ns=d.get("duration_ns"),
        compute_ns=int(d.get("compute_ns", 0)),
        target_rotation=bool(d.get("target_rotation", False)),
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(f"{label}: {exc}") from exc
    return spec


def _qos_from(d: dict) -> QosConfig:
    classes = []
    for c in d.get("classes", []):
        classes.append(TrafficClassSpec(
            id=int(c["id"]),
            dscp_values=frozenset(int(x) for x in c.get("dscp", [])),
            priority=int(c.get("priority", 0)),
            min_bw=float(c.get("min_bw", 0.0)),
            max_bw=float(c.get("max_bw", 1.0)),
            ordered=bool(c.get("ordered", False)),
            lossless=bool(c.get("lossless", True)),
            routing_bias_override=c.get("routing_bias_override"),
        ))
    if not classes:
        return default_qos_config()
    return QosConfig(tuple(classes), int(d.get("default_class", classes[0].id)))


def scenario_from_dict(raw: dict) -> Scenario:
    """Validate a parsed config and build the scenario. No simulation state
    is constructed here; validation failures never start a run."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    t = raw.get("topology")
    if not isinstance(t, dict):
        raise ConfigError("missing 'topology' section")
    try:
        topo_params = DragonflyParams(
            num_groups=int(t["groups"]),
            switches_per_group=int(t["switches_per_group"]),
            endpoints_per_switch=int(t.get("endpoints_per_switch", 16)),
            intra_links_per_pair=int(t.get("intra_links_per_pair", 1)),
            global_links_per_group_pair=int(
                t.get("global_links_per_group_pair", 1)),
            link_bandwidth_gbps=float(t.get("link_bandwidth_gbps", 200)),
            global_bandwidth_taper=float(t.get("global_bandwidth_taper", 1.0)),
            propagation_copper_ns=int(t.get("propagation_copper_ns", 10)),
            propagation_optical_ns=int(t.get("propagation_optical_ns", 250)),
        )
        topo_params.validate()
    except KeyError as exc:
        raise ConfigError(f"topology: missing {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from exc

    mode_name = str(raw.get("frame_mode", "enhanced")).lower()
    try:
        frame_mode = FrameMode(mode_name)
    except ValueError:
        raise ConfigError(f"frame_mode must be roce|enhanced, got {mode_name}")

    s = raw.get("switch", {})
    switch_cfg = SwitchConfig(
        traversal_min_ns=int(s.get("traversal_min_ns", 300)),
        traversal_max_ns=int(s.get("traversal_max_ns", 400)),
        request_latency_ns=int(s.get("request_latency_ns", 50)),
        grant_latency_ns=int(s.get("grant_latency_ns", 50)),
        input_buffer_bytes=int(s.get("input_buffer_bytes", 256 * 1024)),
        pause_headroom_frames=int(s.get("pause_headroom_frames", 2)),
        resume_headroom_frames=int(s.get("resume_headroom_frames", 6)),
        trace=bool(s.get("trace", False)),
    )
    if switch_cfg.traversal_min_ns > switch_cfg.traversal_max_ns:
        raise ConfigError("switch: traversal_min_ns exceeds traversal_max_ns")

    r = raw.get("routing", {})
    cands = r.get("candidates", {})
    routing_cfg = RoutingConfig(
        adaptive=bool(r.get("adaptive", True)),
        bias_bytes=int(r.get("bias", 0)),  # 0 means one max frame per hop
        candidates_minimal=int(cands.get("minimal", 2)),
        candidates_nonminimal=int(cands.get("nonminimal", 2)),
    )

    c = raw.get("cc", {})
    cc_cfg = CcConfig(
        enabled=bool(c.get("enabled", True)),
        threshold_bdp_multiple=float(c.get("threshold_bdp_multiple", 2.0)),
        base_rtt_ns=int(c.get("base_rtt_ns", 2000)),
        decrease=float(c.get("decrease", 0.5)),
        increase_frames=int(c.get("increase_frames", 1)),
        tick_ns=int(c.get("tick_ns", 2000)),
        default_window_frames=int(c.get("default_window_frames", 16)),
        log_window_changes=bool(c.get("log_window_changes", False)),
    )
    if not (0.0 < cc_cfg.decrease < 1.0):
        raise ConfigError("cc: decrease must be in (0, 1)")

    qos_cfg = _qos_from(raw.get("qos", {}))
    try:
        qos_validate(qos_cfg)
    except ValueError as exc:
        raise ConfigError(f"qos: {exc}") from exc

    w = raw.get("workload", {})
    victim = _workload_from(w["victim"], "victim") if w.get("victim") else None
    aggressor = (_workload_from(w["aggressor"], "aggressor")
                 if w.get("aggressor") else None)
    split = tuple(int(x) for x in w.get("split", (0, 0)))
    if len(split) != 2:
        raise ConfigError("workload: split must be [victim, aggressor]")
    allocation = w.get("allocation", "linear")
    if allocation not in ALLOCATION_STRATEGIES:
        raise ConfigError(f"workload: unknown allocation {allocation!r}")
    ppn = int(w.get("ppn", 1))
    if ppn < 1:
        raise ConfigError("workload: ppn must be >= 1")
    n_eps = (topo_params.num_groups * topo_params.switches_per_group
             * topo_params.endpoints_per_switch)
    if sum(split) > n_eps:
        raise ConfigError(f"workload: split {split} exceeds {n_eps} endpoints")

    h = raw.get("harness", {})
    scenario = Scenario(
        seed=int(raw.get("seed", 1)),
        frame_mode=frame_mode,
        topo_params=topo_params,
        switch_cfg=switch_cfg,
        routing_cfg=routing_cfg,
        cc_cfg=cc_cfg,
        qos_cfg=qos_cfg,
        victim=victim,
        aggressor=aggressor,
        split=split,
        allocation=allocation,
        ppn=ppn,
        window_ns=int(h.get("window_ns", 10_000)),
    )
    tclass_env = os.environ.get("SIM_TCLASS")
    if tclass_env is not None and scenario.victim is not None:
        scenario.victim = _override_victim_class(qos_cfg, scenario.victim,
                                                 int(tclass_env))
    return scenario


def _override_victim_class(qos_cfg: QosConfig, victim: WorkloadSpec,
                           class_id: int) -> WorkloadSpec:
    spec = qos_cfg.spec(class_id)  # raises on unknown id
    if spec.dscp_values:
        return replace(victim, dscp=min(spec.dscp_values))
    if class_id == qos_cfg.default_class:
        mapped = set()
        for c in qos_cfg.classes:
            mapped |= c.dscp_values
        for d in range(64):
            if d not in mapped:
                return replace(victim, dscp=d)
    raise ConfigError(
        f"SIM_TCLASS={class_id}: class has no reachable dscp value")


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if raw is None:
        raise ConfigError("config file is empty")
    return raw


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"),
                       default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def apply_override(raw: dict, dotted_key: str, value) -> dict:
    """Set a nested key like workload.aggressor.burst_size; returns raw."""
    node = raw
    parts = dotted_key.split(".")
    for p in parts[:-1]:
        nxt = node.get(p)
        if not isinstance(nxt, dict):
            nxt = node[p] = {}
        node = nxt
    node[parts[-1]] = value
    return raw
