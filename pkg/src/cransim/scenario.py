"""Scenario configuration: JSON-compatible schema, strict validation that
reports every problem at once, and the shipped templates.

A scenario describes the machine cluster, the baseband/radio-head sets,
the UE mode and workload profile, the per-pair fronthaul rate, the
autoscale policy, and a timeline of scale commands. Node pod CIDRs may be
omitted; they are then carved as /24 blocks out of 10.244.0.0/16 with the
master at block 0 and workers following in declaration order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from ipaddress import IPv4Network
from pathlib import Path

from .autoscaler import AutoscalePolicy, ScalingMetric
from .cluster import NodeRole, NodeSpec, ResourceUsage, default_pod_cidr
from .orchestrator import NodeSelector, Placement, PodKind, StatefulSetSpec
from .ranmodel import UeMode, WorkloadProfile, kbps_from_mbps

MAX_SEED = 2**64 - 1

_TOP_FIELDS = {"nodes", "sets", "ue_mode", "profile", "fh_rate", "policy",
               "timeline", "duration", "seed"}
_NODE_FIELDS = {"name", "role", "cpu_capacity", "mem_capacity", "pod_cidr"}
_SET_FIELDS = {"name", "kind", "replicas", "requests", "placement"}
_REQ_FIELDS = {"cpu_millicores", "mem_mib"}
_PLACEMENT_FIELDS = {"node_role", "anti_affinity"}
_PROFILE_FIELDS = {"bbu_cpu", "bbu_mem", "rrh_cpu_real", "rrh_cpu_oaisim_delta",
                   "rrh_mem", "jitter"}
_POLICY_FIELDS = {"metric", "high_watermark", "low_watermark", "min_replicas",
                  "max_replicas", "cooldown", "enabled"}
_TIMELINE_FIELDS = {"time", "set", "replicas"}


class ScenarioError(Exception):
    """Carries every validation problem found, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass(frozen=True)
class TimelineCommand:
    time: float
    set_name: str
    replicas: int


@dataclass
class ScenarioConfig:
    nodes: list[NodeSpec]
    sets: list[StatefulSetSpec] = field(default_factory=list)
    ue_mode: UeMode = UeMode.OAISIM
    profile: WorkloadProfile = field(default_factory=WorkloadProfile)
    fh_rate: float = 614.0  # Mb/s per active pair
    policy: AutoscalePolicy = field(default_factory=AutoscalePolicy)
    timeline: list[TimelineCommand] = field(default_factory=list)
    duration: float = 120.0
    seed: int = 0

    @property
    def fh_rate_kbps(self) -> int:
        return kbps_from_mbps(self.fh_rate)


class _Collector:
    def __init__(self, strict: bool):
        self.strict = strict
        self.errors: list[str] = []

    def error(self, path: str, message: str) -> None:
        self.errors.append(f"{path}: {message}")

    def unknown_fields(self, path: str, data: dict, allowed: set[str]) -> None:
        if not self.strict:
            return
        for key in sorted(set(data) - allowed):
            self.error(f"{path}.{key}" if path else key, "unknown field")

    def expect_dict(self, value, path: str) -> dict | None:
        if isinstance(value, dict):
            return value
        self.error(path, f"expected an object, got {type(value).__name__}")
        return None

    def expect_int(self, value, path: str, default: int = 0) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.error(path, f"expected an integer, got {value!r}")
            return default
        return value

    def expect_number(self, value, path: str, default: float = 0.0) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.error(path, f"expected a number, got {value!r}")
            return default
        return float(value)

    def expect_str(self, value, path: str) -> str:
        if not isinstance(value, str):
            self.error(path, f"expected a string, got {value!r}")
            return ""
        return value

    def expect_bool(self, value, path: str, default: bool = False) -> bool:
        if not isinstance(value, bool):
            self.error(path, f"expected a boolean, got {value!r}")
            return default
        return value

    def expect_enum(self, value, enum_cls, path: str):
        name = self.expect_str(value, path)
        try:
            return enum_cls(name)
        except ValueError:
            choices = ", ".join(m.value for m in enum_cls)
            self.error(path, f"must be one of {choices}, got {name!r}")
            return None


def _bad_name(name: str) -> str | None:
    if not name:
        return "must be non-empty"
    if any(c.isspace() for c in name) or "," in name:
        return "must not contain whitespace or commas"
    if name == "ALL":
        return 'the name "ALL" is reserved for the metrics aggregate row'
    return None


def _parse_usage(data, path: str, col: _Collector) -> ResourceUsage:
    obj = col.expect_dict(data, path)
    if obj is None:
        return ResourceUsage()
    col.unknown_fields(path, obj, _REQ_FIELDS)
    cpu = col.expect_int(obj.get("cpu_millicores", 0), f"{path}.cpu_millicores")
    mem = col.expect_int(obj.get("mem_mib", 0), f"{path}.mem_mib")
    try:
        return ResourceUsage(cpu, mem)
    except ValueError as exc:
        col.error(path, str(exc))
        return ResourceUsage()


def _parse_node(
    data, index: int, col: _Collector
) -> tuple[str, NodeRole, int, int, IPv4Network | None] | None:
    """Validated node fields; the CIDR stays None when it is to be
    auto-assigned (that needs the whole node list, see parse_scenario)."""
    path = f"nodes[{index}]"
    obj = col.expect_dict(data, path)
    if obj is None:
        return None
    col.unknown_fields(path, obj, _NODE_FIELDS)
    name = col.expect_str(obj.get("name", ""), f"{path}.name")
    if (why := _bad_name(name)) is not None:
        col.error(f"{path}.name", why)
    role = col.expect_enum(obj.get("role", "WORKER"), NodeRole, f"{path}.role")
    cpu = col.expect_int(obj.get("cpu_capacity", 0), f"{path}.cpu_capacity")
    mem = col.expect_int(obj.get("mem_capacity", 0), f"{path}.mem_capacity")
    cidr: IPv4Network | None = None
    if "pod_cidr" in obj:
        raw = col.expect_str(obj["pod_cidr"], f"{path}.pod_cidr")
        try:
            cidr = IPv4Network(raw)
        except ValueError as exc:
            col.error(f"{path}.pod_cidr", str(exc))
            return None
    if role is None:
        return None
    return name, role, cpu, mem, cidr


def _parse_set(data, index: int, col: _Collector) -> StatefulSetSpec | None:
    path = f"sets[{index}]"
    obj = col.expect_dict(data, path)
    if obj is None:
        return None
    col.unknown_fields(path, obj, _SET_FIELDS)
    name = col.expect_str(obj.get("name", ""), f"{path}.name")
    if (why := _bad_name(name)) is not None:
        col.error(f"{path}.name", why)
    kind = col.expect_enum(obj.get("kind", ""), PodKind, f"{path}.kind")
    replicas = col.expect_int(obj.get("replicas", 0), f"{path}.replicas")
    requests = _parse_usage(obj.get("requests", {}), f"{path}.requests", col)
    placement = Placement()
    if "placement" in obj:
        pobj = col.expect_dict(obj["placement"], f"{path}.placement")
        if pobj is not None:
            col.unknown_fields(f"{path}.placement", pobj, _PLACEMENT_FIELDS)
            selector = col.expect_enum(
                pobj.get("node_role", "ANY"), NodeSelector, f"{path}.placement.node_role"
            )
            aa = col.expect_bool(
                pobj.get("anti_affinity", False), f"{path}.placement.anti_affinity"
            )
            if selector is not None:
                placement = Placement(selector, aa)
    if kind is None:
        return None
    try:
        return StatefulSetSpec(name, kind, replicas, requests, placement)
    except ValueError as exc:
        col.error(path, str(exc))
        return None


def _parse_profile(data, col: _Collector) -> WorkloadProfile:
    obj = col.expect_dict(data, "profile")
    if obj is None:
        return WorkloadProfile()
    col.unknown_fields("profile", obj, _PROFILE_FIELDS)
    kwargs = {}
    defaults = WorkloadProfile()
    for name in ("bbu_cpu", "bbu_mem", "rrh_cpu_real", "rrh_cpu_oaisim_delta", "rrh_mem"):
        kwargs[name] = col.expect_int(
            obj.get(name, getattr(defaults, name)), f"profile.{name}",
            default=getattr(defaults, name),
        )
    kwargs["jitter"] = col.expect_bool(obj.get("jitter", False), "profile.jitter")
    try:
        return WorkloadProfile(**kwargs)
    except ValueError as exc:
        col.error("profile", str(exc))
        return WorkloadProfile()


def _parse_policy(data, col: _Collector) -> AutoscalePolicy:
    obj = col.expect_dict(data, "policy")
    if obj is None:
        return AutoscalePolicy()
    col.unknown_fields("policy", obj, _POLICY_FIELDS)
    defaults = AutoscalePolicy()
    metric = col.expect_enum(obj.get("metric", "CPU"), ScalingMetric, "policy.metric")
    kwargs = dict(
        metric=metric if metric is not None else ScalingMetric.CPU,
        high_watermark=col.expect_number(
            obj.get("high_watermark", defaults.high_watermark), "policy.high_watermark",
            default=defaults.high_watermark,
        ),
        low_watermark=col.expect_number(
            obj.get("low_watermark", defaults.low_watermark), "policy.low_watermark",
            default=defaults.low_watermark,
        ),
        min_replicas=col.expect_int(
            obj.get("min_replicas", defaults.min_replicas), "policy.min_replicas",
            default=defaults.min_replicas,
        ),
        max_replicas=col.expect_int(
            obj.get("max_replicas", defaults.max_replicas), "policy.max_replicas",
            default=defaults.max_replicas,
        ),
        cooldown=col.expect_number(
            obj.get("cooldown", defaults.cooldown), "policy.cooldown",
            default=defaults.cooldown,
        ),
        enabled=col.expect_bool(obj.get("enabled", False), "policy.enabled"),
    )
    try:
        return AutoscalePolicy(**kwargs)
    except ValueError as exc:
        col.error("policy", str(exc))
        return AutoscalePolicy()


def parse_scenario(data: dict, strict: bool = True) -> ScenarioConfig:
    """Validate a decoded JSON object; raises ScenarioError listing every
    problem found (unknown fields only count in strict mode)."""
    col = _Collector(strict)
    if not isinstance(data, dict):
        raise ScenarioError(["top level: expected an object"])
    col.unknown_fields("", data, _TOP_FIELDS)

    raw_nodes = data.get("nodes")
    if not isinstance(raw_nodes, list):
        col.error("nodes", "required and must be a list")
        raw_nodes = []
    parsed_nodes = []
    for i, raw in enumerate(raw_nodes):
        fields = _parse_node(raw, i, col)
        if fields is not None:
            parsed_nodes.append((i, fields))

    # Auto-assigned CIDRs: the master takes /24 block 0, the remaining nodes
    # take blocks 1.. in declaration order.
    nodes: list[NodeSpec] = []
    worker_block = 1
    master_assigned = False
    for i, (name, role, cpu, mem, cidr) in parsed_nodes:
        if cidr is None:
            if role is NodeRole.MASTER and not master_assigned:
                cidr = default_pod_cidr(0)
            else:
                cidr = default_pod_cidr(worker_block)
                worker_block += 1
        if role is NodeRole.MASTER:
            master_assigned = True
        try:
            nodes.append(NodeSpec(name, role, cpu, mem, cidr))
        except ValueError as exc:
            col.error(f"nodes[{i}]", str(exc))

    if sum(1 for n in nodes if n.role is NodeRole.MASTER) != 1:
        col.error("nodes", "exactly one MASTER required")
    names = [n.name for n in nodes]
    for name in sorted({n for n in names if names.count(n) > 1}):
        col.error("nodes", f"duplicate node name {name!r}")
    for i, a in enumerate(nodes):
        for b in nodes[i + 1 :]:
            if a.pod_cidr.overlaps(b.pod_cidr):
                col.error("nodes", f"pod CIDRs of {a.name} and {b.name} overlap")

    sets: list[StatefulSetSpec] = []
    raw_sets = data.get("sets", [])
    if not isinstance(raw_sets, list):
        col.error("sets", "must be a list")
        raw_sets = []
    for i, raw in enumerate(raw_sets):
        spec = _parse_set(raw, i, col)
        if spec is not None:
            sets.append(spec)
    set_names = [s.name for s in sets]
    for name in sorted({n for n in set_names if set_names.count(n) > 1}):
        col.error("sets", f"duplicate set name {name!r}")
    for kind in (PodKind.BBU, PodKind.RRH):
        if sum(1 for s in sets if s.kind is kind) > 1:
            col.error("sets", f"at most one {kind.value} set is supported (pairing is by ordinal)")
    if any(s.kind is PodKind.BBU for s in sets) and not any(
        s.kind is PodKind.RRH for s in sets
    ):
        col.error("sets", "a BBU set requires an RRH set to pair with")

    ue_mode = col.expect_enum(data.get("ue_mode", "OAISIM"), UeMode, "ue_mode") or UeMode.OAISIM
    profile = _parse_profile(data.get("profile", {}), col)
    policy = _parse_policy(data.get("policy", {}), col)

    fh_rate = col.expect_number(data.get("fh_rate", 614.0), "fh_rate", default=614.0)
    if fh_rate <= 0:
        col.error("fh_rate", "must be > 0")

    duration = col.expect_number(data.get("duration", 120.0), "duration", default=120.0)
    if duration <= 0:
        col.error("duration", "must be > 0")

    seed = col.expect_int(data.get("seed", 0), "seed")
    if not 0 <= seed <= MAX_SEED:
        col.error("seed", f"must be in [0, {MAX_SEED}]")

    timeline: list[TimelineCommand] = []
    raw_timeline = data.get("timeline", [])
    if not isinstance(raw_timeline, list):
        col.error("timeline", "must be a list")
        raw_timeline = []
    prev_time = None
    for i, raw in enumerate(raw_timeline):
        path = f"timeline[{i}]"
        obj = col.expect_dict(raw, path)
        if obj is None:
            continue
        col.unknown_fields(path, obj, _TIMELINE_FIELDS)
        t = col.expect_number(obj.get("time", 0.0), f"{path}.time")
        set_name = col.expect_str(obj.get("set", ""), f"{path}.set")
        replicas = col.expect_int(obj.get("replicas", 0), f"{path}.replicas")
        if t < 0 or t > duration:
            col.error(f"{path}.time", "must lie within [0, duration]")
        if prev_time is not None and t < prev_time:
            col.error(f"{path}.time", "timeline times must be non-decreasing")
        prev_time = t
        if set_name not in set_names:
            col.error(f"{path}.set", f"unknown set {set_name!r}")
        if replicas < 0:
            col.error(f"{path}.replicas", "must be >= 0")
        timeline.append(TimelineCommand(t, set_name, replicas))

    if col.errors:
        raise ScenarioError(col.errors)
    return ScenarioConfig(
        nodes=nodes,
        sets=sets,
        ue_mode=ue_mode,
        profile=profile,
        fh_rate=fh_rate,
        policy=policy,
        timeline=timeline,
        duration=duration,
        seed=seed,
    )


def load_scenario(path: str | Path, strict: bool = True) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([f"{path}: {exc.strerror or exc}"]) from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: invalid JSON: {exc}"]) from exc
    return parse_scenario(data, strict=strict)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "nodes": [
            {
                "name": n.name,
                "role": n.role.value,
                "cpu_capacity": n.cpu_capacity,
                "mem_capacity": n.mem_capacity,
                "pod_cidr": str(n.pod_cidr),
            }
            for n in cfg.nodes
        ],
        "sets": [
            {
                "name": s.name,
                "kind": s.kind.value,
                "replicas": s.replicas,
                "requests": {
                    "cpu_millicores": s.requests.cpu_millicores,
                    "mem_mib": s.requests.mem_mib,
                },
                "placement": {
                    "node_role": s.placement.node_role.value,
                    "anti_affinity": s.placement.anti_affinity,
                },
            }
            for s in cfg.sets
        ],
        "ue_mode": cfg.ue_mode.value,
        "profile": {
            "bbu_cpu": cfg.profile.bbu_cpu,
            "bbu_mem": cfg.profile.bbu_mem,
            "rrh_cpu_real": cfg.profile.rrh_cpu_real,
            "rrh_cpu_oaisim_delta": cfg.profile.rrh_cpu_oaisim_delta,
            "rrh_mem": cfg.profile.rrh_mem,
            "jitter": cfg.profile.jitter,
        },
        "fh_rate": cfg.fh_rate,
        "policy": {
            "metric": cfg.policy.metric.value,
            "high_watermark": cfg.policy.high_watermark,
            "low_watermark": cfg.policy.low_watermark,
            "min_replicas": cfg.policy.min_replicas,
            "max_replicas": cfg.policy.max_replicas,
            "cooldown": cfg.policy.cooldown,
            "enabled": cfg.policy.enabled,
        },
        "timeline": [
            {"time": c.time, "set": c.set_name, "replicas": c.replicas}
            for c in cfg.timeline
        ],
        "duration": cfg.duration,
        "seed": cfg.seed,
    }


def save_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(scenario_to_dict(cfg), indent=2) + "\n", encoding="utf-8"
    )


# -- shipped templates -------------------------------------------------------


def testbed_scenario() -> ScenarioConfig:
    """Three identical desk machines: one master carrying the baseband pods
    (and the core-network VM), two workers carrying one radio head each.
    The timeline brings the first pair up around t=10s and the second
    around t=60s."""
    nodes = [
        NodeSpec("master", NodeRole.MASTER, 4000, 8192, default_pod_cidr(0)),
        NodeSpec("worker-1", NodeRole.WORKER, 4000, 8192, default_pod_cidr(1)),
        NodeSpec("worker-2", NodeRole.WORKER, 4000, 8192, default_pod_cidr(2)),
    ]
    sets = [
        StatefulSetSpec(
            "rrh", PodKind.RRH, 0, ResourceUsage(1200, 512),
            Placement(NodeSelector.WORKER, anti_affinity=True),
        ),
        StatefulSetSpec(
            "bbu", PodKind.BBU, 0, ResourceUsage(1000, 1024),
            Placement(NodeSelector.MASTER, anti_affinity=False),
        ),
    ]
    timeline = [
        TimelineCommand(7.0, "rrh", 1),
        TimelineCommand(7.0, "bbu", 1),
        TimelineCommand(57.0, "rrh", 2),
        TimelineCommand(57.0, "bbu", 2),
    ]
    return ScenarioConfig(
        nodes=nodes,
        sets=sets,
        ue_mode=UeMode.OAISIM,
        profile=WorkloadProfile(),
        fh_rate=614.0,
        policy=AutoscalePolicy(max_replicas=2, enabled=False),
        timeline=timeline,
        duration=120.0,
        seed=42,
    )


def autoscale_demo_scenario() -> ScenarioConfig:
    """A wider cluster where radio-head CPU keeps the hottest worker above
    the high watermark, so the policy steps the pair count up once per
    cooldown window until it hits the worker-bound maximum."""
    nodes = [NodeSpec("master", NodeRole.MASTER, 16000, 16384, default_pod_cidr(0))]
    nodes += [
        NodeSpec(f"worker-{i}", NodeRole.WORKER, 4000, 8192, default_pod_cidr(i))
        for i in range(1, 5)
    ]
    sets = [
        StatefulSetSpec(
            "rrh", PodKind.RRH, 0, ResourceUsage(1200, 512),
            Placement(NodeSelector.WORKER, anti_affinity=True),
        ),
        StatefulSetSpec(
            "bbu", PodKind.BBU, 0, ResourceUsage(1000, 1024),
            Placement(NodeSelector.MASTER, anti_affinity=False),
        ),
    ]
    return ScenarioConfig(
        nodes=nodes,
        sets=sets,
        ue_mode=UeMode.OAISIM,
        profile=WorkloadProfile(),
        fh_rate=614.0,
        policy=AutoscalePolicy(
            metric=ScalingMetric.CPU,
            high_watermark=0.25,
            low_watermark=0.05,
            min_replicas=1,
            max_replicas=4,
            cooldown=10.0,
            enabled=True,
        ),
        timeline=[TimelineCommand(0.0, "rrh", 1), TimelineCommand(0.0, "bbu", 1)],
        duration=90.0,
        seed=7,
    )


TEMPLATES = {
    "paper-testbed": testbed_scenario,
    "autoscale-demo": autoscale_demo_scenario,
}
