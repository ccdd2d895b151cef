"""Stateful-set reconciliation, constraint-aware scheduling, and per-pod
lifecycle state machines implementing register-then-lookup discovery.

Pods of a set are named "<set>-<ordinal>" and the live ordinals always form
the prefix {0..k-1}: scale-up creates one pod per pass, and only after all
lower ordinals are RUNNING; scale-down deletes from the highest ordinal
down. Radio-head pods register their address in the registry before they
are considered running; baseband pods block in DISCOVERING until their
paired radio head's address is present, which is what enforces the
radio-head-first startup order without any cross-set coupling in the
reconciler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from ipaddress import IPv4Address
from typing import Callable, Iterable

from .cluster import Cluster, NodeRole, NodeSpec, ResourceUsage
from .registry import Registry

NO_FEASIBLE_NODE = "no feasible node"


class InvariantViolation(Exception):
    """A structural invariant was broken; carries the invariant's name."""

    def __init__(self, invariant: str, detail: str):
        super().__init__(f"{invariant}: {detail}")
        self.invariant = invariant


class PodKind(Enum):
    BBU = "BBU"
    RRH = "RRH"
    EPC = "EPC"


class PodPhase(Enum):
    PENDING = "PENDING"
    SCHEDULED = "SCHEDULED"
    STARTING = "STARTING"
    REGISTERING = "REGISTERING"  # radio head, pushing its discovery keys
    DISCOVERING = "DISCOVERING"  # baseband, polling for its peer's address
    RUNNING = "RUNNING"
    TERMINATING = "TERMINATING"
    GONE = "GONE"


# Forward startup chain; TERMINATING is reachable from any live phase.
_NEXT: dict[PodPhase, tuple[PodPhase, ...]] = {
    PodPhase.PENDING: (PodPhase.SCHEDULED,),
    PodPhase.SCHEDULED: (PodPhase.STARTING,),
    PodPhase.STARTING: (PodPhase.REGISTERING, PodPhase.DISCOVERING),
    PodPhase.REGISTERING: (PodPhase.RUNNING,),
    PodPhase.DISCOVERING: (PodPhase.RUNNING,),
    PodPhase.RUNNING: (),
    PodPhase.TERMINATING: (PodPhase.GONE,),
    PodPhase.GONE: (),
}

LIVE_PHASES = frozenset(p for p in PodPhase if p is not PodPhase.GONE)


class NodeSelector(Enum):
    MASTER = "MASTER"
    WORKER = "WORKER"
    ANY = "ANY"

    def matches(self, role: NodeRole) -> bool:
        return self is NodeSelector.ANY or self.value == role.value


@dataclass(frozen=True)
class Placement:
    node_role: NodeSelector = NodeSelector.ANY
    anti_affinity: bool = False  # at most one pod of the set per node


@dataclass
class StatefulSetSpec:
    name: str
    kind: PodKind
    replicas: int = 0
    requests: ResourceUsage = field(default_factory=ResourceUsage)
    placement: Placement = field(default_factory=Placement)

    def __post_init__(self) -> None:
        if self.replicas < 0:
            raise ValueError(f"set {self.name}: replicas must be >= 0")
        if self.kind is PodKind.EPC:
            raise ValueError("EPC is not managed by a stateful set")

    def pod_name(self, ordinal: int) -> str:
        return f"{self.name}-{ordinal}"


def ip_key_for(pod_name: str) -> str:
    return f"pods/{pod_name}/ip"


def sim_key_for(pod_name: str) -> str:
    return f"pods/{pod_name}/sim"


@dataclass(frozen=True)
class DiscoveryRecord:
    """The registry keys one pod owns: its address, plus its subscriber
    record when the scenario emulates the UE."""

    pod_name: str
    ip_key: str
    sim_key: str | None

    @classmethod
    def for_pod(cls, pod_name: str, oaisim: bool) -> "DiscoveryRecord":
        return cls(
            pod_name,
            ip_key_for(pod_name),
            sim_key_for(pod_name) if oaisim else None,
        )


@dataclass
class PodInstance:
    name: str
    kind: PodKind
    set_name: str | None = None
    ordinal: int | None = None
    node: str | None = None  # None = unscheduled
    ip: IPv4Address | None = None
    phase: PodPhase = PodPhase.PENDING
    peer: str | None = None  # paired pod in the other set
    peer_ip: IPv4Address | None = None  # discovered address of the peer
    pending_reason: str | None = None
    discovery_attempts: int = 0
    failed_discovery: bool = False

    @property
    def live(self) -> bool:
        return self.phase in LIVE_PHASES

    def transition(self, new_phase: PodPhase) -> PodPhase:
        """Move to `new_phase`, enforcing the legal transition graph: the
        forward startup chain, plus TERMINATING from any live phase."""
        old = self.phase
        legal = new_phase in _NEXT[old] or (
            new_phase is PodPhase.TERMINATING
            and self.live
            and old is not PodPhase.TERMINATING
        )
        if not legal:
            raise InvariantViolation(
                "phase-order", f"{self.name}: {old.value} -> {new_phase.value}"
            )
        self.phase = new_phase
        return old

    def ip_key(self) -> str:
        return ip_key_for(self.name)

    def sim_key(self) -> str:
        return sim_key_for(self.name)


@dataclass(frozen=True)
class Action:
    verb: str  # CREATE | DELETE
    pod_name: str
    ordinal: int


def live_ordinals(live_pods: Iterable[PodInstance]) -> dict[int, PodInstance]:
    """Ordinal -> pod map; raises on the fatal duplicate-ordinal case."""
    by_ordinal: dict[int, PodInstance] = {}
    for pod in live_pods:
        if pod.ordinal is None:
            raise InvariantViolation("ordinal-uniqueness", f"{pod.name} has no ordinal")
        if pod.ordinal in by_ordinal:
            raise InvariantViolation(
                "ordinal-uniqueness",
                f"{by_ordinal[pod.ordinal].name} and {pod.name} share ordinal {pod.ordinal}",
            )
        by_ordinal[pod.ordinal] = pod
    return by_ordinal


def reconcile(spec: StatefulSetSpec, live_pods: list[PodInstance]) -> list[Action]:
    """One reconciliation pass driving live ordinals toward {0..replicas-1}.

    Emits at most one CREATE, and only for the lowest missing ordinal with
    every lower ordinal RUNNING (strict ordered startup). DELETEs are
    batched, highest ordinal first, and skip pods already on their way out.
    """
    by_ordinal = live_ordinals(live_pods)
    actions: list[Action] = []

    for ordinal in sorted(by_ordinal, reverse=True):
        if ordinal >= spec.replicas:
            pod = by_ordinal[ordinal]
            if pod.phase is not PodPhase.TERMINATING:
                actions.append(Action("DELETE", pod.name, ordinal))

    for ordinal in range(spec.replicas):
        if ordinal in by_ordinal:
            continue
        predecessors_running = all(
            o in by_ordinal and by_ordinal[o].phase is PodPhase.RUNNING
            for o in range(ordinal)
        )
        if predecessors_running:
            actions.append(Action("CREATE", spec.pod_name(ordinal), ordinal))
        break  # only the lowest missing ordinal is ever considered

    return actions


def pair_name(bbu_ordinal: int, rrh_set_name: str = "rrh") -> str:
    """Radio-head pod paired with baseband ordinal `bbu_ordinal`: pairing is
    by equal ordinal and is deterministic."""
    return f"{rrh_set_name}-{bbu_ordinal}"


# -- scheduling ------------------------------------------------------------


@dataclass(frozen=True)
class DemandGroup:
    """Pods of one set still waiting for a node (identical to each other)."""

    set_name: str
    count: int
    request: ResourceUsage
    placement: Placement


def _set_occupancy(pods: Iterable[PodInstance]) -> dict[str, set[str]]:
    """node -> set names present, over pods that hold a node assignment."""
    occupancy: dict[str, set[str]] = {}
    for pod in pods:
        if pod.live and pod.node is not None and pod.set_name is not None:
            occupancy.setdefault(pod.node, set()).add(pod.set_name)
    return occupancy


def feasible_nodes(
    request: ResourceUsage,
    placement: Placement,
    set_name: str | None,
    cluster: Cluster,
    pods: Iterable[PodInstance],
    *,
    require_free_ip: bool = True,
) -> list[NodeSpec]:
    occupancy = _set_occupancy(pods)
    out = []
    for node in cluster.nodes:
        if not placement.node_role.matches(node.role):
            continue
        if placement.anti_affinity and set_name in occupancy.get(node.name, set()):
            continue
        if not cluster.admit(request, node.name):
            continue
        if require_free_ip and not cluster.has_free_ip(node.name):
            continue
        out.append(node)
    return out


def completion_feasible(
    cluster: Cluster,
    occupancy: dict[str, set[str]],
    demands: list[DemandGroup],
    extra_committed: dict[str, ResourceUsage] | None = None,
) -> bool:
    """Can every demanded pod still be placed somewhere, exhaustively?

    Pods within a group are interchangeable, so the search branches per
    group over nodes and memoizes visited states; at desk scale this is
    tiny. Free-address availability is ignored here (a /24 per node never
    binds at this scale).
    """
    nodes = cluster.nodes
    base_committed = {
        n.name: cluster.committed(n.name) + (extra_committed or {}).get(n.name, ResourceUsage())
        for n in nodes
    }
    groups = [g for g in demands if g.count > 0]
    if not groups:
        return True

    seen: set[tuple] = set()

    def search(counts: tuple[int, ...], committed: dict[str, ResourceUsage],
               occ: dict[str, frozenset[str]]) -> bool:
        if all(c == 0 for c in counts):
            return True
        state = (counts, tuple(sorted((k, v.cpu_millicores, v.mem_mib) for k, v in committed.items())),
                 tuple(sorted((k, tuple(sorted(v))) for k, v in occ.items())))
        if state in seen:
            return False
        seen.add(state)
        gi = next(i for i, c in enumerate(counts) if c > 0)
        group = groups[gi]
        for node in nodes:
            if not group.placement.node_role.matches(node.role):
                continue
            if group.placement.anti_affinity and group.set_name in occ.get(node.name, frozenset()):
                continue
            if not (committed[node.name] + group.request).fits_within(node.capacity):
                continue
            next_counts = tuple(c - 1 if i == gi else c for i, c in enumerate(counts))
            next_committed = dict(committed)
            next_committed[node.name] = committed[node.name] + group.request
            next_occ = dict(occ)
            next_occ[node.name] = occ.get(node.name, frozenset()) | {group.set_name}
            if search(next_counts, next_committed, next_occ):
                return True
        return False

    frozen_occ = {k: frozenset(v) for k, v in occupancy.items()}
    return search(tuple(g.count for g in groups), base_committed, frozen_occ)


def schedule(
    pod: PodInstance,
    cluster: Cluster,
    sets: dict[str, StatefulSetSpec],
    pods: Iterable[PodInstance],
    remaining_demands: list[DemandGroup] | None = None,
) -> NodeSpec | None:
    """Pick a node for a PENDING pod, or None if nothing feasible.

    The chosen node always satisfies the role selector, anti-affinity and
    admission. When the rest of the declared demand can still be completed,
    candidates that would strand a future pod are filtered out first; if no
    completion exists at all the pod is still placed greedily (the shortfall
    will surface as a later pod staying PENDING). Ties break on lowest
    committed-CPU fraction, then node name.
    """
    if pod.phase is not PodPhase.PENDING:
        raise ValueError(f"{pod.name} is not PENDING")
    if pod.set_name is None:
        raise ValueError(f"{pod.name} does not belong to a set")
    spec = sets[pod.set_name]
    pods = list(pods)
    candidates = feasible_nodes(spec.requests, spec.placement, spec.name, cluster, pods)
    if not candidates:
        return None

    if remaining_demands:
        occupancy = _set_occupancy(pods)
        viable = []
        for node in candidates:
            occ = {k: set(v) for k, v in occupancy.items()}
            occ.setdefault(node.name, set()).add(spec.name)
            if completion_feasible(
                cluster, occ, remaining_demands, {node.name: spec.requests}
            ):
                viable.append(node)
        if viable:
            candidates = viable

    return min(
        candidates,
        key=lambda n: (cluster.committed_cpu_fraction(n.name), n.name),
    )


def remaining_demand(
    sets: dict[str, StatefulSetSpec],
    pods: Iterable[PodInstance],
    exclude_pod: str | None = None,
) -> list[DemandGroup]:
    """Everything that still needs a node: unscheduled live pods plus the
    ordinals the reconcilers have yet to create."""
    pods = list(pods)
    groups: list[DemandGroup] = []
    for spec in sets.values():
        live = [p for p in pods if p.set_name == spec.name and p.live]
        unplaced = sum(
            1 for p in live if p.node is None and p.name != exclude_pod
        )
        uncreated = max(0, spec.replicas - len(live))
        count = unplaced + uncreated
        if count:
            groups.append(DemandGroup(spec.name, count, spec.requests, spec.placement))
    return groups


# -- lifecycle -------------------------------------------------------------

Emit = Callable[..., None]


def _noop_emit(*args, **kwargs) -> None:
    return None


def make_sim_record(pod_name: str, ordinal: int | None) -> bytes:
    """Opaque subscriber record pushed alongside an emulated UE's radio
    head; content is only ever compared byte-for-byte."""
    return f"imsi-20893{(ordinal or 0):010d}".encode()


def start_rrh(
    pod: PodInstance,
    registry: Registry,
    *,
    oaisim: bool,
    emit: Emit = _noop_emit,
) -> bool:
    """Registration step for a radio head in REGISTERING: publish the
    discovery keys, then report running. Returns True when it transitioned."""
    if pod.phase is not PodPhase.REGISTERING:
        raise ValueError(f"{pod.name} is not REGISTERING")
    if pod.ip is None:
        raise InvariantViolation("ip-before-registration", pod.name)
    record = DiscoveryRecord.for_pod(pod.name, oaisim)
    rev = registry.put(record.ip_key, str(pod.ip).encode())
    emit("registry", op="PUT", key=record.ip_key, rev=rev, value=str(pod.ip))
    if record.sim_key is not None:
        sim_blob = make_sim_record(pod.name, pod.ordinal)
        rev = registry.put(record.sim_key, sim_blob)
        emit("registry", op="PUT", key=record.sim_key, rev=rev, value=sim_blob.decode())
    pod.transition(PodPhase.RUNNING)
    return True


def start_bbu(
    pod: PodInstance,
    registry: Registry,
    *,
    emit: Emit = _noop_emit,
    retry_budget: int | None = None,
) -> bool:
    """Discovery step for a baseband pod in DISCOVERING: look up the paired
    radio head's address; publish own address and run once it is present,
    otherwise stay put for the next retry. Returns True when it ran."""
    if pod.phase is not PodPhase.DISCOVERING:
        raise ValueError(f"{pod.name} is not DISCOVERING")
    if pod.peer is None:
        raise InvariantViolation("peer-assignment", f"{pod.name} has no peer")
    peer_ip = registry.get(ip_key_for(pod.peer))
    if peer_ip is None:
        pod.discovery_attempts += 1
        if retry_budget is not None and pod.discovery_attempts >= retry_budget:
            pod.failed_discovery = True
        return False
    if pod.ip is None:
        raise InvariantViolation("ip-before-registration", pod.name)
    pod.peer_ip = IPv4Address(peer_ip.decode())
    rev = registry.put(pod.ip_key(), str(pod.ip).encode())
    emit("registry", op="PUT", key=pod.ip_key(), rev=rev, value=str(pod.ip))
    pod.failed_discovery = False
    pod.transition(PodPhase.RUNNING)
    return True


def terminate_pod(
    pod: PodInstance,
    registry: Registry,
    cluster: Cluster,
    requests: ResourceUsage,
    *,
    emit: Emit = _noop_emit,
) -> bool:
    """Final teardown step for a TERMINATING pod: drop its discovery keys,
    release its address and committed requests, and mark it GONE.
    Safe to call repeatedly; a pod already GONE is left alone."""
    if pod.phase is PodPhase.GONE:
        return False
    if pod.phase is not PodPhase.TERMINATING:
        raise ValueError(f"{pod.name} is not TERMINATING")
    for key in (pod.ip_key(), pod.sim_key()):
        rev = registry.delete(key)
        if rev is not None:
            emit("registry", op="DELETE", key=key, rev=rev, value="")
    if pod.ip is not None and pod.node is not None:
        cluster.release_ip(pod.node, pod.ip)
        pod.ip = None
    if pod.node is not None:
        cluster.uncommit(requests, pod.node)
        pod.node = None
    pod.transition(PodPhase.GONE)
    return True
