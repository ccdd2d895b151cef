"""Deterministic tick-based simulation loop.

Each step executes a fixed phase order — timeline commands, per-set
reconciliation, scheduling, pod lifecycle progress, usage/fronthaul
metering, autoscaling, metrics emission — then sweeps the global
invariants and halts with a named diagnostic if any is broken. A pod makes
at most one phase transition per tick, which is what gives startup
interleavings enough granularity to be worth testing; the interleaving
tests permute the in-tick lifecycle order under the run's seed.

(scenario, seed) fully determines the event log and the metrics series.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from ipaddress import IPv4Address

from . import autoscaler as asc
from . import ranmodel
from .cluster import Cluster, IpPoolExhausted, ResourceUsage
from .orchestrator import (
    InvariantViolation,
    NO_FEASIBLE_NODE,
    PodInstance,
    PodKind,
    PodPhase,
    StatefulSetSpec,
    live_ordinals,
    pair_name,
    reconcile,
    remaining_demand,
    schedule,
    start_bbu,
    start_rrh,
    terminate_pod,
)
from .ranmodel import FronthaulPair, MetricsSample, UeMode, aggregate_fh, format_mbps
from .registry import Registry
from .scenario import ScenarioConfig

log = logging.getLogger("cransim.kernel")

# The core endpoint is a VM on the master's host network, outside every pod
# CIDR; it is registered for discovery once and never orchestrated.
EPC_NAME = "epc"
EPC_IP = IPv4Address("192.168.100.1")


class SimEventKind(Enum):
    SCALE_CMD = "SCALE_CMD"
    PHASE_TRANSITION = "PHASE_TRANSITION"
    REGISTRY_MUTATION = "REGISTRY_MUTATION"
    AUTOSCALE_DECISION = "AUTOSCALE_DECISION"
    METRICS_SAMPLE = "METRICS_SAMPLE"


@dataclass(frozen=True)
class SimEvent:
    time: float
    seq: int
    kind: SimEventKind
    payload: dict

    def render(self) -> str:
        fields = " ".join(f"{k}={v}" for k, v in self.payload.items())
        return f"{self.time:.3f} {self.seq:06d} {self.kind.value} {fields}".rstrip()


@dataclass
class SimClock:
    tick: float = 1.0
    seed: int = 0
    step_index: int = 0

    @property
    def now(self) -> float:
        # Multiply rather than accumulate so fractional ticks cannot drift.
        return self.step_index * self.tick

    def advance(self) -> None:
        self.step_index += 1


class Simulation:
    """Owns all mutable state of one run; never shared across threads."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        *,
        tick: float = 1.0,
        shuffle_lifecycle: bool = False,
        discovery_retry_budget: int | None = None,
    ):
        self.scenario = scenario
        self.clock = SimClock(tick=tick, seed=scenario.seed)
        self.rng = random.Random(scenario.seed)
        self.shuffle_lifecycle = shuffle_lifecycle
        self.discovery_retry_budget = discovery_retry_budget

        self.cluster = Cluster(scenario.nodes)
        self.registry = Registry()
        # Copy the set specs: the run mutates replica counts and the same
        # config object must be reusable for a second identical run.
        self.sets: dict[str, StatefulSetSpec] = {
            s.name: replace(s) for s in scenario.sets
        }
        self.pods: dict[str, PodInstance] = {}
        self.pairs: list[FronthaulPair] = []
        self.events: list[SimEvent] = []
        self.samples: list[MetricsSample] = []
        self.halted: str | None = None
        self.last_autoscale_time: float | None = None
        self._seq = 0
        self._timeline_idx = 0
        self._transitioned: set[str] = set()

        self._register_epc()

    # -- plumbing -----------------------------------------------------------

    def _emit(self, kind: SimEventKind, payload: dict) -> None:
        self.events.append(SimEvent(self.clock.now, self._seq, kind, payload))
        self._seq += 1

    def _lifecycle_emit(self, channel: str, **payload) -> None:
        # Adapter handed to the lifecycle functions for their registry writes.
        if channel == "registry":
            self._emit(SimEventKind.REGISTRY_MUTATION, payload)

    def _phase_of(self, pod_name: str) -> PodPhase | None:
        pod = self.pods.get(pod_name)
        return None if pod is None else pod.phase

    def _record_transition(self, pod: PodInstance, old: PodPhase, reason: str) -> None:
        self._transitioned.add(pod.name)
        self._emit(
            SimEventKind.PHASE_TRANSITION,
            {
                "pod": pod.name,
                "from": old.value,
                "to": pod.phase.value,
                "reason": reason,
            },
        )
        ranmodel.on_phase_change(
            pod, old, pod.phase, self.pairs, self._phase_of, self.clock.now
        )
        log.debug("t=%.3f %s %s -> %s", self.clock.now, pod.name, old.value, pod.phase.value)

    def _register_epc(self) -> None:
        epc = PodInstance(
            name=EPC_NAME,
            kind=PodKind.EPC,
            node=self.cluster.master.name,
            ip=EPC_IP,
            phase=PodPhase.RUNNING,
        )
        self.pods[epc.name] = epc
        rev = self.registry.put(epc.ip_key(), str(EPC_IP).encode())
        self._emit(
            SimEventKind.REGISTRY_MUTATION,
            {"op": "PUT", "key": epc.ip_key(), "rev": rev, "value": str(EPC_IP)},
        )
        self._emit(
            SimEventKind.PHASE_TRANSITION,
            {"pod": epc.name, "from": "-", "to": "RUNNING", "reason": "static-endpoint"},
        )

    def _set_of_kind(self, kind: PodKind) -> StatefulSetSpec | None:
        for spec in self.sets.values():
            if spec.kind is kind:
                return spec
        return None

    def _peer_for(self, kind: PodKind, ordinal: int) -> str | None:
        other = self._set_of_kind(PodKind.RRH if kind is PodKind.BBU else PodKind.BBU)
        if other is None:
            return None
        return pair_name(ordinal, other.name)

    def _live_pods(self, set_name: str) -> list[PodInstance]:
        return [p for p in self.pods.values() if p.set_name == set_name and p.live]

    # -- step phases ---------------------------------------------------------

    def _apply_timeline(self) -> None:
        timeline = self.scenario.timeline
        while self._timeline_idx < len(timeline):
            cmd = timeline[self._timeline_idx]
            if cmd.time > self.clock.now:
                break
            self.sets[cmd.set_name].replicas = cmd.replicas
            self._emit(
                SimEventKind.SCALE_CMD,
                {"set": cmd.set_name, "replicas": cmd.replicas, "source": "timeline"},
            )
            self._timeline_idx += 1

    def _run_reconcilers(self) -> None:
        for spec in self.sets.values():
            actions = reconcile(spec, self._live_pods(spec.name))
            for action in actions:
                if action.verb == "CREATE":
                    pod = PodInstance(
                        name=action.pod_name,
                        kind=spec.kind,
                        set_name=spec.name,
                        ordinal=action.ordinal,
                        peer=self._peer_for(spec.kind, action.ordinal),
                    )
                    self.pods[pod.name] = pod
                    if spec.kind is PodKind.BBU and pod.peer is not None:
                        self._ensure_pair(pod.name, pod.peer)
                    self._emit(
                        SimEventKind.PHASE_TRANSITION,
                        {"pod": pod.name, "from": "-", "to": "PENDING", "reason": "create"},
                    )
                else:
                    pod = self.pods[action.pod_name]
                    old = pod.transition(PodPhase.TERMINATING)
                    self._record_transition(pod, old, "scale-down")

    def _ensure_pair(self, bbu: str, rrh: str) -> None:
        for pair in self.pairs:
            if pair.bbu == bbu and pair.rrh == rrh:
                return
        self.pairs.append(FronthaulPair(bbu, rrh, self.scenario.fh_rate_kbps))

    def _run_scheduler(self) -> None:
        for pod in list(self.pods.values()):
            if pod.phase is not PodPhase.PENDING or pod.name in self._transitioned:
                continue
            demands = remaining_demand(self.sets, self.pods.values(), exclude_pod=pod.name)
            node = schedule(pod, self.cluster, self.sets, self.pods.values(), demands)
            if node is None:
                pod.pending_reason = NO_FEASIBLE_NODE
                log.debug("t=%.3f %s stays PENDING: %s", self.clock.now, pod.name, NO_FEASIBLE_NODE)
                continue
            self.cluster.commit(self.sets[pod.set_name].requests, node.name)
            pod.node = node.name
            pod.pending_reason = None
            old = pod.transition(PodPhase.SCHEDULED)
            self._record_transition(pod, old, f"node={node.name}")

    def _advance_pod(self, pod: PodInstance) -> None:
        if pod.phase is PodPhase.SCHEDULED:
            try:
                pod.ip = self.cluster.allocate_ip(pod.node)
            except IpPoolExhausted:
                # Stay SCHEDULED and retry once an address frees up.
                log.warning("t=%.3f %s: pod CIDR of %s exhausted", self.clock.now, pod.name, pod.node)
                return
            old = pod.transition(PodPhase.STARTING)
            self._record_transition(pod, old, f"ip={pod.ip}")
        elif pod.phase is PodPhase.STARTING:
            target = PodPhase.REGISTERING if pod.kind is PodKind.RRH else PodPhase.DISCOVERING
            old = pod.transition(target)
            self._record_transition(pod, old, "boot")
        elif pod.phase is PodPhase.REGISTERING:
            old = pod.phase
            if start_rrh(
                pod,
                self.registry,
                oaisim=self.scenario.ue_mode is UeMode.OAISIM,
                emit=self._lifecycle_emit,
            ):
                self._record_transition(pod, old, "registered")
        elif pod.phase is PodPhase.DISCOVERING:
            old = pod.phase
            had_failed = pod.failed_discovery
            if start_bbu(
                pod,
                self.registry,
                emit=self._lifecycle_emit,
                retry_budget=self.discovery_retry_budget,
            ):
                self._record_transition(pod, old, f"peer={pod.peer}")
            elif pod.failed_discovery and not had_failed:
                log.warning(
                    "t=%.3f %s: discovery retry budget exhausted, still DISCOVERING",
                    self.clock.now,
                    pod.name,
                )
        elif pod.phase is PodPhase.TERMINATING:
            old = pod.phase
            if terminate_pod(
                pod,
                self.registry,
                self.cluster,
                self.sets[pod.set_name].requests,
                emit=self._lifecycle_emit,
            ):
                self._record_transition(pod, old, "cleanup")

    def _run_lifecycle(self) -> None:
        order = [p for p in self.pods.values() if p.set_name is not None]
        if self.shuffle_lifecycle:
            self.rng.shuffle(order)
        for pod in order:
            if pod.name in self._transitioned:
                continue
            self._advance_pod(pod)

    def _build_sample(self) -> MetricsSample:
        rng = self.rng if self.scenario.profile.jitter else None
        per_node = {
            node.name: ranmodel.node_usage(
                node.name, self.pods.values(), self.scenario.ue_mode,
                self.scenario.profile, rng,
            )
            for node in self.cluster.nodes
        }
        return MetricsSample(
            time_s=self.clock.now,
            per_node=per_node,
            fh_kbps=aggregate_fh(self.pairs),
            pairs_active=sum(1 for p in self.pairs if p.active),
        )

    def _run_autoscaler(self, sample: MetricsSample) -> None:
        policy = self.scenario.policy
        bbu_set = self._set_of_kind(PodKind.BBU)
        rrh_set = self._set_of_kind(PodKind.RRH)
        if not policy.enabled or bbu_set is None or rrh_set is None:
            return
        decision = asc.evaluate(
            policy,
            [sample],
            self.cluster.nodes,
            bbu_set.replicas,
            self.last_autoscale_time,
            self.clock.now,
        )
        if decision is asc.Decision.HOLD:
            return
        fraction = asc.hottest_fraction(sample, self.cluster.nodes, policy.metric)
        new_bbu, new_rrh = asc.apply_decision(decision, policy, bbu_set, rrh_set)
        self.last_autoscale_time = self.clock.now
        self._emit(
            SimEventKind.AUTOSCALE_DECISION,
            {
                "decision": decision.value,
                "metric": policy.metric.value,
                "fraction": f"{fraction:.3f}",
                "bbu": new_bbu,
                "rrh": new_rrh,
            },
        )
        log.info(
            "t=%.3f autoscale %s -> bbu=%d rrh=%d", self.clock.now, decision.value, new_bbu, new_rrh
        )

    # -- invariant sweep -----------------------------------------------------

    def _sweep_invariants(self, sample: MetricsSample) -> None:
        for spec in self.sets.values():
            live_ordinals(self._live_pods(spec.name))

        seen_ips: dict[IPv4Address, str] = {}
        for pod in self.pods.values():
            if pod.kind is PodKind.EPC or pod.ip is None:
                continue
            if pod.ip in seen_ips:
                raise InvariantViolation(
                    "ip-uniqueness", f"{seen_ips[pod.ip]} and {pod.name} share {pod.ip}"
                )
            seen_ips[pod.ip] = pod.name
            node = self.cluster.node(pod.node)
            if pod.ip not in node.pod_cidr:
                raise InvariantViolation(
                    "cidr-confinement", f"{pod.name} ip {pod.ip} outside {node.pod_cidr}"
                )

        recomputed: dict[str, ResourceUsage] = {
            n.name: ResourceUsage() for n in self.cluster.nodes
        }
        for pod in self.pods.values():
            if pod.set_name is not None and pod.live and pod.node is not None:
                recomputed[pod.node] = recomputed[pod.node] + self.sets[pod.set_name].requests
        for node in self.cluster.nodes:
            if recomputed[node.name] != self.cluster.committed(node.name):
                raise InvariantViolation(
                    "commitment-bookkeeping",
                    f"{node.name}: tracked {self.cluster.committed(node.name)}"
                    f" != recomputed {recomputed[node.name]}",
                )
            if not self.cluster.committed(node.name).fits_within(node.capacity):
                raise InvariantViolation(
                    "capacity-safety", f"{node.name} committed above capacity"
                )

        for pair in self.pairs:
            both_running = (
                self._phase_of(pair.bbu) is PodPhase.RUNNING
                and self._phase_of(pair.rrh) is PodPhase.RUNNING
            )
            if pair.active != both_running:
                raise InvariantViolation(
                    "pair-consistency",
                    f"{pair.bbu}<->{pair.rrh} active={pair.active} both_running={both_running}",
                )
        if sample.fh_kbps != aggregate_fh(self.pairs):
            raise InvariantViolation("fh-accounting", "sample does not match pair table")

    # -- driving -------------------------------------------------------------

    def step(self) -> MetricsSample:
        """Advance one tick; returns the tick's metrics sample.

        Raises InvariantViolation (after recording the halt) if the sweep
        finds broken state; the event log and samples up to the halt stay
        available on the instance.
        """
        self._transitioned = set()
        try:
            self._apply_timeline()
            self._run_reconcilers()
            self._run_scheduler()
            self._run_lifecycle()
            sample = self._build_sample()
            self._run_autoscaler(sample)
            self.samples.append(sample)
            self._emit(
                SimEventKind.METRICS_SAMPLE,
                {
                    "fh_mbps": format_mbps(sample.fh_kbps),
                    "pairs": sample.pairs_active,
                },
            )
            self._sweep_invariants(sample)
        except InvariantViolation as exc:
            self.halted = str(exc)
            log.error("t=%.3f halted: %s", self.clock.now, exc)
            raise
        for name in [n for n, p in self.pods.items() if p.phase is PodPhase.GONE]:
            del self.pods[name]
        self.clock.advance()
        return sample

    def run(self, duration: float | None = None) -> tuple[list[SimEvent], list[MetricsSample]]:
        """Execute ceil(duration/tick) steps; returns (events, samples)."""
        if duration is None:
            duration = self.scenario.duration
        steps = math.ceil(duration / self.clock.tick)
        for _ in range(steps):
            self.step()
        return self.events, self.samples
