"""Watermark autoscaling of the baseband/radio-head pair count.

The policy looks at the hottest node's metric fraction in the latest
sample: above the high watermark it grows the pair count by one, below the
low watermark it shrinks it by one, and anywhere in between it holds. A
cooldown separates consecutive actions, and both sets are always moved by
the same delta so pair counts stay in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .cluster import NodeSpec
from .orchestrator import StatefulSetSpec
from .ranmodel import MetricsSample


class ScalingMetric(Enum):
    CPU = "CPU"
    MEMORY = "MEMORY"


class Decision(Enum):
    SCALE_UP = "SCALE_UP"  # +1 replica on both sets
    SCALE_DOWN = "SCALE_DOWN"  # -1 replica on both sets
    HOLD = "HOLD"


@dataclass(frozen=True)
class AutoscalePolicy:
    metric: ScalingMetric = ScalingMetric.CPU
    high_watermark: float = 0.80
    low_watermark: float = 0.30
    min_replicas: int = 1
    max_replicas: int = 2
    cooldown: float = 30.0  # simulated seconds between actions
    enabled: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.high_watermark <= 1:
            raise ValueError("high_watermark must be in (0, 1]")
        if not 0 <= self.low_watermark < self.high_watermark:
            raise ValueError("low_watermark must be in [0, high_watermark)")
        if self.min_replicas < 0:
            raise ValueError("min_replicas must be >= 0")
        if self.max_replicas < self.min_replicas:
            raise ValueError("max_replicas must be >= min_replicas")
        if self.cooldown < 0:
            raise ValueError("cooldown must be >= 0")


def hottest_fraction(
    sample: MetricsSample, nodes: list[NodeSpec], metric: ScalingMetric
) -> float:
    """Max over nodes of used/capacity for the chosen metric."""
    worst = 0.0
    for node in nodes:
        used = sample.per_node.get(node.name)
        if used is None:
            continue
        if metric is ScalingMetric.CPU:
            frac = used.cpu_millicores / node.cpu_capacity
        else:
            frac = used.mem_mib / node.mem_capacity
        worst = max(worst, frac)
    return worst


def evaluate(
    policy: AutoscalePolicy,
    samples: list[MetricsSample],
    nodes: list[NodeSpec],
    current_replicas: int,
    last_action_time: float | None,
    now: float,
) -> Decision:
    """Deterministic watermark decision for the latest sample.

    `last_action_time` of None means no action has been taken yet, so the
    cooldown gate is open. Replica counts outside [min, max] hold: the
    policy only ever operates within its own band.
    """
    if not policy.enabled or not samples:
        return Decision.HOLD
    cooled = last_action_time is None or now - last_action_time >= policy.cooldown
    if not cooled:
        return Decision.HOLD
    fraction = hottest_fraction(samples[-1], nodes, policy.metric)
    if fraction > policy.high_watermark and policy.min_replicas <= current_replicas < policy.max_replicas:
        return Decision.SCALE_UP
    if fraction < policy.low_watermark and policy.min_replicas < current_replicas <= policy.max_replicas:
        return Decision.SCALE_DOWN
    return Decision.HOLD


def apply_decision(
    decision: Decision,
    policy: AutoscalePolicy,
    bbu_set: StatefulSetSpec,
    rrh_set: StatefulSetSpec,
) -> tuple[int, int]:
    """Apply the same replica delta to both sets, clamped to [min, max].
    Returns the new (bbu, rrh) replica counts."""
    delta = {Decision.SCALE_UP: 1, Decision.SCALE_DOWN: -1, Decision.HOLD: 0}[decision]
    if delta:
        for spec in (bbu_set, rrh_set):
            spec.replicas = min(
                policy.max_replicas, max(policy.min_replicas, spec.replicas + delta)
            )
    return bbu_set.replicas, rrh_set.replicas
