"""Resource draw profiles for baseband/radio-head pods and fronthaul
throughput accounting.

Usage is a pure function of (pod kind, phase, UE mode): baseband pods draw
a fixed profile, radio heads draw extra CPU in emulated-UE mode because the
emulated UE's baseband work runs on the radio head's host CPU. Every
fronthaul pair carries a constant rate while both endpoints run; rates are
kept in kb/s as integers so aggregate throughput is exact with no float
drift.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

from .cluster import ResourceUsage, ZERO_USAGE
from .orchestrator import PodInstance, PodKind, PodPhase


class UeMode(Enum):
    OAISIM = "OAISIM"  # emulated UE, baseband runs on the radio head host
    REAL_UE = "REAL_UE"


# Floor on the extra radio-head CPU drawn in emulated-UE mode, in
# millicores: the emulation costs upward of 60% of a core on the host.
MIN_OAISIM_CPU_DELTA = 600

JITTER_SPAN = 0.05  # optional +/-5% realism noise, off by default


@dataclass(frozen=True)
class WorkloadProfile:
    bbu_cpu: int = 1000  # millicores per baseband pod
    bbu_mem: int = 1024  # MiB per baseband pod
    rrh_cpu_real: int = 500  # radio head millicores with a real UE
    rrh_cpu_oaisim_delta: int = 700  # extra millicores with an emulated UE
    rrh_mem: int = 512
    jitter: bool = False

    def __post_init__(self) -> None:
        for name in ("bbu_cpu", "bbu_mem", "rrh_cpu_real", "rrh_cpu_oaisim_delta", "rrh_mem"):
            if getattr(self, name) <= 0:
                raise ValueError(f"profile.{name} must be > 0")
        if self.rrh_cpu_oaisim_delta < MIN_OAISIM_CPU_DELTA:
            raise ValueError(
                "profile.rrh_cpu_oaisim_delta must be >= "
                f"{MIN_OAISIM_CPU_DELTA} millicores"
            )

    def rrh_cpu(self, mode: UeMode) -> int:
        if mode is UeMode.OAISIM:
            return self.rrh_cpu_real + self.rrh_cpu_oaisim_delta
        return self.rrh_cpu_real


def usage(
    pod: PodInstance,
    mode: UeMode,
    profile: WorkloadProfile,
    rng: random.Random | None = None,
) -> ResourceUsage:
    """Host resources the pod draws right now. Only RUNNING pods draw;
    the core endpoint runs in an unmetered VM and draws nothing here.

    Passing `rng` applies the profile's optional +/-5% jitter; without it
    the draw is exactly the profile value.
    """
    if pod.phase is not PodPhase.RUNNING:
        return ZERO_USAGE
    if pod.kind is PodKind.BBU:
        draw = ResourceUsage(profile.bbu_cpu, profile.bbu_mem)
    elif pod.kind is PodKind.RRH:
        draw = ResourceUsage(profile.rrh_cpu(mode), profile.rrh_mem)
    else:
        return ZERO_USAGE
    if rng is not None and profile.jitter:
        factor = 1.0 + rng.uniform(-JITTER_SPAN, JITTER_SPAN)
        draw = ResourceUsage(
            max(0, round(draw.cpu_millicores * factor)),
            max(0, round(draw.mem_mib * factor)),
        )
    return draw


def node_usage(
    node_name: str,
    pods: Iterable[PodInstance],
    mode: UeMode,
    profile: WorkloadProfile,
    rng: random.Random | None = None,
) -> ResourceUsage:
    """Componentwise sum of usage() over the node's RUNNING pods."""
    total = ZERO_USAGE
    for pod in pods:
        if pod.node == node_name:
            total = total + usage(pod, mode, profile, rng)
    return total


# -- fronthaul ---------------------------------------------------------------


def kbps_from_mbps(mbps: float) -> int:
    if mbps <= 0:
        raise ValueError("fronthaul rate must be > 0")
    return round(mbps * 1000)


def format_mbps(kbps: int) -> str:
    """Exact fixed-point Mb/s rendering of an integer kb/s value."""
    sign = "-" if kbps < 0 else ""
    kbps = abs(kbps)
    return f"{sign}{kbps // 1000}.{kbps % 1000:03d}"


@dataclass
class FronthaulPair:
    bbu: str  # pod name
    rrh: str  # pod name
    rate_kbps: int
    active: bool = False
    activated_at: float | None = None
    deactivated_at: float | None = None

    @property
    def rate_mbps(self) -> float:
        return self.rate_kbps / 1000


def aggregate_fh(pairs: Iterable[FronthaulPair]) -> int:
    """Total fronthaul throughput over active pairs, in kb/s (exact)."""
    return sum(p.rate_kbps for p in pairs if p.active)


PhaseLookup = Callable[[str], PodPhase | None]


def on_phase_change(
    pod: PodInstance,
    old_phase: PodPhase,
    new_phase: PodPhase,
    pairs: list[FronthaulPair],
    phase_of: PhaseLookup,
    now: float,
) -> list[FronthaulPair]:
    """Keep pair active flags consistent with a pod's phase change.

    A pair is active exactly while both of its endpoints are RUNNING;
    activation/deactivation instants are stamped for the metrics series.
    """
    for pair in pairs:
        if pod.name not in (pair.bbu, pair.rrh):
            continue
        both_running = (
            phase_of(pair.bbu) is PodPhase.RUNNING
            and phase_of(pair.rrh) is PodPhase.RUNNING
        )
        if both_running and not pair.active:
            pair.active = True
            pair.activated_at = now
        elif not both_running and pair.active:
            pair.active = False
            pair.deactivated_at = now
    return pairs


@dataclass
class MetricsSample:
    """One metering tick: per-node draw plus aggregate fronthaul state."""

    time_s: float
    per_node: dict[str, ResourceUsage] = field(default_factory=dict)
    fh_kbps: int = 0
    pairs_active: int = 0

    def total(self) -> ResourceUsage:
        total = ZERO_USAGE
        for u in self.per_node.values():
            total = total + u
        return total
