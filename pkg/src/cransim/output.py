"""Bit-exact rendering of a run's outputs: metrics.csv, events.log and
summary.json. Formats are frozen — fixed column order, 3-decimal fixed
point, "\\n" line endings — so identical (scenario, seed) runs produce
byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

from .cluster import NodeSpec, ZERO_USAGE
from .kernel import Simulation
from .orchestrator import PodPhase
from .ranmodel import MetricsSample, format_mbps

METRICS_HEADER = (
    "time_s,node,cpu_millicores,cpu_frac,mem_mib,mem_frac,fh_throughput_mbps,pairs_active"
)


def emit_metrics(samples: list[MetricsSample], nodes: list[NodeSpec]) -> str:
    """CSV text: one row per (sample, node) plus an ALL aggregate row per
    sample. Fronthaul throughput is a cluster-level quantity, so per-node
    rows carry zero in the fh columns and the ALL row carries the total."""
    lines = [METRICS_HEADER]
    cap_cpu = sum(n.cpu_capacity for n in nodes)
    cap_mem = sum(n.mem_capacity for n in nodes)
    for sample in samples:
        t = f"{sample.time_s:.3f}"
        for node in nodes:
            used = sample.per_node.get(node.name, ZERO_USAGE)
            lines.append(
                f"{t},{node.name},{used.cpu_millicores},"
                f"{used.cpu_millicores / node.cpu_capacity:.3f},"
                f"{used.mem_mib},{used.mem_mib / node.mem_capacity:.3f},0.000,0"
            )
        total = sample.total()
        lines.append(
            f"{t},ALL,{total.cpu_millicores},{total.cpu_millicores / cap_cpu:.3f},"
            f"{total.mem_mib},{total.mem_mib / cap_mem:.3f},"
            f"{format_mbps(sample.fh_kbps)},{sample.pairs_active}"
        )
    return "\n".join(lines) + "\n"


def emit_events(sim: Simulation) -> str:
    if not sim.events:
        return ""
    return "\n".join(event.render() for event in sim.events) + "\n"


def build_summary(sim: Simulation, duration: float) -> dict:
    last = sim.samples[-1] if sim.samples else None
    return {
        "seed": sim.scenario.seed,
        "duration_s": duration,
        "steps": len(sim.samples),
        "halted": sim.halted,
        "sets": {name: spec.replicas for name, spec in sim.sets.items()},
        "pods": {
            pod.name: pod.phase.value
            for pod in sim.pods.values()
            if pod.phase is not PodPhase.GONE
        },
        "pending": {
            pod.name: pod.pending_reason
            for pod in sim.pods.values()
            if pod.phase is PodPhase.PENDING and pod.pending_reason
        },
        "fh_mbps": format_mbps(last.fh_kbps) if last else "0.000",
        "pairs_active": last.pairs_active if last else 0,
        "registry_revision": sim.registry.revision,
    }


def write_outputs(sim: Simulation, out_dir: str | Path, duration: float) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "metrics.csv", emit_metrics(sim.samples, sim.cluster.nodes))
    _write(out / "events.log", emit_events(sim))
    _write(
        out / "summary.json",
        json.dumps(build_summary(sim, duration), indent=2, sort_keys=True) + "\n",
    )


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
