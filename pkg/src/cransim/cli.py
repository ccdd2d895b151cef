"""Command-line entry points.

    cransim scenario init --template paper-testbed [--out FILE]
    cransim validate --scenario FILE [--strict/--no-strict]
    cransim run --scenario FILE --out DIR [--seed N] [--duration S]
    cransim registry-serve [--host H] [--port P]

`run` writes metrics.csv, events.log and summary.json into --out and exits
0 on clean completion, 2 when the simulation halted on a broken invariant
(partial outputs are still written). The CRAN_SIM_LOG environment variable
selects console log verbosity: quiet, info or debug.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import sys
from pathlib import Path

import click

from . import __version__
from .kernel import Simulation
from .orchestrator import InvariantViolation
from .output import write_outputs
from .registry_service import RegistryServer
from .scenario import (
    MAX_SEED,
    ScenarioError,
    TEMPLATES,
    load_scenario,
    save_scenario,
)

_LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
HALT_EXIT_CODE = 2


def _configure_logging() -> None:
    raw = os.environ.get("CRAN_SIM_LOG", "quiet").lower()
    level = _LOG_LEVELS.get(raw)
    if level is None:
        click.echo(f"warning: CRAN_SIM_LOG={raw!r} not in {sorted(_LOG_LEVELS)}, using quiet", err=True)
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _load(path: str, strict: bool):
    try:
        return load_scenario(path, strict=strict)
    except ScenarioError as exc:
        for error in exc.errors:
            click.echo(f"error: {error}", err=True)
        raise SystemExit(1) from exc


@click.group()
@click.version_option(__version__)
def main() -> None:
    _configure_logging()


@main.command()
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Scenario JSON file.")
@click.option("--strict/--no-strict", default=True,
              help="Reject unknown config fields (default: strict).")
def validate(scenario_path: str, strict: bool) -> None:
    """Check a scenario file and report every problem found."""
    cfg = _load(scenario_path, strict)
    click.echo(
        f"OK: {len(cfg.nodes)} nodes, {len(cfg.sets)} sets, "
        f"{len(cfg.timeline)} timeline commands, duration {cfg.duration:g}s"
    )


@main.command()
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Scenario JSON file.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for metrics.csv, events.log and summary.json.")
@click.option("--seed", type=click.IntRange(0, MAX_SEED), default=None,
              help="Override the scenario seed.")
@click.option("--duration", type=click.FloatRange(min=0, min_open=True), default=None,
              help="Override the scenario duration (seconds).")
@click.option("--strict/--no-strict", default=True,
              help="Reject unknown config fields (default: strict).")
def run(scenario_path: str, out_dir: str, seed: int | None,
        duration: float | None, strict: bool) -> None:
    """Run a scenario and write its metrics and event log."""
    cfg = _load(scenario_path, strict)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    effective_duration = duration if duration is not None else cfg.duration

    sim = Simulation(cfg)
    halted = False
    try:
        sim.run(effective_duration)
    except InvariantViolation as exc:
        halted = True
        click.echo(f"simulation halted: {exc}", err=True)

    try:
        write_outputs(sim, out_dir, effective_duration)
    except OSError as exc:
        raise click.ClickException(f"writing outputs to {out_dir}: {exc}") from exc

    click.echo(
        f"{'halted after' if halted else 'completed'} {len(sim.samples)} steps; "
        f"outputs in {Path(out_dir)}"
    )
    if halted:
        raise SystemExit(HALT_EXIT_CODE)


@main.group()
def scenario() -> None:
    """Scenario file helpers."""


@scenario.command("init")
@click.option("--template", type=click.Choice(sorted(TEMPLATES)), default="paper-testbed",
              show_default=True, help="Which shipped scenario to write.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Output file (default: <template>.json).")
def scenario_init(template: str, out_path: str | None) -> None:
    """Write one of the shipped scenario templates to a JSON file."""
    path = Path(out_path) if out_path else Path(f"{template}.json")
    try:
        save_scenario(TEMPLATES[template](), path)
    except OSError as exc:
        raise click.ClickException(f"writing {path}: {exc}") from exc
    click.echo(f"wrote {path}")


@main.command("registry-serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=7379, show_default=True, type=int)
def registry_serve(host: str, port: int) -> None:
    """Serve an empty registry over the line protocol (Ctrl-C to stop)."""
    server = RegistryServer((host, port))
    bound_host, bound_port = server.server_address
    click.echo(f"registry listening on {bound_host}:{bound_port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()


if __name__ == "__main__":
    main()
