"""Command-line entry points: one verb per pipeline stage plus the audit
server.  Every verb takes --config and --seed (the seed overrides the
config file's value)."""
from __future__ import annotations

import json
import sys

import click

from .config import ConfigError, load_config
from .stages import STAGES, DependencyError, run_stage


def _cfg(config_path: str, seed):
    overrides = {}
    if seed is not None:
        overrides["seed"] = int(seed)
    try:
        return load_config(config_path, overrides)
    except (ConfigError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc)) from exc


def _run(config_path: str, seed, stage: str) -> None:
    cfg = _cfg(config_path, seed)
    try:
        report = run_stage(cfg, stage)
    except DependencyError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@click.group(help="Building multi-attribute pipeline.")
def main() -> None:
    pass


def _stage_command(stage: str):
    @main.command(name=stage, help=f"Run the {stage} stage.")
    @click.option("--config", "config_path", required=True,
                  type=click.Path(exists=True, dir_okay=False))
    @click.option("--seed", type=int, default=None,
                  help="Override the config file's seed.")
    def cmd(config_path: str, seed) -> None:
        _run(config_path, seed, stage)

    return cmd


for _stage in STAGES:
    _stage_command(_stage)


@main.command(name="run-all", help="Run every stage in order.")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
def run_all(config_path: str, seed) -> None:
    cfg = _cfg(config_path, seed)
    for stage in STAGES:
        try:
            report = run_stage(cfg, stage)
        except DependencyError as exc:
            raise click.ClickException(str(exc)) from exc
        click.echo(f"{stage}: done in {report['wall_time_s']}s")


@main.command(name="serve-audit", help="Serve the audit API (and UI if built).")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False), default=None,
              help="Directory with the built audit UI (served under /ui).")
def serve_audit(config_path: str, seed, host, port, ui_dir) -> None:
    from .audit import serve

    cfg = _cfg(config_path, seed)
    serve(cfg, host=host, port=port, ui_dir=ui_dir)


if __name__ == "__main__":
    sys.exit(main())
