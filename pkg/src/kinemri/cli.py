"""Command line interface: ``phantom``, ``run`` and ``report`` subcommands.

Exit codes: 0 on success, 2 on configuration errors, 3 on runtime stage
errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .phantom import PhantomConfig, write_dataset
from .pipeline import ConfigError, PipelineConfig, StageError, run as run_pipeline
from .report import render_report

CONFIG_EXIT = 2
STAGE_EXIT = 3


@click.group()
def main() -> None:
    """Adaptive sampling, reconstruction and registration for dynamic MRI."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file with PhantomConfig fields.")
@click.option("--seed", type=int, default=None, help="Override the phantom seed.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def phantom(config_path: str | None, seed: int | None, out_dir: str) -> None:
    """Generate a synthetic dynamic phantom dataset."""
    try:
        payload = json.loads(Path(config_path).read_text()) if config_path else {}
        if seed is not None:
            payload["seed"] = seed
        cfg = PhantomConfig(**payload)
    except (TypeError, ValueError, json.JSONDecodeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_EXIT)
    meta = write_dataset(cfg, out_dir)
    click.echo(f"wrote phantom dataset to {out_dir} ({json.dumps(meta)})")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON pipeline configuration.")
@click.option("--acceleration", type=float, default=None, help="Override sampler acceleration.")
@click.option("--scheme", type=str, default=None, help="Override sampler scheme.")
@click.option("--seed", type=int, default=None, help="Override the run seed.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory.")
def run(config_path, acceleration, scheme, seed, out_dir) -> None:
    """Execute the full pipeline and write metrics and artifacts."""
    try:
        payload = json.loads(Path(config_path).read_text()) if config_path else {}
        if payload.get("input") is None and payload.get("phantom") is None:
            payload["phantom"] = payload.get("phantom") or {}
        sampler = payload.setdefault("sampler", {})
        if acceleration is not None:
            sampler["acceleration"] = acceleration
        if scheme is not None:
            sampler["scheme"] = scheme
        if seed is not None:
            payload["seed"] = seed
            if payload.get("phantom") is not None:
                payload["phantom"].setdefault("seed", seed)
        if out_dir is not None:
            payload["output_dir"] = out_dir
        cfg = PipelineConfig.from_dict(payload)
    except (ConfigError, ValueError, json.JSONDecodeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_EXIT)
    try:
        report, artifacts = run_pipeline(cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_EXIT)
    except StageError as exc:
        click.echo(str(exc), err=True)
        sys.exit(STAGE_EXIT)
    averaged = ", ".join(f"{k}={v:.4g}" for k, v in sorted(report.phase_averaged.items()))
    click.echo(f"phase-averaged: {averaged}")
    click.echo(f"artifacts in {cfg.output_dir}: {', '.join(sorted(artifacts))}")


@main.command()
@click.argument("run_dir", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Where to put figures (defaults to the run directory).")
def report(run_dir: str, out_dir: str | None) -> None:
    """Render figures and a summary table from a completed run."""
    try:
        written = render_report(run_dir, out_dir)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        click.echo(f"report error: {exc}", err=True)
        sys.exit(STAGE_EXIT)
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
