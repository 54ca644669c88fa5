"""Command-line front door for the surrogate pipeline.

One subcommand per stage plus `schema-check` and `run-all`. Common
options are accepted by every subcommand; the master seed resolves as
flag over POLICYFOREST_SEED over config file over the default 0.
"""
from __future__ import annotations

import json
import os
import sys
from typing import Callable

import click
import yaml

from .errors import ConfigError, PolicyForestError, SchemaError
from .pipeline import RunConfig, run_all, run_stage

SEED_ENV_VAR = "POLICYFOREST_SEED"

_DESK_TREES = 100
_DESK_GENERATE = 100_000


def _common_options(command: Callable) -> Callable:
    decorators = [
        click.option("--config", "config_path", type=click.Path(), default=None,
                     help="YAML run configuration."),
        click.option("--seed", type=int, default=None,
                     help="Master seed (overrides env and config)."),
        click.option("--out", "out_dir", type=click.Path(), default=None,
                     help="Work directory for artifacts."),
        click.option("--schema", "schema_path", type=click.Path(), default=None,
                     help="Parameter schema file (default: built-in)."),
        click.option("--corpus", type=click.Path(), default=None,
                     help="Existing run corpus (default: toy-generated)."),
        click.option("--workers", type=int, default=None,
                     help="Worker processes for training."),
        click.option("--desk-scale", is_flag=True, default=False,
                     help=f"Laptop preset: {_DESK_TREES} trees, "
                          f"{_DESK_GENERATE:,} generated configs."),
    ]
    for decorator in reversed(decorators):
        command = decorator(command)
    return command


def _build_config(
    config_path: str | None,
    desk_scale: bool,
    overrides: dict,
) -> RunConfig:
    if config_path is not None:
        try:
            text = open(config_path, encoding="utf-8").read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {config_path} is not valid YAML: {exc}") from exc
        if doc is None:
            doc = {}
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a mapping")
    else:
        doc = {}
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            doc["master_seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(
                f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}"
            ) from None
    if desk_scale:
        doc["n_trees"] = _DESK_TREES
        doc["n_generate"] = _DESK_GENERATE
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    return RunConfig.from_mapping(doc)


def _stage_command(config: RunConfig, stage: str) -> None:
    _, ran = run_stage(config, stage)
    click.echo(f"{stage}: {'done' if ran else 'skipped (up to date)'}")


@click.group(name="policyforest")
def cli() -> None:
    """Surrogate pipeline for agent-based policy simulations."""


@cli.command("schema-check")
@_common_options
def cmd_schema_check(config_path, seed, out_dir, schema_path, corpus, workers,
                     desk_scale) -> None:
    """Validate a schema file and summarize it."""
    config = _build_config(config_path, desk_scale, {
        "master_seed": seed, "out_dir": out_dir, "schema_path": schema_path,
        "corpus": corpus, "workers": workers,
    })
    schema = config.load_schema()
    source = config.schema_path or "built-in default"
    policy = schema.policy.name if schema.policy else "none"
    region = schema.region.name if schema.region else "none"
    click.echo(
        f"{source}: {len(schema.continuous)} continuous, "
        f"{len(schema.discrete)} discrete; policy={policy}; region={region}; OK"
    )


def _register_stage(stage: str, help_text: str, extra: list = ()):  # noqa: ANN001
    @cli.command(stage, help=help_text)
    @_common_options
    def _cmd(config_path, seed, out_dir, schema_path, corpus, workers,
             desk_scale, **kwargs) -> None:
        overrides = {
            "master_seed": seed, "out_dir": out_dir, "schema_path": schema_path,
            "corpus": corpus, "workers": workers,
        }
        overrides.update(kwargs)
        config = _build_config(config_path, desk_scale, overrides)
        _stage_command(config, stage)

    for decorator in reversed(list(extra)):
        _cmd = decorator(_cmd)
    return _cmd


_register_stage(
    "toygen", "Generate a synthetic run corpus with planted structure.",
    extra=[
        click.option("--n", "toy_n", type=int, default=None,
                     help="Number of corpus rows."),
        click.option("--noise", "toy_noise_sigma", type=float, default=None,
                     help="Indicator noise sigma."),
    ],
)
_register_stage("ingest", "Validate the corpus and write an ingestion summary.")
_register_stage(
    "label", "Label corpus runs optimal/non-optimal at the pooled quantiles.",
    extra=[
        click.option("--high-indicator", type=str, default=None),
        click.option("--high-quantile", type=float, default=None),
        click.option("--low-indicator", type=str, default=None),
        click.option("--low-quantile", type=float, default=None),
    ],
)
_register_stage(
    "train", "Fit the bagged forest on the labeled training split.",
    extra=[
        click.option("--trees", "n_trees", type=int, default=None),
        click.option("--depth", "max_depth", type=int, default=None),
        click.option("--test-fraction", type=float, default=None),
    ],
)
_register_stage(
    "generate", "Sample new configurations from the corpus moments.",
    extra=[click.option("--n", "n_generate", type=int, default=None,
                        help="Number of configs to generate.")],
)
_register_stage(
    "emulate", "Classify generated configs with the trained forest.",
    extra=[click.option("--chunk", "batch_size", type=int, default=None,
                        help="Rows per prediction chunk.")],
)
_register_stage(
    "report", "Aggregate predictions into result tables and charts.",
    extra=[click.option("--baseline", type=str, default=None,
                        help="Baseline policy (default: first alternative).")],
)


@cli.command("eval")
@_common_options
def cmd_eval(config_path, seed, out_dir, schema_path, corpus, workers,
             desk_scale) -> None:
    """Evaluate the forest on the held-out split and print the confusion matrix."""
    config = _build_config(config_path, desk_scale, {
        "master_seed": seed, "out_dir": out_dir, "schema_path": schema_path,
        "corpus": corpus, "workers": workers,
    })
    _, ran = run_stage(config, "eval")
    doc = json.loads((config.out / "eval.json").read_text(encoding="utf-8"))
    cm = doc["confusion"]
    metrics = doc["metrics"]
    click.echo(f"eval: {'done' if ran else 'skipped (up to date)'}")
    click.echo("")
    click.echo("confusion matrix (rows: observed, columns: predicted)")
    header = f"{'':>14}{'not optimal':>14}{'optimal':>10}"
    click.echo(header)
    click.echo(f"{'not optimal':>14}{cm['tn']:>14}{cm['fp']:>10}")
    click.echo(f"{'optimal':>14}{cm['fn']:>14}{cm['tp']:>10}")
    click.echo("")
    for name in ("accuracy", "precision", "recall", "f1"):
        value = metrics[name]
        shown = "n/a" if value is None else f"{value:.4f}"
        click.echo(f"{name + ':':<11}{shown}")


@cli.command("run-all")
@_common_options
@click.option("--trees", "n_trees", type=int, default=None)
@click.option("--n", "n_generate", type=int, default=None,
              help="Number of configs to generate.")
@click.option("--baseline", type=str, default=None)
def cmd_run_all(config_path, seed, out_dir, schema_path, corpus, workers,
                desk_scale, n_trees, n_generate, baseline) -> None:
    """Run every stage in order: corpus to report."""
    config = _build_config(config_path, desk_scale, {
        "master_seed": seed, "out_dir": out_dir, "schema_path": schema_path,
        "corpus": corpus, "workers": workers, "n_trees": n_trees,
        "n_generate": n_generate, "baseline": baseline,
    })
    run_all(config, echo=click.echo)
    click.echo(f"report written to {config.out / 'report'}")


def main(argv: list[str] | None = None) -> int:
    """Entry point with uniform error reporting.

    Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
    """
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: usage: {exc.format_message()}", err=True)
        return 2
    except click.ClickException as exc:
        click.echo(f"error: {type(exc).__name__}: {exc.format_message()}", err=True)
        return 1
    except click.Abort:
        click.echo("error: aborted", err=True)
        return 130
    except (ConfigError, SchemaError) as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 2
    except PolicyForestError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
