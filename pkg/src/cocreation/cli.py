"""Command line entry points.

Precedence for settings is flag > environment > config file: every option
reads an environment variable, and --config installs file values as
defaults underneath both.  Exit codes: 0 success, 1 operation failed,
2 usage error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .backends import (
    BackendConfig,
    OracleBackend,
    ScriptedBackend,
    get_profile,
    make_backend,
    profile_names,
)
from .catalog import load_catalog
from .errors import CocreationError
from .harness import (
    bundled_catalog_path,
    bundled_scenario_path,
    load_scenario,
    render_report,
    replay_outcome,
    run_scenario,
    write_outcome,
)


@click.group()
@click.option("--config", "config_path", envvar="COCREATION_CONFIG",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with per-command option defaults.")
@click.pass_context
def cli(ctx: click.Context, config_path):
    if config_path:
        try:
            defaults = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise click.UsageError(f"config file is not valid JSON: {err}")
        if not isinstance(defaults, dict):
            raise click.UsageError("config file must hold a JSON object")
        ctx.default_map = defaults


def main() -> None:
    cli(auto_envvar_prefix="COCREATION")


# -- catalog ---------------------------------------------------------------------


@cli.group()
def catalog() -> None:
    """Catalog inspection and validation."""


@catalog.command("validate")
@click.argument("path", required=False,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
def catalog_validate(path, as_json) -> None:
    """Validate a catalog document (the bundled one when PATH is omitted)."""
    source = Path(path) if path else bundled_catalog_path()
    try:
        loaded = load_catalog(source)
    except CocreationError as err:
        if as_json:
            click.echo(json.dumps({"valid": False,
                                   "error": {"type": type(err).__name__,
                                             "message": str(err)}}))
        else:
            click.echo(f"invalid: {err}", err=True)
        sys.exit(1)
    summary = {
        "valid": True,
        "offerings": len(loaded.offerings),
        "serviceSpecs": sum(1 for s in loaded.specs if s.layer == "Service"),
        "resourceSpecs": sum(1 for s in loaded.specs if s.layer == "Resource"),
        "rules": len(loaded.rules),
    }
    if as_json:
        click.echo(json.dumps(summary))
    else:
        click.echo(f"valid: {summary['offerings']} offerings, "
                   f"{summary['serviceSpecs']} service specs, "
                   f"{summary['resourceSpecs']} resource specs, "
                   f"{summary['rules']} rules")


# -- bench -----------------------------------------------------------------------


def _resolve_backends(specs):
    resolved = []
    for spec in specs:
        if spec == "oracle":
            resolved.append(("oracle", lambda: OracleBackend()))
        elif spec == "scripted:all":
            for name in profile_names():
                resolved.append((name, _scripted_factory(name)))
        elif spec.startswith("scripted:"):
            name = spec.split(":", 1)[1]
            get_profile(name)  # fail early on unknown profiles
            resolved.append((name, _scripted_factory(name)))
        elif spec.startswith("remote:"):
            rest = spec.split(":", 1)[1]
            url, sep, model = rest.rpartition(",")
            if not sep or not url or not model:
                raise click.UsageError(
                    "remote backend spec must be remote:<url>,<model>")
            config = BackendConfig(kind="remote", endpoint_url=url,
                                   model_name=model)
            resolved.append((f"remote-{model}",
                             lambda c=config: make_backend(c)))
        else:
            raise click.UsageError(
                f"unknown backend {spec!r}; use oracle, scripted:<profile>, "
                f"scripted:all, or remote:<url>,<model>")
    return resolved


def _scripted_factory(name: str):
    return lambda: ScriptedBackend(get_profile(name))


@cli.group()
def bench() -> None:
    """Scenario benchmark over agent backends."""


@bench.command("run")
@click.option("--scenario", "scenario",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="scenario file; bundled XR live event scenario by default")
@click.option("--backend", "backend", multiple=True,
              help="oracle, scripted:<profile>, scripted:all, or "
                   "remote:<url>,<model> (repeatable); default: oracle plus "
                   "every profile")
@click.option("--out", "out", type=click.Path(file_okay=False),
              default="bench-out", show_default=True)
@click.option("--created-at", default=None,
              help="fix the session creation instant (ISO 8601) for "
                   "reproducible artifacts")
@click.option("--format", "fmt", type=click.Choice(["text", "csv", "md"]),
              default="text", show_default=True)
def bench_run(scenario, backend, out, created_at, fmt) -> None:
    """Run the scenario against each backend and write outcome artifacts."""
    loaded = load_scenario(scenario or bundled_scenario_path())
    catalog_obj = load_catalog(bundled_catalog_path())
    specs = _resolve_backends(backend or ("oracle", "scripted:all"))
    out = Path(out)
    docs = []
    for name, factory in specs:
        outcome = run_scenario(loaded, factory(), out / name,
                               catalog=catalog_obj, created_at=created_at)
        write_outcome(outcome, out / name / "outcome.json")
        docs.append(outcome.as_dict())
        click.echo(f"ran {name}: stage {outcome.stage_reached}, "
                   f"baseline {outcome.scores.baseline}")
    report = render_report(docs, fmt)
    report_path = out / f"report.{'txt' if fmt == 'text' else fmt}"
    report_path.write_text(report, encoding="utf-8")
    click.echo("")
    click.echo(report)
    click.echo(f"artifacts under {out}")


@bench.command("report")
@click.argument("out_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["text", "csv", "md"]),
              default="text", show_default=True)
def bench_report(out_dirs, fmt) -> None:
    """Render the score table from outcome.json files under each directory."""
    docs = []
    for out_dir in out_dirs:
        for path in sorted(Path(out_dir).glob("*/outcome.json")):
            docs.append(json.loads(path.read_text(encoding="utf-8")))
    if not docs:
        click.echo(f"no outcome.json files under {' '.join(out_dirs)}",
                   err=True)
        sys.exit(1)
    click.echo(render_report(docs, fmt))


# -- session ---------------------------------------------------------------------


@cli.group()
def session() -> None:
    """Recorded session tooling."""


@session.command("replay")
@click.argument("outcome_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(file_okay=False),
              default=None, help="workspace for the replay run "
                                 "(temporary directory by default)")
def session_replay(outcome_path, out) -> None:
    """Re-run a recorded outcome; fails when the order draft diverges."""
    import tempfile

    workspace = Path(out) if out else Path(tempfile.mkdtemp(
        prefix="cocreation-replay-"))
    report = replay_outcome(outcome_path, workspace)
    click.echo(json.dumps(report.as_dict(), indent=2))
    if report.draft_matches is False:
        click.echo("replay diverged from the recorded order draft", err=True)
        sys.exit(1)
    if not report.scores_match:
        diff = report.score_diff or {}
        click.echo(f"replay re-score diverged at {diff.get('field')}: "
                   f"recorded {diff.get('recorded')!r}, "
                   f"replayed {diff.get('replayed')!r}", err=True)
        sys.exit(1)


# -- serve -----------------------------------------------------------------------


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8800, show_default=True, type=int)
@click.option("--catalog", "catalog",
              type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--store", "store", type=click.Path(file_okay=False),
              default=None, help="state directory (temporary by default)")
@click.option("--backend", "backend", default="oracle",
              show_default=True, help="backend kind for new sessions")
@click.option("--ui", "ui", type=click.Path(exists=True, file_okay=False),
              default=None, help="static directory with the built console")
def serve(host, port, catalog, store, backend, ui) -> None:
    """Run the HTTP/SSE service."""
    import uvicorn

    from .server import create_app

    app = create_app(catalog_path=catalog, store_root=store,
                     default_backend=backend, ui_dir=ui)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
