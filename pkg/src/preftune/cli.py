"""Command-line entry points: simulation benchmarks, summaries, the session
server, and deterministic replay of recorded sessions.

Exit codes: 0 success, 2 configuration error, 3 numerical failure or
replay mismatch.
"""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .bench import ExperimentPlan, run_experiment, summarize as summarize_csv, write_summary_csv
from .errors import ConfigError, ContractViolation, NumericalError, ReplayMismatchError, StalledUserError

_ALGORITHM_ALIASES = {
    "random": "random_pairs",
    "random_pairs": "random_pairs",
    "bpe4prost": "bpe4prost",
    "eubo_linecospar": "eubo_linecospar",
}


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Preference-based Bayesian optimization toolkit."""


@main.command()
@click.option("--functions", default="branin2", show_default=True, help="Comma-separated benchmark functions.")
@click.option("--algorithms", default="bpe4prost,eubo_linecospar,random", show_default=True)
@click.option("--runs", default=11, show_default=True, type=int)
@click.option("--iterations", default=50, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--grid-points", default=51, show_default=True, type=int, help="Grid nodes per dimension for the discrete method.")
@click.option("--timing/--no-timing", default=True, show_default=True, help="--no-timing zeroes wall_ms for byte-reproducible CSVs.")
def simulate(functions, algorithms, runs, iterations, seed, out_path, workers, grid_points, timing):
    """Run the simulated-preference benchmark study and stream regret to CSV."""
    try:
        algos = []
        for a in algorithms.split(","):
            a = a.strip()
            if a not in _ALGORITHM_ALIASES:
                raise ConfigError(f"unknown algorithm {a!r}")
            algos.append(_ALGORITHM_ALIASES[a])
        plan = ExperimentPlan(
            functions=tuple(f.strip() for f in functions.split(",") if f.strip()),
            algorithms=tuple(algos),
            n_runs=runs,
            budget=iterations,
            base_seed=seed,
            output_path=out_path,
            grid_points_per_dim=grid_points,
            workers=workers,
            timing=timing,
        )
    except (ConfigError, ContractViolation) as exc:
        _fail(2, str(exc))
    try:
        result = run_experiment(plan, keep_states=False)
    except (NumericalError, StalledUserError) as exc:
        _fail(3, str(exc))
    click.echo(f"wrote {len(result.records)} rows to {out_path}")
    if result.errors:
        click.echo(f"{len(result.errors)} cell(s) failed; see {Path(out_path).with_suffix('.errors.json')}", err=True)
        sys.exit(3)


@main.command(name="summarize")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def summarize_cmd(in_path, out_path):
    """Aggregate a regret CSV into per-iteration mean/stderr of log10 regret."""
    try:
        rows = summarize_csv(in_path)
    except ConfigError as exc:
        _fail(2, str(exc))
    write_summary_csv(out_path, rows)
    click.echo(f"wrote {len(rows)} summary rows to {out_path}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="JSON with bind and data_dir.")
@click.option("--bind", default=None, help="host:port (overrides config file).")
@click.option("--data-dir", default=None, type=click.Path(file_okay=False))
def serve(config_path, bind, data_dir):
    """Serve the human-in-the-loop session API over HTTP."""
    settings = {"bind": "127.0.0.1:8765", "data_dir": "./preftune-sessions"}
    if config_path:
        try:
            settings.update(json.loads(Path(config_path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            _fail(2, f"bad service config: {exc}")
    if os.environ.get("PREFTUNE_BIND"):
        settings["bind"] = os.environ["PREFTUNE_BIND"]
    if os.environ.get("PREFTUNE_DATA_DIR"):
        settings["data_dir"] = os.environ["PREFTUNE_DATA_DIR"]
    if bind:
        settings["bind"] = bind
    if data_dir:
        settings["data_dir"] = data_dir
    try:
        host, port = settings["bind"].rsplit(":", 1)
        port = int(port)
    except ValueError as exc:
        _fail(2, f"bad bind address {settings['bind']!r}: {exc}")

    import uvicorn

    from .service import create_app

    app = create_app(settings["data_dir"])
    click.echo(f"serving on http://{host}:{port} (data dir {settings['data_dir']})")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--session", "session_path", required=True, type=click.Path(exists=True, dir_okay=False))
def replay(session_path):
    """Re-execute a recorded session and check its recommendation trajectory."""
    from .service import read_event_log, replay_session

    try:
        events = read_event_log(session_path)
        result = replay_session(events)
    except (json.JSONDecodeError, ReplayMismatchError, ConfigError, KeyError) as exc:
        _fail(2, f"cannot replay {session_path}: {exc}")
    click.echo(
        f"replayed {result['compared']} recommendation(s); match={result['match']}"
    )
    if not result["match"]:
        for m in result["mismatches"][:5]:
            click.echo(
                f"  iteration {m['iteration']}: point gap {m['point_gap']:.3e}, "
                f"mean gap {m['mean_gap']:.3e}",
                err=True,
            )
        sys.exit(3)


if __name__ == "__main__":
    main()
