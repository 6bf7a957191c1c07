"""Command-line entry points.

    prefopt simulate  -- run a benchmark experiment matrix, write CSV traces
    prefopt populate  -- build a population gallery from no-transfer runs
    prefopt serve     -- start the interactive session service
    prefopt inspect   -- describe a stored model, optionally dry-run weights

Exit codes: 0 success, 2 configuration error, 3 runtime failure. Every
command takes --seed and is byte-deterministic under it.
"""

import json
import sys
from pathlib import Path

import click

from .acquisition import DecaySchedule
from .errors import PrefoptError
from .session import METHODS

ALL_METHODS = ",".join(METHODS)
DEFAULT_ITERS = {"hartmann3": 30, "hartmann6": 30, "isotropic_gaussian15": 50, "rosenbrock20": 50}


def _parse_methods(text):
    if text.strip() == "all":
        return METHODS
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise click.UsageError(f"--methods: unknown method {m!r} (known: {ALL_METHODS})")
    return methods


def _load_config_file(path):
    if path is None:
        return {}
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        return yaml.safe_load(text) or {}
    return json.loads(text)


@click.group()
def main():
    """Preference-driven visual parameter optimization with transfer."""


@main.command()
@click.option("--function", "function", required=True, help="benchmark name, e.g. hartmann3")
@click.option("--methods", default="all", show_default=True, help=f"comma list or 'all' ({ALL_METHODS})")
@click.option("--iters", type=int, default=None, help="iterations per session (default per benchmark)")
@click.option("--seeds", type=int, default=1, show_default=True, help="number of seeds")
@click.option("--seed", type=int, default=0, show_default=True, help="base seed")
@click.option("--users", type=int, default=10, show_default=True, help="population and test users per seed")
@click.option("--d1", type=int, default=5, show_default=True, help="decay plateau length")
@click.option("--d2", type=float, default=0.1, show_default=True, help="decay slope")
@click.option("--desk/--full", default=True, show_default=True, help="desk-scale or full engine budgets")
@click.option("--plot", is_flag=True, help="also emit an SVG regret chart")
@click.option("--out", type=click.Path(), required=True, help="output directory")
def simulate(function, methods, iters, seeds, seed, users, d1, d2, desk, plot, out):
    """Run the simulated preference benchmark and write regret artifacts."""
    from .benchmarks import get_benchmark
    from .errors import InvalidInputError
    from .experiment import ExperimentConfig, desk_options, run_experiment, write_artifacts
    from .session import EngineOptions

    try:
        base = get_benchmark(function)
    except InvalidInputError as exc:
        raise click.UsageError(f"--function: {exc}")
    method_tuple = _parse_methods(methods)
    config = ExperimentConfig(
        function=function,
        methods=method_tuple,
        iterations=iters or DEFAULT_ITERS.get(function, 30),
        seeds=tuple(seed + i for i in range(seeds)),
        population_users=users,
        test_users=users,
        decay=DecaySchedule(d1, d2),
        options=desk_options(base.dimension) if desk else EngineOptions(),
    )
    result = run_experiment(config, progress=lambda msg: click.echo(msg, err=True))
    write_artifacts(result, out, plot=plot)
    click.echo(f"wrote {len(result.traces)} traces to {out} ({result.wall_time:.1f}s)")


@main.command()
@click.option("--function", required=True, help="benchmark name (isotropic_gaussian<d> for any d)")
@click.option("--method", default="no_transfer_t", show_default=True, help="population-building method")
@click.option("--users", type=int, default=10, show_default=True)
@click.option("--iters", type=int, default=15, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--theme", default="", help="theme label stored on each model")
@click.option("--desk/--full", default=True, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="gallery directory")
def populate(function, method, users, iters, seed, theme, desk, out):
    """Build a population gallery from simulated no-transfer sessions."""
    from .benchmarks import get_benchmark
    from .errors import InvalidInputError
    from .experiment import ExperimentConfig, build_population, desk_options
    from .session import EngineOptions, is_meta
    from .store import save_model

    if is_meta(method) or method == "random":
        raise click.UsageError("--method: population models come from no-transfer methods")
    try:
        base = get_benchmark(function)
    except InvalidInputError as exc:
        raise click.UsageError(f"--function: {exc}")
    strategy = "two_step" if method.endswith("_t") else "orthogonal"
    config = ExperimentConfig(
        function=function,
        methods=(method,),
        iterations=iters,
        seeds=(seed,),
        population_users=users,
        test_users=0,
        options=desk_options(base.dimension) if desk else EngineOptions(),
    )
    records = build_population(config, seed, strategy, progress=lambda m: click.echo(m, err=True))
    out_dir = Path(out)
    for i, record in enumerate(records):
        if theme:
            from dataclasses import replace

            record = replace(record, config=replace(record.config, theme=theme))
        stored = save_model(record, out_dir)
        click.echo(f"stored {stored.path.name}")
    click.echo(f"{len(records)} population models in {out_dir}")


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--gallery-dir", type=click.Path(), default=None, help="population model directory")
@click.option("--images-dir", type=click.Path(exists=True), required=True, help="PNG image directory")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="JSON/YAML engine config")
def serve(port, host, gallery_dir, images_dir, config_path):
    """Serve the interactive gallery API over HTTP."""
    import uvicorn

    from .service import create_app

    app = create_app(images_dir, gallery_dir=gallery_dir, config=_load_config_file(config_path))
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.argument("record_path", type=click.Path(exists=True))
@click.option("--gallery-dir", type=click.Path(), default=None, help="population gallery for meta sessions")
def replay(record_path, gallery_dir):
    """Replay an exported session; verifies the engine rebuilds it exactly."""
    from .session import export_session, is_meta, replay_session
    from .store import body_checksum, load_gallery, load_session_record, session_record_document

    record = load_session_record(record_path)
    gallery = None
    if is_meta(record.config.method):
        if gallery_dir is None:
            raise click.UsageError("--gallery-dir is required to replay a meta session")
        gallery = load_gallery(gallery_dir, expected_dimension=record.config.dimension)
    state = replay_session(record, gallery=gallery)
    replayed = export_session(state)
    original = session_record_document(record, created_at="-")["checksum"]
    rebuilt = session_record_document(replayed, created_at="-")["checksum"]
    click.echo(f"original checksum: {original}")
    click.echo(f"replayed checksum: {rebuilt}")
    if original != rebuilt:
        click.echo("replay mismatch: engine did not reproduce the recorded session", err=True)
        sys.exit(3)
    click.echo("replay OK: plane history and model reproduced exactly")


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--session", "session_path", type=click.Path(exists=True), default=None,
              help="exported session record for a transfer-weight dry run")
def inspect(model_path, session_path):
    """Print a stored model's metadata; with --session, dry-run its weight."""
    from .acquisition import PopulationGallery, taf_r_weights
    from .store import load_model, load_session_record

    gp, meta = load_model(model_path)
    click.echo(json.dumps({
        "id": meta["id"],
        "theme": meta["theme"],
        "method": meta["method"],
        "plane_strategy": meta["plane_strategy"],
        "dimension": meta["dimension"],
        "observations": gp.n_observations,
        "events": len(meta["dataset"]["events"]),
        "signal_variance": gp.hyperparams.signal_variance,
        "length_scales": [float(v) for v in gp.hyperparams.length_scales],
        "created_at": meta["created_at"],
    }, indent=1))
    if session_path is None:
        return
    record = load_session_record(session_path)
    if record.model is None:
        raise click.UsageError("--session: record has no fitted model for concordance")
    gallery = PopulationGallery(models=(gp,), source_labels=(meta["id"],))
    weights = taf_r_weights(gallery, record.model, record.dataset)
    click.echo(f"taf_r weight against {Path(session_path).name}: {float(weights[0])!r}")


def run():
    try:
        main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except click.exceptions.Abort:
        sys.exit(3)
    except PrefoptError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)


if __name__ == "__main__":
    run()
