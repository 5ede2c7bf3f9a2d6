"""Command-line front end: a thin client for the HTTP service.

Without --server the service runs in-process over an ASGI transport, so
every subcommand works offline while exercising the exact same endpoints
a deployed server exposes.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

from .service import create_app

CONFIG_ENV = "POSEGWR_CONFIG"


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    return TestClient(create_app())


def _parse_set(pairs: tuple[str, ...]) -> dict:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.BadParameter(f"expected key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        key = key.strip()
        if key == "avatar_seeds":
            overrides[key] = [int(v) for v in value.split(",") if v.strip()]
        elif key == "source_dims":
            parts = [int(v) for v in value.replace("x", ",").split(",")]
            overrides[key] = (parts[0], parts[1])
        else:
            overrides[key] = value.strip()
    return overrides


def _call(ctx: click.Context, endpoint: str, payload: dict) -> dict:
    payload = dict(payload)
    payload["config_path"] = ctx.obj["config_path"]
    overrides = dict(ctx.obj["overrides"])
    overrides.update(payload.pop("_overrides", {}))
    payload["config"] = overrides or None
    try:
        with _client(ctx.obj["server"]) as client:
            response = client.post(endpoint, json=payload)
    except httpx.HTTPError as exc:
        click.echo(f"error: cannot reach service: {exc}", err=True)
        sys.exit(2)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        click.echo(f"error: {detail}", err=True)
        sys.exit(1)
    return response.json()


@click.group()
@click.option("--server", default=None, help="Base URL of a running service; in-process when omitted.")
@click.option(
    "--config",
    "config_path",
    default=None,
    envvar=CONFIG_ENV,
    help=f"key=value config file (default from ${CONFIG_ENV}).",
)
@click.option("--set", "set_pairs", multiple=True, help="Override a config key, e.g. --set epochs=5.")
@click.pass_context
def main(ctx, server, config_path, set_pairs):
    """Pose-sequence learning, exercise feedback and evaluation."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server
    ctx.obj["config_path"] = config_path
    ctx.obj["overrides"] = _parse_set(set_pairs)


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output dataset directory.")
@click.option("--avatars", default=10, show_default=True)
@click.option("--variants", default="all", show_default=True, help="Comma list or 'all'.")
@click.option("--perturbations", default="all", show_default=True, help="Comma list or 'all'.")
@click.option("--frames", default=None, type=int, help="Frames per sequence.")
@click.pass_context
def generate(ctx, out_dir, avatars, variants, perturbations, frames):
    """Write the synthetic avatar exercise dataset."""
    payload = {
        "out_dir": out_dir,
        "avatars": avatars,
        "variants": variants.split(",") if variants != "all" else ["all"],
        "perturbations": perturbations.split(",") if perturbations != "all" else ["all"],
        "_overrides": {"frames": frames} if frames else {},
    }
    body = _call(ctx, "/generate", payload)
    click.echo(
        f"wrote {body['sequence_files']} sequence files to {body['out_dir']} "
        f"(dataset {body['dataset_digest'][:12]}, config {body['config_digest'][:12]})"
    )


@main.command()
@click.argument("in_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_path", type=click.Path())
@click.option("--label", default=None)
@click.pass_context
def ingest(ctx, in_dir, out_path, label):
    """Convert a directory of per-frame keypoint files into a sequence file."""
    body = _call(ctx, "/ingest", {"in_dir": in_dir, "out_path": out_path, "label": label})
    click.echo(f"ingested {body['frames']} frames as {body['label']!r} -> {body['out_path']}")


@main.command()
@click.argument("seq_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_path", type=click.Path())
@click.option("--variant", type=click.Choice(["gamma", "episodic", "subnode"]), default=None)
@click.option("--epochs", default=None, type=int)
@click.option("--exercise-id", default=0, show_default=True)
@click.pass_context
def train(ctx, seq_path, out_path, variant, epochs, exercise_id):
    """Train a network on a sequence file and write a snapshot."""
    body = _call(
        ctx,
        "/train",
        {
            "seq_path": seq_path,
            "out_path": out_path,
            "variant": variant,
            "epochs": epochs,
            "exercise_id": exercise_id,
        },
    )
    extra = (
        f", trajectory {body['trajectory_length']} frames"
        if body.get("trajectory_length") is not None
        else ""
    )
    click.echo(
        f"trained {body['variant']} net: {body['nodes']} nodes, {body['edges']} edges{extra} "
        f"-> {body['out_path']}"
    )


@main.command()
@click.argument("snapshot_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("baseline_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_path", type=click.Path())
@click.option("--exercise-id", default=0, show_default=True)
@click.pass_context
def adapt(ctx, snapshot_path, baseline_path, out_path, exercise_id):
    """Adapt a subnode snapshot to a new performer's baseline sequence."""
    body = _call(
        ctx,
        "/adapt",
        {
            "snapshot_path": snapshot_path,
            "baseline_path": baseline_path,
            "out_path": out_path,
            "exercise_id": exercise_id,
        },
    )
    if body["adapted"]:
        click.echo(
            f"adapted: new lineage {body['lineage']} (first-frame distance "
            f"{body['first_frame_distance']:.4f}) -> {body['out_path']}"
        )
    else:
        click.echo(
            f"no adaptation needed: lineage {body['nearest_lineage']} fits (distance "
            f"{body['first_frame_distance']:.4f}) -> {body['out_path']}"
        )


@main.command()
@click.argument("snapshot_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("seq_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(), help="Write verdict CSV (and overlays) here.")
@click.option("--overlays/--no-overlays", default=False, show_default=True)
@click.option("--truth", "truth_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--exercise-id", default=0, show_default=True)
@click.option("--lineage", default=None, type=int)
@click.pass_context
def feedback(ctx, snapshot_path, seq_path, out_dir, overlays, truth_path, exercise_id, lineage):
    """Compare a sequence against a snapshot's recall and report joint verdicts."""
    out_csv = overlay_dir = None
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        out_csv = str(Path(out_dir) / "verdict.csv")
        if overlays:
            overlay_dir = str(Path(out_dir) / "overlays")
    body = _call(
        ctx,
        "/feedback",
        {
            "snapshot_path": snapshot_path,
            "seq_path": seq_path,
            "out_csv": out_csv,
            "overlay_dir": overlay_dir,
            "truth_path": truth_path,
            "exercise_id": exercise_id,
            "lineage": lineage,
        },
    )
    bad = ", ".join(body["erroneous_joints"]) or "none"
    click.echo(
        f"compared {body['frames_compared']} frames: {body['red_flags']} red flags, "
        f"erroneous joints: {bad}"
    )
    if body.get("lineage") is not None:
        click.echo(f"lineage used: {body['lineage']}")
    if body.get("accuracy") is not None:
        click.echo(f"accuracy vs ground truth: {body['accuracy']:.3f}")
    if body.get("csv_path"):
        click.echo(f"verdict CSV: {body['csv_path']}")
    if body.get("overlays_written"):
        click.echo(f"overlays written: {body['overlays_written']}")


@main.command()
@click.argument("snapshot_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--start", default=None, type=int, help="Start node id (default: lowest).")
@click.option("--steps", default=100, show_default=True)
@click.option("--out", "out_dir", default=None, type=click.Path(), help="Write pose CSV here.")
@click.pass_context
def predict(ctx, snapshot_path, start, steps, out_dir):
    """Roll out the snapshot's prediction scheme and emit the visited poses."""
    out_csv = None
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        out_csv = str(Path(out_dir) / "prediction.csv")
    body = _call(
        ctx,
        "/predict",
        {"snapshot_path": snapshot_path, "start": start, "steps": steps, "out_csv": out_csv},
    )
    ids = body["node_ids"]
    shown = ", ".join(str(i) for i in ids[:12]) + (" ..." if len(ids) > 12 else "")
    click.echo(f"predicted {len(ids)} poses: nodes [{shown}]{' (stalled)' if body['stalled'] else ''}")
    if body.get("csv_path"):
        click.echo(f"pose CSV: {body['csv_path']}")


@main.command()
@click.argument("number", type=click.IntRange(1, 4))
@click.option("--dataset", "dataset_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def experiment(ctx, number, dataset_dir, out_dir):
    """Run one of the four evaluation experiments and write its metric CSV."""
    body = _call(
        ctx,
        "/experiment",
        {"number": number, "dataset_dir": dataset_dir, "out_dir": out_dir},
    )
    click.echo(f"experiment {number} -> {body['csv_path']}")
    click.echo("averages: " + json.dumps(body["averages"]))
    click.echo(f"manifest: {body['manifest_path']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8077, show_default=True)
def serve(host, port):
    """Run the HTTP service with uvicorn."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
