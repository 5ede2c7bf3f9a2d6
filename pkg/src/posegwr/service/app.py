"""FastAPI service wrapping the core package.

Every endpoint operates on server-side paths so large artifacts never
travel over the wire; responses carry summaries plus the paths written.
"""

from __future__ import annotations

import contextlib
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..avatars import dataset_digest, generate_dataset, read_truth
from ..body25 import JOINT_NAMES
from ..config import RunConfig, resolve_config
from ..episodic import episodic_replay
from ..experiments import PERTURBATION_ORDER, VARIANT_ORDER, run_experiment
from ..feedback import (
    MASKED,
    RED,
    aggregate_flags,
    classify_run,
    joint_errors,
    render_overlay,
    score_against_ground_truth,
)
from ..model import expected_poses, train_model
from ..network import InvariantViolation, gamma_predict
from ..pose import (
    IngestionError,
    MalformedFrameError,
    ingest_openpose_dir,
    load_sequence,
    save_sequence,
)
from ..snapshot import SnapshotError, load_file, save_file
from ..subnode import (
    UnknownExerciseError,
    UnknownLineageError,
    adapt_baseline,
    needs_adaptation,
    replay,
)
from . import schemas


@contextlib.contextmanager
def _stage(name: str):
    """Translate core errors into HTTP 400s naming the failing stage."""
    try:
        yield
    except HTTPException:
        raise
    except (
        IngestionError,
        MalformedFrameError,
        SnapshotError,
        InvariantViolation,
        UnknownExerciseError,
        UnknownLineageError,
        ValueError,
        KeyError,
        FileNotFoundError,
    ) as exc:
        raise HTTPException(status_code=400, detail=f"{name}: {exc}") from exc


def _resolve(req: schemas.ConfiguredRequest) -> RunConfig:
    overrides = {}
    if req.config is not None:
        overrides = req.config.model_dump(exclude_none=True)
        if "avatar_seeds" in overrides:
            overrides["avatar_seeds"] = tuple(overrides["avatar_seeds"])
        if "source_dims" in overrides:
            overrides["source_dims"] = tuple(overrides["source_dims"])
    return resolve_config(req.config_path, overrides)


def _write_manifest(path: Path, kind: str, cfg: RunConfig, extra: dict) -> Path:
    lines = [f"kind: {kind}", f"config_digest: {cfg.digest()}"]
    lines += [f"{k}: {v}" for k, v in sorted(extra.items())]
    path.write_text("\n".join(lines) + "\n")
    return path


def create_app() -> FastAPI:
    app = FastAPI(title="posegwr", version=__version__)

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/generate", response_model=schemas.GenerateResponse)
    def generate(req: schemas.GenerateRequest):
        cfg = _resolve(req)
        with _stage("generate"):
            variants = list(VARIANT_ORDER) if req.variants == ["all"] else [v.lower() for v in req.variants]
            perturbations = (
                list(PERTURBATION_ORDER) if req.perturbations == ["all"] else [p.lower() for p in req.perturbations]
            )
            for v in variants:
                if v not in VARIANT_ORDER:
                    raise ValueError(f"unknown variant {v!r}")
            for p in perturbations:
                if p not in PERTURBATION_ORDER:
                    raise ValueError(f"unknown perturbation {p!r}")
            seeds = list(cfg.avatar_seeds[: req.avatars])
            if len(seeds) < req.avatars:
                seeds += list(range(len(seeds) + 1, req.avatars + 1))
            out_dir = Path(req.out_dir)
            seq_paths, truth_paths = generate_dataset(
                out_dir,
                seeds,
                variants,
                perturbations,
                frames=cfg.frames,
                d_t_pose=cfg.d_t_pose,
                cm_to_px=cfg.cm_to_px,
            )
            digest = dataset_digest(seq_paths + truth_paths)
            manifest = _write_manifest(
                out_dir / "manifest.txt",
                "generate",
                cfg,
                {
                    "dataset_digest": digest,
                    "sequence_files": len(seq_paths),
                    "avatars": len(seeds),
                    "variants": ",".join(variants),
                    "perturbations": ",".join(perturbations),
                },
            )
        return schemas.GenerateResponse(
            out_dir=str(out_dir),
            sequence_files=len(seq_paths),
            dataset_digest=digest,
            config_digest=cfg.digest(),
            manifest_path=str(manifest),
        )

    @app.post("/ingest", response_model=schemas.IngestResponse)
    def ingest(req: schemas.IngestRequest):
        cfg = _resolve(req)
        with _stage("ingest"):
            seq = ingest_openpose_dir(req.in_dir, dims=cfg.source_dims, label=req.label or "")
            save_sequence(seq, req.out_path)
        return schemas.IngestResponse(out_path=req.out_path, frames=len(seq), label=seq.label)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_endpoint(req: schemas.TrainRequest):
        cfg = _resolve(req)
        with _stage("train"):
            seq = load_sequence(req.seq_path)
            model, log = train_model(
                seq, cfg, variant=req.variant, exercise_id=req.exercise_id, epochs=req.epochs
            )
            out = save_file(model, req.out_path)
            manifest = _write_manifest(
                Path(str(out) + ".manifest.txt"),
                "train",
                cfg,
                {
                    "variant": model.variant,
                    "seq_path": req.seq_path,
                    "epochs": req.epochs or cfg.epochs,
                    "nodes": len(model.network.nodes),
                },
            )
            trajectory_length = None
            if model.store is not None:
                trajectory_length = len(model.store.trajectories[req.exercise_id])
        return schemas.TrainResponse(
            out_path=str(out),
            variant=model.variant,
            nodes=len(model.network.nodes),
            edges=len(model.network.edges),
            trajectory_length=trajectory_length,
            config_digest=cfg.digest(),
            manifest_path=str(manifest),
        )

    @app.post("/adapt", response_model=schemas.AdaptResponse)
    def adapt(req: schemas.AdaptRequest):
        cfg = _resolve(req)
        with _stage("adapt"):
            model = load_file(req.snapshot_path)
            if model.variant != "subnode" or model.store is None:
                raise ValueError("adaptation requires a subnode snapshot")
            baseline = load_sequence(req.baseline_path)
            first = baseline.samples()[0]
            needed, nearest, d = needs_adaptation(model.store, model.network, req.exercise_id, first)
            lineage = None
            if needed:
                lineage = adapt_baseline(model.store, model.network, req.exercise_id, baseline)
            out = save_file(model, req.out_path)
            manifest = _write_manifest(
                Path(str(out) + ".manifest.txt"),
                "adapt",
                cfg,
                {
                    "snapshot_path": req.snapshot_path,
                    "baseline_path": req.baseline_path,
                    "adapted": needed,
                    "lineage": lineage,
                    "first_frame_distance": round(d, 9),
                },
            )
        return schemas.AdaptResponse(
            out_path=str(out),
            adapted=needed,
            lineage=lineage,
            nearest_lineage=nearest,
            first_frame_distance=d,
            manifest_path=str(manifest),
        )

    @app.post("/feedback", response_model=schemas.FeedbackResponse)
    def feedback_endpoint(req: schemas.FeedbackRequest):
        cfg = _resolve(req)
        with _stage("feedback"):
            model = load_file(req.snapshot_path)
            seq = load_sequence(req.seq_path)
            expected = expected_poses(
                model,
                seq,
                exercise_id=req.exercise_id,
                gamma_horizon=req.gamma_horizon,
                lineage=req.lineage,
            )
            frames = [
                joint_errors(seq.frames[t], pose, d_t_pose=cfg.d_t_pose)
                for t, pose in expected.pairs
            ]
            if not frames:
                raise ValueError("no frames could be compared")
            verdict = classify_run(frames, flag_fraction=cfg.flag_fraction)
            red_flags = sum(f.flags.count(RED) for f in frames)
            joints = []
            for j, name in enumerate(JOINT_NAMES):
                red = sum(1 for f in frames if f.flags[j] == RED)
                unmasked = sum(1 for f in frames if f.flags[j] != MASKED)
                mean_error = float(
                    sum(f.errors[j] for f in frames) / unmasked if unmasked else 0.0
                )
                joints.append(
                    schemas.JointVerdict(
                        joint=name,
                        mean_error=mean_error,
                        red_frames=red,
                        unmasked_frames=unmasked,
                        erroneous=verdict.erroneous[j],
                    )
                )
            accuracy = None
            if req.truth_path:
                truth = aggregate_flags(read_truth(Path(req.truth_path)), cfg.flag_fraction)
                accuracy = score_against_ground_truth(verdict, truth)

            csv_path = None
            if req.out_csv:
                lines = ["joint,mean_error,red_frames,unmasked_frames,erroneous"]
                for jv in joints:
                    lines.append(
                        f"{jv.joint},{jv.mean_error:.6f},{jv.red_frames},{jv.unmasked_frames},{int(jv.erroneous)}"
                    )
                Path(req.out_csv).write_text("\n".join(lines) + "\n")
                csv_path = req.out_csv
                _write_manifest(
                    Path(req.out_csv + ".manifest.txt"),
                    "feedback",
                    cfg,
                    {
                        "snapshot_path": req.snapshot_path,
                        "seq_path": req.seq_path,
                        "red_flags": red_flags,
                        "lineage": expected.lineage,
                    },
                )
            overlays = 0
            if req.overlay_dir:
                overlay_dir = Path(req.overlay_dir)
                overlay_dir.mkdir(parents=True, exist_ok=True)
                for (t, pose), fb in zip(expected.pairs, frames):
                    svg = render_overlay(seq.frames[t], pose, fb.flags, dims=seq.source_dims)
                    (overlay_dir / f"{seq.label}_{t}.svg").write_text(svg)
                    overlays += 1
        return schemas.FeedbackResponse(
            frames_compared=len(frames),
            red_flags=red_flags,
            erroneous_joints=[JOINT_NAMES[j] for j, e in enumerate(verdict.erroneous) if e],
            lineage=expected.lineage,
            accuracy=accuracy,
            joints=joints,
            csv_path=csv_path,
            overlays_written=overlays,
        )

    @app.post("/predict", response_model=schemas.PredictResponse)
    def predict(req: schemas.PredictRequest):
        cfg = _resolve(req)
        with _stage("predict"):
            model = load_file(req.snapshot_path)
            net = model.network
            start = req.start if req.start is not None else net.node_ids()[0]
            if model.variant == "gamma":
                node_ids, poses = gamma_predict(net, start, req.steps)
                stalled = len(node_ids) >= 2 and node_ids[-1] == node_ids[-2]
            elif model.variant == "episodic":
                node_ids, poses, stalled = episodic_replay(net, model.transitions, start, req.steps)
            else:
                exercise_id = sorted(model.store.trajectories)[0]
                poses = replay(model.store, net, exercise_id)[: req.steps]
                node_ids = model.store.trajectories[exercise_id].bmu_sequence[: req.steps]
                stalled = False
            csv_path = None
            if req.out_csv:
                coords = ",".join(f"x{j},y{j}" for j in range(25))
                lines = [f"step,node_id,{coords}"]
                for step, (node_id, pose) in enumerate(zip(node_ids, poses)):
                    values = ",".join(f"{v:.9f}" for v in pose)
                    lines.append(f"{step},{node_id},{values}")
                Path(req.out_csv).write_text("\n".join(lines) + "\n")
                csv_path = req.out_csv
                _write_manifest(
                    Path(req.out_csv + ".manifest.txt"),
                    "predict",
                    cfg,
                    {"snapshot_path": req.snapshot_path, "start": start, "steps": req.steps},
                )
        return schemas.PredictResponse(node_ids=node_ids, stalled=stalled, csv_path=csv_path)

    @app.post("/experiment", response_model=schemas.ExperimentResponse)
    def experiment(req: schemas.ExperimentRequest):
        cfg = _resolve(req)
        with _stage("experiment"):
            table, outputs = run_experiment(req.number, req.dataset_dir, req.out_dir, cfg)
        return schemas.ExperimentResponse(
            csv_path=str(outputs["csv"]),
            manifest_path=str(outputs["manifest"]),
            averages=table.averages(),
        )

    return app
