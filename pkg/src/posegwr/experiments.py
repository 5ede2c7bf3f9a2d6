"""Evaluation harness: multi-step prediction error, variant comparison,
continual learning across avatars, and robustness under view perturbations.

Each experiment emits a MetricTable that serializes to CSV with Average and
Std. Dev. footer rows plus a manifest naming the config and dataset digests.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .avatars import (
    PERTURBATIONS,
    dataset_digest,
    generate_exercise,
    make_avatar,
    perturb,
    read_truth,
    sequence_filename,
    truth_filename,
    write_truth,
)
from .body25 import JOINT_NAMES, NUM_JOINTS
from .config import RunConfig
from .feedback import aggregate_flags, classify_run, joint_errors, score_against_ground_truth
from .model import GwrModel, expected_poses, train_model
from .network import bmu_trace, gamma_predict
from .pose import PoseSequence, flatten, load_sequence, save_sequence
from .subnode import adapt_baseline, needs_adaptation, select_lineage

DEFAULT_HORIZONS = (1, 5, 10, 25, 50, 100)
VARIANT_ORDER = ("correct", "arms", "head", "legs", "side", "speed")
PERTURBATION_ORDER = ("centered", "rotated", "translated", "rotated_translated")


@dataclass
class MetricTable:
    experiment: str
    columns: list[str]
    rows: list[tuple[str, dict[str, float]]] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add_row(self, label: str, values: dict[str, float]) -> None:
        self.rows.append((label, values))

    def column(self, name: str) -> list[float]:
        return [values[name] for _, values in self.rows]

    def to_csv(self) -> str:
        lines = ["label," + ",".join(self.columns)]
        for label, values in self.rows:
            lines.append(label + "," + ",".join(f"{values[c]:.6f}" for c in self.columns))
        averages = {c: statistics.fmean(self.column(c)) for c in self.columns}
        stds = {c: statistics.pstdev(self.column(c)) for c in self.columns}
        lines.append("Average," + ",".join(f"{averages[c]:.6f}" for c in self.columns))
        lines.append("Std. Dev.," + ",".join(f"{stds[c]:.6f}" for c in self.columns))
        return "\n".join(lines) + "\n"

    def averages(self) -> dict[str, float]:
        return {c: statistics.fmean(self.column(c)) for c in self.columns}


def _mean_joint_errors(
    seq: PoseSequence, pairs: list[tuple[int, np.ndarray]]
) -> tuple[np.ndarray, np.ndarray]:
    """Per-joint mean error over the paired frames, in pixels and normalized units."""
    width, height = seq.source_dims
    err_px = np.zeros(NUM_JOINTS)
    err_norm = np.zeros(NUM_JOINTS)
    count = np.zeros(NUM_JOINTS)
    for t, pose in pairs:
        frame = seq.frames[t]
        diff = frame.coords() - np.asarray(pose).reshape(NUM_JOINTS, 2)
        unmasked = ~frame.mask
        err_norm[unmasked] += np.linalg.norm(diff[unmasked], axis=1)
        err_px[unmasked] += np.linalg.norm(diff[unmasked] * [width, height], axis=1)
        count[unmasked] += 1
    valid = count > 0
    err_px[valid] /= count[valid]
    err_norm[valid] /= count[valid]
    return err_px, err_norm


def exp1_multistep(
    model: GwrModel, seq: PoseSequence, horizons: tuple[int, ...] = DEFAULT_HORIZONS
) -> MetricTable:
    """Average joint-wise drift of the h-step rollout against the live pose.

    At every frame the rollout restarts from the frame's true BMU and runs
    h steps autonomously; the predicted pose is scored against the frame it
    was made at, so horizons share the full frame coverage and stalled
    rollouts make neighboring columns agree.
    """
    length = len(seq)
    for h in horizons:
        if h > length:
            raise ValueError(f"horizon {h} exceeds the {length}-frame sequence")
    trace = bmu_trace(model.network, seq)
    columns = [f"{h}_px" for h in horizons] + [f"{h}_norm" for h in horizons]
    table = MetricTable(experiment="exp1_multistep", columns=columns)
    rollouts = {start: gamma_predict(model.network, start, steps=max(horizons))[1] for start in set(trace)}
    per_joint = {}
    for h in horizons:
        pairs = [(t, rollouts[start][h - 1]) for t, start in enumerate(trace)]
        per_joint[h] = _mean_joint_errors(seq, pairs)
    for j, name in enumerate(JOINT_NAMES):
        values = {f"{h}_px": per_joint[h][0][j] for h in horizons}
        values |= {f"{h}_norm": per_joint[h][1][j] for h in horizons}
        table.add_row(name, values)
    return table


def exp2_compare(seq: PoseSequence, run_config: RunConfig, gamma_horizon: int = 5) -> MetricTable:
    """Per-joint error of each variant's recall against the training sequence."""
    columns = [f"{v}_px" for v in ("gamma", "episodic", "subnode")] + [
        f"{v}_norm" for v in ("gamma", "episodic", "subnode")
    ]
    table = MetricTable(experiment="exp2_compare", columns=columns)
    errors = {}
    for variant in ("gamma", "episodic", "subnode"):
        model, _ = train_model(seq, run_config, variant=variant)
        expected = expected_poses(model, seq, gamma_horizon=gamma_horizon)
        errors[variant] = _mean_joint_errors(seq, expected.pairs)
        if variant == "episodic":
            table.metadata["episodic_length"] = len(expected.pairs)
            table.metadata["episodic_truncated"] = expected.truncated
    for j, name in enumerate(JOINT_NAMES):
        values = {f"{v}_px": errors[v][0][j] for v in errors}
        values |= {f"{v}_norm": errors[v][1][j] for v in errors}
        table.add_row(name, values)
    return table


def ensure_dataset(
    dataset_dir: str | Path,
    run_config: RunConfig,
    seeds: tuple[int, ...] | None = None,
    variants: tuple[str, ...] = VARIANT_ORDER,
    perturbations: tuple[str, ...] = ("centered",),
) -> list[Path]:
    """Generate any missing (avatar, variant, perturbation) files; return all paths."""
    dataset_dir = Path(dataset_dir)
    dataset_dir.mkdir(parents=True, exist_ok=True)
    seeds = seeds or run_config.avatar_seeds
    paths = []
    for seed in seeds:
        avatar = None
        for variant in variants:
            generated = None
            for pname in perturbations:
                seq_path = dataset_dir / sequence_filename(seed, variant, pname)
                tr_path = dataset_dir / truth_filename(seed, variant, pname)
                if not seq_path.exists() or not tr_path.exists():
                    if avatar is None:
                        avatar = make_avatar(seed)
                    if generated is None:
                        generated = generate_exercise(
                            avatar,
                            variant,
                            frames=run_config.frames,
                            d_t_pose=run_config.d_t_pose,
                            source_dims=run_config.source_dims,
                        )
                    seq, flags = generated
                    p = replace(PERTURBATIONS[pname], cm_to_px=run_config.cm_to_px)
                    out_seq, _ = perturb(seq, p)
                    save_sequence(out_seq, seq_path)
                    write_truth(tr_path, seed, variant, pname, flags)
                paths.extend([seq_path, tr_path])
    return paths


def _classify(
    model: GwrModel, seq: PoseSequence, truth_flags: np.ndarray, run_config: RunConfig
) -> float:
    """Accuracy of the per-joint verdict against the ground-truth flags."""
    first = flatten(seq.frames[0])
    lineage, _ = select_lineage(model.store, model.network, 0, first)
    expected = expected_poses(model, seq, lineage=lineage)
    frames = [
        joint_errors(seq.frames[t], pose, d_t_pose=run_config.d_t_pose)
        for t, pose in expected.pairs
    ]
    verdict = classify_run(frames, flag_fraction=run_config.flag_fraction)
    truth = aggregate_flags(truth_flags, flag_fraction=run_config.flag_fraction)
    return score_against_ground_truth(verdict, truth)


def _load_cell(dataset_dir: Path, seed: int, variant: str, pname: str):
    seq = load_sequence(dataset_dir / sequence_filename(seed, variant, pname))
    flags = read_truth(dataset_dir / truth_filename(seed, variant, pname))
    return seq, flags


def _train_and_adapt(dataset_dir: Path, run_config: RunConfig) -> tuple[GwrModel, list[dict]]:
    """Train on the first avatar's correct run, then absorb the others in order."""
    seeds = run_config.avatar_seeds
    base_seq, _ = _load_cell(dataset_dir, seeds[0], "correct", "centered")
    model, _ = train_model(base_seq, run_config, variant="subnode")
    adaptations = []
    for seed in seeds:
        seq, _ = _load_cell(dataset_dir, seed, "correct", "centered")
        needed, _, d = needs_adaptation(model.store, model.network, 0, flatten(seq.frames[0]))
        if needed:
            adapt_baseline(model.store, model.network, 0, seq)
        adaptations.append({"seed": seed, "adapted": needed, "distance": round(d, 6)})
    return model, adaptations


def exp3_continual(dataset_dir: str | Path, run_config: RunConfig) -> MetricTable:
    """Per-avatar classification accuracy for every variant after sequential adaptation."""
    dataset_dir = Path(dataset_dir)
    seeds = run_config.avatar_seeds
    base_seq, _ = _load_cell(dataset_dir, seeds[0], "correct", "centered")
    model, _ = train_model(base_seq, run_config, variant="subnode")

    table = MetricTable(experiment="exp3_continual", columns=list(VARIANT_ORDER))
    adaptations = []
    for seed in seeds:
        correct_seq, _ = _load_cell(dataset_dir, seed, "correct", "centered")
        needed, best, d = needs_adaptation(
            model.store, model.network, 0, flatten(correct_seq.frames[0])
        )
        if needed:
            adapt_baseline(model.store, model.network, 0, correct_seq)
        adaptations.append({"seed": seed, "adapted": needed, "distance": round(d, 6)})
        values = {}
        for variant in VARIANT_ORDER:
            seq, flags = _load_cell(dataset_dir, seed, variant, "centered")
            values[variant] = _classify(model, seq, flags, run_config)
        table.add_row(f"Avatar {seed:02d}", values)

    # Forgetting check: the first avatar's verdicts must survive all later adaptations.
    recheck = {}
    for variant in VARIANT_ORDER:
        seq, flags = _load_cell(dataset_dir, seeds[0], variant, "centered")
        recheck[variant] = _classify(model, seq, flags, run_config)
    original = dict(table.rows[0][1])
    table.metadata["adaptations"] = adaptations
    table.metadata["first_avatar_recheck"] = recheck
    table.metadata["first_avatar_recheck_identical"] = recheck == original
    return table


def exp4_robustness(dataset_dir: str | Path, run_config: RunConfig) -> MetricTable:
    """Per-variant average accuracy under the four positioning settings."""
    dataset_dir = Path(dataset_dir)
    model, adaptations = _train_and_adapt(dataset_dir, run_config)
    table = MetricTable(experiment="exp4_robustness", columns=list(PERTURBATION_ORDER))
    cells = {}
    for variant in VARIANT_ORDER:
        values = {}
        for pname in PERTURBATION_ORDER:
            accs = []
            for seed in run_config.avatar_seeds:
                seq, flags = _load_cell(dataset_dir, seed, variant, pname)
                acc = _classify(model, seq, flags, run_config)
                accs.append(acc)
                cells[(seed, variant, pname)] = acc
            values[pname] = statistics.fmean(accs)
        table.add_row(variant, values)
    table.metadata["adaptations"] = adaptations
    table.metadata["cells"] = {
        f"avatar{seed:02d}/{variant}/{pname}": round(acc, 6)
        for (seed, variant, pname), acc in cells.items()
    }
    return table


def write_outputs(
    table: MetricTable, out_dir: str | Path, run_config: RunConfig, dataset_paths: list[Path]
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{table.experiment}.csv"
    csv_path.write_text(table.to_csv())
    manifest_path = out_dir / f"{table.experiment}.manifest.txt"
    lines = [
        f"experiment: {table.experiment}",
        f"config_digest: {run_config.digest()}",
        f"dataset_digest: {dataset_digest(dataset_paths)}",
    ]
    for key, value in sorted(table.metadata.items()):
        if key == "cells":
            continue
        lines.append(f"{key}: {value}")
    manifest_path.write_text("\n".join(lines) + "\n")
    return {"csv": csv_path, "manifest": manifest_path}


def run_experiment(
    number: int, dataset_dir: str | Path, out_dir: str | Path, run_config: RunConfig
) -> tuple[MetricTable, dict[str, Path]]:
    """Train, evaluate and write the metric CSV plus manifest for one experiment."""
    dataset_dir = Path(dataset_dir)
    seeds = run_config.avatar_seeds
    if number in (1, 2):
        paths = ensure_dataset(dataset_dir, run_config, seeds=(seeds[0],), variants=("correct",))
        seq, _ = _load_cell(dataset_dir, seeds[0], "correct", "centered")
        if number == 1:
            model, _ = train_model(seq, run_config, variant="gamma")
            horizons = tuple(h for h in DEFAULT_HORIZONS if h <= len(seq))
            table = exp1_multistep(model, seq, horizons)
        else:
            table = exp2_compare(seq, run_config)
    elif number == 3:
        paths = ensure_dataset(dataset_dir, run_config)
        table = exp3_continual(dataset_dir, run_config)
    elif number == 4:
        paths = ensure_dataset(dataset_dir, run_config, perturbations=tuple(PERTURBATION_ORDER))
        table = exp4_robustness(dataset_dir, run_config)
    else:
        raise ValueError(f"unknown experiment {number}; expected 1-4")
    return table, write_outputs(table, out_dir, run_config, paths)
