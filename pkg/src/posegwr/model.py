"""Trained model bundle: a network plus its variant-specific recall memory."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .episodic import NoSuccessorError, TransitionMatrix, episodic_predict, record_from_log
from .network import GwrNetwork, TrainLog, bmu_trace, gamma_predict, init_network, train
from .pose import PoseSequence
from .subnode import ExerciseStore, record_trajectory, replay, select_lineage


@dataclass
class GwrModel:
    variant: str  # gamma | episodic | subnode
    network: GwrNetwork
    transitions: TransitionMatrix | None = None
    store: ExerciseStore | None = None


def train_model(
    seq: PoseSequence,
    run_config: RunConfig | None = None,
    variant: str | None = None,
    exercise_id: int = 0,
    epochs: int | None = None,
) -> tuple[GwrModel, TrainLog]:
    """Train a fresh network of the given variant on one sequence.

    Episodic models accumulate transition counts over all epochs; subnode
    models record the final-epoch BMU trajectory for the exercise id.
    """
    run_config = run_config or RunConfig()
    variant = variant or run_config.variant
    cfg = run_config.gwr(variant)
    samples = seq.samples()
    if len(samples) < 2:
        raise ValueError("training needs a sequence of at least 2 frames")
    net = init_network(samples[0], samples[1], cfg, seed=run_config.seed)
    log = train(net, seq, epochs=epochs)

    model = GwrModel(variant=variant, network=net)
    if variant == "episodic":
        model.transitions = record_from_log(TransitionMatrix(), log)
    elif variant == "subnode":
        model.store = ExerciseStore(d_t_learning=run_config.d_t_learning)
        record_trajectory(model.store, net, exercise_id, log.final_epoch_bmus)
    return model, log


@dataclass
class ExpectedPoses:
    """Frame-aligned expected poses: (frame index, 50-component pose) pairs."""

    pairs: list[tuple[int, np.ndarray]]
    lineage: int | None = None
    truncated: bool = False


def expected_poses(
    model: GwrModel,
    seq: PoseSequence,
    exercise_id: int = 0,
    gamma_horizon: int = 5,
    lineage: int | None = None,
) -> ExpectedPoses:
    """The pose each architecture puts up against frame t of the sequence.

    Subnode models replay the nearest lineage frame-synchronously. Episodic
    models show the most frequent successor of frame t's BMU (frames whose
    BMU has no recorded successor are skipped). The context-merge variant
    shows the pose predicted ``gamma_horizon`` steps ahead of frame t's BMU,
    so its error measures how far the autonomous rollout drifts from the
    live pose.
    """
    net = model.network
    samples = seq.samples()
    if model.variant == "subnode":
        chosen = lineage
        if chosen is None:
            chosen, _ = select_lineage(model.store, net, exercise_id, samples[0])
        poses = replay(model.store, net, exercise_id, chosen)
        pairs = [(t, poses[t]) for t in range(min(len(poses), len(samples)))]
        return ExpectedPoses(pairs=pairs, lineage=chosen)
    if model.variant == "episodic":
        trace = bmu_trace(net, seq)
        valid = set(net.nodes)
        pairs = []
        skipped = False
        for t in range(len(samples)):
            try:
                successor = episodic_predict(model.transitions, trace[t], valid)
            except NoSuccessorError:
                skipped = True
                continue
            pairs.append((t, net.nodes[successor].w.copy()))
        return ExpectedPoses(pairs=pairs, truncated=skipped)
    trace = bmu_trace(net, seq)
    pairs = gamma_rollout_pairs(net, trace, gamma_horizon)
    return ExpectedPoses(pairs=pairs)


def gamma_rollout_pairs(
    net: GwrNetwork, trace: list[int], horizon: int
) -> list[tuple[int, np.ndarray]]:
    """Per frame t, the pose the rollout from frame t's BMU reaches after
    ``horizon`` autonomous steps. Rollouts are shared across equal BMUs."""
    rollouts: dict[int, list[np.ndarray]] = {}
    pairs = []
    for t, start in enumerate(trace):
        if start not in rollouts:
            _, rollouts[start] = gamma_predict(net, start, steps=horizon)
        elif len(rollouts[start]) < horizon:
            _, rollouts[start] = gamma_predict(net, start, steps=horizon)
        pairs.append((t, rollouts[start][horizon - 1]))
    return pairs
