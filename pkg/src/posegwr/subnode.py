"""Exercise trajectories and subnode lineages for continual adaptation.

An exercise is stored as the verbatim BMU sequence of the final training
epoch, so held poses replay frame-synchronously. A new body shape is
absorbed by attaching one subnode per trajectory position (a lineage)
whose weights are the new performer's baseline poses; parent nodes, edges
and earlier lineages are never touched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .network import GwrNetwork
from .pose import PoseSequence, SampleVector

log = logging.getLogger(__name__)

PARENT_LINEAGE = 0


class UnknownExerciseError(LookupError):
    pass


class UnknownLineageError(LookupError):
    pass


@dataclass
class ExerciseTrajectory:
    exercise_id: int
    bmu_sequence: list[int]

    def __len__(self) -> int:
        return len(self.bmu_sequence)


@dataclass
class SubnodeLineage:
    lineage_id: int
    weights: list[np.ndarray]  # one per trajectory position
    contexts: list[np.ndarray]  # copied from the parent nodes

    def __len__(self) -> int:
        return len(self.weights)


@dataclass
class ExerciseStore:
    d_t_learning: float = 0.15
    trajectories: dict[int, ExerciseTrajectory] = field(default_factory=dict)
    lineages: dict[int, list[SubnodeLineage]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def record_trajectory(
    store: ExerciseStore, net: GwrNetwork, exercise_id: int, final_epoch_bmus: list[int]
) -> ExerciseTrajectory:
    """Store the final-epoch BMU sequence verbatim, consecutive duplicates included."""
    if not final_epoch_bmus:
        raise ValueError("trajectory must be nonempty")
    missing = [b for b in final_epoch_bmus if b not in net.nodes]
    if missing:
        raise ValueError(f"trajectory references pruned nodes: {sorted(set(missing))}")
    if exercise_id in store.trajectories:
        message = f"exercise {exercise_id} re-recorded; previous trajectory replaced"
        store.warnings.append(message)
        log.warning(message)
        store.lineages[exercise_id] = []
    trajectory = ExerciseTrajectory(exercise_id=exercise_id, bmu_sequence=list(final_epoch_bmus))
    store.trajectories[exercise_id] = trajectory
    store.lineages.setdefault(exercise_id, [])
    return trajectory


def _masked_norm(x: SampleVector, w: np.ndarray) -> float:
    active = ~x.component_mask
    if not active.any():
        return 0.0
    return float(np.linalg.norm(x.values[active] - w[active]))


def _first_weight(store: ExerciseStore, net: GwrNetwork, exercise_id: int, lineage: int) -> np.ndarray:
    trajectory = store.trajectories[exercise_id]
    if lineage == PARENT_LINEAGE:
        return net.nodes[trajectory.bmu_sequence[0]].w
    return store.lineages[exercise_id][lineage - 1].weights[0]


def select_lineage(
    store: ExerciseStore, net: GwrNetwork, exercise_id: int, first_frame: SampleVector
) -> tuple[int, float]:
    """Lineage whose first pose is nearest the given frame (parents are lineage 0)."""
    if exercise_id not in store.trajectories:
        raise UnknownExerciseError(f"no trajectory recorded for exercise {exercise_id}")
    candidates = [PARENT_LINEAGE] + [
        lineage.lineage_id for lineage in store.lineages.get(exercise_id, [])
    ]
    best = PARENT_LINEAGE
    best_d = None
    for lineage in candidates:
        d = _masked_norm(first_frame, _first_weight(store, net, exercise_id, lineage))
        if best_d is None or d < best_d:
            best, best_d = lineage, d
    return best, best_d


def needs_adaptation(
    store: ExerciseStore, net: GwrNetwork, exercise_id: int, first_frame: SampleVector
) -> tuple[bool, int, float]:
    """Whether the first frame is too far from every known body shape.

    Returns (adaptation needed, best lineage, its first-frame pose distance);
    adaptation triggers strictly above the learning threshold.
    """
    best, d = select_lineage(store, net, exercise_id, first_frame)
    return d > store.d_t_learning, best, d


def _resample(values: np.ndarray, masks: np.ndarray, length: int) -> tuple[np.ndarray, np.ndarray]:
    """Linearly resample per-component values (and nearest-neighbor masks) to length."""
    n = values.shape[0]
    if n == length:
        return values, masks
    src = np.linspace(0.0, 1.0, n)
    dst = np.linspace(0.0, 1.0, length)
    out = np.empty((length, values.shape[1]))
    for col in range(values.shape[1]):
        out[:, col] = np.interp(dst, src, values[:, col])
    nearest = np.rint(dst * (n - 1)).astype(int)
    return out, masks[nearest]


def adapt_baseline(
    store: ExerciseStore, net: GwrNetwork, exercise_id: int, baseline: PoseSequence
) -> int:
    """Attach a new lineage holding the baseline performance, one subnode per position.

    The offset update collapses each subnode weight to the aligned baseline
    frame; contexts are copied from the parents. Components of masked
    baseline joints keep the parent weight. Nothing pre-existing changes.
    """
    if exercise_id not in store.trajectories:
        raise UnknownExerciseError(f"no trajectory recorded for exercise {exercise_id}")
    if len(baseline) == 0:
        raise ValueError("baseline sequence is empty")
    trajectory = store.trajectories[exercise_id]
    samples = baseline.samples()
    values = np.stack([s.values for s in samples])
    masks = np.stack([s.mask for s in samples])
    values, masks = _resample(values, masks, len(trajectory))

    weights = []
    contexts = []
    for j, node_id in enumerate(trajectory.bmu_sequence):
        parent = net.nodes[node_id]
        w = parent.w.copy()
        active = ~np.repeat(masks[j], 2)
        w[active] = parent.w[active] + (values[j, active] - parent.w[active])
        weights.append(w)
        contexts.append(parent.c.copy())

    lineage = SubnodeLineage(
        lineage_id=len(store.lineages[exercise_id]) + 1,
        weights=weights,
        contexts=contexts,
    )
    store.lineages[exercise_id].append(lineage)
    return lineage.lineage_id


def replay(
    store: ExerciseStore, net: GwrNetwork, exercise_id: int, lineage: int = PARENT_LINEAGE
) -> list[np.ndarray]:
    """Expected pose per trajectory position: parent weights for lineage 0,
    the lineage's subnode weights otherwise. Always exactly one pose per frame."""
    if exercise_id not in store.trajectories:
        raise UnknownExerciseError(f"no trajectory recorded for exercise {exercise_id}")
    trajectory = store.trajectories[exercise_id]
    if lineage == PARENT_LINEAGE:
        return [net.nodes[b].w.copy() for b in trajectory.bmu_sequence]
    lineages = store.lineages.get(exercise_id, [])
    if not 1 <= lineage <= len(lineages):
        raise UnknownLineageError(f"exercise {exercise_id} has no lineage {lineage}")
    return [w.copy() for w in lineages[lineage - 1].weights]
