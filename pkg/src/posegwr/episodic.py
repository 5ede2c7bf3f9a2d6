"""Episodic successor memory: transition counts between consecutively active nodes.

Prediction returns each node's most frequent successor, never the node
itself, which makes replay skip over held poses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import GwrNetwork, TrainLog


class NoSuccessorError(LookupError):
    """The transition row has no off-diagonal positive entry."""


@dataclass
class TransitionMatrix:
    counts: dict[tuple[int, int], int] = field(default_factory=dict)

    def record(self, i: int, j: int) -> None:
        self.counts[(i, j)] = self.counts.get((i, j), 0) + 1

    def row(self, i: int) -> dict[int, int]:
        return {j: n for (a, j), n in self.counts.items() if a == i}


def record_transition(m: TransitionMatrix, i: int, j: int) -> TransitionMatrix:
    m.record(i, j)
    return m


def record_from_log(m: TransitionMatrix, log: TrainLog) -> TransitionMatrix:
    """Count consecutive BMU pairs of every epoch (epochs never chain into each other)."""
    for bmus in log.epoch_bmus:
        for i, j in zip(bmus, bmus[1:]):
            m.record(i, j)
    return m


def episodic_predict(m: TransitionMatrix, i: int, valid: set[int] | None = None) -> int:
    """Most frequent successor of i, excluding i itself; ties pick the lower id.

    ``valid`` restricts candidates to live node ids so retired nodes are
    never predicted.
    """
    best = None
    best_count = 0
    for (a, j), count in m.counts.items():
        if a != i or j == i or count <= 0:
            continue
        if valid is not None and j not in valid:
            continue
        if count > best_count or (count == best_count and (best is None or j < best)):
            best = j
            best_count = count
    if best is None:
        raise NoSuccessorError(f"node {i} has no recorded successor")
    return best


def episodic_replay(
    net: GwrNetwork, m: TransitionMatrix, start: int, steps: int
) -> tuple[list[int], list[np.ndarray], bool]:
    """Chain successor predictions, emitting each node's weight as a pose.

    The start node's pose comes first. Replay truncates (flag True) when a
    node has no valid successor before ``steps`` poses were emitted.
    """
    if start not in net.nodes:
        raise KeyError(f"unknown start node {start}")
    valid = set(net.nodes)
    node_ids = [start]
    poses = [net.nodes[start].w.copy()]
    truncated = False
    current = start
    while len(node_ids) < steps:
        try:
            current = episodic_predict(m, current, valid)
        except NoSuccessorError:
            truncated = True
            break
        node_ids.append(current)
        poses.append(net.nodes[current].w.copy())
    return node_ids, poses, truncated
