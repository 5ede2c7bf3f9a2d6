"""Versioned persistence for trained models: canonical, human-readable, exact.

Documents are JSON with sorted keys and full-precision floats, so equal
states serialize to identical bytes and reload bit-exactly. Loading
validates structural invariants before returning.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .episodic import TransitionMatrix
from .model import GwrModel
from .network import GwrConfig, GwrNetwork, GwrNode, InvariantViolation, check_invariants
from .subnode import ExerciseStore, ExerciseTrajectory, SubnodeLineage

FORMAT_VERSION = 1
SUFFIX = ".gwr"


class SnapshotError(RuntimeError):
    pass


def _vec(a: np.ndarray) -> list:
    return [float(v) for v in np.asarray(a).reshape(-1)]


def _mat(a: np.ndarray) -> list:
    return [_vec(row) for row in np.asarray(a)]


def model_to_document(model: GwrModel) -> dict:
    net = model.network
    doc = {
        "kind": "posegwr-snapshot",
        "format_version": FORMAT_VERSION,
        "variant": model.variant,
        "config": asdict(net.config) | {"alpha_k": list(net.config.alpha_k)},
        "dim": net.dim,
        "rng_seed": net.rng_seed,
        "next_node_id": net.next_node_id,
        "nodes": [
            {
                "id": node.id,
                "h": float(node.h),
                "w": _vec(node.w),
                "c": _mat(node.c),
            }
            for node in (net.nodes[i] for i in net.node_ids())
        ],
        "edges": [[a, b, age] for (a, b), age in sorted(net.edges.items())],
        "global_context": _mat(net.global_context),
        "prev_bmu": net.prev_bmu,
        "prev_w": None if net.prev_w is None else _vec(net.prev_w),
        "prev_c": None if net.prev_c is None else _mat(net.prev_c),
        "transitions": None,
        "store": None,
    }
    if model.transitions is not None:
        doc["transitions"] = [[i, j, n] for (i, j), n in sorted(model.transitions.counts.items())]
    if model.store is not None:
        store = model.store
        doc["store"] = {
            "d_t_learning": store.d_t_learning,
            "trajectories": [
                {"exercise_id": tr.exercise_id, "bmu_sequence": list(tr.bmu_sequence)}
                for tr in (store.trajectories[k] for k in sorted(store.trajectories))
            ],
            "lineages": {
                str(ex): [
                    {
                        "lineage_id": lin.lineage_id,
                        "weights": [_vec(w) for w in lin.weights],
                        "contexts": [_mat(c) for c in lin.contexts],
                    }
                    for lin in store.lineages[ex]
                ]
                for ex in sorted(store.lineages)
            },
        }
    return doc


def save(model: GwrModel) -> str:
    return json.dumps(model_to_document(model), sort_keys=True, indent=1) + "\n"


def _validate_store(store: ExerciseStore, net: GwrNetwork) -> None:
    for ex, trajectory in store.trajectories.items():
        for b in trajectory.bmu_sequence:
            if b not in net.nodes:
                raise InvariantViolation(f"trajectory {ex} references missing node {b}")
        for lineage in store.lineages.get(ex, []):
            if len(lineage.weights) != len(trajectory):
                raise InvariantViolation(
                    f"lineage {lineage.lineage_id} of exercise {ex} does not match the trajectory length"
                )


def load(text: str | bytes) -> GwrModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"corrupt snapshot document: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("kind") != "posegwr-snapshot":
        raise SnapshotError("not a snapshot document")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise SnapshotError(f"unsupported snapshot format version: {version!r}")
    try:
        raw_cfg = dict(doc["config"])
        raw_cfg["alpha_k"] = tuple(raw_cfg["alpha_k"])
        config = GwrConfig(**raw_cfg)
        dim = int(doc["dim"])
        net = GwrNetwork(
            config=config,
            dim=dim,
            rng_seed=int(doc["rng_seed"]),
            next_node_id=int(doc["next_node_id"]),
        )
        for entry in doc["nodes"]:
            node = GwrNode(
                id=int(entry["id"]),
                w=np.asarray(entry["w"], dtype=np.float64),
                c=np.asarray(entry["c"], dtype=np.float64),
                h=float(entry["h"]),
            )
            net.nodes[node.id] = node
        for a, b, age in doc["edges"]:
            net.edges[(int(a), int(b))] = int(age)
        net.global_context = np.asarray(doc["global_context"], dtype=np.float64)
        net.prev_bmu = doc["prev_bmu"]
        net.prev_w = None if doc["prev_w"] is None else np.asarray(doc["prev_w"], dtype=np.float64)
        net.prev_c = None if doc["prev_c"] is None else np.asarray(doc["prev_c"], dtype=np.float64)

        model = GwrModel(variant=doc["variant"], network=net)
        if doc.get("transitions") is not None:
            model.transitions = TransitionMatrix(
                counts={(int(i), int(j)): int(n) for i, j, n in doc["transitions"]}
            )
        if doc.get("store") is not None:
            raw = doc["store"]
            store = ExerciseStore(d_t_learning=float(raw["d_t_learning"]))
            for tr in raw["trajectories"]:
                ex = int(tr["exercise_id"])
                store.trajectories[ex] = ExerciseTrajectory(
                    exercise_id=ex, bmu_sequence=[int(b) for b in tr["bmu_sequence"]]
                )
                store.lineages.setdefault(ex, [])
            for ex, lineages in raw["lineages"].items():
                store.lineages[int(ex)] = [
                    SubnodeLineage(
                        lineage_id=int(lin["lineage_id"]),
                        weights=[np.asarray(w, dtype=np.float64) for w in lin["weights"]],
                        contexts=[np.asarray(c, dtype=np.float64) for c in lin["contexts"]],
                    )
                    for lin in lineages
                ]
            model.store = store
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"malformed snapshot field: {exc}") from exc

    check_invariants(net)
    if model.store is not None:
        _validate_store(model.store, net)
    if doc["variant"] not in ("gamma", "episodic", "subnode"):
        raise SnapshotError(f"unknown variant tag {doc['variant']!r}")
    return model


def save_file(model: GwrModel, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(save(model))
    return path


def load_file(path: str | Path) -> GwrModel:
    path = Path(path)
    if not path.exists():
        raise SnapshotError(f"snapshot file not found: {path}")
    return load(path.read_text())
