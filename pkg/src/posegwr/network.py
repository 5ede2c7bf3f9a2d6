"""Growing self-organizing network with temporal context.

The network grows a node whenever activity and habituation both fall below
their thresholds, maintains an aging edge topology between consecutive
best-matching units, and keeps K recursive context vectors per node so the
winner search is sensitive to temporal order. Multi-step prediction chains
a context-merge lookup from node to node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .pose import PoseSequence, SampleVector


class InvariantViolation(RuntimeError):
    """A structural network invariant does not hold."""


@dataclass(frozen=True)
class GwrConfig:
    alpha0: float = 0.5
    alpha_k: tuple[float, ...] = (0.1, 0.1, 0.1, 0.1, 0.1)
    beta: float = 0.5
    K: int = 5
    eps_b: float = 0.2
    eps_n: float = 0.001
    kappa: float = 1.05
    tau_b: float = 0.3
    tau_n: float = 0.1
    a_t: float = 0.99
    h_t: float = 0.3
    mu_age: int = 20
    mu_size: int = 200
    epochs: int = 3
    # First term of the context recursion: "weight" blends the previous
    # BMU's weight (default), "context" blends its k-th context instead.
    context_source: str = "weight"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("context depth K must be >= 1")
        if len(self.alpha_k) != self.K:
            raise ValueError(f"alpha_k must have K={self.K} entries")
        for name in ("eps_b", "eps_n", "kappa", "tau_b", "tau_n"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.a_t <= 1:
            raise ValueError("a_t must be in (0, 1]")
        if not 0 < self.h_t <= 1:
            raise ValueError("h_t must be in (0, 1]")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must be in [0, 1]")
        if self.tau_b <= self.tau_n:
            raise ValueError("tau_b must exceed tau_n")
        if self.mu_age < 0:
            raise ValueError("mu_age must be >= 0")
        if self.mu_size < 2:
            raise ValueError("mu_size must be >= 2")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.context_source not in ("weight", "context"):
            raise ValueError("context_source must be 'weight' or 'context'")

    @classmethod
    def default(cls, K: int = 5, **overrides) -> "GwrConfig":
        """Table defaults with the total context coefficient split evenly."""
        cfg = cls(K=K, alpha_k=tuple(0.5 / K for _ in range(K)))
        return replace(cfg, **overrides) if overrides else cfg


@dataclass
class GwrNode:
    id: int
    w: np.ndarray  # (dim,)
    c: np.ndarray  # (K, dim)
    h: float = 1.0


@dataclass
class GwrNetwork:
    config: GwrConfig
    dim: int
    nodes: dict[int, GwrNode] = field(default_factory=dict)
    edges: dict[tuple[int, int], int] = field(default_factory=dict)  # (a<b) -> age
    global_context: np.ndarray = None
    prev_bmu: int | None = None
    # Pre-update snapshot of the previous BMU, used by the context recursion.
    prev_w: np.ndarray | None = None
    prev_c: np.ndarray | None = None
    next_node_id: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.global_context is None:
            self.global_context = np.zeros((self.config.K, self.dim))

    def node_ids(self) -> list[int]:
        return sorted(self.nodes)

    def neighbors(self, node_id: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == node_id:
                out.append(b)
            elif b == node_id:
                out.append(a)
        return sorted(out)

    def edge_key(self, a: int, b: int) -> tuple[int, int]:
        return (a, b) if a < b else (b, a)

    def reset_context(self) -> None:
        self.global_context = np.zeros((self.config.K, self.dim))
        self.prev_bmu = None
        self.prev_w = None
        self.prev_c = None


@dataclass(frozen=True)
class StepRecord:
    """Per-sample trace of one training step, kept for diagnostics and tests."""

    epoch: int
    t: int
    bmu: int
    second: int | None
    d_b: float
    activity: float
    h_b: float  # BMU habituation at decision time
    inserted: bool
    new_node: int | None
    nodes_before: int
    nodes_after: int


@dataclass
class TrainLog:
    epoch_bmus: list[list[int]] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def final_epoch_bmus(self) -> list[int]:
        return self.epoch_bmus[-1]


def init_network(x0: SampleVector, x1: SampleVector, config: GwrConfig, seed: int = 0) -> GwrNetwork:
    """Create a two-node network from the first two samples, no edges."""
    if x0.values.shape != x1.values.shape:
        raise ValueError("initial samples must share one dimension")
    dim = x0.values.shape[0]
    net = GwrNetwork(config=config, dim=dim, rng_seed=seed)
    for x in (x0, x1):
        node = GwrNode(
            id=net.next_node_id,
            w=np.array(x.values, dtype=np.float64),
            c=np.zeros((config.K, dim)),
            h=1.0,
        )
        net.nodes[node.id] = node
        net.next_node_id += 1
    return net


def _active_components(x: SampleVector) -> np.ndarray:
    return ~x.component_mask


def distance(x: SampleVector, node: GwrNode, C: np.ndarray, config: GwrConfig) -> float:
    """Context-augmented distance; masked joint components are excluded from every norm."""
    active = _active_components(x)
    if not active.any():
        return 0.0
    d = config.alpha0 * float(np.linalg.norm(x.values[active] - node.w[active]))
    for k in range(config.K):
        d += config.alpha_k[k] * float(np.linalg.norm(C[k, active] - node.c[k, active]))
    return d


def _distances_all(net: GwrNetwork, x: SampleVector) -> tuple[list[int], np.ndarray]:
    """Distances to every node, ordered by ascending node id."""
    ids = net.node_ids()
    active = _active_components(x)
    if not active.any():
        return ids, np.zeros(len(ids))
    W = np.stack([net.nodes[i].w for i in ids])
    Cn = np.stack([net.nodes[i].c for i in ids])
    cfg = net.config
    dw = np.linalg.norm(W[:, active] - x.values[active], axis=1)
    dc = np.linalg.norm(Cn[:, :, active] - net.global_context[:, active][None, :, :], axis=2)
    d = cfg.alpha0 * dw + dc @ np.asarray(cfg.alpha_k)
    return ids, d


def find_bmus(net: GwrNetwork, x: SampleVector) -> tuple[int, int]:
    """Best and second-best node ids; ties broken toward the lower id."""
    if len(net.nodes) < 2:
        raise ValueError("need at least 2 nodes to select a BMU pair")
    ids, d = _distances_all(net, x)
    order = np.argsort(d, kind="stable")  # ids are ascending, so ties pick the lower id
    return ids[order[0]], ids[order[1]]


def context_descriptors(
    prev_w: np.ndarray, prev_c: np.ndarray, config: GwrConfig
) -> np.ndarray:
    """Context vectors for the next step, recursing over the previous BMU.

    The k-th descriptor blends toward the previous BMU's (k-1)-th context,
    with its weight vector standing in at depth 0.
    """
    K = config.K
    beta = config.beta
    shifted = np.vstack([prev_w[None, :], prev_c[:-1]]) if K > 1 else prev_w[None, :]
    if config.context_source == "weight":
        first = np.broadcast_to(prev_w, (K, prev_w.shape[0]))
    else:
        first = prev_c
    return beta * first + (1.0 - beta) * shifted


def update_global_context(net: GwrNetwork) -> np.ndarray:
    """Refresh the global context from the previous BMU snapshot; zero when unset."""
    if net.prev_w is None:
        return net.global_context
    net.global_context = context_descriptors(net.prev_w, net.prev_c, net.config)
    return net.global_context


def activity(d_b: float) -> float:
    return math.exp(-d_b)


def habituate_value(h: float, tau: float, kappa: float) -> float:
    delta = tau * kappa * (1.0 - h) - tau
    return min(1.0, max(0.0, h + delta))


def habituate(node: GwrNode, role: str, config: GwrConfig) -> float:
    tau = config.tau_b if role == "bmu" else config.tau_n
    node.h = habituate_value(node.h, tau, config.kappa)
    return node.h


def update_node(node: GwrNode, x: SampleVector, C: np.ndarray, rate: float, config: GwrConfig) -> None:
    """Move weight and contexts toward the sample, gated by habituation.

    Masked components of the sample leave the corresponding weight
    components untouched; contexts always update in full.
    """
    step = rate * node.h
    active = _active_components(x)
    node.w[active] += step * (x.values[active] - node.w[active])
    node.c += step * (C - node.c)


def insert_node(net: GwrNetwork, x: SampleVector, b: int, s: int, C: np.ndarray) -> int:
    """Insert a node between the sample and the BMU, rewiring b and s to it.

    Masked sample components inherit the BMU weight instead of the midpoint
    so undetected joints cannot drag new nodes toward the (0, 0) sentinel.
    """
    node_b = net.nodes[b]
    active = _active_components(x)
    w = node_b.w.copy()
    w[active] = 0.5 * (x.values[active] + node_b.w[active])
    c = 0.5 * (C + node_b.c)
    r = net.next_node_id
    net.next_node_id += 1
    net.nodes[r] = GwrNode(id=r, w=w, c=c, h=1.0)
    net.edges[net.edge_key(r, b)] = 0
    net.edges[net.edge_key(r, s)] = 0
    net.edges.pop(net.edge_key(b, s), None)
    return r


def _age_incident(net: GwrNetwork, b: int) -> None:
    for key in net.edges:
        if b in key:
            net.edges[key] += 1


def _prune(net: GwrNetwork) -> None:
    for key, age in list(net.edges.items()):
        if age > net.config.mu_age:
            del net.edges[key]
    connected = {v for key in net.edges for v in key}
    for node_id in list(net.nodes):
        if node_id not in connected:
            del net.nodes[node_id]


def age_and_prune(net: GwrNetwork, b: int) -> None:
    """Age edges incident to b, drop over-age edges, remove isolated nodes."""
    _age_incident(net, b)
    _prune(net)


def train(net: GwrNetwork, seq: PoseSequence, epochs: int | None = None) -> TrainLog:
    """Run the online training loop over the sequence for the given epochs.

    The global context is zeroed at each epoch start. Returns the BMU
    selected at every step of every epoch plus a per-step trace.
    """
    samples = seq.samples()
    if len(samples) < 2:
        raise ValueError("training needs a sequence of at least 2 frames")
    if epochs is None:
        epochs = net.config.epochs
    cfg = net.config
    log = TrainLog()

    for epoch in range(epochs):
        net.reset_context()
        bmus: list[int] = []
        for t, x in enumerate(samples):
            update_global_context(net)
            nodes_before = len(net.nodes)

            if len(net.nodes) == 1:
                # Degenerate net: no pair to select, just update the survivor.
                b = net.node_ids()[0]
                s = None
                d_b = distance(x, net.nodes[b], net.global_context, cfg)
            else:
                ids, d = _distances_all(net, x)
                order = np.argsort(d, kind="stable")
                b, s = ids[order[0]], ids[order[1]]
                d_b = float(d[order[0]])

            node_b = net.nodes[b]
            net.prev_bmu = b
            net.prev_w = node_b.w.copy()
            net.prev_c = node_b.c.copy()

            if s is not None:
                net.edges[net.edge_key(b, s)] = 0

            a = activity(d_b)
            h_b = node_b.h
            grow = a < cfg.a_t and h_b < cfg.h_t and len(net.nodes) < cfg.mu_size and s is not None
            new_node = None
            if grow:
                new_node = insert_node(net, x, b, s, net.global_context)
            else:
                update_node(node_b, x, net.global_context, cfg.eps_b, cfg)
                for n in net.neighbors(b):
                    update_node(net.nodes[n], x, net.global_context, cfg.eps_n, cfg)

            _age_incident(net, b)

            habituate(node_b, "bmu", cfg)
            for n in net.neighbors(b):
                habituate(net.nodes[n], "neighbor", cfg)

            _prune(net)

            bmus.append(b)
            log.steps.append(
                StepRecord(
                    epoch=epoch,
                    t=t,
                    bmu=b,
                    second=s,
                    d_b=d_b,
                    activity=a,
                    h_b=h_b,
                    inserted=grow,
                    new_node=new_node,
                    nodes_before=nodes_before,
                    nodes_after=len(net.nodes),
                )
            )
        log.epoch_bmus.append(bmus)
    return log


def bmu_trace(net: GwrNetwork, seq: PoseSequence) -> list[int]:
    """BMU per frame for a frozen network (context recursion, no learning)."""
    saved = (net.global_context, net.prev_bmu, net.prev_w, net.prev_c)
    net.reset_context()
    trace = []
    try:
        for x in seq.samples():
            update_global_context(net)
            b, _ = find_bmus(net, x)
            node = net.nodes[b]
            net.prev_bmu = b
            net.prev_w = node.w.copy()
            net.prev_c = node.c.copy()
            trace.append(b)
    finally:
        net.global_context, net.prev_bmu, net.prev_w, net.prev_c = saved
    return trace


def merge_vectors(node: GwrNode, config: GwrConfig) -> np.ndarray:
    """The context the network would carry after visiting this node."""
    return context_descriptors(node.w, node.c, config)


def gamma_predict(net: GwrNetwork, start: int, steps: int) -> tuple[list[int], list[np.ndarray]]:
    """Chain context-merge successor lookups from a start node.

    Each step picks the node whose contexts best match the merge vector of
    the current node (the start node itself is a candidate, so held poses
    can stall on a self-referencing node). Returns the predicted node ids
    and their weight vectors, excluding the start node.
    """
    if start not in net.nodes:
        raise KeyError(f"unknown start node {start}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    cfg = net.config
    ids = net.node_ids()
    Cn = np.stack([net.nodes[i].c for i in ids])
    alpha = np.asarray(cfg.alpha_k)
    node_ids: list[int] = []
    poses: list[np.ndarray] = []
    current = start
    for _ in range(steps):
        M = merge_vectors(net.nodes[current], cfg)
        d = np.linalg.norm(Cn - M[None, :, :], axis=2) @ alpha
        current = ids[int(np.argsort(d, kind="stable")[0])]
        node_ids.append(current)
        poses.append(net.nodes[current].w.copy())
    return node_ids, poses


def check_invariants(net: GwrNetwork, after_step: bool = False) -> None:
    """Raise InvariantViolation naming the first structural invariant that fails."""
    cfg = net.config
    if len(net.nodes) > cfg.mu_size:
        raise InvariantViolation(f"node count {len(net.nodes)} exceeds capacity {cfg.mu_size}")
    for node in net.nodes.values():
        if not 0.0 <= node.h <= 1.0:
            raise InvariantViolation(f"habituation out of [0, 1] on node {node.id}")
        if node.c.shape != (cfg.K, net.dim):
            raise InvariantViolation(f"context shape mismatch on node {node.id}")
        if node.w.shape != (net.dim,):
            raise InvariantViolation(f"weight shape mismatch on node {node.id}")
    for (a, b), age in net.edges.items():
        if a == b:
            raise InvariantViolation(f"self-edge on node {a}")
        if a not in net.nodes or b not in net.nodes:
            raise InvariantViolation(f"dangling edge ({a}, {b})")
        if age < 0:
            raise InvariantViolation(f"negative edge age on ({a}, {b})")
    if after_step:
        connected = {v for key in net.edges for v in key}
        for node_id in net.nodes:
            if node_id not in connected:
                raise InvariantViolation(f"isolated node {node_id}")
