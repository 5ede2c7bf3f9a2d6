import math
import random

import numpy as np
import pytest

from posegwr.model import train_model
from posegwr.network import (
    GwrConfig,
    GwrNode,
    GwrNetwork,
    InvariantViolation,
    activity,
    age_and_prune,
    bmu_trace,
    check_invariants,
    context_descriptors,
    distance,
    find_bmus,
    gamma_predict,
    habituate,
    habituate_value,
    init_network,
    insert_node,
    train,
    update_global_context,
    update_node,
)
from posegwr.pose import KeypointFrame, PoseSequence, SampleVector
from posegwr.snapshot import save
from posegwr.model import GwrModel


def sample(values, mask=None):
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        mask = np.zeros(25, dtype=bool)
    return SampleVector(values=values, mask=np.asarray(mask, dtype=bool))


def rand_sample(rng, dim=50, masked=0):
    values = np.array([rng.uniform(0, 1) for _ in range(dim)])
    mask = np.zeros(25, dtype=bool)
    for j in rng.sample(range(25), masked):
        mask[j] = True
        values[2 * j] = 0.0
        values[2 * j + 1] = 0.0
    return SampleVector(values=values, mask=mask)


def seq_from_arrays(arrays):
    frames = []
    for i, a in enumerate(arrays):
        joints = np.zeros((25, 3))
        joints[:, :2] = np.asarray(a).reshape(25, 2)
        joints[:, 2] = 1.0
        frames.append(KeypointFrame(joints=joints, frame_index=i))
    return PoseSequence(frames=tuple(frames))


def random_walk_seq(rng, length=100):
    pose = np.array([rng.uniform(0.2, 0.8) for _ in range(50)])
    arrays = []
    for _ in range(length):
        pose = np.clip(pose + np.array([rng.uniform(-0.01, 0.01) for _ in range(50)]), 0, 1)
        arrays.append(pose.copy())
    return seq_from_arrays(arrays)


# ---------------------------------------------------------------- oracles

def oracle_distance(x, mask, w, contexts, C, alpha0, alpha_k):
    """Pure-python evaluation of the context-augmented distance."""
    def masked_norm(a, b):
        total = 0.0
        for j in range(25):
            if mask[j]:
                continue
            for d in (0, 1):
                total += (a[2 * j + d] - b[2 * j + d]) ** 2
        return math.sqrt(total)

    d = alpha0 * masked_norm(x, w)
    for k, ak in enumerate(alpha_k):
        d += ak * masked_norm(C[k], contexts[k])
    return d


def oracle_context(prev_w, prev_c, beta, K):
    out = []
    lower = list(prev_w)
    for k in range(K):
        ck = [beta * wv + (1 - beta) * lv for wv, lv in zip(prev_w, lower)]
        out.append(ck)
        lower = list(prev_c[k])
    return out


def oracle_habituate(h, tau, kappa):
    delta = tau * kappa * (1 - h) - tau
    return min(1.0, max(0.0, h + delta))


def test_distance_oracle_randomized():
    rng = random.Random(11)
    cfg = GwrConfig.default(K=3)
    for _ in range(100):
        x = rand_sample(rng, masked=rng.choice([0, 0, 1, 3]))
        w = np.array([rng.uniform(0, 1) for _ in range(50)])
        c = np.array([[rng.uniform(0, 1) for _ in range(50)] for _ in range(3)])
        C = np.array([[rng.uniform(0, 1) for _ in range(50)] for _ in range(3)])
        node = GwrNode(id=0, w=w, c=c)
        got = distance(x, node, C, cfg)
        want = oracle_distance(x.values, x.mask, w, c, C, cfg.alpha0, cfg.alpha_k)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_distance_identity_is_zero():
    cfg = GwrConfig.default(K=2)
    w = np.full(50, 0.4)
    node = GwrNode(id=0, w=w.copy(), c=np.stack([w, w]))
    x = sample(w)
    assert distance(x, node, np.stack([w, w]), cfg) == 0.0


def test_distance_hand_example():
    # K=1, alpha0 = alpha1 = 0.5, weight norm 0.2, context norm 0.1 -> 0.15
    cfg = GwrConfig.default(K=1)
    w = np.zeros(50)
    w[0] = 0.2
    c = np.zeros((1, 50))
    C = np.zeros((1, 50))
    C[0, 1] = 0.1
    node = GwrNode(id=0, w=w, c=c)
    assert distance(sample(np.zeros(50)), node, C, cfg) == pytest.approx(0.15, rel=1e-12)


def test_distance_fully_masked_is_zero():
    cfg = GwrConfig.default(K=1)
    node = GwrNode(id=0, w=np.ones(50), c=np.ones((1, 50)))
    x = sample(np.zeros(50), mask=np.ones(25, dtype=bool))
    assert distance(x, node, np.zeros((1, 50)), cfg) == 0.0


def test_find_bmus_brute_force():
    rng = random.Random(5)
    cfg = GwrConfig.default(K=2)
    for _ in range(25):
        n_nodes = rng.randint(2, 50)
        net = GwrNetwork(config=cfg, dim=50)
        for i in range(n_nodes):
            net.nodes[i] = GwrNode(
                id=i,
                w=np.array([rng.uniform(0, 1) for _ in range(50)]),
                c=np.array([[rng.uniform(0, 1) for _ in range(50)] for _ in range(2)]),
            )
        net.next_node_id = n_nodes
        net.global_context = np.array([[rng.uniform(0, 1) for _ in range(50)] for _ in range(2)])
        x = rand_sample(rng)
        b, s = find_bmus(net, x)
        ds = sorted(
            (distance(x, net.nodes[i], net.global_context, cfg), i) for i in net.nodes
        )
        assert (b, s) == (ds[0][1], ds[1][1])


def test_find_bmus_tie_breaks_low_id():
    cfg = GwrConfig.default(K=1)
    net = GwrNetwork(config=cfg, dim=50)
    w = np.full(50, 0.3)
    for i in (4, 7):
        net.nodes[i] = GwrNode(id=i, w=w.copy(), c=np.zeros((1, 50)))
    b, s = find_bmus(net, sample(w))
    assert (b, s) == (4, 7)


def test_find_bmus_needs_two_nodes():
    cfg = GwrConfig.default(K=1)
    net = GwrNetwork(config=cfg, dim=50)
    net.nodes[0] = GwrNode(id=0, w=np.zeros(50), c=np.zeros((1, 50)))
    with pytest.raises(ValueError):
        find_bmus(net, sample(np.zeros(50)))


def test_context_oracle_randomized():
    rng = random.Random(23)
    for _ in range(100):
        K = rng.choice([1, 2, 5])
        beta = rng.uniform(0, 1)
        cfg = GwrConfig.default(K=K, beta=beta)
        prev_w = np.array([rng.uniform(0, 1) for _ in range(50)])
        prev_c = np.array([[rng.uniform(0, 1) for _ in range(50)] for _ in range(K)])
        got = context_descriptors(prev_w, prev_c, cfg)
        want = np.array(oracle_context(prev_w, prev_c, beta, K))
        assert np.allclose(got, want, rtol=1e-12, atol=1e-15)


def test_context_zero_before_first_bmu():
    cfg = GwrConfig.default(K=2)
    net = init_network(sample(np.zeros(50)), sample(np.ones(50)), cfg)
    update_global_context(net)
    assert not net.global_context.any()


def test_context_depth_one_equals_prev_weight():
    cfg = GwrConfig.default(K=1)
    prev_w = np.full(50, 0.8)
    got = context_descriptors(prev_w, np.zeros((1, 50)), cfg)
    assert np.allclose(got[0], prev_w)


def test_context_beta_one_degenerate():
    cfg = GwrConfig.default(K=3, beta=1.0)
    prev_w = np.full(50, 0.6)
    got = context_descriptors(prev_w, np.random.default_rng(0).random((3, 50)), cfg)
    assert np.allclose(got, prev_w)


def test_context_alternate_source():
    cfg = GwrConfig.default(K=2, context_source="context")
    prev_w = np.full(50, 0.5)
    prev_c = np.stack([np.full(50, 0.2), np.full(50, 0.9)])
    got = context_descriptors(prev_w, prev_c, cfg)
    # first term blends the stored context instead of the weight
    assert np.allclose(got[0], 0.5 * 0.2 + 0.5 * 0.5)
    assert np.allclose(got[1], 0.5 * 0.9 + 0.5 * 0.2)


def test_activity_values():
    assert activity(0.0) == 1.0
    assert activity(0.105) == pytest.approx(0.9003, abs=1e-4)
    assert 0.0 < activity(50.0) < 1e-20


def test_habituate_hand_values():
    assert habituate_value(1.0, 0.3, 1.05) == pytest.approx(0.7, rel=1e-12)
    assert habituate_value(0.7, 0.3, 1.05) == pytest.approx(0.4945, rel=1e-12)


def test_habituate_neighbor_decays_slower():
    cfg = GwrConfig.default(K=1)
    bmu = GwrNode(id=0, w=np.zeros(50), c=np.zeros((1, 50)), h=0.9)
    nbr = GwrNode(id=1, w=np.zeros(50), c=np.zeros((1, 50)), h=0.9)
    habituate(bmu, "bmu", cfg)
    habituate(nbr, "neighbor", cfg)
    assert bmu.h < nbr.h < 0.9


def test_habituate_oracle_randomized():
    rng = random.Random(3)
    for _ in range(100):
        h = rng.uniform(0, 1)
        tau = rng.uniform(0.01, 0.5)
        kappa = rng.uniform(1.0, 1.5)
        assert habituate_value(h, tau, kappa) == pytest.approx(
            oracle_habituate(h, tau, kappa), rel=1e-12, abs=1e-15
        )


def test_update_node_hand_example():
    cfg = GwrConfig.default(K=1)
    node = GwrNode(id=0, w=np.zeros(50), c=np.zeros((1, 50)), h=1.0)
    x_vals = np.zeros(50)
    x_vals[0] = 0.1
    update_node(node, sample(x_vals), np.zeros((1, 50)), cfg.eps_b, cfg)
    assert node.w[0] == pytest.approx(0.02, rel=1e-12)
    assert np.all(node.w[1:] == 0.0)


def test_update_node_oracle_randomized():
    rng = random.Random(31)
    cfg = GwrConfig.default(K=2)
    for _ in range(100):
        w = np.array([rng.uniform(0, 1) for _ in range(50)])
        c = np.array([[rng.uniform(0, 1) for _ in range(50)] for _ in range(2)])
        h = rng.uniform(0, 1)
        node = GwrNode(id=0, w=w.copy(), c=c.copy(), h=h)
        x = rand_sample(rng, masked=rng.choice([0, 2]))
        C = np.array([[rng.uniform(0, 1) for _ in range(50)] for _ in range(2)])
        rate = rng.uniform(0.001, 0.3)
        update_node(node, x, C, rate, cfg)
        for j in range(25):
            for d in (0, 1):
                i = 2 * j + d
                if x.mask[j]:
                    assert node.w[i] == w[i]
                else:
                    want = w[i] + rate * h * (x.values[i] - w[i])
                    assert node.w[i] == pytest.approx(want, rel=1e-12, abs=1e-15)
        want_c = c + rate * h * (C - c)
        assert np.allclose(node.c, want_c, rtol=1e-12, atol=1e-15)


def test_update_node_fixed_points():
    cfg = GwrConfig.default(K=1)
    w = np.full(50, 0.5)
    node = GwrNode(id=0, w=w.copy(), c=np.zeros((1, 50)), h=0.0)
    update_node(node, sample(np.ones(50)), np.ones((1, 50)), 0.2, cfg)
    assert np.array_equal(node.w, w)  # h = 0 gates learning
    node.h = 1.0
    update_node(node, sample(w), np.zeros((1, 50)), 0.2, cfg)
    assert np.array_equal(node.w, w)  # x = w, C = c is a fixed point


def test_insert_node_midpoint_and_rewiring():
    cfg = GwrConfig.default(K=1)
    net = init_network(sample(np.zeros(50)), sample(np.ones(50)), cfg)
    net.edges[(0, 1)] = 7
    r = insert_node(net, sample(np.zeros(50)), b=1, s=0, C=np.zeros((1, 50)))
    assert np.allclose(net.nodes[r].w, 0.5)
    assert net.nodes[r].h == 1.0
    assert (0, 1) not in net.edges
    assert net.edges[(1, r)] == 0 and net.edges[(0, r)] == 0


def test_insert_node_oracle_randomized():
    rng = random.Random(17)
    cfg = GwrConfig.default(K=2)
    for _ in range(100):
        net = GwrNetwork(config=cfg, dim=50)
        w0 = np.array([rng.uniform(0, 1) for _ in range(50)])
        w1 = np.array([rng.uniform(0, 1) for _ in range(50)])
        c0 = np.array([[rng.uniform(0, 1) for _ in range(50)] for _ in range(2)])
        net.nodes[0] = GwrNode(id=0, w=w0.copy(), c=c0.copy())
        net.nodes[1] = GwrNode(id=1, w=w1, c=np.zeros((2, 50)))
        net.next_node_id = 2
        x = rand_sample(rng, masked=rng.choice([0, 1]))
        C = np.array([[rng.uniform(0, 1) for _ in range(50)] for _ in range(2)])
        r = insert_node(net, x, b=0, s=1, C=C)
        node = net.nodes[r]
        for j in range(25):
            for d in (0, 1):
                i = 2 * j + d
                if x.mask[j]:
                    assert node.w[i] == w0[i]
                else:
                    assert node.w[i] == pytest.approx(
                        0.5 * (x.values[i] + w0[i]), rel=1e-12, abs=1e-15
                    )
        assert np.allclose(node.c, 0.5 * (C + c0), rtol=1e-12, atol=1e-15)


def test_age_and_prune_boundaries():
    cfg = GwrConfig.default(K=1)
    net = init_network(sample(np.zeros(50)), sample(np.ones(50)), cfg)
    third = insert_node(net, sample(np.full(50, 0.5)), b=0, s=1, C=np.zeros((1, 50)))
    # edge at exactly mu_age survives aging to mu_age; one more step kills it
    net.edges[(0, third)] = 19
    net.edges[(1, third)] = 0
    age_and_prune(net, 0)  # ages only edges at node 0
    assert net.edges[(0, third)] == 20
    age_and_prune(net, 0)
    assert (0, third) not in net.edges
    # node 0 lost its only edge and is removed as isolated
    assert 0 not in net.nodes
    assert third in net.nodes and 1 in net.nodes


def test_init_network():
    cfg = GwrConfig.default(K=3)
    x0, x1 = sample(np.zeros(50)), sample(np.ones(50))
    net = init_network(x0, x1, cfg, seed=9)
    assert len(net.nodes) == 2 and len(net.edges) == 0
    assert all(node.h == 1.0 for node in net.nodes.values())
    assert all(not node.c.any() for node in net.nodes.values())
    assert not net.global_context.any()
    assert net.prev_bmu is None
    # duplicate samples still give two nodes
    net2 = init_network(x0, x0, cfg)
    assert len(net2.nodes) == 2


def test_config_validation():
    with pytest.raises(ValueError):
        GwrConfig.default(K=1, tau_b=0.1, tau_n=0.3)
    with pytest.raises(ValueError):
        GwrConfig.default(K=1, a_t=0.0)
    with pytest.raises(ValueError):
        GwrConfig.default(K=0)
    with pytest.raises(ValueError):
        GwrConfig(K=2, alpha_k=(0.5,))


def test_train_stationary_input_converges():
    cfg = GwrConfig.default(K=1, epochs=6)
    pose = np.full(50, 0.4)
    seq = seq_from_arrays([pose] * 60)
    net = init_network(sample(pose), sample(pose), cfg)
    log = train(net, seq)
    # steady state: one winner per epoch past the zero-context first step
    final = log.epoch_bmus[-1]
    assert len(set(final[1:])) == 1
    counts = [r.nodes_after for r in log.steps if r.epoch >= 4]
    assert len(set(counts)) == 1


def test_train_respects_capacity(squat_seq, run_config):
    model, _ = train_model(squat_seq, run_config, variant="gamma")
    assert len(model.network.nodes) <= run_config.mu_size


def test_train_deterministic(squat_seq, run_config):
    a, _ = train_model(squat_seq, run_config, variant="gamma")
    b, _ = train_model(squat_seq, run_config, variant="gamma")
    assert save(a) == save(b)


def test_train_rejects_short_sequences(run_config):
    seq = seq_from_arrays([np.zeros(50)])
    with pytest.raises(ValueError):
        train_model(seq, run_config)


def test_training_invariants_across_runs(run_config):
    rng = random.Random(1234)
    for trial in range(6):
        seq = random_walk_seq(rng, length=80)
        cfg = run_config.gwr("subnode")
        net = init_network(seq.samples()[0], seq.samples()[1], cfg)
        log = train(net, seq)
        check_invariants(net, after_step=True)
        # habituation observed at BMU selections decays per node
        seen = {}
        for rec in log.steps:
            if rec.bmu in seen:
                assert rec.h_b <= seen[rec.bmu] + 1e-15
            seen[rec.bmu] = rec.h_b
        # growth condition exactness
        for rec in log.steps:
            expected = (
                rec.activity < cfg.a_t
                and rec.h_b < cfg.h_t
                and rec.nodes_before < cfg.mu_size
                and rec.second is not None
            )
            assert rec.inserted == expected
        assert all(0 <= n.h <= 1 for n in net.nodes.values())


def test_gamma_predict_toy_oracle():
    cfg = GwrConfig.default(K=2)
    rng = random.Random(77)
    net = GwrNetwork(config=cfg, dim=50)
    for i in range(3):
        net.nodes[i] = GwrNode(
            id=i,
            w=np.array([rng.uniform(0, 1) for _ in range(50)]),
            c=np.array([[rng.uniform(0, 1) for _ in range(50)] for _ in range(2)]),
        )
    net.next_node_id = 3
    ids, poses = gamma_predict(net, start=0, steps=4)

    def merge(u):
        w = net.nodes[u].w
        c = net.nodes[u].c
        return [
            [cfg.beta * w[i] + (1 - cfg.beta) * (w[i] if k == 0 else c[k - 1][i]) for i in range(50)]
            for k in range(2)
        ]

    current = 0
    for step in range(4):
        M = merge(current)
        best, best_d = None, None
        for v in sorted(net.nodes):
            d = 0.0
            for k in range(2):
                d += cfg.alpha_k[k] * math.sqrt(
                    sum((M[k][i] - net.nodes[v].c[k][i]) ** 2 for i in range(50))
                )
            if best_d is None or d < best_d:
                best, best_d = v, d
        current = best
        assert ids[step] == best
        assert np.array_equal(poses[step], net.nodes[best].w)


def test_gamma_predict_chaining(gamma_model):
    net = gamma_model.network
    start = net.node_ids()[0]
    two, _ = gamma_predict(net, start, 2)
    one, _ = gamma_predict(net, start, 1)
    again, _ = gamma_predict(net, one[0], 1)
    assert two == [one[0], again[0]]


def test_gamma_predict_stall_is_absorbing(gamma_model):
    net = gamma_model.network
    ids, _ = gamma_predict(net, net.node_ids()[0], 99)
    for i, node in enumerate(ids[:-1]):
        if node == ids[i + 1]:
            assert all(later == node for later in ids[i + 1 :])
            break
    else:
        pytest.skip("no self-loop reached from this start")


def test_gamma_predict_errors(gamma_model):
    with pytest.raises(KeyError):
        gamma_predict(gamma_model.network, start=10**9, steps=1)
    with pytest.raises(ValueError):
        gamma_predict(gamma_model.network, start=gamma_model.network.node_ids()[0], steps=0)


def test_bmu_trace_leaves_network_unchanged(gamma_model, squat_seq):
    before = save(GwrModel(variant="gamma", network=gamma_model.network))
    trace = bmu_trace(gamma_model.network, squat_seq)
    assert len(trace) == len(squat_seq)
    assert save(GwrModel(variant="gamma", network=gamma_model.network)) == before


def test_check_invariants_reports_violations():
    cfg = GwrConfig.default(K=1)
    net = init_network(sample(np.zeros(50)), sample(np.ones(50)), cfg)
    net.edges[(0, 5)] = 0
    with pytest.raises(InvariantViolation, match="dangling"):
        check_invariants(net)
    del net.edges[(0, 5)]
    net.nodes[0].h = 1.5
    with pytest.raises(InvariantViolation, match="habituation"):
        check_invariants(net)
