import numpy as np
import pytest

from distgcn.gcn import (SerialGcn, TrainConfig, init_weights, relu_grad,
                         serial_train, softmax_xent, train)
from distgcn.graphgen import sbm
from distgcn.sparse import csr_from_dense, gcn_normalize
from distgcn.partition import greedy_tv_partition

from oracles import numeric_gradient, random_csr_dense


def random_problem(seed, n=8, f_in=3, classes=2, density=0.3):
    rng = np.random.default_rng(seed)
    dense = np.abs(random_csr_dense(rng, n, density=density))
    a = gcn_normalize(csr_from_dense(dense + dense.T))
    features = rng.normal(size=(n, f_in))
    labels = rng.integers(classes, size=n)
    mask = rng.random(n) < 0.7
    if not mask.any():
        mask[0] = True
    return a, features, labels, mask


# ---- loss ------------------------------------------------------------------

def test_uniform_logits_loss_is_log_k():
    logits = np.zeros((6, 4))
    labels = np.array([0, 1, 2, 3, 0, 1])
    mask = np.ones(6, dtype=bool)
    loss, grad = softmax_xent(logits, labels, mask)
    assert abs(loss - np.log(4)) < 1e-12
    assert grad.shape == logits.shape


def test_confident_correct_logit_loss_vanishes():
    logits = np.zeros((1, 3))
    logits[0, 2] = 50.0
    loss, _ = softmax_xent(logits, np.array([2]), np.array([True]))
    assert loss < 1e-12


def test_xent_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(10, 4))
    labels = rng.integers(4, size=10)
    mask = rng.random(10) < 0.6
    mask[0] = True
    _, grad = softmax_xent(logits, labels, mask)
    step = 1e-6
    for i in range(10):
        for j in range(4):
            up, down = logits.copy(), logits.copy()
            up[i, j] += step
            down[i, j] -= step
            fd = (softmax_xent(up, labels, mask)[0]
                  - softmax_xent(down, labels, mask)[0]) / (2 * step)
            assert abs(fd - grad[i, j]) < 1e-6


def test_xent_gradient_zero_on_unmasked_rows():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(5, 3))
    mask = np.array([True, False, True, False, False])
    _, grad = softmax_xent(logits, np.zeros(5, dtype=int), mask)
    assert not grad[~mask].any()


def test_xent_rejects_out_of_range_label():
    with pytest.raises(ValueError, match="labels"):
        softmax_xent(np.zeros((2, 3)), np.array([0, 3]), np.ones(2, dtype=bool))


def test_xent_rejects_empty_mask():
    with pytest.raises(ValueError, match="masked"):
        softmax_xent(np.zeros((2, 3)), np.zeros(2, dtype=int), np.zeros(2, dtype=bool))


# ---- serial forward/backward -------------------------------------------------

def test_forward_zero_features_zero_logits():
    a, features, labels, mask = random_problem(2)
    cfg = TrainConfig(layers=3, hidden=4, seed=0)
    weights = init_weights(cfg, 3, 2)
    net = SerialGcn(a, weights)
    logits = net.forward(np.zeros_like(features))
    assert not logits.any()
    ys = net.backward(np.zeros_like(logits))
    assert all(not y.any() for y in ys)


def test_backward_before_forward_rejected():
    a, features, labels, mask = random_problem(3)
    net = SerialGcn(a, init_weights(TrainConfig(seed=1), 3, 2))
    with pytest.raises(RuntimeError, match="before forward"):
        net.backward(np.zeros((8, 2)))


def test_single_vertex_two_weight_layers():
    # one vertex: normalized adjacency is [[1]]; with identity-like weights
    # the logits reduce to relu(h0 W1) W2
    a = gcn_normalize(csr_from_dense(np.zeros((1, 1))))
    h0 = np.array([[2.0, -3.0]])
    w1 = np.array([[1.0, 0.0], [0.0, 1.0]])
    w2 = np.array([[0.5, 0.0], [0.0, 0.5]])
    net = SerialGcn(a, [w1, w2])
    logits = net.forward(h0)
    np.testing.assert_allclose(logits, np.maximum(h0, 0) @ w2, atol=1e-15)


def test_relu_grad_zero_at_zero():
    z = np.array([[-1.0, 0.0, 2.0]])
    np.testing.assert_array_equal(relu_grad(z), [[0.0, 0.0, 1.0]])


@pytest.mark.parametrize("layers", [2, 3])
def test_weight_gradients_match_finite_differences(layers):
    a, features, labels, mask = random_problem(layers * 10, n=6, f_in=2)
    cfg = TrainConfig(layers=layers, hidden=3, seed=4)
    weights = init_weights(cfg, 2, 2)

    def loss_of(ws):
        net = SerialGcn(a, ws)
        logits = net.forward(features)
        return softmax_xent(logits, labels, mask)[0]

    net = SerialGcn(a, weights)
    logits = net.forward(features)
    _, grad = softmax_xent(logits, labels, mask)
    analytic = net.backward(grad)
    numeric = numeric_gradient(loss_of, weights, step=1e-5)
    for g_a, g_n in zip(analytic, numeric):
        np.testing.assert_allclose(g_a, g_n, rtol=1e-5, atol=1e-8)


def test_distributed_gradients_match_serial():
    a, features, labels, mask = random_problem(40, n=12, f_in=3)
    denom = int(mask.sum())
    for variant, p, c in [("1d-oblivious", 3, 1), ("1d-sparse", 3, 1),
                          ("15d-oblivious", 4, 2), ("15d-sparse", 4, 2)]:
        cfg = TrainConfig(layers=3, hidden=4, lr=0.5, epochs=1, seed=6,
                          variant=variant)
        res = train(a, features, labels, mask, cfg, p=p, c=c)
        serial = serial_train(a, features, labels, mask,
                              TrainConfig(layers=3, hidden=4, lr=0.5, epochs=1,
                                          seed=6, variant="serial"))
        # after one identical update the weights agree within round-off
        for wd, ws in zip(res.weights, serial.weights):
            np.testing.assert_allclose(wd, ws, atol=1e-10)
        assert abs(res.history[0]["loss"] - serial.history[0]["loss"]) < 1e-10


# ---- training ----------------------------------------------------------------

def test_lr_zero_keeps_weights_and_loss_flat():
    a, features, labels, mask = random_problem(7, n=10)
    cfg = TrainConfig(layers=3, hidden=4, lr=0.0, epochs=5, seed=2, variant="serial")
    res = serial_train(a, features, labels, mask, cfg)
    losses = res.losses
    assert np.all(losses == losses[0])
    np.testing.assert_array_equal(res.weights[0], init_weights(cfg, 3, 2)[0])


def test_training_is_deterministic():
    a, features, labels, mask = random_problem(8, n=14)
    cfg = TrainConfig(layers=3, hidden=4, lr=0.05, epochs=4, seed=3, variant="1d-sparse")
    r1 = train(a, features, labels, mask, cfg, p=2, c=1)
    r2 = train(a, features, labels, mask, cfg, p=2, c=1)
    assert r1.history == r2.history
    for w1, w2 in zip(r1.weights, r2.weights):
        assert np.array_equal(w1, w2)


def test_empty_mask_rejected():
    a, features, labels, _ = random_problem(9)
    cfg = TrainConfig(epochs=1, variant="serial")
    with pytest.raises(ValueError, match="mask"):
        serial_train(a, features, labels, np.zeros(8, dtype=bool), cfg)


def test_replication_invariant_all_ranks():
    a, features, labels, mask = random_problem(10, n=16)
    cfg = TrainConfig(layers=3, hidden=4, lr=0.05, epochs=3, seed=5, variant="15d-sparse")
    res = train(a, features, labels, mask, cfg, p=4, c=2)
    for per_rank in res.weights_per_rank[1:]:
        for w0, wr in zip(res.weights_per_rank[0], per_rank):
            assert np.array_equal(w0, wr)


def test_distributed_losses_track_serial_over_epochs():
    a, features, labels = sbm(60, seed=11, feature_dim=6)
    ah = gcn_normalize(a)
    mask = np.ones(60, dtype=bool)
    base = dict(layers=3, hidden=8, lr=0.02, epochs=12, seed=7)
    serial = serial_train(ah, features, labels, mask,
                          TrainConfig(variant="serial", **base))
    for variant, p, c in [("1d-sparse", 4, 1), ("15d-oblivious", 4, 2)]:
        res = train(ah, features, labels, mask, TrainConfig(variant=variant, **base),
                    p=p, c=c)
        assert np.abs(res.losses - serial.losses).max() < 1e-8


def test_epoch_phase_counts():
    a, features, labels, mask = random_problem(12, n=16)
    epochs, layers = 3, 3
    cfg = TrainConfig(layers=layers, hidden=4, lr=0.01, epochs=epochs, seed=8,
                      variant="1d-sparse")
    res = train(a, features, labels, mask, cfg, p=4, c=1)
    ledger = res.ledger
    for r in range(4):
        # one personalized exchange per multiply phase
        assert ledger.counters["alltoallv"]["calls"][r] == epochs * 2 * (layers - 1)
        # one weight-gradient reduction per weight layer
        assert ledger.counters["allreduce"]["calls"][r] == epochs * (layers - 1)
        assert ledger.counters["broadcast"]["calls"][r] == 0


def test_epoch_phase_counts_replicated():
    a, features, labels, mask = random_problem(14, n=16)
    epochs, layers = 2, 4
    cfg = TrainConfig(layers=layers, hidden=4, lr=0.01, epochs=epochs, seed=8,
                      variant="15d-sparse")
    res = train(a, features, labels, mask, cfg, p=4, c=2)
    ledger = res.ledger
    for r in range(4):
        # each multiply phase ends in one partial-sum reduction, plus one
        # weight-gradient reduction per weight layer
        expect = epochs * (2 * (layers - 1) + (layers - 1))
        assert ledger.counters["allreduce"]["calls"][r] == expect
        assert ledger.counters["alltoallv"]["calls"][r] == 0
        assert ledger.counters["broadcast"]["calls"][r] == 0


def test_partitioned_training_matches_serial():
    a, features, labels = sbm(48, seed=13, feature_dim=5)
    ah = gcn_normalize(a)
    mask = np.ones(48, dtype=bool)
    part = greedy_tv_partition(ah, 4)
    base = dict(layers=3, hidden=6, lr=0.02, epochs=6, seed=9)
    serial = serial_train(ah, features, labels, mask, TrainConfig(variant="serial", **base))
    res = train(ah, features, labels, mask, TrainConfig(variant="1d-sparse", **base),
                p=4, c=1, partition=part)
    assert np.abs(res.losses - serial.losses).max() < 1e-8


def test_directed_graph_training_matches_serial():
    # asymmetric adjacency exercises the separate forward/backward operands
    rng = np.random.default_rng(50)
    dense = np.abs(random_csr_dense(rng, 18, density=0.2))
    a = gcn_normalize(csr_from_dense(dense))
    assert not np.array_equal(a.to_dense(), a.to_dense().T)
    features = rng.normal(size=(18, 3))
    labels = rng.integers(2, size=18)
    mask = np.ones(18, dtype=bool)
    base = dict(layers=3, hidden=4, lr=0.05, epochs=8, seed=12)
    serial = serial_train(a, features, labels, mask, TrainConfig(variant="serial", **base))
    for variant, p, c in [("1d-sparse", 3, 1), ("15d-sparse", 4, 2)]:
        res = train(a, features, labels, mask, TrainConfig(variant=variant, **base),
                    p=p, c=c)
        assert np.abs(res.losses - serial.losses).max() < 1e-8


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(layers=1)
    with pytest.raises(ValueError):
        TrainConfig(hidden=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=-0.1)
