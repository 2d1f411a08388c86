"""Full-batch GCN training, serial and distributed.

A network with `layers` levels of node representations owns layers-1
weight matrices. One epoch runs, per weight layer, one distributed
multiply in the forward direction and one in the backward direction
(2*(layers-1) collective multiply phases in total) plus one small
weight-gradient all-reduce per weight layer. Weights are replicated:
every rank initializes them from the same seed and applies bit-identical
updates, so no weight broadcast is ever needed.

The serial path runs the identical arithmetic on the undistributed
matrices and is the correctness reference for the distributed one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .partition import Partition, apply_partition, block_partition
from .runtime import ProcessGrid, run_program
from .sparse import CsrMatrix, csr_equal, gemm, local_spmm, transpose_csr
from .spmm import (DistMatrices, build_dist_matrices, exchange_index_lists,
                   spmm_kernel, validate_variant_grid)

__all__ = [
    "SerialGcn",
    "TrainConfig",
    "TrainResult",
    "init_weights",
    "relu",
    "relu_grad",
    "serial_train",
    "softmax_xent",
    "train",
]


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    `layers` counts representation levels (input features are level 0), so
    layers=3 trains two weight matrices with one hidden level of width
    `hidden`. `variant` selects the distributed multiply or "serial" for
    the reference path.
    """

    layers: int = 3
    hidden: int = 16
    lr: float = 0.01
    epochs: int = 100
    activation: str = "relu"
    seed: int = 0
    variant: str = "1d-sparse"
    f_in: int = None
    f_out: int = None

    def __post_init__(self):
        if self.layers < 2:
            raise ValueError("need at least 2 layers (one weight matrix)")
        if self.hidden < 1:
            raise ValueError("hidden width must be at least 1")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    def layer_dims(self, f_in, f_out):
        return [f_in] + [self.hidden] * (self.layers - 2) + [f_out]


def relu(z):
    return np.maximum(z, 0.0)


def relu_grad(z):
    # derivative taken as 0 at exactly 0
    return (z > 0.0).astype(np.float64)


def init_weights(cfg: TrainConfig, f_in, f_out):
    """Symmetric-uniform init with the usual fan-based range, drawn from a
    generator seeded with cfg.seed. Every caller with the same config gets
    the same weights, which is what keeps replicas in lockstep."""
    rng = np.random.default_rng(cfg.seed)
    dims = cfg.layer_dims(f_in, f_out)
    weights = []
    for fi, fo in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fi + fo))
        weights.append(rng.uniform(-limit, limit, size=(fi, fo)))
    return weights


def _xent_parts(logits, labels, mask, denom):
    """Masked cross-entropy pieces: (sum of losses, gradient scaled by
    1/denom, number of correct argmax predictions)."""
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    if mask.any():
        sel = labels[mask]
        if sel.min() < 0 or sel.max() >= logits.shape[1]:
            raise ValueError(f"labels must lie in [0, {logits.shape[1]}) on masked rows")
    shift = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shift).sum(axis=1))
    grad = np.zeros_like(logits)
    loss_sum = 0.0
    correct = 0
    if mask.any():
        rows = np.flatnonzero(mask)
        sel = labels[rows]
        loss_sum = float((log_norm[rows] - shift[rows, sel]).sum())
        softmax = np.exp(shift[rows]) / np.exp(shift[rows]).sum(axis=1, keepdims=True)
        softmax[np.arange(rows.size), sel] -= 1.0
        grad[rows] = softmax / denom
        correct = int((logits[rows].argmax(axis=1) == sel).sum())
    return loss_sum, grad, correct


def softmax_xent(logits, labels, mask):
    """Mean cross-entropy over masked rows and its gradient (zero on
    unmasked rows), stabilized by max-subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("softmax_xent needs at least one masked row")
    loss_sum, grad, _ = _xent_parts(logits, labels, mask, count)
    return loss_sum / count, grad


class SerialGcn:
    """Reference forward/backward on undistributed matrices.

    Caches activations between forward and backward; calling backward
    first is an error.
    """

    def __init__(self, a_hat: CsrMatrix, weights):
        self.a = a_hat
        at = transpose_csr(a_hat)
        self.at = a_hat if csr_equal(at, a_hat) else at
        self.weights = weights
        self._cache = None

    def forward(self, h0):
        hs = [np.asarray(h0, dtype=np.float64)]
        zs = []
        last = len(self.weights) - 1
        for l, w in enumerate(self.weights):
            t = local_spmm(self.at, hs[-1])
            z = gemm(t, w)
            zs.append(z)
            hs.append(relu(z) if l < last else z)
        self._cache = (hs, zs)
        return hs[-1]

    def backward(self, g_out):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        hs, zs = self._cache
        g = np.asarray(g_out, dtype=np.float64)
        ys = [None] * len(self.weights)
        for l in range(len(self.weights) - 1, -1, -1):
            m = local_spmm(self.a, g)
            ys[l] = gemm(hs[l].T, m)
            if l > 0:
                g = gemm(m, self.weights[l].T) * relu_grad(zs[l - 1])
        return ys


@dataclass
class TrainResult:
    """Per-epoch history plus the final replicated weights.

    `history` rows carry epoch, loss, train accuracy, and (distributed
    runs only) cumulative bytes sent per primitive up to that epoch.
    `weights_per_rank` is populated on distributed runs for replication
    checks; `ledger` is None on the serial path.
    """

    history: list
    weights: list
    ledger: object = None
    partition: Partition = None
    weights_per_rank: list = field(default_factory=list)

    @property
    def losses(self):
        return np.array([row["loss"] for row in self.history])

    @property
    def final_accuracy(self):
        return self.history[-1]["train_acc"] if self.history else None


def _check_train_inputs(features, labels, train_mask):
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(train_mask, dtype=bool)
    if not (features.shape[0] == labels.shape[0] == mask.shape[0]):
        raise ValueError("features, labels and train_mask must agree on the vertex count")
    if int(mask.sum()) == 0:
        raise ValueError("train_mask must select at least one vertex")
    return features, labels, mask


def serial_train(a_hat: CsrMatrix, features, labels, train_mask, cfg: TrainConfig) -> TrainResult:
    """Full-batch gradient descent on one process; the reference run."""
    features, labels, mask = _check_train_inputs(features, labels, train_mask)
    f_out = cfg.f_out if cfg.f_out is not None else int(labels.max()) + 1
    weights = init_weights(cfg, features.shape[1], f_out)
    net = SerialGcn(a_hat, weights)
    denom = int(mask.sum())
    history = []
    for epoch in range(cfg.epochs):
        logits = net.forward(features)
        loss_sum, grad, correct = _xent_parts(logits, labels, mask, denom)
        ys = net.backward(grad)
        for w, y in zip(weights, ys):
            w -= cfg.lr * y
        history.append({"epoch": epoch, "loss": float(loss_sum / denom),
                        "train_acc": float(correct / denom)})
    return TrainResult(history, weights)


def train(a_hat: CsrMatrix, features, labels, train_mask, cfg: TrainConfig,
          p=1, c=1, partition=None) -> TrainResult:
    """Train over the selected distributed multiply variant.

    The graph, features, labels and mask are permuted to the partition's
    layout, split into block rows, and every rank runs the same epoch
    loop; per-epoch loss/accuracy are assembled from per-rank sums after
    the run, so reporting costs no simulated traffic. cfg.variant ==
    "serial" bypasses the simulator entirely.
    """
    if cfg.variant == "serial":
        return serial_train(a_hat, features, labels, train_mask, cfg)
    validate_variant_grid(cfg.variant, p, c)
    features, labels, mask = _check_train_inputs(features, labels, train_mask)
    if a_hat.n_rows != features.shape[0]:
        raise ValueError("feature rows must match the matrix")
    grid = ProcessGrid(p, c)
    part = partition if partition is not None else block_partition(a_hat.n_rows, grid.n_rows)
    if part.k != grid.n_rows:
        raise ValueError(f"partition has {part.k} parts but the grid needs {grid.n_rows}")
    a2, feats2 = apply_partition(a_hat, features, part)
    inv = part.inv_perm
    labels2, mask2 = labels[inv], mask[inv]
    dm = build_dist_matrices(a2, part.boundaries, grid)
    f_out = cfg.f_out if cfg.f_out is not None else int(labels.max()) + 1
    denom = int(mask.sum())
    weights0 = init_weights(cfg, features.shape[1], f_out)

    def program(comm):
        i, j = comm.coords
        r0, r1 = dm.boundaries[i]
        h0 = feats2[r0:r1]
        yb, mb = labels2[r0:r1], mask2[r0:r1]
        ws = [w.copy() for w in weights0]
        exchange_index_lists(comm, dm.fwd, cfg.variant)
        if dm.bwd is not dm.fwd:
            exchange_index_lists(comm, dm.bwd, cfg.variant)
        col_group = comm.grid.col_group(j)
        stats = np.zeros((cfg.epochs, 2))
        last = len(ws) - 1
        for epoch in range(cfg.epochs):
            hs, zs = [h0], []
            for l, w in enumerate(ws):
                t = spmm_kernel(comm, dm.fwd, hs[-1], cfg.variant)
                z = gemm(t, w)
                zs.append(z)
                hs.append(relu(z) if l < last else z)
            loss_sum, g, correct = _xent_parts(hs[-1], yb, mb, denom)
            for l in range(last, -1, -1):
                m = spmm_kernel(comm, dm.bwd, g, cfg.variant)
                y = comm.all_reduce_sum(gemm(hs[l].T, m), group=col_group)
                if l > 0:
                    g = gemm(m, ws[l].T) * relu_grad(zs[l - 1])
                ws[l] -= cfg.lr * y
            stats[epoch] = (loss_sum, correct)
            comm.ledger_mark(("epoch", epoch))
        return {"stats": stats, "weights": ws}

    run = run_program(p, c, program)
    # one replica per block row is enough for the global sums
    history = []
    per_epoch = np.zeros((cfg.epochs, 2))
    for i in range(grid.n_rows):
        per_epoch += run.results[grid.rank_of(i, 0)]["stats"]
    for epoch in range(cfg.epochs):
        row = {"epoch": epoch, "loss": float(per_epoch[epoch, 0] / denom),
               "train_acc": float(per_epoch[epoch, 1] / denom)}
        snap = run.ledger.marks.get(("epoch", epoch), {})
        for prim, vals in snap.items():
            row[f"{prim}_bytes"] = vals["bytes_sent"]
        history.append(row)
    weights_per_rank = [run.results[r]["weights"] for r in range(p)]
    return TrainResult(history, weights_per_rank[0], run.ledger, part, weights_per_rank)
