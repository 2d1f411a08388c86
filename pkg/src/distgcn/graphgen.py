"""Seeded synthetic graph generators used by the CLI and the test suite.

All generators return symmetric unit-weight adjacency matrices (no
self-loops); the block-model generator also returns features and labels.
Everything is a pure function of its arguments, including the seed.
"""

from __future__ import annotations

import numpy as np

from .sparse import CsrMatrix, csr_from_coo

__all__ = ["clique_blocks", "gaussian_features", "grid2d", "sbm", "star",
           "star_augmented"]


def _symmetric_from_upper(n, rows, cols) -> CsrMatrix:
    u = np.concatenate([rows, cols])
    v = np.concatenate([cols, rows])
    a = csr_from_coo(n, n, u, v, np.ones(u.size))
    a.values[:] = 1.0  # collapse duplicate pairs to unit weight
    return a


def sbm(n, blocks=2, p_in=0.2, p_out=0.01, seed=0, feature_dim=16,
        feature_scale=2.0, noise=1.0):
    """Stochastic block model with label-informative Gaussian features.

    Vertices split into `blocks` near-equal communities; an edge appears
    with probability p_in inside a community and p_out across. The label
    of a vertex is its community; its feature vector is the community mean
    (a seeded Gaussian draw scaled by feature_scale) plus unit Gaussian
    noise scaled by `noise`.

    Returns (adjacency, features, labels).
    """
    rng = np.random.default_rng(seed)
    base, rem = divmod(n, blocks)
    sizes = [base + 1] * rem + [base] * (blocks - rem)
    labels = np.repeat(np.arange(blocks, dtype=np.int64), sizes)
    prob = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    draw = rng.random((n, n))
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    rows, cols = np.nonzero(upper & (draw < prob))
    a = _symmetric_from_upper(n, rows, cols)
    means = rng.normal(size=(blocks, feature_dim)) * feature_scale
    features = means[labels] + rng.normal(size=(n, feature_dim)) * noise
    return a, features, labels


def grid2d(rows, cols) -> CsrMatrix:
    """4-neighbor lattice with rows*cols vertices, row-major numbering."""
    n = rows * cols
    us, vs = [], []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                us.append(v)
                vs.append(v + 1)
            if r + 1 < rows:
                us.append(v)
                vs.append(v + cols)
    return _symmetric_from_upper(n, np.array(us, np.int64), np.array(vs, np.int64))


def star(leaves) -> CsrMatrix:
    """Vertex 0 connected to `leaves` leaf vertices."""
    u = np.zeros(leaves, dtype=np.int64)
    v = np.arange(1, leaves + 1, dtype=np.int64)
    return _symmetric_from_upper(leaves + 1, u, v)


def clique_blocks(num_cliques, size) -> CsrMatrix:
    """Disjoint cliques: a block-diagonal pattern with zero coupling."""
    us, vs = [], []
    for b in range(num_cliques):
        off = b * size
        for i in range(size):
            for j in range(i + 1, size):
                us.append(off + i)
                vs.append(off + j)
    n = num_cliques * size
    return _symmetric_from_upper(n, np.array(us, np.int64), np.array(vs, np.int64))


def star_augmented(n, seed=0, community_fracs=(0.35, 0.25, 0.2, 0.12, 0.08),
                   avg_degree=8.0, p_out=0.002, hubs=3, hub_frac=0.15) -> CsrMatrix:
    """Irregular benchmark graph: unequal communities plus global hubs.

    Communities of sizes n*community_fracs get internal expected degree
    `avg_degree` and sparse cross links with probability p_out; then the
    first vertex of each of the `hubs` largest communities is wired to a
    random hub_frac fraction of all vertices. The hubs concentrate
    boundary structure in a few parts, which makes send volumes uneven
    under partitioners that only minimize totals.
    """
    rng = np.random.default_rng(seed)
    sizes = [max(2, int(round(f * n))) for f in community_fracs]
    sizes[-1] = n - sum(sizes[:-1])
    if sizes[-1] < 2:
        raise ValueError("n too small for the community layout")
    labels = np.repeat(np.arange(len(sizes)), sizes)
    p_in = np.minimum(avg_degree / np.maximum(np.array(sizes) - 1, 1), 1.0)
    prob = np.where(labels[:, None] == labels[None, :], p_in[labels][:, None], p_out)
    draw = rng.random((n, n))
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    rows, cols = np.nonzero(upper & (draw < prob))
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    hub_rows, hub_cols = [], []
    for h in range(min(hubs, len(sizes))):
        hub = int(starts[h])
        targets = rng.choice(n, size=max(1, int(hub_frac * n)), replace=False)
        targets = targets[targets != hub]
        hub_rows.append(np.full(targets.size, hub, dtype=np.int64))
        hub_cols.append(targets.astype(np.int64))
    rows = np.concatenate([rows] + hub_rows)
    cols = np.concatenate([cols] + hub_cols)
    return _symmetric_from_upper(n, rows, cols)


def gaussian_features(n, dim, seed=0) -> np.ndarray:
    return np.random.default_rng(seed).normal(size=(n, dim))
