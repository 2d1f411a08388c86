"""Distributed sparse-times-dense multiplication over the simulated runtime.

Four variants share one block-row layout: 1D (one block row per process)
and 1.5D (block rows replicated on c processes, with p/c**2 exchange
stages), each in a sparsity-oblivious form that ships whole block rows of
the dense operand and a sparsity-aware form that ships only the rows
matching occupied columns of the relevant sparse blocks.

Every variant accumulates its local result over source blocks in
ascending order, so the oblivious and aware forms of a family produce
bit-identical outputs and the replicated schedule with c=1 reproduces the
1D one exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .partition import Partition, apply_partition, block_partition
from .runtime import Comm, ProcessGrid, RunResult, run_program
from .sparse import CsrMatrix, csr_equal, local_spmm, transpose_csr

__all__ = [
    "DistMatrices",
    "DistOperand",
    "VARIANTS",
    "build_dist_matrices",
    "exchange_index_lists",
    "run_spmm",
    "serial_reference",
    "spmm_kernel",
    "validate_variant_grid",
]

VARIANTS = ("1d-oblivious", "1d-sparse", "15d-oblivious", "15d-sparse")


@dataclass
class DistOperand:
    """One sparse operand split into a grid of blocks.

    blocks[i][j] holds the rows of block row i restricted to block column
    j, with column indices local to that block. nnz_cols[(i, j)] caches
    the occupied local columns of blocks[i][j]; block row widths mirror
    the boundary sizes.
    """

    blocks: list
    nnz_cols: dict
    widths: list

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)


@dataclass
class DistMatrices:
    """Block layout of the multiply operands on a process grid.

    `fwd` holds the blocks of the transposed adjacency (the operand of the
    forward product); `bwd` holds the blocks of the adjacency itself and
    aliases `fwd` when the matrix is symmetric. With c > 1 each process in
    a grid row works from the same block row, so one copy is stored.
    """

    grid: ProcessGrid
    boundaries: list
    fwd: DistOperand
    bwd: DistOperand
    n: int

    @property
    def symmetric(self) -> bool:
        return self.bwd is self.fwd


def _extract_operand(mat: CsrMatrix, boundaries) -> DistOperand:
    nb = len(boundaries)
    blocks = []
    cache = {}
    widths = [e - s for s, e in boundaries]
    starts = np.array([s for s, _ in boundaries] + [mat.n_cols], dtype=np.int64)
    row_all = mat.row_of_nnz()
    for i, (r0, r1) in enumerate(boundaries):
        lo, hi = mat.row_ptr[r0], mat.row_ptr[r1]
        rows = row_all[lo:hi] - r0
        cols = mat.col_idx[lo:hi]
        vals = mat.values[lo:hi]
        owner = np.searchsorted(starts, cols, side="right") - 1
        row_blocks = []
        for j in range(nb):
            sel = owner == j
            sub_rows, sub_cols = rows[sel], cols[sel] - starts[j]
            counts = (np.bincount(sub_rows, minlength=r1 - r0)
                      if sub_rows.size else np.zeros(r1 - r0, np.int64))
            row_ptr = np.zeros(r1 - r0 + 1, dtype=np.int64)
            np.cumsum(counts, out=row_ptr[1:])
            block = CsrMatrix(r1 - r0, widths[j], row_ptr, sub_cols, vals[sel])
            row_blocks.append(block)
            cache[(i, j)] = np.unique(sub_cols)
        blocks.append(row_blocks)
    return DistOperand(blocks, cache, widths)


def build_dist_matrices(a: CsrMatrix, boundaries, grid: ProcessGrid) -> DistMatrices:
    """Split a (already permuted to match `boundaries`) into the block
    layout for `grid`. Needs one block row per grid row."""
    bounds = list(getattr(boundaries, "boundaries", boundaries))
    if len(bounds) != grid.n_rows:
        raise ValueError(f"need {grid.n_rows} block rows for this grid, got {len(bounds)}")
    at = transpose_csr(a)
    fwd = _extract_operand(at, bounds)
    bwd = fwd if csr_equal(at, a) else _extract_operand(a, bounds)
    return DistMatrices(grid, bounds, fwd, bwd, a.n_rows)


def validate_variant_grid(variant, p, c):
    """Reject (variant, p, c) combinations that break the grid contract,
    naming the violated constraint."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant.startswith("1d") and c != 1:
        raise ValueError(f"variant {variant} requires c == 1 (got c={c})")
    if p % c != 0:
        raise ValueError(f"c must divide p (p={p}, c={c})")
    if variant.startswith("15d") and p % (c * c) != 0:
        raise ValueError(f"variant {variant} requires c*c to divide p (p={p}, c={c})")


def exchange_index_lists(comm: Comm, op: DistOperand, variant: str):
    """One-time exchange of the occupied-column lists the aware variants
    send rows from. Each receiver announces to every relevant owner which
    of its rows it needs; the traffic is charged as index payloads. The
    sparse pattern is fixed for a whole training run, so this runs once
    and its cost is amortized over every subsequent multiply."""
    if variant.endswith("oblivious"):
        return
    grid = comm.grid
    i, j = comm.coords
    tag = ("idx", comm.next_phase())
    if variant == "1d-sparse":
        r = comm.rank
        for dst in range(comm.p):
            if dst != r and op.nnz_cols[(r, dst)].size:
                comm.isend(dst, op.nnz_cols[(r, dst)], tag=tag)
        for src in range(comm.p):
            if src != r and op.nnz_cols[(src, r)].size:
                comm.recv(src, tag=tag)
        return
    s = grid.stage_count()
    for k in range(s):
        q = j * s + k
        if q != i and op.nnz_cols[(i, q)].size:
            comm.isend(grid.rank_of(q, j), op.nnz_cols[(i, q)], tag=(tag, k))
    for k in range(s):
        q = j * s + k
        if q == i:
            for l in range(grid.n_rows):
                if l != i and op.nnz_cols[(l, q)].size:
                    comm.recv(grid.rank_of(l, j), tag=(tag, k))


def _scatter(idx, payload, width, f) -> np.ndarray:
    buf = np.zeros((width, f))
    buf[idx] = payload
    return buf


def _kernel_1d_oblivious(comm: Comm, op: DistOperand, h_block):
    r = comm.rank
    f = h_block.shape[1]
    z = np.zeros((op.blocks[r][r].n_rows, f))
    for j in range(comm.p):
        hj = comm.broadcast(j, h_block if j == r else None)
        z += local_spmm(op.blocks[r][j], hj)
    return z


def _kernel_1d_sparse(comm: Comm, op: DistOperand, h_block):
    r = comm.rank
    f = h_block.shape[1]
    sends = [h_block[op.nnz_cols[(dst, r)]] for dst in range(comm.p)]
    received = comm.all_to_allv(sends)
    z = np.zeros((op.blocks[r][r].n_rows, f))
    for j in range(comm.p):
        hj = _scatter(op.nnz_cols[(r, j)], received[j], op.widths[j], f)
        z += local_spmm(op.blocks[r][j], hj)
    return z


def _kernel_15d(comm: Comm, op: DistOperand, h_block, sparse):
    grid = comm.grid
    i, j = comm.coords
    s = grid.stage_count()
    f = h_block.shape[1]
    tag = ("spmm", comm.next_phase())
    z = np.zeros((op.blocks[i][i].n_rows, f))
    for k in range(s):
        q = j * s + k
        if q == i:
            # this process owns the stage's block row: serve its column
            for l in range(grid.n_rows):
                if l == i:
                    continue
                if sparse:
                    idx = op.nnz_cols[(l, q)]
                    if idx.size == 0:
                        continue
                    comm.isend(grid.rank_of(l, j), h_block[idx], tag=(tag, k))
                else:
                    comm.isend(grid.rank_of(l, j), h_block, tag=(tag, k))
            hq = (_scatter(op.nnz_cols[(i, q)], h_block[op.nnz_cols[(i, q)]],
                           op.widths[q], f) if sparse else h_block)
        elif sparse:
            idx = op.nnz_cols[(i, q)]
            if idx.size:
                payload = comm.recv(grid.rank_of(q, j), tag=(tag, k))
                hq = _scatter(idx, payload, op.widths[q], f)
            else:
                hq = np.zeros((op.widths[q], f))
        else:
            hq = comm.recv(grid.rank_of(q, j), tag=(tag, k))
        z += local_spmm(op.blocks[i][q], hq)
    return comm.all_reduce_sum(z, group=grid.row_group(i))


def spmm_kernel(comm: Comm, op: DistOperand, h_block, variant: str):
    """Run one distributed multiply phase from inside a rank procedure.

    h_block is this process's block row of the dense operand (replicated
    across each grid row when c > 1); the return value is the matching
    block row of the product, replicated the same way.
    """
    h_block = np.asarray(h_block, dtype=np.float64)
    if variant == "1d-oblivious":
        return _kernel_1d_oblivious(comm, op, h_block)
    if variant == "1d-sparse":
        return _kernel_1d_sparse(comm, op, h_block)
    if variant == "15d-oblivious":
        return _kernel_15d(comm, op, h_block, sparse=False)
    if variant == "15d-sparse":
        return _kernel_15d(comm, op, h_block, sparse=True)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def serial_reference(a: CsrMatrix, h) -> np.ndarray:
    """Single-process product transpose(a) @ h, the result every
    distributed variant must reproduce."""
    return local_spmm(transpose_csr(a), h)


@dataclass
class SpmmRun:
    z: np.ndarray
    ledger: object
    dm: DistMatrices
    partition: Partition
    grid: ProcessGrid


def run_spmm(a: CsrMatrix, h, p, c, variant, partition=None,
             index_setup=True) -> SpmmRun:
    """Drive one distributed multiply end to end.

    Permutes the inputs by `partition` (block partition by default),
    distributes them on the (p/c) x c grid, runs the chosen variant, and
    gathers the product back in the original row order. For the aware
    variants the one-time index exchange is included unless disabled.
    """
    validate_variant_grid(variant, p, c)
    if a.n_rows != a.n_cols:
        raise ValueError("distributed multiply requires a square matrix")
    h = np.asarray(h, dtype=np.float64)
    grid = ProcessGrid(p, c)
    part = partition if partition is not None else block_partition(a.n_rows, grid.n_rows)
    if part.k != grid.n_rows:
        raise ValueError(f"partition has {part.k} parts but the grid needs {grid.n_rows}")
    a2, h2 = apply_partition(a, h, part)
    dm = build_dist_matrices(a2, part.boundaries, grid)

    def program(comm):
        i, _ = comm.coords
        r0, r1 = dm.boundaries[i]
        hb = h2[r0:r1]
        if index_setup:
            exchange_index_lists(comm, dm.fwd, variant)
        return spmm_kernel(comm, dm.fwd, hb, variant)

    run: RunResult = run_program(p, c, program)
    z2 = np.vstack([run.results[grid.rank_of(i, 0)] for i in range(grid.n_rows)])
    return SpmmRun(z2[part.perm], run.ledger, dm, part, grid)
