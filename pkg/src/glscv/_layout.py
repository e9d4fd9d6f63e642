"""Index bookkeeping for block-diagonal matrices over contiguous groups."""

from __future__ import annotations

import numpy as np


class BlockLayout:
    """Positions of contiguous diagonal blocks inside an ``n x n`` matrix.

    Block contents are stored flat, block after block, each in row-major
    order.  ``pair_rows``/``pair_cols`` give the global (row, col) of every
    flat entry, which lets per-entry formulas be evaluated in one vectorised
    pass.
    """

    def __init__(self, sizes):
        sizes = np.asarray(sizes, dtype=np.intp)
        if sizes.ndim != 1 or np.any(sizes < 1):
            raise ValueError("block sizes must be a 1-d array of positive integers")
        self.sizes = sizes
        self.starts = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.intp)
        self.n = int(sizes.sum())
        sq = sizes * sizes
        self.offsets = np.concatenate(([0], np.cumsum(sq)[:-1])).astype(np.intp)
        self.nnz = int(sq.sum())

        self.block_of = np.repeat(np.arange(len(sizes)), sizes)
        self.local = np.arange(self.n) - self.starts[self.block_of]

        blk = np.repeat(np.arange(len(sizes)), sq)
        k = np.arange(self.nnz) - self.offsets[blk]
        s = sizes[blk]
        self.pair_rows = self.starts[blk] + k // s
        self.pair_cols = self.starts[blk] + k % s
        self.pair_block = blk
        self.diag_flat = self.offsets[self.block_of] + self.local * (sizes[self.block_of] + 1)

    @property
    def n_blocks(self):
        return len(self.sizes)

    def slices(self):
        return [slice(int(a), int(a + s)) for a, s in zip(self.starts, self.sizes)]

    def flat_index(self, i, j):
        """Flat positions of entries (i, j); ``-1`` where i and j sit in different blocks."""
        i = np.asarray(i)
        j = np.asarray(j)
        bi = self.block_of[i]
        same = bi == self.block_of[j]
        flat = self.offsets[bi] + self.local[i] * self.sizes[bi] + self.local[j]
        return np.where(same, flat, -1)

    def __eq__(self, other):
        return isinstance(other, BlockLayout) and np.array_equal(self.sizes, other.sizes)

    def __hash__(self):
        return hash(self.sizes.tobytes())

    def __repr__(self):
        return f"BlockLayout(n={self.n}, n_blocks={self.n_blocks})"
