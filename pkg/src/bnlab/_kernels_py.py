"""Pure-numpy implementations of the hot kernels.

These define the reference arithmetic: row means are accumulated column by
column, left to right, so the compiled kernels can reproduce every result
bit for bit.
"""
import numpy as np

# composition classes used by the cluster census
OTHER, A_1_REST, B_REST_1, C3_1_1_REST, D3_REST_1_1, C2_2_REST, D2_REST_2 = range(7)


def _row_means(rows):
    s = np.zeros(rows.shape[0])
    for j in range(rows.shape[1]):
        s += rows[:, j]
    return s / rows.shape[1]


def _snap(block, tol):
    if tol <= 0 or block.shape[1] < 2:
        return block
    limit = tol * block.max(axis=1)
    for j in range(1, block.shape[1]):
        prev, cur = block[:, j - 1], block[:, j]
        close = (cur != prev) & (np.abs(cur - prev) <= limit)
        block[:, j] = np.where(close, prev, cur)
    return block


def tree_children(rows, tol):
    """Positive and negative children of every row, interleaved.

    Output row ``2*i`` is ``relu(x - mean)`` and ``2*i + 1`` is
    ``relu(mean - x)`` for input row ``i``.  Adjacent entries closer than
    ``tol * max(child)`` are merged onto the earlier column's value.
    """
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    m = _row_means(rows)[:, None]
    pos = rows - m
    neg = m - rows
    out = np.empty((2 * rows.shape[0], rows.shape[1]))
    out[0::2] = _snap(np.where(pos > 0, pos, 0.0), tol)
    out[1::2] = _snap(np.where(neg > 0, neg, 0.0), tol)
    return out


def cluster_counts(rows):
    """Number of distinct values per row; rows must be monotone."""
    rows = np.asarray(rows, dtype=np.float64)
    return 1 + np.count_nonzero(rows[:, 1:] != rows[:, :-1], axis=1).astype(np.int64)


def composition_codes(rows):
    """Classify monotone rows by cluster sizes read in column order."""
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[1]
    codes = np.zeros(rows.shape[0], dtype=np.int8)
    if n < 2:
        return codes
    brk = rows[:, 1:] != rows[:, :-1]
    c = 1 + np.count_nonzero(brk, axis=1)

    def breaks_at(*positions):
        want = np.zeros(n - 1, dtype=bool)
        want[list(positions)] = True
        return np.all(brk == want, axis=1)

    # later assignments never overwrite earlier ones, which fixes the
    # precedence for tiny n where several patterns coincide
    rules = [
        (A_1_REST, 2, (0,)),
        (B_REST_1, 2, (n - 2,)),
        (C3_1_1_REST, 3, (0, 1)),
        (D3_REST_1_1, 3, (n - 3, n - 2)),
        (C2_2_REST, 2, (1,)),
        (D2_REST_2, 2, (n - 3,)),
    ]
    for code, clusters, positions in rules:
        if min(positions) < 0 or max(positions) > n - 2 or len(set(positions)) != clusters - 1:
            continue
        hit = (c == clusters) & breaks_at(*positions) & (codes == OTHER)
        codes[hit] = code
    return codes


def sign_masks(proj):
    """Pack the positive-sign pattern of each row into uint64 words.

    Returns ``(keys, valid)``; ``valid`` is False for rows containing an
    exact zero, whose sign pattern lies on a cell boundary.
    """
    proj = np.asarray(proj, dtype=np.float64)
    m, n = proj.shape
    words = max(1, (n + 63) // 64)
    keys = np.zeros((m, words), dtype=np.uint64)
    positive = proj > 0
    for j in range(n):
        keys[:, j // 64] |= positive[:, j].astype(np.uint64) << np.uint64(j % 64)
    valid = ~np.any(proj == 0, axis=1)
    return keys, valid
