"""Batch representation, seeded sampling and geometric metrics.

A batch is a plain ``(d, n)`` float64 :class:`numpy.ndarray`: rows are
neurons, columns are datapoints.  Every random consumer draws from its own
Philox4x64-10 stream keyed by ``(master_seed, stream_id)``, so results do not
depend on the order in which trials or layers are scheduled.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateColumnError, InvalidParameterError

_U64 = (1 << 64) - 1

RNG_NAME = "Philox4x64-10 (numpy.random.Philox), normals via numpy Generator"


@dataclass(frozen=True)
class SeedSpec:
    """Address of one independent random stream."""

    master_seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= int(value) <= _U64:
                raise InvalidParameterError(f"{name} must be an unsigned 64-bit integer, got {value}")

    def derive(self, *labels) -> "SeedSpec":
        """Child stream for a labelled consumer, e.g. ``seed.derive("layer", 3)``.

        The child id is a BLAKE2b digest of the parent id and the labels, so it
        is stable across processes and Python versions.
        """
        text = repr((self.stream_id,) + tuple(labels)).encode()
        digest = hashlib.blake2b(text, digest_size=8).digest()
        return SeedSpec(self.master_seed, int.from_bytes(digest, "little"))

    def generator(self) -> np.random.Generator:
        key = (int(self.stream_id) << 64) | int(self.master_seed)
        return np.random.Generator(np.random.Philox(key=key))


def as_batch(x, min_cols: int = 2) -> np.ndarray:
    b = np.asarray(x, dtype=np.float64)
    if b.ndim != 2:
        raise InvalidParameterError(f"batch must be 2-D, got shape {b.shape}")
    if b.shape[0] < 1 or b.shape[1] < min_cols:
        raise InvalidParameterError(f"batch needs d >= 1 and n >= {min_cols}, got {b.shape}")
    if not np.all(np.isfinite(b)):
        raise InvalidParameterError("batch contains non-finite entries")
    return b


def gaussian_matrix(rows: int, cols: int, variance: float, seed: SeedSpec) -> np.ndarray:
    """I.i.d. ``N(0, variance)`` entries, deterministic in ``seed``."""
    if rows < 1 or cols < 1:
        raise InvalidParameterError(f"matrix shape must be positive, got ({rows}, {cols})")
    if not variance > 0:
        raise InvalidParameterError(f"variance must be positive, got {variance}")
    return np.sqrt(variance) * seed.generator().standard_normal((rows, cols))


def column_mean(b) -> np.ndarray:
    """Mean over the columns, one entry per row."""
    b = np.asarray(b, dtype=np.float64)
    return b.mean(axis=1)


def column_norms(b) -> np.ndarray:
    return np.linalg.norm(np.asarray(b, dtype=np.float64), axis=0)


def _clamped_arccos(c):
    return np.arccos(np.clip(c, -1.0, 1.0))


def pairwise_angle(b, i: int, j: int) -> float:
    """Principal angle in radians between columns ``i`` and ``j``."""
    b = np.asarray(b, dtype=np.float64)
    u, v = b[:, i], b[:, j]
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        bad = i if nu == 0 else j
        raise DegenerateColumnError(f"column {bad} has zero norm; angle undefined")
    if i == j:
        return 0.0
    return float(_clamped_arccos(np.dot(u, v) / (nu * nv)))


def angle_matrix(b) -> np.ndarray:
    """All pairwise angles; NaN marks pairs involving a zero column."""
    b = np.asarray(b, dtype=np.float64)
    gram = b.T @ b
    norms = np.sqrt(np.diag(gram))
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = gram / np.outer(norms, norms)
    ang = _clamped_arccos(cos)
    ang[np.outer(norms, norms) == 0] = np.nan
    np.fill_diagonal(ang, np.where(norms > 0, 0.0, np.nan))
    return ang


def auto_rank_tol(singular_values, shape) -> float:
    smax = singular_values.max() if singular_values.size else 0.0
    return max(shape) * np.finfo(np.float64).eps * smax


def numerical_rank(b, tol: float | None = None) -> int:
    """Count singular values above ``tol``.

    ``tol=None`` uses ``max(d, n) * eps * s_max``, which scales with the batch
    so the rank is invariant under multiplication by a nonzero scalar.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.size == 0:
        return 0
    s = np.linalg.svd(b, compute_uv=False)
    if tol is None:
        tol = auto_rank_tol(s, b.shape)
    elif tol < 0:
        raise InvalidParameterError(f"tol must be >= 0, got {tol}")
    return int(np.count_nonzero(s > tol))


def random_projection_2d(b, seed: SeedSpec) -> np.ndarray:
    """Project the batch with a 2 x d Gaussian(0, 1/d) matrix."""
    b = np.asarray(b, dtype=np.float64)
    d = b.shape[0]
    if d < 2:
        raise InvalidParameterError(f"projection needs d >= 2, got d = {d}")
    return gaussian_matrix(2, d, 1.0 / d, seed) @ b
