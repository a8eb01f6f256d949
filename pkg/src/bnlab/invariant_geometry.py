"""Invariant batches under recentering + ReLU and their one-layer expectations.

An invariant representation has one unit-norm "odd" column ``x1`` and
``n - 1`` copies of a cluster center ``nu_c`` with ``|nu_c| = 1/(n-1)`` and
``x1 . nu_c = 0``.  With weight variance ``sigma^2 = 2 alpha / d`` and the
right ``alpha`` one random layer maps such a batch to another one in
expectation.  This module builds those batches, evaluates the closed-form
expectations and checks them by simulation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .batch import SeedSpec, as_batch, gaussian_matrix
from .errors import DegenerateColumnError, InvalidParameterError, PreconditionError


@dataclass(frozen=True)
class InvariantRep:
    n: int
    k: int
    batch: np.ndarray
    nu_c: np.ndarray

    @property
    def x1(self) -> np.ndarray:
        return self.batch[:, 0]


@dataclass(frozen=True)
class KernelParams:
    d: int
    sigma_sq: float

    def __post_init__(self):
        if int(self.d) < 1:
            raise InvalidParameterError(f"d must be a positive integer, got {self.d}")
        if not self.sigma_sq > 0:
            raise InvalidParameterError(f"sigma_sq must be positive, got {self.sigma_sq}")

    @classmethod
    def scaled(cls, d: int, alpha: float) -> "KernelParams":
        """Variance ``2 * alpha / d``."""
        return cls(d, 2.0 * alpha / d)


def _orthonormal_pair(k: int, seed: SeedSpec):
    g = gaussian_matrix(k, 2, 1.0, seed)
    q, r = np.linalg.qr(g)
    # fix the sign convention so the pair is a deterministic function of g
    q = q * np.sign(np.diag(r))
    return q[:, 0], q[:, 1]


def make_invariant(n: int, k: int, seed: SeedSpec = SeedSpec()) -> InvariantRep:
    if n < 3:
        raise InvalidParameterError(f"n must be >= 3, got {n}")
    if k < 2:
        raise InvalidParameterError(f"an orthogonal pair needs k >= 2, got {k}")
    u, v = _orthonormal_pair(k, seed)
    nu = v / (n - 1)
    b = np.empty((k, n))
    b[:, 0] = u
    b[:, 1:] = nu[:, None]
    return InvariantRep(n, k, b, nu)


def recentered(b, nu_c=None):
    """``(x1 - mean, nu_c - mean)`` for a batch whose cluster center is ``nu_c``."""
    b = np.asarray(b, dtype=np.float64)
    if nu_c is None:
        nu_c = b[:, 1:].mean(axis=1)
    m = b.mean(axis=1)
    return b[:, 0] - m, nu_c - m


def alpha_invariant(n: int) -> float:
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    return n * n / (n * n - 2 * n + 2)


def alpha_stability(n: int, R: float) -> float:
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if not R > n / (n - 1):
        raise PreconditionError(f"R must exceed n/(n-1) = {n / (n - 1)}, got {R}")
    return n * n / ((n - 1) ** 2 * R * R)


def expected_relu_norm_sq(x, p: KernelParams) -> float:
    """``E |relu(W x)|^2 = d sigma^2 |x|^2 / 2``."""
    x = np.asarray(x, dtype=np.float64)
    return p.d * p.sigma_sq / 2.0 * float(np.dot(x, x))


def arccos_kernel(x, y, p: KernelParams) -> float:
    """Closed form of ``E[relu(W x) . relu(W y)]`` for Gaussian ``W``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise DegenerateColumnError("arc-cosine kernel is undefined for a zero vector")
    rho = float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))
    shape = (np.sqrt(1.0 - rho * rho) + (np.pi - np.arccos(rho)) * rho) / np.pi
    return p.d * p.sigma_sq * nx * ny / 2.0 * shape


def kernel_contraction_check(x, y, d: int) -> bool:
    """Whether ``K(x, y) > x . y`` at ``sigma^2 = 2/d``.

    The inequality is strict for every pair that is not positively
    collinear.  For ``y = c x`` with ``c > 0`` both sides are equal and the
    answer is False.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.array_equal(x, y):
        raise PreconditionError("x and y must differ; equality gives K(x, x) = x . x")
    return arccos_kernel(x, y, KernelParams(d, 2.0 / d)) > float(np.dot(x, y))


def mc_kernel(x, y, p: KernelParams, trials: int, seed: SeedSpec = SeedSpec(), chunk: int = 256):
    """Simulated ``relu(W x) . relu(W y)``; returns ``(mean, standard error)``."""
    if trials < 2:
        raise InvalidParameterError("need at least 2 trials for a standard error")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gen = seed.generator()
    scale = np.sqrt(p.sigma_sq)
    vals = np.empty(trials)
    for start in range(0, trials, chunk):
        m = min(chunk, trials - start)
        w = scale * gen.standard_normal((m, p.d, x.size))
        vals[start : start + m] = np.sum(np.maximum(w @ x, 0.0) * np.maximum(w @ y, 0.0), axis=1)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(trials))


def perturbed_invariant(n: int, k: int, R: float, spread: float, seed: SeedSpec = SeedSpec()) -> np.ndarray:
    """Invariant rep rescaled to ``|x1 - nu_c| = R`` with a jittered cluster.

    The cluster offsets are centered Gaussian vectors scaled so the largest
    has norm ``spread``; centering keeps ``nu_c`` the exact cluster mean.
    """
    if n < 3 or k < 3:
        raise InvalidParameterError(f"need n >= 3 and k >= 3, got n={n}, k={k}")
    alpha_stability(n, R)  # validates R
    if not 0 <= spread < 1.0 / n**2:
        raise InvalidParameterError(f"spread must lie in [0, 1/n^2), got {spread}")
    u, v = _orthonormal_pair(k, seed.derive("frame"))
    s = R / np.sqrt(1.0 + 1.0 / (n - 1) ** 2)
    x1, nu = s * u, s * v / (n - 1)
    b = np.empty((k, n))
    b[:, 0] = x1
    b[:, 1:] = nu[:, None]
    if spread > 0:
        eps = gaussian_matrix(k, n - 1, 1.0, seed.derive("jitter"))
        eps -= eps.mean(axis=1, keepdims=True)
        eps *= spread / np.linalg.norm(eps, axis=0).max()
        b[:, 1:] += eps
    return b


@dataclass(frozen=True)
class LayerExpectationReport:
    """Monte Carlo moments of one recentering + ReLU layer.

    Pair labels index batch columns from 0; label ``n`` stands for the
    propagated cluster center.  Standard errors are ``std / sqrt(count)``.
    """

    trials: int
    seed: SeedSpec
    col_norm_sq: np.ndarray
    col_norm_sq_se: np.ndarray
    nu_norm_sq: float
    nu_norm_sq_se: float
    orthogonality_violations: int
    orthogonality_max_abs: float
    pairs: tuple
    pair_dist_sq: np.ndarray
    pair_dist_sq_se: np.ndarray
    input_pair_dist_sq: np.ndarray
    skipped: np.ndarray


def _tracked_pairs(n: int):
    # cluster columns 1..n-1 among themselves and against the center label n
    cols = list(range(1, n)) + [n]
    return tuple((a, b) for i, a in enumerate(cols) for b in cols[i + 1 :])


def mc_layer_expectation(b, p: KernelParams, trials: int, seed: SeedSpec = SeedSpec(), nu_c=None) -> LayerExpectationReport:
    """Simulate ``X' = relu(W X - mu)`` and ``nu_hat = relu(W nu_c - mu)``.

    ``mu`` is the batch mean of ``W X``; ``nu_c`` defaults to the mean of
    columns ``2..n``.  Trial ``i`` uses the stream ``seed.derive("trial", i)``.
    """
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    b = as_batch(b, min_cols=3)
    k, n = b.shape
    nu = b[:, 1:].mean(axis=1) if nu_c is None else np.asarray(nu_c, dtype=np.float64)
    ext = np.column_stack([b, nu])
    pairs = _tracked_pairs(n)
    pa = np.array([a for a, _ in pairs])
    pb = np.array([c for _, c in pairs])
    in_dist = np.sum((ext[:, pa] - ext[:, pb]) ** 2, axis=0)

    norms = np.empty((trials, n + 1))
    inner = np.empty(trials)
    dist = np.empty((trials, len(pairs)))
    same = np.zeros((trials, len(pairs)), dtype=bool)
    for t in range(trials):
        w = gaussian_matrix(p.d, k, p.sigma_sq, seed.derive("trial", t))
        z = w @ ext
        mu = z[:, :n].mean(axis=1, keepdims=True)
        out = np.maximum(z - mu, 0.0)
        norms[t] = np.sum(out * out, axis=0)
        inner[t] = np.dot(out[:, 0], out[:, n])
        diff = out[:, pa] - out[:, pb]
        dist[t] = np.sum(diff * diff, axis=0)
        same[t] = ~np.any(diff != 0, axis=0)

    def mean_se(v):
        if v.size < 2:
            return float(v.mean()) if v.size else float("nan"), float("nan")
        return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))

    pd = np.empty(len(pairs))
    pse = np.empty(len(pairs))
    for j in range(len(pairs)):
        pd[j], pse[j] = mean_se(dist[~same[:, j], j])
    sq = np.sqrt(trials) if trials > 1 else np.nan
    std = norms.std(axis=0, ddof=1) if trials > 1 else np.full(n + 1, np.nan)
    return LayerExpectationReport(
        trials=trials,
        seed=seed,
        col_norm_sq=norms[:, :n].mean(axis=0),
        col_norm_sq_se=std[:n] / sq,
        nu_norm_sq=float(norms[:, n].mean()),
        nu_norm_sq_se=float(std[n] / sq),
        orthogonality_violations=int(np.count_nonzero(inner != 0)),
        orthogonality_max_abs=float(np.max(np.abs(inner))),
        pairs=pairs,
        pair_dist_sq=pd,
        pair_dist_sq_se=pse,
        input_pair_dist_sq=in_dist,
        skipped=same.sum(axis=0),
    )
