"""How many random ReLU neurons does a batch need before it has full rank?

``gamma(X)`` is the smallest Gaussian volume among the cells of weight
space that induce one sign pattern on the batch.  The expected number of
neurons needed is at most ``n / gamma``, and the probability of needing more
than ``alpha n / gamma`` decays exponentially in ``n``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import ceil, exp, log, sqrt

import numpy as np

from . import kernels
from .batch import SeedSpec, as_batch, column_norms, numerical_rank
from .errors import DegenerateColumnError, InvalidParameterError, PreconditionError, UnsupportedDimensionError

COLLINEAR_TOL = 1e-12
_Z95 = 1.959963984540054


def sign_pattern(w, b) -> np.ndarray:
    """Signs of ``w . x_i`` per column as int8 in {-1, 0, 1}."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if not np.any(w):
        raise InvalidParameterError("w must be nonzero")
    return np.sign(w @ np.asarray(b, dtype=np.float64)).astype(np.int8)


@dataclass(frozen=True)
class GammaEstimate:
    gamma_hat: float
    classes_observed: int
    samples: int
    ci_low: float
    ci_high: float
    exact: bool
    discarded: int = 0
    caveat: bool = False  # few hits in the rarest class; small cells may be unseen

    @property
    def stderr(self) -> float:
        if self.exact or self.samples == 0:
            return 0.0
        g = self.gamma_hat
        return sqrt(g * (1 - g) / self.samples)


def wilson_interval(hits: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    p = hits / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def estimate_gamma_mc(b, samples: int, seed: SeedSpec = SeedSpec(), chunk: int = 65536) -> GammaEstimate:
    """Monte Carlo ``gamma``: the smallest observed sign-pattern frequency.

    Draws that put some column exactly on a hyperplane are discarded and
    replaced, so exactly ``samples`` usable draws are counted.
    """
    if samples < 1:
        raise InvalidParameterError("samples must be >= 1")
    b = as_batch(b, min_cols=1)
    k = b.shape[0]
    gen = seed.generator()
    keys = []
    have = discarded = 0
    while have < samples:
        m = min(chunk, samples - have)
        kk, valid = kernels.sign_masks(gen.standard_normal((m, k)) @ b)
        discarded += int(m - np.count_nonzero(valid))
        kk = kk[valid]
        keys.append(kk)
        have += kk.shape[0]
    _, counts = np.unique(np.concatenate(keys), axis=0, return_counts=True)
    low = int(counts.min())
    lo, hi = wilson_interval(low, samples)
    g = low / samples
    return GammaEstimate(g, int(counts.size), samples, lo, hi, False, discarded, samples * g < 50)


def estimate_gamma_exact_2d(b, merge_tol: float = 1e-12) -> GammaEstimate:
    """Exact ``gamma`` for a planar batch from the arcs between hyperplanes.

    Each column ``x`` contributes the line ``{w : w . x = 0}``; ``m`` distinct
    lines cut the circle into ``2 m`` arcs and the smallest arc over ``2 pi``
    is ``gamma``.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != 2:
        raise UnsupportedDimensionError(f"exact enumeration needs k = 2, got shape {b.shape}")
    b = as_batch(b, min_cols=1)
    if np.any(column_norms(b) == 0):
        raise DegenerateColumnError("zero column has no separating line")
    phi = np.sort(np.mod(np.arctan2(b[1], b[0]) + np.pi / 2, np.pi))
    gaps = np.diff(np.append(phi, phi[0] + np.pi))
    keep = gaps > merge_tol
    if not np.any(keep):  # every column on one line
        gaps, keep = np.array([np.pi]), np.array([True])
    lines = int(np.count_nonzero(keep))
    g = float(gaps[keep].min() / (2 * np.pi))
    return GammaEstimate(g, 2 * lines, 0, g, g, True)


def estimate_gamma(b, samples: int = 100_000, seed: SeedSpec = SeedSpec()) -> GammaEstimate:
    """Exact for planar batches, Monte Carlo otherwise."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim == 2 and b.shape[0] == 2:
        return estimate_gamma_exact_2d(b)
    return estimate_gamma_mc(b, samples, seed)


# --------------------------------------------------------------------------
# incremental neurons
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Exhausted:
    """Full rank not reached with ``max_d`` neurons."""

    max_d: int


def check_not_collinear(b, tol: float = COLLINEAR_TOL) -> None:
    b = np.asarray(b, dtype=np.float64)
    norms = column_norms(b)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateColumnError(f"column {zero[0]} is zero")
    cos = (b.T @ b) / np.outer(norms, norms)
    np.fill_diagonal(cos, 0.0)
    hit = np.argwhere(np.triu(np.abs(cos) >= 1 - tol))
    if hit.size:
        i, j = hit[0]
        raise PreconditionError(f"columns {i} and {j} are collinear (|cos| >= 1 - {tol})")


def _neuron_outputs(w, b, with_bn: bool) -> np.ndarray:
    z = w @ b
    if with_bn:
        z = z - z.mean(axis=1, keepdims=True)
        sd = z.std(axis=1, keepdims=True)
        # a row with zero spread is identically zero after recentering
        z = z / np.where(sd > 0, sd, 1.0)
    return np.maximum(z, 0.0)


def min_neurons_to_full_rank(
    b,
    with_bn: bool = False,
    max_d: int | None = None,
    seed: SeedSpec = SeedSpec(),
    collinear_tol: float = COLLINEAR_TOL,
) -> int | Exhausted:
    """Smallest ``d`` such that ``d`` i.i.d. N(0, I) neurons give rank ``n``.

    Neurons are drawn from one stream in order, so the answer equals the
    one-row-at-a-time search.  Every neuron's output depends only on its own
    weights, and rank grows with ``d``, so the first full-rank prefix is
    found by doubling and bisection.
    """
    b = as_batch(b, min_cols=1)
    k, n = b.shape
    check_not_collinear(b, collinear_tol)
    if max_d is None:
        max_d = 64 * n
    if max_d < n:
        raise InvalidParameterError(f"max_d must be >= n = {n}, got {max_d}")
    gen = seed.generator()
    out = np.empty((0, n))
    prev, size = n - 1, n
    while True:
        w = gen.standard_normal((size - out.shape[0], k))
        out = np.vstack([out, _neuron_outputs(w, b, with_bn)])
        if numerical_rank(out) == n:
            break
        if size == max_d:
            return Exhausted(max_d)
        prev, size = size, min(2 * size, max_d)
    # rank(out[:prev]) < n <= rank(out[:size])
    lo, hi = prev + 1, size
    while lo < hi:
        mid = (lo + hi) // 2
        if numerical_rank(out[:mid]) == n:
            hi = mid
        else:
            lo = mid + 1
    return lo


def chernoff_bound(n: int, alpha: float, gamma: float) -> float:
    """Optimised Chernoff tail of a sum of ``n`` geometric(``gamma``) above ``alpha n / gamma``."""
    if not alpha > 1 or not 0 < gamma < 1:
        return 1.0
    r = alpha / gamma
    expo = r * log(1 / alpha) + (r - 1) * log((alpha - gamma) / (1 - gamma))
    return min(1.0, exp(-n * expo))


def simple_bound(n: int, alpha: float) -> float:
    """The gamma-free bound ``exp(-n (alpha - 1 - log alpha))``."""
    return min(1.0, exp(-n * (alpha - 1 - log(alpha))))


@dataclass
class RankProbeReport:
    n: int
    trials: int
    with_bn: bool
    gamma: GammaEstimate
    bound_mean: float  # n / gamma
    y: list
    exhausted: int
    mean_y: float
    stderr_y: float
    ci_low: float
    ci_high: float
    max_d: int = 0
    alphas: list = field(default_factory=list)
    thresholds: list = field(default_factory=list)
    failure_freq: list = field(default_factory=list)
    failure_stderr: list = field(default_factory=list)
    chernoff: list = field(default_factory=list)
    simple: list = field(default_factory=list)


def rank_probe_experiment(
    b,
    trials: int,
    alphas=(3.0, 5.0),
    with_bn: bool = False,
    seed: SeedSpec = SeedSpec(),
    max_d: int | None = None,
    gamma_samples: int = 100_000,
    workers: int = 1,
) -> RankProbeReport:
    """Repeat :func:`min_neurons_to_full_rank` and compare with the bounds.

    With ``with_bn`` the relevant ``gamma`` is that of the recentered batch.
    Trial ``i`` draws from ``seed.derive("trial", i)``, so ``workers`` only
    changes the schedule, never the result.  A trial counts as a
    failure at ``alpha`` when it needs more than ``alpha n / gamma`` neurons.
    """
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    b = as_batch(b, min_cols=1)
    n = b.shape[1]
    gb = b - b.mean(axis=1, keepdims=True) if with_bn else b
    gamma = estimate_gamma(gb, gamma_samples, seed.derive("gamma"))
    g = gamma.gamma_hat
    alphas = [float(a) for a in alphas]
    if max_d is None:
        max_d = int(ceil(max([8.0] + alphas) * n / g))
    def one(t):
        return min_neurons_to_full_rank(b, with_bn, max_d, seed.derive("trial", t))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            raw = list(pool.map(one, range(trials)))
    else:
        raw = [one(t) for t in range(trials)]
    ys = []
    exhausted = 0
    for y in raw:
        if isinstance(y, Exhausted):
            exhausted += 1
            y = max_d + 1  # censored; only ever counted as a failure
        ys.append(int(y))
    arr = np.array(ys, dtype=np.float64)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / sqrt(trials)) if trials > 1 else 0.0
    rep = RankProbeReport(
        n=n,
        trials=trials,
        with_bn=with_bn,
        gamma=gamma,
        bound_mean=n / g,
        y=ys,
        exhausted=exhausted,
        mean_y=mean,
        stderr_y=se,
        ci_low=mean - _Z95 * se,
        ci_high=mean + _Z95 * se,
        max_d=max_d,
    )
    for a in alphas:
        thr = a * n / g
        f = float(np.mean(arr > thr))
        rep.alphas.append(a)
        rep.thresholds.append(thr)
        rep.failure_freq.append(f)
        rep.failure_stderr.append(sqrt(f * (1 - f) / trials))
        rep.chernoff.append(chernoff_bound(n, a, g))
        rep.simple.append(simple_bound(n, a))
    return rep


def circle_batch(n: int, radius: float = 1.0) -> np.ndarray:
    """``n`` equally spaced points on a circle in the plane."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    theta = 2 * np.pi * np.arange(n) / n
    return radius * np.vstack([np.cos(theta), np.sin(theta)])
