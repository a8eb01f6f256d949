"""The +/- identity branching model of a one-dimensional batch.

Every row ``x`` of level ``t`` spawns two rows at level ``t + 1``: the
positive child ``relu(x - mean(x))`` and the negative child
``relu(mean(x) - x)``.  Starting from an ascending ``x0`` every row stays
monotone, so clusters of equal entries are contiguous runs of columns.

Three storage modes are available:

``full``
    all ``2**t`` rows explicitly; row ``r`` at level ``t`` is reached by the
    transform word given by the binary digits of ``r`` (0 = positive).
``pruned``
    identical rows merged into one representative with an occurrence count.
``exact``
    rational arithmetic on scaled Python integers, also pruned.

``auto`` picks ``full`` up to depth 20 and ``pruned`` beyond.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm, pi, sqrt
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .errors import BudgetError, InsufficientDepthError, InvalidParameterError, PreconditionError

MERGE_TOL = 1e-12
DEFAULT_BUDGET = 2 * 1024**3
AUTO_FULL_MAX_DEPTH = 20
MODES = ("full", "pruned", "exact", "auto")


# --------------------------------------------------------------------------
# single vectors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterVector:
    """A vector stored as its distinct values plus a column-to-cluster map.

    Attributes
    ----------
    values : ndarray
        Strictly increasing cluster values.
    multiplicities : ndarray
        Number of columns in each cluster.
    assignment : ndarray
        ``assignment[j]`` is the cluster holding column ``j``.
    """

    values: np.ndarray
    multiplicities: np.ndarray
    assignment: np.ndarray

    @classmethod
    def from_vector(cls, x, tol: float = MERGE_TOL) -> "ClusterVector":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.size == 0:
            raise InvalidParameterError("expected a non-empty 1-D vector")
        order = np.argsort(x, kind="stable")
        xs = x[order]
        limit = tol * max(float(np.max(np.abs(xs))), 0.0)
        new = np.empty(xs.size, dtype=bool)
        new[0] = True
        new[1:] = np.diff(xs) > limit
        ids = np.cumsum(new) - 1
        assignment = np.empty(x.size, dtype=np.int64)
        assignment[order] = ids
        return cls(xs[new], np.bincount(ids).astype(np.int64), assignment)

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    @property
    def c(self) -> int:
        return int(self.values.size)

    def to_vector(self) -> np.ndarray:
        return self.values[self.assignment]

    def mean(self) -> float:
        return float(np.dot(self.values, self.multiplicities) / self.n)

    def _apply(self, raw: np.ndarray, tol: float) -> "ClusterVector":
        # raw holds one new value per old cluster, so c can only shrink
        raw = np.where(raw > 0, raw, 0.0)
        merged = ClusterVector.from_vector(raw, tol)
        return ClusterVector(
            merged.values,
            np.bincount(merged.assignment, weights=self.multiplicities, minlength=merged.c).astype(np.int64),
            merged.assignment[self.assignment],
        )

    def positive_transform(self, tol: float = MERGE_TOL) -> "ClusterVector":
        return self._apply(self.values - self.mean(), tol)

    def negative_transform(self, tol: float = MERGE_TOL) -> "ClusterVector":
        return self._apply(self.mean() - self.values, tol)

    def transform(self, symbol: str, tol: float = MERGE_TOL) -> "ClusterVector":
        if symbol == "+":
            return self.positive_transform(tol)
        if symbol == "-":
            return self.negative_transform(tol)
        raise InvalidParameterError(f"transform symbol must be '+' or '-', got {symbol!r}")


@dataclass(frozen=True)
class NotYet:
    """Stability was not reached within ``horizon`` transformations."""

    horizon: int


def _check_distinct(x0) -> None:
    xs = np.sort(np.asarray(x0, dtype=np.float64))
    if np.any(xs[1:] == xs[:-1]):
        raise PreconditionError("entries of x0 must be pairwise distinct")


def cluster_trace(x0, word: Sequence[str] | str, tol: float = MERGE_TOL) -> list[int]:
    """Cluster count after each prefix of ``word``; entry 0 is ``c(x0)``."""
    x = ClusterVector.from_vector(x0, tol)
    trace = [x.c]
    for s in word:
        x = x.transform(s, tol)
        trace.append(x.c)
    return trace


def stability_time(x0, word: Sequence[str] | str, tol: float = MERGE_TOL) -> int | NotYet:
    """First position along ``word`` at which the vector has at most 3 clusters."""
    _check_distinct(x0)
    x = ClusterVector.from_vector(x0, tol)
    if x.c <= 3:
        return 0
    for t, s in enumerate(word, start=1):
        x = x.transform(s, tol)
        if x.c <= 3:
            return t
    return NotYet(len(word))


def two_cluster_coordinate(c: float, n0: int, n: int, k: int, T: int) -> float:
    """Positive-cluster value after ``T`` steps, ``k`` of them taken with a zero cluster of size ``n0``."""
    if not c > 0:
        raise InvalidParameterError("c must be positive")
    if not 1 <= n0 <= n - 1:
        raise InvalidParameterError(f"n0 must lie in 1..{n - 1}, got {n0}")
    if not 0 <= k <= T:
        raise InvalidParameterError(f"k must lie in 0..T, got k={k}, T={T}")
    return (n0 / n) ** k * ((n - n0) / n) ** (T - k) * c


# --------------------------------------------------------------------------
# whole tree
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeState:
    """All rows of one tree level.

    For ``mode == "exact"`` the rows are tuples of integers and the true
    values are ``row / scale``; otherwise ``rows`` is a float array and
    ``scale`` is 1.  ``counts`` is ``None`` in full mode.  Columns are in
    ascending order of ``x0``; ``permutation[j]`` is the original index of
    column ``j``.
    """

    level: int
    rows: object
    counts: object
    mode: str
    permutation: np.ndarray
    scale: int = 1
    tol: float = MERGE_TOL

    @property
    def n(self) -> int:
        return int(self.permutation.size)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def total_count(self) -> int:
        if self.counts is None:
            return self.n_rows
        return int(sum(int(c) for c in self.counts))

    def float_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """``(rows, weights)`` as float arrays regardless of mode."""
        if self.mode == "exact":
            s = self.scale
            rows = np.array([[v / s for v in r] for r in self.rows], dtype=np.float64)
            return rows.reshape(-1, self.n), np.array(self.counts, dtype=np.float64)
        if self.counts is None:
            return self.rows, np.ones(self.n_rows)
        return self.rows, np.asarray(self.counts, dtype=np.float64)


def _sorted_input(x0):
    x = np.asarray(x0, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise InvalidParameterError("x0 must be a 1-D vector with at least 2 entries")
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("x0 contains non-finite entries")
    _check_distinct(x)
    perm = np.argsort(x, kind="stable")
    return perm


def _prune(rows: np.ndarray, counts: np.ndarray):
    mx = rows.max(axis=1)
    safe = np.where(mx > 0, mx, 1.0)
    mant, expo = np.frexp(mx)
    # scale-free key: the row shape to 2**-44 plus the row maximum to 2**-44 relative
    key = np.column_stack([expo, np.round(mant * 2.0**44), np.round(rows / safe[:, None] * 2.0**44)])
    key = key.astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=counts.astype(np.float64))
    return np.ascontiguousarray(rows[first]), np.rint(merged).astype(np.int64)


def _exact_start(x0):
    fr = [v if isinstance(v, Fraction) else Fraction(v) for v in x0]
    den = lcm(*(f.denominator for f in fr))
    return tuple(int(f * den) for f in fr), den


def _exact_children(rows: dict, n: int) -> dict:
    out: dict = {}
    for r, c in rows.items():
        s = sum(r)
        for child in (tuple(max(n * v - s, 0) for v in r), tuple(max(s - n * v, 0) for v in r)):
            out[child] = out.get(child, 0) + c
    return out


def _resolve_mode(mode: str, T: int) -> str:
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "auto":
        return "full" if T <= AUTO_FULL_MAX_DEPTH else "pruned"
    return mode


def iter_tree(
    x0,
    T: int,
    mode: str = "auto",
    *,
    tol: float = MERGE_TOL,
    budget_bytes: int = DEFAULT_BUDGET,
) -> Iterator[TreeState]:
    """Yield the tree state at every level ``0..T``.

    ``x0`` is sorted ascending first.  In exact mode entries may be ints,
    :class:`fractions.Fraction`, decimal strings or floats (taken at their
    exact binary value).
    """
    if T < 0:
        raise InvalidParameterError(f"depth must be >= 0, got {T}")
    mode = _resolve_mode(mode, T)
    if mode == "exact":
        fr = [x if isinstance(x, Fraction) else Fraction(x) for x in x0]
        perm = _sorted_input([float(f) for f in fr])
        if len(set(fr)) != len(fr):
            raise PreconditionError("entries of x0 must be pairwise distinct")
        row, den = _exact_start([fr[i] for i in perm])
        n = len(row)
        rows = {row: 1}
        scale = den
        for t in range(T + 1):
            if t:
                rows = _exact_children(rows, n)
                scale *= n
            yield TreeState(t, tuple(rows), tuple(rows.values()), mode, perm, scale, 0.0)
        return

    perm = _sorted_input(x0)
    x = np.asarray(x0, dtype=np.float64)[perm]
    n = x.size
    if mode == "full":
        need = (2**T) * n * 8
        if need > budget_bytes:
            raise BudgetError(
                f"full mode at depth {T} needs {need} bytes, over the {budget_bytes}-byte budget; use mode='pruned'"
            )
    rows = x[None, :].copy()
    counts = None if mode == "full" else np.ones(1, dtype=np.int64)
    yield TreeState(0, rows, counts, mode, perm, 1, tol)
    for t in range(1, T + 1):
        rows = kernels.tree_children(rows, tol)
        if counts is not None:
            rows, counts = _prune(rows, np.repeat(counts, 2))
            if rows.nbytes > budget_bytes:
                raise BudgetError(f"pruned tree at level {t} exceeds the {budget_bytes}-byte budget")
        yield TreeState(t, rows, counts, mode, perm, 1, tol)


def evolve_tree(x0, T: int, mode: str = "auto", **kw) -> TreeState:
    """Tree state at level ``T``; see :func:`iter_tree` for the options."""
    state = None
    for state in iter_tree(x0, T, mode, **kw):
        pass
    return state


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnGeometry:
    gram: np.ndarray
    norms: np.ndarray
    angles: np.ndarray  # NaN where a column has zero norm

    @property
    def undefined(self) -> np.ndarray:
        return np.isnan(self.angles)


def weighted_gram(rows: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # einsum keeps the summation order fixed, unlike a threaded BLAS call
    return np.einsum("ri,r,rj->ij", rows, weights, rows, optimize=False)


def exact_gram_entry(ts: TreeState, i: int, j: int) -> Fraction:
    """One Gram entry as an exact rational (exact mode only)."""
    if ts.mode != "exact":
        raise InvalidParameterError("exact_gram_entry needs an exact-mode state")
    total = sum(c * r[i] * r[j] for r, c in zip(ts.rows, ts.counts))
    return Fraction(total, ts.scale * ts.scale)


def column_geometry(ts: TreeState) -> ColumnGeometry:
    if ts.mode == "exact":
        n = ts.n
        g = [[0] * n for _ in range(n)]
        for r, c in zip(ts.rows, ts.counts):
            for i in range(n):
                if r[i]:
                    ci = c * r[i]
                    for j in range(i, n):
                        g[i][j] += ci * r[j]
        s2 = ts.scale * ts.scale
        gram = np.array([[g[min(i, j)][max(i, j)] / s2 for j in range(n)] for i in range(n)])
    else:
        rows, w = ts.float_rows()
        gram = weighted_gram(rows, w)
    norms = np.sqrt(np.diag(gram))
    outer = np.outer(norms, norms)
    with np.errstate(divide="ignore", invalid="ignore"):
        ang = np.arccos(np.clip(gram / outer, -1.0, 1.0))
    ang[outer == 0] = np.nan
    np.fill_diagonal(ang, np.where(norms > 0, 0.0, np.nan))
    return ColumnGeometry(gram, norms, ang)


# --------------------------------------------------------------------------
# census and asymptotics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterCensus:
    """Squared row maxima summed by composition (cluster sizes in column order).

    ``C2`` and ``D2`` (compositions ``(2, n-2)`` and ``(n-2, 2)``) are
    sub-totals of ``residual``, so ``A + B + C3 + D3 + residual == total``.
    """

    A: float
    B: float
    C3: float
    D3: float
    C2: float
    D2: float
    residual: float
    total: float
    level: int = 0


def _exact_code(r) -> int:
    n = len(r)
    brk = [j for j in range(n - 1) if r[j] != r[j + 1]]
    if brk == [0]:
        return kernels.A_1_REST
    if brk == [n - 2]:
        return kernels.B_REST_1
    if brk == [0, 1]:
        return kernels.C3_1_1_REST
    if brk == [n - 3, n - 2]:
        return kernels.D3_REST_1_1
    if brk == [1]:
        return kernels.C2_2_REST
    if brk == [n - 3]:
        return kernels.D2_REST_2
    return kernels.OTHER


def census(ts: TreeState) -> ClusterCensus:
    if ts.mode == "exact":
        # exact integer accumulation, then one rounding per field
        sums = [0] * 7
        for r, c in zip(ts.rows, ts.counts):
            sums[_exact_code(r)] += c * max(r) ** 2
        s2 = ts.scale * ts.scale
        vals = [v / s2 for v in sums]
        total = sum(sums) / s2
    else:
        rows, w = ts.float_rows()
        codes = kernels.composition_codes(rows)
        q = w * rows.max(axis=1) ** 2
        vals = [float(np.sum(q[codes == k])) for k in range(7)]
        total = float(np.sum(q))
    A, B, C3, D3 = (vals[kernels.A_1_REST], vals[kernels.B_REST_1], vals[kernels.C3_1_1_REST], vals[kernels.D3_REST_1_1])
    C2, D2 = vals[kernels.C2_2_REST], vals[kernels.D2_REST_2]
    residual = vals[kernels.OTHER] + C2 + D2
    return ClusterCensus(A, B, C3, D3, C2, D2, residual, total, ts.level)


@dataclass(frozen=True)
class AsymptoticPrediction:
    """Predicted squared norms and inner products one level after the census.

    ``ratio`` is ``(A + C3) / (B + D3)``; column 1 is the selected extreme
    when it is at least 1, column ``n`` otherwise.
    """

    norm_sq_first: float
    norm_sq_second: float
    norm_sq_interior: float
    norm_sq_last: float
    inner_interior_first: float
    inner_interior_last: float
    ratio: float
    selected: str
    level: int


def asymptotic_geometry(census_series: Sequence[ClusterCensus] | ClusterCensus, n: int) -> AsymptoticPrediction:
    """Predict level ``L + 1`` geometry from the census of level ``L``.

    Only the last census of a series is used.  Interior means columns
    ``3..n-2`` (1-based); column 2 gets its own prediction because the
    ``(1, 1, n-2)`` rows load it differently.
    """
    cs = census_series if isinstance(census_series, ClusterCensus) else census_series[-1]
    if n < 5:
        raise InvalidParameterError(f"asymptotic formulas need n >= 5, got {n}")
    A, B, C2, D2 = cs.A, cs.B, cs.C2, cs.D2
    if not A + B > 0:
        raise InsufficientDepthError(f"no two-cluster mass at level {cs.level}; evolve deeper")
    nn = float(n * n)
    a1 = ((n - 1) / n) ** 2
    a2 = ((n - 2) / n) ** 2
    denom = B + cs.D3
    ratio = float("inf") if denom == 0 else (A + cs.C3) / denom
    return AsymptoticPrediction(
        norm_sq_first=a1 * A + B / nn + a2 * C2 + 4 * D2 / nn,
        norm_sq_second=(A + B + cs.C3 + cs.D3) / nn,
        norm_sq_interior=(A + B + 4 * C2 + 4 * D2) / nn,
        norm_sq_last=A / nn + a1 * B + 4 * C2 / nn + a2 * D2,
        inner_interior_first=(B + 4 * D2) / nn,
        inner_interior_last=(A + 4 * C2) / nn,
        ratio=ratio,
        selected="first" if ratio >= 1 else "last",
        level=cs.level + 1,
    )


# --------------------------------------------------------------------------
# theorem report
# --------------------------------------------------------------------------


def angle_lower_bound(n: int) -> float:
    return pi / 2 - sqrt(2) * pi / (n - 2)


def norm_ratio_bound(n: int) -> float:
    return 3.0 / (n - 2)


@dataclass
class AngleTheoremReport:
    """Measured values, bounds and verdicts for the four angle statements.

    ``vacuous`` lists items whose bound says nothing at this ``n``; those
    count as passed.  ``levels`` holds one record of per-level geometry and
    census values for export.
    """

    n: int
    depth: int
    mode: str
    item1_max_abs: float
    item1_exact_zero: bool
    item1_pass: bool
    interior_angle_trend: list  # max interior angle (rad) over the last levels
    item2_decreasing: bool
    item2_final_deg: float
    item2_threshold_deg: float
    item2_pass: bool
    census_ratio: float
    selected_column: int  # 1-based
    item3_ratio: float
    item3_bound: float
    item3_pass: bool
    item4_angle: float
    item4_bound: float
    item4_pass: bool
    vacuous: list = field(default_factory=list)
    levels: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.item1_pass and self.item2_pass and self.item3_pass and self.item4_pass


def _max_interior_angle(geo: ColumnGeometry) -> float:
    n = geo.angles.shape[0]
    block = geo.angles[1 : n - 1, 1 : n - 1]
    if np.all(np.isnan(block)):
        return float("nan")
    return float(np.nanmax(block))


def _gram_1n(state: TreeState):
    n = state.n
    if state.mode == "exact":
        g = exact_gram_entry(state, 0, n - 1)
        return abs(float(g)), g == 0
    rows, w = state.float_rows()
    g = float(np.dot(w, rows[:, 0] * rows[:, n - 1]))
    return abs(g), g == 0.0


def verify_angle_theorem(
    x0,
    T: int,
    mode: str = "auto",
    *,
    angle_threshold_deg: float = 5.0,
    trend_levels: int = 4,
    **kw,
) -> AngleTheoremReport:
    """Measure the four angle statements on the tree grown from ``x0``.

    Item 1 (columns 1 and n orthogonal) is checked at every level from 1 on;
    level 0 is the raw input, before any ReLU.  Items 2 to 4 are measured at
    level ``T``; item 2 also needs the maximum interior angle to fall
    strictly over the last ``trend_levels`` levels.  The extreme column for
    items 3 and 4 is picked by the census ratio ``(A + C3) / (B + D3)``.
    """
    n = len(x0)
    if n < 3:
        raise InvalidParameterError(f"need n >= 3, got {n}")
    item1, exact_zero = 0.0, True
    levels = []
    geo = state = None
    for state in iter_tree(x0, T, mode, **kw):
        geo = column_geometry(state)
        cs = census(state)
        rec = {
            "level": state.level,
            "rows": state.n_rows,
            "gram_1n": None,
            "max_interior_angle": _max_interior_angle(geo),
            "norm_first": float(geo.norms[0]),
            "norm_last": float(geo.norms[-1]),
            "max_interior_norm": float(np.max(geo.norms[1:-1])),
            "A": cs.A,
            "B": cs.B,
            "C3": cs.C3,
            "D3": cs.D3,
            "residual": cs.residual,
        }
        if state.level:
            val, zero = _gram_1n(state)
            rec["gram_1n"] = val
            item1 = max(item1, val)
            exact_zero &= bool(zero)
        levels.append(rec)

    cs = census(state)
    denom = cs.B + cs.D3
    ratio = float("inf") if denom == 0 else (cs.A + cs.C3) / denom
    e = 0 if ratio >= 1 else n - 1
    interior = list(range(1, n - 1))
    ne = geo.norms[e]
    item3_ratio = float(np.max(geo.norms[interior]) / ne) if ne > 0 else float("inf")
    item4_angle = float(np.min(geo.angles[e, interior])) if ne > 0 else float("nan")
    lb = angle_lower_bound(n)

    trend = [r["max_interior_angle"] for r in levels[-trend_levels:]]
    decreasing = len(trend) > 1 and all(np.isfinite(trend)) and all(b < a for a, b in zip(trend, trend[1:]))
    final_deg = float(np.degrees(trend[-1]))
    vacuous = []
    if n < 4:
        vacuous.append("item2")  # a single interior column has no interior pairs
    if lb <= 0:
        vacuous.append("item4")
    item2 = "item2" in vacuous or (decreasing and final_deg < angle_threshold_deg)
    return AngleTheoremReport(
        n=n,
        depth=T,
        mode=state.mode,
        item1_max_abs=item1,
        item1_exact_zero=bool(exact_zero),
        item1_pass=item1 <= 1e-12,
        interior_angle_trend=trend,
        item2_decreasing=bool(decreasing),
        item2_final_deg=final_deg,
        item2_threshold_deg=angle_threshold_deg,
        item2_pass=bool(item2),
        census_ratio=ratio,
        selected_column=e + 1,
        item3_ratio=item3_ratio,
        item3_bound=norm_ratio_bound(n),
        item3_pass=item3_ratio <= norm_ratio_bound(n),
        item4_angle=item4_angle,
        item4_bound=lb,
        item4_pass=bool("item4" in vacuous or item4_angle >= lb),
        vacuous=vacuous,
        levels=levels,
    )
