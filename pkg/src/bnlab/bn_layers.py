"""Forward propagation through random layers with decomposed batch norm.

Each layer computes ``Z = W X`` and then applies, in this fixed order and
only when enabled: recentering (subtract the per-neuron batch mean),
rescaling (divide by a per-neuron scale statistic) and ReLU.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .batch import SeedSpec, angle_matrix, as_batch, auto_rank_tol, column_norms, gaussian_matrix
from .errors import ConfigError, DegenerateStdError, InvalidParameterError


@dataclass(frozen=True)
class ComponentSet:
    apply_nl: bool = False
    apply_rc: bool = False
    apply_rs: bool = False

    @classmethod
    def parse(cls, spec: str) -> "ComponentSet":
        """Roman preset (``"I"``..``"V"``) or a ``+``-joined list such as ``"nl+rs"``."""
        key = spec.strip()
        if key.upper() in PRESETS:
            return PRESETS[key.upper()]
        parts = {p.strip().lower() for p in key.replace(",", "+").split("+") if p.strip()}
        unknown = parts - {"nl", "rc", "rs", "none"}
        if unknown:
            raise ConfigError(f"unknown component(s) {sorted(unknown)}; use nl, rc, rs or I..V")
        return cls("nl" in parts, "rc" in parts, "rs" in parts)

    @property
    def label(self) -> str:
        names = [n for n, on in (("nl", self.apply_nl), ("rc", self.apply_rc), ("rs", self.apply_rs)) if on]
        return "+".join(names) or "none"


PRESETS = {
    "I": ComponentSet(apply_nl=True),
    "II": ComponentSet(apply_rc=True),
    "III": ComponentSet(apply_nl=True, apply_rc=True),
    "IV": ComponentSet(apply_rs=True),
    "V": ComponentSet(apply_nl=True, apply_rc=True, apply_rs=True),
}

VARIANCE_SCHEMES = ("he", "fixed", "alpha_scaled")
RESCALE_STATS = ("std", "rms")


@dataclass(frozen=True)
class NetworkConfig:
    """Random network description.

    ``rescale`` selects the statistic rescaling divides by: ``"std"`` is the
    population standard deviation about the batch mean, ``"rms"`` the root
    mean square of the row as it reaches the rescaling stage.  The two agree
    whenever recentering is enabled.
    """

    depth: int
    widths: tuple = ()
    components: ComponentSet = field(default_factory=lambda: PRESETS["V"])
    variance_scheme: str = "he"
    variance: float = 1.0
    seed: SeedSpec = field(default_factory=SeedSpec)
    rescale_epsilon: float = 0.0
    rescale: str = "std"

    def __post_init__(self):
        if self.depth < 0:
            raise ConfigError(f"depth must be >= 0, got {self.depth}")
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) != self.depth:
            raise ConfigError(f"widths has {len(widths)} entries for depth {self.depth}")
        if any(w < 1 for w in widths):
            raise ConfigError("every width must be positive")
        if self.variance_scheme not in VARIANCE_SCHEMES:
            raise ConfigError(f"variance_scheme must be one of {VARIANCE_SCHEMES}")
        if self.variance_scheme == "fixed" and not self.variance > 0:
            raise ConfigError("fixed variance must be positive")
        if self.rescale_epsilon < 0:
            raise ConfigError("rescale_epsilon must be >= 0")
        if self.rescale not in RESCALE_STATS:
            raise ConfigError(f"rescale must be one of {RESCALE_STATS}")

    @classmethod
    def constant(cls, depth: int, width: int, **kw) -> "NetworkConfig":
        return cls(depth=depth, widths=(width,) * depth, **kw)

    def layer_variance(self, fan_in: int, fan_out: int, n: int) -> float:
        if self.variance_scheme == "he":
            return 2.0 / fan_in
        if self.variance_scheme == "fixed":
            return self.variance
        from .invariant_geometry import alpha_invariant

        return 2.0 * alpha_invariant(n) / fan_out


def layer_forward(x, w, c: ComponentSet, eps: float = 0.0, rescale: str = "std") -> np.ndarray:
    """One layer: matmul, then the enabled subset of RC, RS, NL in that order."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.shape[1] != x.shape[0]:
        raise InvalidParameterError(f"weights {w.shape} do not match batch {x.shape}")
    z = w @ x
    if c.apply_rc:
        z = z - z.mean(axis=1, keepdims=True)
    if c.apply_rs:
        if rescale == "std":
            scale = z.std(axis=1)
        elif rescale == "rms":
            scale = np.sqrt(np.mean(z * z, axis=1))
        else:
            raise InvalidParameterError(f"unknown rescale statistic {rescale!r}")
        scale = np.maximum(scale, eps)
        zero = np.flatnonzero(scale == 0)
        if zero.size:
            raise DegenerateStdError(int(zero[0]))
        z = z / scale[:, None]
    if c.apply_nl:
        z = np.maximum(z, 0.0)
    return z


@dataclass(frozen=True)
class LayerMetrics:
    layer: int
    rank: int
    rank_tol: float
    median_angle: float
    median_norm: float
    max_norm: float
    zero_columns: int


@dataclass(frozen=True)
class Trajectory:
    batches: tuple
    metrics: tuple
    config: NetworkConfig | None = None

    @property
    def depth(self) -> int:
        return len(self.batches) - 1

    def gram(self, layer: int) -> np.ndarray:
        b = self.batches[layer]
        return b.T @ b


def layer_metrics(layer: int, b: np.ndarray) -> LayerMetrics:
    s = np.linalg.svd(b, compute_uv=False)
    tol = auto_rank_tol(s, b.shape)
    norms = column_norms(b)
    ang = angle_matrix(b)
    iu = np.triu_indices(b.shape[1], 1)
    finite = ang[iu][np.isfinite(ang[iu])]
    return LayerMetrics(
        layer=layer,
        rank=int(np.count_nonzero(s > tol)),
        rank_tol=float(tol),
        median_angle=float(np.median(finite)) if finite.size else float("nan"),
        median_norm=float(np.median(norms)),
        max_norm=float(norms.max()),
        zero_columns=int(np.count_nonzero(norms == 0)),
    )


def propagate(x0, cfg: NetworkConfig) -> Trajectory:
    """Push ``x0`` through ``cfg.depth`` freshly sampled layers.

    Layer ``t`` (1-based) draws its weights from ``cfg.seed.derive("layer", t)``.
    """
    x = as_batch(x0)
    n = x.shape[1]
    batches = [x]
    metrics = [layer_metrics(0, x)]
    for t, width in enumerate(cfg.widths, start=1):
        var = cfg.layer_variance(x.shape[0], width, n)
        w = gaussian_matrix(width, x.shape[0], var, cfg.seed.derive("layer", t))
        x = layer_forward(x, w, cfg.components, cfg.rescale_epsilon, cfg.rescale)
        batches.append(x)
        metrics.append(layer_metrics(t, x))
    return Trajectory(tuple(batches), tuple(metrics), cfg)


def gaussian_input(n: int = 64, k: int = 32, seed: SeedSpec = SeedSpec()) -> np.ndarray:
    """Default synthetic batch: ``n`` i.i.d. standard Gaussian points in ``R^k``."""
    return gaussian_matrix(k, n, 1.0, seed.derive("input"))


@dataclass(frozen=True)
class AngleScatter:
    i: np.ndarray
    j: np.ndarray
    angle_in: np.ndarray
    angle_out: np.ndarray
    dropped: int


def angle_scatter(tr: Trajectory, layer_in: int, layer_out: int) -> AngleScatter:
    """Angles of every pair ``i < j`` at two layers; pairs with a zero column are dropped."""
    for layer in (layer_in, layer_out):
        if not 0 <= layer <= tr.depth:
            raise InvalidParameterError(f"layer {layer} outside 0..{tr.depth}")
    a_in = angle_matrix(tr.batches[layer_in])
    a_out = angle_matrix(tr.batches[layer_out])
    i, j = np.triu_indices(a_in.shape[0], 1)
    ok = np.isfinite(a_in[i, j]) & np.isfinite(a_out[i, j])
    return AngleScatter(i[ok], j[ok], a_in[i, j][ok], a_out[i, j][ok], int(np.count_nonzero(~ok)))


def neuron_activity_histogram(tr: Trajectory, layer: int, neuron: int, bins: int):
    """Histogram ``(counts, edges)`` of one neuron's activations over the batch."""
    if bins < 1:
        raise InvalidParameterError("bins must be >= 1")
    row = tr.batches[layer][neuron]
    return np.histogram(row, bins=bins)


def low_activity_fractions(b, bins: int = 10) -> np.ndarray:
    """Per neuron, the share of activations falling in its lowest histogram bin."""
    b = np.asarray(b, dtype=np.float64)
    lo = b.min(axis=1, keepdims=True)
    span = b.max(axis=1, keepdims=True) - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = np.where(span > 0, (b - lo) / span, 0.0)
    # np.histogram puts the maximum in the last bin; bin 0 is [lo, lo + span/bins)
    first = pos * bins < 1
    return first.mean(axis=1)


def escaped_columns(b, factor: float = 5.0) -> np.ndarray:
    """Indices of columns whose norm exceeds ``factor`` times the median norm."""
    norms = column_norms(b)
    return np.flatnonzero(norms > factor * np.median(norms))
