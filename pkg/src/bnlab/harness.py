"""Experiment runner behind the ``bnlab`` command line.

A run is fully described by its subcommand and a flat dictionary of typed
settings.  Settings are resolved in this order, later sources winning:
built-in defaults, the named preset, the config file, ``--set`` overrides
and finally ``--seed``.  Every run writes ``manifest.json`` with the resolved
settings, which is enough to repeat it exactly.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, is_dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .batch import RNG_NAME, SeedSpec, gaussian_matrix, numerical_rank, random_projection_2d
from .bn_layers import (
    ComponentSet,
    NetworkConfig,
    angle_scatter,
    escaped_columns,
    gaussian_input,
    low_activity_fractions,
    neuron_activity_histogram,
    propagate,
)
from .errors import ConfigError
from .invariant_geometry import (
    KernelParams,
    alpha_invariant,
    alpha_stability,
    make_invariant,
    mc_layer_expectation,
    perturbed_invariant,
    recentered,
)
from .rank_probe import circle_batch, estimate_gamma_exact_2d, estimate_gamma_mc, rank_probe_experiment
from .tree_model import DEFAULT_BUDGET, MERGE_TOL, verify_angle_theorem

SUBCOMMANDS = ("propagate", "gamma", "rank-probe", "tree", "invariant")
FORMATS = ("csv", "json")


# --------------------------------------------------------------------------
# settings
# --------------------------------------------------------------------------


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parse_floats(v) -> list:
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(";", ",").split(",") if x.strip()]


def _parse_str(v) -> str:
    return str(v).strip()


@dataclass(frozen=True)
class Param:
    parse: Callable[[Any], Any]
    default: Any
    check: Callable[[Any], bool] = lambda v: True
    hint: str = ""


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


COMMON = {
    "seed": Param(int, 0, lambda v: 0 <= v < 2**64, "unsigned 64-bit integer"),
    "preset": Param(_parse_str, ""),
}

PARAMS: dict[str, dict[str, Param]] = {
    "propagate": {
        "n": Param(int, 64, lambda v: v >= 2, ">= 2"),
        "k": Param(int, 32, _pos, "> 0"),
        "width": Param(int, 256, _pos, "> 0"),
        "depth": Param(int, 30, _nonneg, ">= 0"),
        "components": Param(_parse_str, "V", hint="I..V or e.g. nl+rs"),
        "variance_scheme": Param(_parse_str, "he", lambda v: v in ("he", "fixed", "alpha_scaled"), "he|fixed|alpha_scaled"),
        "variance": Param(float, 1.0, _pos, "> 0"),
        "rescale_epsilon": Param(float, 0.0, _nonneg, ">= 0"),
        "rescale": Param(_parse_str, "std", lambda v: v in ("std", "rms"), "std|rms"),
        "layer_in": Param(int, 0, hint="layer index, negative counts from the end"),
        "layer_out": Param(int, -1, hint="layer index, negative counts from the end"),
        "hist_layer": Param(int, -1, hint="layer index, negative counts from the end"),
        "hist_bins": Param(int, 10, _pos, "> 0"),
        "rank_tol": Param(_parse_str, "auto", hint="auto or a number >= 0"),
        "escape_factor": Param(float, 5.0, _pos, "> 0"),
    },
    "gamma": {
        "batch": Param(_parse_str, "circle", lambda v: v in ("circle", "gaussian"), "circle|gaussian"),
        "n": Param(int, 5, _pos, "> 0"),
        "k": Param(int, 2, lambda v: v >= 2, ">= 2"),
        "method": Param(_parse_str, "auto", lambda v: v in ("auto", "exact2d", "mc"), "auto|exact2d|mc"),
        "samples": Param(int, 100_000, _pos, "> 0"),
    },
    "rank-probe": {
        "batch": Param(_parse_str, "circle", lambda v: v in ("circle", "gaussian"), "circle|gaussian"),
        "n": Param(int, 5, _pos, "> 0"),
        "k": Param(int, 2, lambda v: v >= 2, ">= 2"),
        "trials": Param(int, 1000, _pos, "> 0"),
        "alphas": Param(_parse_floats, [3.0, 5.0], lambda v: len(v) > 0 and all(a > 1 for a in v), "comma list, each > 1"),
        "with_bn": Param(_parse_bool, False),
        "max_d": Param(int, 0, _nonneg, "0 for automatic"),
        "gamma_samples": Param(int, 100_000, _pos, "> 0"),
    },
    "tree": {
        "x0": Param(_parse_str, "", hint="comma list; empty means 1..n"),
        "n": Param(int, 10, lambda v: v >= 3, ">= 3"),
        "depth": Param(int, 18, _nonneg, ">= 0"),
        "mode": Param(_parse_str, "auto", lambda v: v in ("auto", "full", "pruned", "exact"), "auto|full|pruned|exact"),
        "angle_threshold_deg": Param(float, 5.0, _pos, "> 0"),
        "trend_levels": Param(int, 4, lambda v: v >= 2, ">= 2"),
        "budget_bytes": Param(int, DEFAULT_BUDGET, _pos, "> 0"),
        "merge_tol": Param(float, MERGE_TOL, _nonneg, ">= 0"),
    },
    "invariant": {
        "check": Param(_parse_str, "both", lambda v: v in ("both", "invariant", "stability"), "both|invariant|stability"),
        "n": Param(int, 4, lambda v: v >= 3, ">= 3"),
        "k": Param(int, 4, lambda v: v >= 2, ">= 2"),
        "d": Param(int, 512, _pos, "> 0"),
        "trials": Param(int, 4000, lambda v: v >= 2, ">= 2"),
        "alpha": Param(float, 0.0, _nonneg, "0 picks the theorem's value"),
        "stability_n": Param(int, 5, lambda v: v >= 3, ">= 3"),
        "stability_k": Param(int, 5, lambda v: v >= 3, ">= 3"),
        "R": Param(float, 2.0, _pos, "> n/(n-1)"),
        "spread": Param(float, 0.02, _nonneg, "in [0, 1/n^2)"),
    },
}

# Desk-scale stand-ins for figure setups that are not fully specified.
# Input everywhere: n = 64 i.i.d. standard Gaussian points in k = 32.
PRESETS: dict[str, tuple[str, dict]] = {
    # one point escapes under recentering + ReLU; depth 200 makes it unique on
    # every seed tried, depth 30 only on some
    "fig3": ("propagate", {"components": "III", "width": 256, "depth": 200}),
    # output angles with and without recentering, standard BN epsilon;
    # rescaling divides by the root mean square of the row
    "fig5-with-rc": ("propagate", {"components": "V", "width": 256, "depth": 30, "rescale_epsilon": 1e-5, "rescale": "rms"}),
    "fig5-without-rc": ("propagate", {"components": "nl+rs", "width": 256, "depth": 30, "rescale_epsilon": 1e-5, "rescale": "rms"}),
    # per-neuron activity histograms at the last layer of a full-BN network
    "fig6": ("propagate", {"components": "V", "width": 256, "depth": 30, "rescale_epsilon": 1e-5, "rescale": "rms", "hist_bins": 10}),
    # rank trace of a full-BN network at initialization; set components=I for
    # the plain ReLU comparison
    "fig2b-rank": ("propagate", {"components": "V", "width": 256, "depth": 30, "rescale_epsilon": 1e-5}),
}


def parse_config_text(text: str) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def parse_set_items(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_config(subcommand: str, *sources: dict) -> dict:
    """Merge raw settings over defaults and the preset, then type-check them."""
    if subcommand not in PARAMS:
        raise ConfigError(f"unknown subcommand {subcommand!r}; choose from {', '.join(SUBCOMMANDS)}")
    spec = {**COMMON, **PARAMS[subcommand]}
    raw: dict = {}
    for src in sources:
        raw.update(src or {})
    unknown = sorted(set(raw) - set(spec))
    if unknown:
        raise ConfigError(f"unknown key(s) for {subcommand}: {', '.join(unknown)}; valid keys: {', '.join(sorted(spec))}")
    preset = _parse_str(raw.get("preset", ""))
    merged = {k: p.default for k, p in spec.items()}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        owner, values = PRESETS[preset]
        if owner != subcommand:
            raise ConfigError(f"preset {preset!r} belongs to the {owner!r} subcommand")
        merged.update(values)
    merged.update(raw)
    out = {}
    for key, p in spec.items():
        try:
            value = p.parse(merged[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot parse {merged[key]!r} ({exc})") from None
        if not p.check(value):
            raise ConfigError(f"{key} = {value!r} is out of range; expected {p.hint}")
        out[key] = value
    return out


# --------------------------------------------------------------------------
# writers
# --------------------------------------------------------------------------


def _plain(v):
    """Convert to JSON-safe builtins; non-finite floats become None."""
    if is_dataclass(v) and not isinstance(v, type):
        return _plain(asdict(v))
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, Fraction):
        return str(v)
    return v


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def write_json(path: Path, obj) -> None:
    text = json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


@dataclass
class RunResult:
    subcommand: str
    config: dict
    out_dir: Path
    files: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)  # name -> bool, for --strict

    @property
    def failed_checks(self) -> list:
        return [k for k, ok in self.checks.items() if ok is False]


class _Sink:
    def __init__(self, out_dir: Path, formats):
        self.out_dir = out_dir
        self.formats = set(formats)
        self.files: list[str] = []

    def csv(self, name, header, rows):
        if "csv" in self.formats:
            write_csv(self.out_dir / name, header, rows)
            self.files.append(name)

    def json(self, name, obj):
        if "json" in self.formats:
            write_json(self.out_dir / name, obj)
            self.files.append(name)


def _layer_index(i: int, depth: int, key: str) -> int:
    j = i + depth + 1 if i < 0 else i
    if not 0 <= j <= depth:
        raise ConfigError(f"{key} = {i} is outside 0..{depth}")
    return j


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def run_propagate(cfg: dict, sink: _Sink, workers: int = 1) -> dict:
    seed = SeedSpec(cfg["seed"])
    depth = cfg["depth"]
    components = ComponentSet.parse(cfg["components"])
    net = NetworkConfig.constant(
        depth,
        cfg["width"],
        components=components,
        variance_scheme=cfg["variance_scheme"],
        variance=cfg["variance"],
        seed=seed,
        rescale_epsilon=cfg["rescale_epsilon"],
        rescale=cfg["rescale"],
    )
    x0 = gaussian_input(cfg["n"], cfg["k"], seed)
    tr = propagate(x0, net)
    li = _layer_index(cfg["layer_in"], depth, "layer_in")
    lo = _layer_index(cfg["layer_out"], depth, "layer_out")
    hl = _layer_index(cfg["hist_layer"], depth, "hist_layer")
    final = tr.batches[-1]

    if cfg["rank_tol"] == "auto":
        ranks = [(m.layer, m.rank, m.rank_tol) for m in tr.metrics]
    else:
        try:
            tol = float(cfg["rank_tol"])
        except ValueError:
            raise ConfigError(f"rank_tol must be 'auto' or a number, got {cfg['rank_tol']!r}") from None
        ranks = [(t, numerical_rank(b, tol), tol) for t, b in enumerate(tr.batches)]

    sc = angle_scatter(tr, li, lo)
    norms = np.linalg.norm(final, axis=0)
    escaped = escaped_columns(final, cfg["escape_factor"])
    low_share = low_activity_fractions(tr.batches[hl], cfg["hist_bins"])
    summary = {
        "input": f"{cfg['n']} i.i.d. N(0, I) points in R^{cfg['k']} (synthetic)",
        "components": components.label,
        "depth": depth,
        "layers": [asdict(m) for m in tr.metrics],
        "angle_layers": [li, lo],
        "median_angle_in_deg": float(np.degrees(np.median(sc.angle_in))) if sc.angle_in.size else None,
        "median_angle_out_deg": float(np.degrees(np.median(sc.angle_out))) if sc.angle_out.size else None,
        "dropped_pairs": sc.dropped,
        "escaped_columns": escaped.tolist(),
        "escape_factor": cfg["escape_factor"],
        "hist_layer": hl,
        "low_activity_share": float(np.mean(low_share >= 0.5)),
    }
    sink.json("trajectory_metrics.json", summary)
    sink.csv(
        "angles.csv",
        ["layer_in", "layer_out", "i", "j", "angle_in_rad", "angle_out_rad"],
        ((li, lo, int(i), int(j), float(a), float(b)) for i, j, a, b in zip(sc.i, sc.j, sc.angle_in, sc.angle_out)),
    )
    if final.shape[0] >= 2:
        proj = random_projection_2d(final, seed.derive("projection"))
        top = int(np.argmax(norms))
        sink.csv(
            "projection_2d.csv",
            ["col_index", "u", "v", "is_escaped"],
            ((j, float(proj[0, j]), float(proj[1, j]), j == top) for j in range(final.shape[1])),
        )
    rows = []
    b = tr.batches[hl]
    for neuron in range(b.shape[0]):
        counts, edges = neuron_activity_histogram(tr, hl, neuron, cfg["hist_bins"])
        rows.extend((hl, neuron, float(edges[q]), float(edges[q + 1]), int(counts[q])) for q in range(counts.size))
    sink.csv("histograms.csv", ["layer", "neuron", "bin_lo", "bin_hi", "count"], rows)
    sink.csv("ranks.csv", ["layer", "numerical_rank", "tol"], ranks)
    return {}


def _make_batch(cfg: dict, seed: SeedSpec) -> np.ndarray:
    n, k = cfg["n"], cfg["k"]
    if cfg["batch"] == "circle":
        b = np.zeros((k, n))
        b[:2] = circle_batch(n)
        return b
    return gaussian_matrix(k, n, 1.0, seed.derive("batch"))


def run_gamma(cfg: dict, sink: _Sink, workers: int = 1) -> dict:
    seed = SeedSpec(cfg["seed"])
    b = _make_batch(cfg, seed)
    method = cfg["method"]
    if method == "auto":
        method = "exact2d" if cfg["k"] == 2 else "mc"
    if method == "exact2d":
        est = estimate_gamma_exact_2d(b)
    else:
        est = estimate_gamma_mc(b, cfg["samples"], seed.derive("gamma"))
    sink.json(
        "gamma.json",
        {
            "n": cfg["n"],
            "k": cfg["k"],
            "batch": cfg["batch"],
            "method": method,
            "gamma_hat": est.gamma_hat,
            "ci_low": est.ci_low,
            "ci_high": est.ci_high,
            "classes_observed": est.classes_observed,
            "samples": est.samples,
            "discarded": est.discarded,
            "caveat_small_classes": est.caveat,
        },
    )
    return {}


def run_rank_probe(cfg: dict, sink: _Sink, workers: int = 1) -> dict:
    seed = SeedSpec(cfg["seed"])
    b = _make_batch(cfg, seed)
    rep = rank_probe_experiment(
        b,
        cfg["trials"],
        cfg["alphas"],
        cfg["with_bn"],
        seed,
        max_d=cfg["max_d"] or None,
        gamma_samples=cfg["gamma_samples"],
        workers=workers,
    )
    slack = 3 * rep.stderr_y
    item1 = rep.mean_y <= rep.bound_mean + slack
    per_alpha = []
    item2 = True
    for j, a in enumerate(rep.alphas):
        p = rep.simple[j]
        ok = rep.failure_freq[j] <= p + 3 * math.sqrt(p * (1 - p) / rep.trials)
        if j:
            ok &= rep.failure_freq[j] <= rep.failure_freq[j - 1] + 3 * max(rep.failure_stderr[j - 1], rep.failure_stderr[j])
        item2 &= ok
        per_alpha.append(
            {
                "alpha": a,
                "threshold_d": rep.thresholds[j],
                "failure_freq": rep.failure_freq[j],
                "failure_stderr": rep.failure_stderr[j],
                "chernoff_bound": rep.chernoff[j],
                "simple_bound": rep.simple[j],
                "pass": bool(ok),
            }
        )
    sink.csv(
        "rank_probe.csv",
        ["trial", "y", "exhausted"],
        ((t, y, y > (rep.max_d or 0)) for t, y in enumerate(rep.y)),
    )
    sink.json(
        "summary.json",
        {
            "n": rep.n,
            "trials": rep.trials,
            "with_bn": rep.with_bn,
            "gamma_batch": "recentered" if rep.with_bn else "raw",
            "gamma": rep.gamma.gamma_hat,
            "gamma_exact": rep.gamma.exact,
            "gamma_ci": [rep.gamma.ci_low, rep.gamma.ci_high],
            "n_over_gamma": rep.bound_mean,
            "mean_y": rep.mean_y,
            "stderr": rep.stderr_y,
            "ci95": [rep.ci_low, rep.ci_high],
            "max_d": rep.max_d,
            "exhausted": rep.exhausted,
            "alphas": per_alpha,
            "item1_pass": bool(item1),
            "item2_pass": bool(item2),
        },
    )
    return {"rank_item1": bool(item1), "rank_item2": bool(item2)}


def _tree_input(cfg: dict):
    text = cfg["x0"]
    if not text:
        vals = [str(i) for i in range(1, cfg["n"] + 1)]
    else:
        vals = [v.strip() for v in text.split(",") if v.strip()]
    try:
        if cfg["mode"] == "exact":
            return [Fraction(v) for v in vals]
        return [float(v) for v in vals]
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"x0 must be a comma list of numbers, got {text!r}") from None


def run_tree(cfg: dict, sink: _Sink, workers: int = 1) -> dict:
    x0 = _tree_input(cfg)
    rep = verify_angle_theorem(
        x0,
        cfg["depth"],
        cfg["mode"],
        angle_threshold_deg=cfg["angle_threshold_deg"],
        trend_levels=cfg["trend_levels"],
        budget_bytes=cfg["budget_bytes"],
        tol=cfg["merge_tol"],
    )
    cols = ["level", "rows", "gram_1n", "max_interior_angle", "norm_first", "norm_last", "max_interior_norm", "A", "B", "C3", "D3", "residual"]
    sink.csv("tree_geometry.csv", cols, ([r[c] for c in cols] for r in rep.levels))
    body = {k: v for k, v in asdict(rep).items() if k != "levels"}
    body["item1_max_abs_inner"] = body.pop("item1_max_abs")
    body["x0"] = [str(v) if isinstance(v, Fraction) else v for v in x0]
    body["passed"] = rep.passed
    sink.json("theorem_report.json", body)
    return {f"tree_item{i}": getattr(rep, f"item{i}_pass") for i in range(1, 5)}


def _invariant_section(b, p: KernelParams, trials, seed, expected_nu_sq) -> tuple[dict, dict]:
    r = mc_layer_expectation(b, p, trials, seed)
    x1t, nut = recentered(b)
    gain = p.d * p.sigma_sq / 2
    e_x1 = gain * float(x1t @ x1t)
    e_nu = gain * float(nut @ nut)
    live = r.input_pair_dist_sq > 0
    shrink = r.pair_dist_sq < r.input_pair_dist_sq - 3 * r.pair_dist_sq_se
    checks = {
        "x1_norm": bool(abs(r.col_norm_sq[0] - e_x1) <= 3 * r.col_norm_sq_se[0]),
        "nu_norm": bool(abs(r.nu_norm_sq - e_nu) <= 3 * r.nu_norm_sq_se),
        "orthogonality": r.orthogonality_violations == 0,
        "contraction": bool(np.all(shrink[live])),
    }
    body = asdict(r)
    body["seed"] = [r.seed.master_seed, r.seed.stream_id]
    body["pairs"] = [[int(a), int(c)] for a, c in r.pairs]
    body.update(
        d=p.d,
        sigma_sq=p.sigma_sq,
        expected_x1_norm_sq=e_x1,
        expected_nu_norm_sq=e_nu,
        nominal_nu_norm_sq=expected_nu_sq,
        contraction_pairs_checked=int(np.count_nonzero(live)),
        checks=checks,
    )
    return body, checks


def run_invariant(cfg: dict, sink: _Sink, workers: int = 1) -> dict:
    seed = SeedSpec(cfg["seed"])
    report, checks = {}, {}
    if cfg["check"] in ("both", "invariant"):
        n = cfg["n"]
        alpha = cfg["alpha"] or alpha_invariant(n)
        rep = make_invariant(n, cfg["k"], seed.derive("invariant"))
        body, ch = _invariant_section(rep.batch, KernelParams.scaled(cfg["d"], alpha), cfg["trials"], seed.derive("invariant", "trials"), 1 / (n - 1) ** 2)
        body.update(n=n, k=cfg["k"], alpha=alpha)
        report["invariant"] = body
        checks.update({f"invariant_{k}": v for k, v in ch.items()})
    if cfg["check"] in ("both", "stability"):
        n = cfg["stability_n"]
        alpha = cfg["alpha"] or alpha_stability(n, cfg["R"])
        b = perturbed_invariant(n, cfg["stability_k"], cfg["R"], cfg["spread"], seed.derive("stability"))
        body, ch = _invariant_section(b, KernelParams.scaled(cfg["d"], alpha), cfg["trials"], seed.derive("stability", "trials"), None)
        body.update(n=n, k=cfg["stability_k"], alpha=alpha, R=cfg["R"], spread=cfg["spread"])
        report["stability"] = body
        checks.update({f"stability_{k}": v for k, v in ch.items()})
    sink.json("invariant_report.json", report)
    return checks


RUNNERS = {
    "propagate": run_propagate,
    "gamma": run_gamma,
    "rank-probe": run_rank_probe,
    "tree": run_tree,
    "invariant": run_invariant,
}


def manifest(subcommand: str, cfg: dict, formats, files) -> dict:
    return {
        "tool": "bnlab",
        "version": __version__,
        "subcommand": subcommand,
        "config": cfg,
        "formats": sorted(formats),
        "rng": RNG_NAME,
        "files": sorted(files),
    }


def run(subcommand: str, cfg: dict, out_dir, formats=FORMATS, workers: int = 1) -> RunResult:
    """Execute one resolved config and write its outputs plus the manifest."""
    if subcommand not in RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}; choose from {', '.join(SUBCOMMANDS)}")
    bad = set(formats) - set(FORMATS)
    if bad or not formats:
        raise ConfigError(f"formats must be a non-empty subset of {FORMATS}, got {sorted(formats)}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    sink = _Sink(out, formats)
    checks = RUNNERS[subcommand](cfg, sink, workers)
    write_json(out / "manifest.json", manifest(subcommand, cfg, formats, sink.files))
    return RunResult(subcommand, cfg, out, sink.files + ["manifest.json"], checks)


def load_manifest(path) -> tuple[str, dict, list]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    try:
        sub, raw, formats = data["subcommand"], data["config"], data["formats"]
    except (KeyError, TypeError):
        raise ConfigError(f"{path} is not a bnlab manifest") from None
    return sub, resolve_config(sub, raw), formats


# JSON outputs and the schema each one validates against
SCHEMAS = {
    "manifest.json": "manifest",
    "trajectory_metrics.json": "trajectory_metrics",
    "gamma.json": "gamma",
    "summary.json": "summary",
    "theorem_report.json": "theorem_report",
    "invariant_report.json": "invariant_report",
}


def load_schema(name: str) -> dict:
    """Shipped JSON schema by short name, e.g. ``"gamma"``."""
    from importlib.resources import files

    return json.loads(files("bnlab").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8"))
