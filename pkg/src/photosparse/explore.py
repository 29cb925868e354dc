"""Grid exploration over sparsity, cluster count, pruned-layer subsets and array shapes."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cluster import cluster_weights
from .model import ModelIR, reference_forward
from .photonic import DeviceParams, QuantSpec
from .scheduler import SimReport, VduConfig, merge_reports, simulate
from .sparsify import MaskedModel, SparsityPlan, prune

log = logging.getLogger(__name__)

# +1: larger is better, -1: smaller is better
METRIC_SENSE = {"accuracy_proxy": 1, "fps": 1, "fps_per_watt": 1, "epb": -1}
MAX_CLUSTERS = 2**16


@dataclass(frozen=True)
class ExplorationGrid:
    """Axes of the sweep. ``clusters`` entries of None skip clustering;
    ``layer_sets`` entries of None mean every CONV/FC layer."""

    sparsity: tuple[float, ...]
    clusters: tuple[int | None, ...]
    layer_sets: tuple[tuple[int, ...] | None, ...] = (None,)
    arch: tuple[VduConfig, ...] = (VduConfig(),)
    objective: str = "fps_per_watt"
    exact_mode: bool = False

    def __post_init__(self):
        for name in ("sparsity", "clusters", "layer_sets", "arch"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"exploration axis {name!r} is empty")
            object.__setattr__(self, name, value)
        for c in self.clusters:
            if c is not None and (c < 1 or c > MAX_CLUSTERS or c & (c - 1)):
                raise ValueError(f"cluster count {c} must be a power of two no larger than {MAX_CLUSTERS}")
        if self.objective not in METRIC_SENSE:
            raise ValueError(f"unknown objective {self.objective!r}; choose from {sorted(METRIC_SENSE)}")

    def points(self) -> list["GridPoint"]:
        combos = itertools.product(self.layer_sets, self.sparsity, self.clusters, self.arch)
        return [GridPoint(i, s, c, layers, arch) for i, (layers, s, c, arch) in enumerate(combos)]

    def __len__(self) -> int:
        return len(self.sparsity) * len(self.clusters) * len(self.layer_sets) * len(self.arch)


@dataclass(frozen=True)
class GridPoint:
    index: int
    sparsity: float
    clusters: int | None
    layers: tuple[int, ...] | None
    arch: VduConfig


@dataclass(frozen=True)
class PointResult:
    point: GridPoint
    metrics: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class Exploration:
    results: list[PointResult]
    ranked: list[PointResult]
    pareto: list[PointResult]
    objective: str

    @property
    def best(self) -> PointResult | None:
        return self.ranked[0] if self.ranked else None


def prepare(model: ModelIR, sparsity: float, clusters: int | None, layers=None) -> MaskedModel:
    masked = prune(model, SparsityPlan.uniform(model, sparsity, layers))
    if clusters is not None:
        masked, _ = cluster_weights(masked, clusters)
    return masked


def _targets(model: ModelIR, eval_set) -> list[int]:
    targets = []
    for x, label in eval_set:
        targets.append(int(label) if label is not None else int(np.argmax(reference_forward(model, x))))
    return targets


def evaluate(masked: MaskedModel, eval_set, targets, arch: VduConfig, dev: DeviceParams, quant: QuantSpec):
    """Simulate every eval input; return the merged report and top-1 agreement."""
    reports, hits = [], 0
    for (x, _), target in zip(eval_set, targets):
        report, out = simulate(masked, x, arch, dev, quant)
        reports.append(report)
        hits += int(np.argmax(out)) == target
    return merge_reports(reports), hits / len(targets)


def _metrics(report: SimReport, accuracy: float) -> dict:
    return {
        "accuracy_proxy": accuracy,
        "fps": report.fps,
        "fps_per_watt": report.fps_per_watt,
        "epb": report.epb,
        "energy_j": report.energy_j,
        "latency_s": report.latency_s,
        "avg_power_w": report.avg_power_w,
        "bits": report.bits,
        "passes": report.passes,
        "gated": report.gated,
    }


def evaluate_point(model, eval_set, targets, point: GridPoint, dev, quant) -> PointResult:
    try:
        masked = prepare(model, point.sparsity, point.clusters, point.layers)
        report, accuracy = evaluate(masked, eval_set, targets, point.arch, dev, quant)
        return PointResult(point, _metrics(report, accuracy))
    except Exception as exc:  # recorded per point, the sweep goes on
        log.warning("grid point %d failed: %s", point.index, exc)
        return PointResult(point, error=f"{type(exc).__name__}: {exc}")


def dominates(a: dict, b: dict, metrics=tuple(METRIC_SENSE)) -> bool:
    """True if ``a`` is at least as good as ``b`` everywhere and strictly better somewhere."""
    better = False
    for m in metrics:
        da, db = METRIC_SENSE[m] * a[m], METRIC_SENSE[m] * b[m]
        if da < db:
            return False
        better |= da > db
    return better


def pareto_front(results: list[PointResult]) -> list[PointResult]:
    ok = [r for r in results if r.ok]
    return [r for r in ok if not any(dominates(o.metrics, r.metrics) for o in ok if o is not r)]


def rank(results: list[PointResult], objective: str = "fps_per_watt") -> list[PointResult]:
    """Best first by ``objective``; ties fall to FPS/W, then EPB, then grid order."""

    def key(r: PointResult):
        m = r.metrics
        return (
            -METRIC_SENSE[objective] * m[objective],
            -m["fps_per_watt"],
            m["epb"],
            r.point.index,
        )

    return sorted((r for r in results if r.ok), key=key)


def explore(
    model: ModelIR,
    eval_set,
    grid: ExplorationGrid,
    dev: DeviceParams | None = None,
    quant: QuantSpec | None = None,
    jobs: int = 1,
) -> Exploration:
    """Prune, cluster and simulate at every grid point.

    ``eval_set`` is a list of ``(input, label)``; a None label means agreement
    with the unoptimized model's top-1 prediction is scored instead.
    """
    eval_set = list(eval_set)
    if not eval_set:
        raise ValueError("evaluation set is empty")
    dev = dev or DeviceParams()
    quant = quant or QuantSpec(exact_mode=grid.exact_mode)
    targets = _targets(model, eval_set)
    points = grid.points()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(evaluate_point, model, eval_set, targets, p, dev, quant) for p in points]
            results = [f.result() for f in futures]
    else:
        results = [evaluate_point(model, eval_set, targets, p, dev, quant) for p in points]
    return Exploration(results, rank(results, grid.objective), pareto_front(results), grid.objective)


def sweep_arch(masked: MaskedModel, inputs, configs, dev: DeviceParams | None = None, quant: QuantSpec | None = None):
    """Simulate an already optimized model under each array shape.

    Returns ``(config, report)`` pairs, best FPS/W first, EPB breaking ties.
    """
    dev = dev or DeviceParams()
    quant = quant or QuantSpec()
    inputs = list(inputs)
    out = []
    for order, cfg in enumerate(configs):
        report = merge_reports([simulate(masked, x, cfg, dev, quant)[0] for x in inputs])
        out.append((order, cfg, report))
    out.sort(key=lambda t: (-t[2].fps_per_watt, t[2].epb, t[0]))
    return [(cfg, report) for _, cfg, report in out]
