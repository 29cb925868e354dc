"""Rendering of simulation and exploration results: text, JSON, CSV and figures."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .scheduler import EPB_DEFINITION, FPS_DEFINITION, POWER_DEFINITION, SimReport

LAYER_COLUMNS = ("layer", "passes", "gated", "energy_j", "latency_s")
EXPLORE_COLUMNS = (
    "index", "sparsity", "clusters", "layers", "n", "m", "N", "K",
    "accuracy_proxy", "fps", "fps_per_watt", "epb", "energy_j", "latency_s", "avg_power_w",
    "bits", "passes", "gated", "pareto", "rank", "error",
)


def header_lines(report: SimReport) -> list[str]:
    return [
        f"model: {report.model}",
        f"array (n, m, N, K): {report.config.as_tuple()}",
        f"frames: {report.frames}",
        FPS_DEFINITION,
        POWER_DEFINITION,
        EPB_DEFINITION,
        "gated = multiplies of the uncompressed layer whose lane is never driven "
        "(removed by compression or power gated)",
    ]


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_json_safe(v) for v in value]
    return value


def to_json(report: SimReport) -> str:
    return json.dumps(_json_safe(report.to_dict()), indent=2) + "\n"


def to_csv(report: SimReport) -> str:
    buf = io.StringIO()
    for line in header_lines(report):
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LAYER_COLUMNS)
    for r in report.records:
        writer.writerow([r.name, r.passes, r.gated, repr(r.energy_j), repr(r.latency_s)])
    return buf.getvalue()


def to_text(report: SimReport) -> str:
    lines = header_lines(report) + [""]
    lines.append(f"{'layer':<10} {'kind':<15} {'passes':>10} {'gated':>12} {'waves':>8} {'energy_j':>12} {'latency_s':>12}")
    for r in report.records:
        lines.append(
            f"{r.name:<10} {r.kind:<15} {r.passes:>10} {r.gated:>12} {r.waves:>8} {r.energy_j:>12.4e} {r.latency_s:>12.4e}"
        )
    lines.append("")
    t = report.totals()
    lines.append(f"total energy     {t['energy_j']:.6e} J")
    lines.append(f"total latency    {t['latency_s']:.6e} s")
    lines.append(f"bits processed   {t['bits']}")
    lines.append(f"FPS              {t['fps']:.6g}")
    lines.append(f"avg power        {t['avg_power_w']:.6g} W")
    lines.append(f"FPS/W            {t['fps_per_watt']:.6g}")
    lines.append(f"EPB              {t['epb']:.6e} J/bit")
    return "\n".join(lines) + "\n"


RENDERERS = {"text": to_text, "json": to_json, "csv": to_csv}


def render(report: SimReport, fmt: str) -> str:
    return RENDERERS[fmt](report)


def load_report(path) -> SimReport:
    return SimReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_report(report: SimReport, out_dir, stem: str = "report") -> dict[str, Path]:
    """Write text, JSON and CSV renderings side by side."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for fmt, suffix in (("text", "txt"), ("json", "json"), ("csv", "csv")):
        path = out_dir / f"{stem}.{suffix}"
        path.write_text(render(report, fmt), encoding="utf-8")
        paths[fmt] = path
    return paths


def exploration_rows(exploration) -> list[dict]:
    pareto = {id(r) for r in exploration.pareto}
    ranks = {id(r): i + 1 for i, r in enumerate(exploration.ranked)}
    rows = []
    for r in exploration.results:
        p = r.point
        row = {
            "index": p.index,
            "sparsity": p.sparsity,
            "clusters": "" if p.clusters is None else p.clusters,
            "layers": "all" if p.layers is None else " ".join(map(str, p.layers)),
            "n": p.arch.n, "m": p.arch.m, "N": p.arch.N, "K": p.arch.K,
            "pareto": int(id(r) in pareto),
            "rank": ranks.get(id(r), ""),
            "error": r.error or "",
        }
        for key in EXPLORE_COLUMNS:
            if key in r.metrics:
                row[key] = repr(r.metrics[key]) if isinstance(r.metrics[key], float) else r.metrics[key]
        rows.append(row)
    return rows


def exploration_csv(exploration) -> str:
    buf = io.StringIO()
    buf.write(f"# objective: {exploration.objective}\n")
    buf.write(f"# {FPS_DEFINITION}\n# {POWER_DEFINITION}\n# {EPB_DEFINITION}\n")
    writer = csv.DictWriter(buf, fieldnames=EXPLORE_COLUMNS, restval="", lineterminator="\n")
    writer.writeheader()
    writer.writerows(exploration_rows(exploration))
    return buf.getvalue()


def read_exploration_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_layers(report: SimReport, path) -> Path:
    """Per-layer energy, latency and pass count of the photonic layers."""
    plt = _pyplot()
    recs = [r for r in report.records if r.photonic]
    names = [r.name for r in recs]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for ax, values, label in zip(
        axes,
        ([r.energy_j * 1e6 for r in recs], [r.latency_s * 1e6 for r in recs], [r.passes for r in recs]),
        ("energy (uJ)", "latency (us)", "VDU passes"),
    ):
        ax.bar(names, values, color="0.35")
        ax.set_ylabel(label)
        ax.tick_params(axis="x", rotation=45)
    fig.suptitle(f"{report.model}: FPS/W {report.fps_per_watt:.4g}, EPB {report.epb:.3e} J/bit")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_exploration(rows: list[dict], path, objective: str = "fps_per_watt") -> Path:
    """Sparsity vs cluster-count scatter coloured by the objective; the best point is starred."""
    plt = _pyplot()
    good = [r for r in rows if not r.get("error") and r.get(objective) not in ("", None)]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if good:
        xs = [float(r["sparsity"]) for r in good]
        ys = [float(r["clusters"]) if r["clusters"] not in ("", None) else float("nan") for r in good]
        cs = [float(r[objective]) for r in good]
        sc = ax.scatter(xs, ys, c=cs, cmap="viridis", s=60)
        fig.colorbar(sc, ax=ax, label=objective)
        best = min(good, key=lambda r: int(r["rank"]) if str(r.get("rank", "")).strip() else math.inf)
        bc = float(best["clusters"]) if best["clusters"] not in ("", None) else float("nan")
        ax.scatter([float(best["sparsity"])], [bc], marker="*", s=320, c="red", edgecolors="k", label="best")
        ax.legend(loc="best")
        if all(y > 0 for y in ys if y == y):
            ax.set_yscale("log", base=2)
    ax.set_xlabel("sparsity")
    ax.set_ylabel("weight clusters")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_sparsity_profile(profile, path) -> Path:
    """Weight sparsity of each parameterized layer next to the sparsity of the
    activations it hands on (after its ReLU/pooling, before the next layer)."""
    plt = _pyplot()
    names, weights, acts = [], [], []
    for p in profile:
        if p.weight_sparsity is not None:
            names.append(p.name)
            weights.append(p.weight_sparsity)
            acts.append(p.activation_sparsity)
        elif names:
            acts[-1] = p.activation_sparsity
    fig, ax = plt.subplots(figsize=(6, 3.6))
    idx = range(len(names))
    ax.bar([i - 0.2 for i in idx], weights, width=0.4, label="weights", color="0.3")
    ax.bar([i + 0.2 for i in idx], acts, width=0.4, label="activations", color="0.7")
    ax.set_xticks(list(idx), names)
    ax.set_ylim(0, 1)
    ax.set_ylabel("fraction of zeros")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
