"""Command-line front end.

Every stage reads a model container, runs one module and writes its
artifacts; stages can be chained through the filesystem::

    photosparse make-fixture mnist --out mnist/
    photosparse prune --model mnist/ --sparsity 0.5 --out pruned/
    photosparse cluster --model pruned/ --clusters 64 --out clustered/
    photosparse simulate --model clustered/ --out sim/
    photosparse report --input sim/report.json --out figs/
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import fixtures
from .cluster import cluster_weights
from .config import RunConfig
from .container import load_masked, save_model
from .errors import ConfigError, MissingInputError, PhotosparseError, StageError
from .explore import ExplorationGrid, explore
from .model import count_parameters
from .report import (
    exploration_csv,
    load_report,
    plot_exploration,
    plot_layers,
    plot_sparsity_profile,
    read_exploration_csv,
    render,
    write_report,
)
from .scheduler import VduConfig, compression_report, simulate
from .sparsify import SparsityPlan, count_nonzero, layer_sparsity_profile, prune

log = logging.getLogger("photosparse")


def _config(args) -> RunConfig:
    return RunConfig.load(args.config) if args.config else RunConfig()


def _model_path(args, cfg: RunConfig) -> Path:
    path = args.model or cfg.get("io.model")
    if not path:
        raise MissingInputError("no model given (use --model or io.model)")
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"model container {path} does not exist")
    return path


def _out_path(args, cfg: RunConfig, default: str | None = None) -> Path:
    out = args.out or cfg.get("io.out") or default
    if not out:
        raise MissingInputError("no output location given (use --out or io.out)")
    return Path(out)


def _format(args, cfg: RunConfig) -> str:
    fmt = args.format or cfg.get("output.format", "text")
    if fmt not in ("text", "json", "csv"):
        raise ConfigError(f"unknown output format {fmt!r}")
    return fmt


def _input(args, cfg: RunConfig, model, use_flag: bool = True):
    path = (getattr(args, "input", None) if use_flag else None) or cfg.get("io.input")
    if path:
        path = Path(path)
        if not path.exists():
            raise MissingInputError(f"input tensor {path} does not exist")
        try:
            return np.load(path).astype(np.float64)
        except ValueError as exc:
            raise ConfigError(f"input tensor {path} is not a numeric .npy array: {exc}") from exc
    return fixtures.sample_input(model, cfg.get("io.seed", 0))


def _emit_table(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    if not rows:
        return ""
    if fmt == "csv":
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    keys = list(rows[0])
    widths = {k: max(len(k), *(len(str(r[k])) for r in rows)) for k in keys}
    buf.write("  ".join(k.ljust(widths[k]) for k in keys) + "\n")
    for r in rows:
        buf.write("  ".join(str(r[k]).ljust(widths[k]) for k in keys) + "\n")
    return buf.getvalue()


def cmd_make_fixture(args) -> int:
    model = fixtures.FIXTURES[args.name](args.seed)
    out = Path(args.out)
    save_model(model, out)
    if args.save_input:
        np.save(out.with_suffix("").as_posix() + ".input.npy", fixtures.sample_input(model, args.seed))
    print(f"{model.name}: {count_parameters(model)} parameters written to {out}")
    return 0


def cmd_prune(args) -> int:
    cfg = _config(args)
    masked = load_masked(_model_path(args, cfg))
    base = masked.base
    targets = cfg.sparsity_targets()
    uniform = args.sparsity if args.sparsity is not None else targets.pop(-1, None)
    targets.pop(-1, None)
    plan = dict(SparsityPlan.uniform(base, uniform).targets) if uniform is not None else {}
    plan.update(targets)
    if not plan:
        raise ConfigError("no sparsity given (use --sparsity, prune.sparsity or layer.<i>.sparsity)")
    pruned = prune(masked, SparsityPlan(plan))
    save_model(pruned, _out_path(args, cfg))
    rows = []
    for i in base.parameterized_layers():
        w = pruned.mask(i)
        rows.append({"layer": base.layers[i].name, "sparsity": plan.get(i, 0.0),
                     "parameters": int(w.size), "surviving": int(np.count_nonzero(w))})
    rows.append({"layer": "total", "sparsity": "", "parameters": count_parameters(base),
                 "surviving": count_nonzero(pruned)})
    sys.stdout.write(_emit_table(rows, _format(args, cfg)))
    return 0


def cmd_cluster(args) -> int:
    cfg = _config(args)
    masked = load_masked(_model_path(args, cfg))
    clusters = args.clusters if args.clusters is not None else cfg.get("clusters")
    if clusters is None:
        raise ConfigError("no cluster count given (use --clusters or clusters = <int>)")
    clustered, books = cluster_weights(masked, clusters)
    save_model(clustered, _out_path(args, cfg))
    rows = [{"layer": masked.base.layers[i].name, "clusters": b.C, "dac_bits": b.bits} for i, b in books.items()]
    sys.stdout.write(_emit_table(rows, _format(args, cfg)))
    return 0


def cmd_compress(args) -> int:
    cfg = _config(args)
    masked = load_masked(_model_path(args, cfg))
    stats = compression_report(masked, _input(args, cfg, masked.base))
    rows = [asdict(s) for s in stats]
    text = _emit_table(rows, "csv")
    out = _out_path(args, cfg, default="compression.csv")
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "compression.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    sys.stdout.write(_emit_table(rows, _format(args, cfg)))
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    masked = load_masked(_model_path(args, cfg))
    x = _input(args, cfg, masked.base)
    report, output = simulate(masked, x, cfg.arch(), cfg.device(), cfg.quant(args.exact_mode), cfg.electronic())
    report.check_identities()
    out = _out_path(args, cfg)
    write_report(report, out)
    np.save(out / "output.npy", output)
    if not args.no_figures:
        plot_layers(report, out / "layers.png")
    sys.stdout.write(render(report, _format(args, cfg)))
    return 0


def _grid(cfg: RunConfig) -> ExplorationGrid:
    arch = cfg.get("explore.arch")
    layers = cfg.get("explore.layers")
    try:
        configs = tuple(VduConfig(*a) for a in arch) if arch else (cfg.arch(),)
        layer_sets = tuple(None if l in ("all", None) else tuple(l) for l in layers) if layers else (None,)
        return ExplorationGrid(
            sparsity=tuple(cfg.get("explore.sparsity", [0.0, 0.5])),
            clusters=tuple(cfg.get("explore.clusters", [None])),
            layer_sets=layer_sets,
            arch=configs,
            objective=cfg.get("explore.objective", "fps_per_watt"),
            exact_mode=cfg.quant().exact_mode,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid exploration grid: {exc}") from exc


def cmd_explore(args) -> int:
    cfg = _config(args)
    model = load_masked(_model_path(args, cfg)).effective_model()
    grid = _grid(cfg)
    if args.exact_mode:
        grid = ExplorationGrid(grid.sparsity, grid.clusters, grid.layer_sets, grid.arch, grid.objective, True)
    samples, seed = cfg.get("explore.samples", 4), cfg.get("explore.seed", 0)
    eval_set = [(fixtures.sample_input(model, seed + k), None) for k in range(samples)]
    result = explore(model, eval_set, grid, cfg.device(), cfg.quant(grid.exact_mode), jobs=args.jobs)
    out = _out_path(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    text = exploration_csv(result)
    (out / "exploration.csv").write_text(text, encoding="utf-8")
    if not args.no_figures:
        plot_exploration(read_exploration_csv(out / "exploration.csv"), out / "exploration.png", grid.objective)
    if args.format == "json":
        rows = [dict(r) for r in read_exploration_csv(out / "exploration.csv")]
        sys.stdout.write(json.dumps(rows, indent=2) + "\n")
    else:
        sys.stdout.write(text)
    failed = sum(not r.ok for r in result.results)
    if failed:
        log.warning("%d of %d grid points failed", failed, len(result.results))
    return 0


def cmd_report(args) -> int:
    cfg = _config(args)
    src = Path(args.input) if args.input else None
    if src is None or not src.exists():
        raise MissingInputError(f"report input {src} does not exist")
    out = _out_path(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    fmt = _format(args, cfg)
    if src.suffix == ".csv":
        rows = read_exploration_csv(src)
        plot_exploration(rows, out / "exploration.png", cfg.get("explore.objective", "fps_per_watt"))
        sys.stdout.write(_emit_table(rows, fmt))
        return 0
    try:
        report = load_report(src)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read report {src}: {exc}") from exc
    report.check_identities()
    write_report(report, out)
    plot_layers(report, out / "layers.png")
    if args.model:
        masked = load_masked(args.model)
        profile = layer_sparsity_profile(masked, _input(args, cfg, masked.base, use_flag=False))
        plot_sparsity_profile(profile, out / "sparsity.png")
    sys.stdout.write(render(report, fmt))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model container (directory or .zip)")
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--out", help="output container, file or directory")
    common.add_argument("--format", choices=("text", "json", "csv"), help="stdout format")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for explore")
    common.add_argument("--exact-mode", action="store_true", help="disable DAC quantization")
    common.add_argument("--no-figures", action="store_true", help="skip matplotlib output")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="photosparse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-fixture", parents=[common], help="write a reference model container")
    p.add_argument("name", choices=sorted(fixtures.FIXTURES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-input", action="store_true", help="also write a sample input .npy")
    p.set_defaults(func=cmd_make_fixture)

    p = sub.add_parser("prune", parents=[common], help="layer-wise magnitude pruning")
    p.add_argument("--sparsity", type=float, help="uniform sparsity for every CONV/FC layer")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("cluster", parents=[common], help="per-layer weight clustering")
    p.add_argument("--clusters", type=int)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("compress", parents=[common], help="zero-elimination statistics as CSV")
    p.add_argument("--input", help="input tensor (.npy); default is a seeded synthetic image")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("simulate", parents=[common], help="run the model on the photonic array")
    p.add_argument("--input", help="input tensor (.npy); default is a seeded synthetic image")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("explore", parents=[common], help="sparsity/cluster/array grid search")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("report", parents=[common], help="render a saved report or exploration CSV")
    p.add_argument("--input", help="report.json or exploration.csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PhotosparseError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error [StageError]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return StageError.exit_code


if __name__ == "__main__":
    sys.exit(main())
