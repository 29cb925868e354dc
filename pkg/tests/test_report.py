import csv
import io
import json
import math

import numpy as np

from photosparse import fixtures
from photosparse.explore import ExplorationGrid, explore
from photosparse.model import LayerKind, LayerSpec, ModelIR
from photosparse.report import (
    EXPLORE_COLUMNS, LAYER_COLUMNS, exploration_csv, load_report, plot_exploration, plot_layers,
    plot_sparsity_profile, read_exploration_csv, render, write_report,
)
from photosparse.scheduler import EPB_DEFINITION, FPS_DEFINITION, simulate
from photosparse.sparsify import SparsityPlan, layer_sparsity_profile, prune

PNG = b"\x89PNG"


def _report():
    model = fixtures.tiny_model()
    return simulate(model, fixtures.sample_input(model))[0]


def test_renderings_carry_definitions_and_columns():
    report = _report()
    text = render(report, "text")
    assert FPS_DEFINITION in text and EPB_DEFINITION in text
    lines = render(report, "csv").splitlines()
    assert all(l.startswith("# ") for l in lines[:7])
    rows = list(csv.reader(l for l in lines if not l.startswith("#")))
    assert tuple(rows[0]) == LAYER_COLUMNS
    assert len(rows) == 1 + len(report.records)
    assert float(rows[1][3]) == report.records[0].energy_j
    data = json.loads(render(report, "json"))
    assert data["schema"] == 1 and data["definitions"]["epb"] == EPB_DEFINITION


def test_json_roundtrip_through_files(tmp_path):
    report = _report()
    paths = write_report(report, tmp_path)
    assert sorted(p.name for p in paths.values()) == ["report.csv", "report.json", "report.txt"]
    assert load_report(paths["json"]) == report


def test_degenerate_report_serialises_without_inf():
    model = ModelIR("z", (LayerSpec(LayerKind.FC, "fc", weight="w"),), {"w": np.ones((2, 3))}, (3,))
    report = simulate(model, np.zeros(3))[0]
    assert math.isinf(report.fps)
    data = json.loads(render(report, "json"))
    assert data["totals"]["fps"] is None


def test_exploration_csv_and_figures(tmp_path):
    model = fixtures.tiny_model()
    result = explore(model, [(fixtures.sample_input(model), None)], ExplorationGrid((0.0, 0.5), (None, 4)))
    text = exploration_csv(result)
    (tmp_path / "e.csv").write_text(text)
    rows = read_exploration_csv(tmp_path / "e.csv")
    assert len(rows) == 4 and tuple(rows[0]) == EXPLORE_COLUMNS
    assert sum(int(r["pareto"]) for r in rows) == len(result.pareto)
    assert [r["rank"] for r in rows if r["rank"] == "1"] and rows[result.best.point.index]["rank"] == "1"
    assert plot_exploration(rows, tmp_path / "e.png").read_bytes()[:4] == PNG
    assert plot_layers(_report(), tmp_path / "l.png").read_bytes()[:4] == PNG
    profile = layer_sparsity_profile(prune(model, SparsityPlan.uniform(model, 0.5)), fixtures.sample_input(model))
    assert plot_sparsity_profile(profile, tmp_path / "s.png").read_bytes()[:4] == PNG
