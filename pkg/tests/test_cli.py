import json

import numpy as np
import pytest

from photosparse import fixtures
from photosparse.cli import main
from photosparse.cluster import cluster_weights
from photosparse.photonic import QuantSpec
from photosparse.report import read_exploration_csv
from photosparse.scheduler import simulate
from photosparse.sparsify import SparsityPlan, prune


@pytest.fixture()
def mnist(tmp_path):
    path = tmp_path / "mnist"
    assert main(["make-fixture", "mnist", "--out", str(path)]) == 0
    return path


def test_prune_reports_surviving_parameters(mnist, tmp_path, capsys):
    capsys.readouterr()
    assert main(["prune", "--model", str(mnist), "--sparsity", "0.5", "--out", str(tmp_path / "p"), "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[-1] == {"layer": "total", "sparsity": "", "parameters": 1_498_730, "surviving": 749_365}


def test_staged_pipeline_equals_in_process(tmp_path, capsys):
    fixture = tmp_path / "toy"
    main(["make-fixture", "toy", "--out", str(fixture)])
    cfg = tmp_path / "run.cfg"
    cfg.write_text("prune.sparsity = 0.6\nclusters = 16\n[quant]\nactivation_bits = 12\n")
    steps = [
        ["prune", "--model", str(fixture), "--out", str(tmp_path / "p")],
        ["cluster", "--model", str(tmp_path / "p"), "--out", str(tmp_path / "c.zip")],
        ["simulate", "--model", str(tmp_path / "c.zip"), "--out", str(tmp_path / "sim"), "--no-figures"],
    ]
    for step in steps:
        assert main(step + ["--config", str(cfg)]) == 0
    staged = json.loads((tmp_path / "sim" / "report.json").read_text())

    model = fixtures.toy_model()
    masked, _ = cluster_weights(prune(model, SparsityPlan.uniform(model, 0.6)), 16)
    report, out = simulate(masked, fixtures.sample_input(model, 0), quant=QuantSpec(activation_bits=12))
    assert staged == json.loads(json.dumps(report.to_dict()))
    np.testing.assert_array_equal(np.load(tmp_path / "sim" / "output.npy"), out)


def test_simulate_is_deterministic_and_writes_figures(mnist, tmp_path):
    for run in ("a", "b"):
        assert main(["simulate", "--model", str(mnist), "--out", str(tmp_path / run)]) == 0
    for name in ("report.json", "report.csv", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "layers.png").read_bytes()[:4] == b"\x89PNG"


def test_compress_writes_stats_csv(tmp_path):
    main(["make-fixture", "tiny", "--out", str(tmp_path / "t")])
    x = tmp_path / "x.npy"
    np.save(x, fixtures.sample_input(fixtures.tiny_model(), 5))
    assert main(["compress", "--model", str(tmp_path / "t"), "--input", str(x), "--out", str(tmp_path / "stats.csv")]) == 0
    lines = (tmp_path / "stats.csv").read_text().splitlines()
    assert lines[0] == "layer,name,kind,lanes_before,lanes_retained,zeros_eliminated,residual_zeros"
    assert len(lines) == 3


def test_explore_and_report(tmp_path, capsys):
    main(["make-fixture", "tiny", "--out", str(tmp_path / "t")])
    cfg = tmp_path / "grid.cfg"
    cfg.write_text("[explore]\nsparsity = [0.0, 0.5]\nclusters = [none, 8]\nsamples = 2\n")
    assert main(["explore", "--model", str(tmp_path / "t"), "--config", str(cfg), "--out", str(tmp_path / "e")]) == 0
    rows = read_exploration_csv(tmp_path / "e" / "exploration.csv")
    assert len(rows) == 4 and (tmp_path / "e" / "exploration.png").exists()
    assert main(["report", "--input", str(tmp_path / "e" / "exploration.csv"), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "exploration.png").exists()

    main(["simulate", "--model", str(tmp_path / "t"), "--out", str(tmp_path / "s"), "--no-figures"])
    capsys.readouterr()
    assert main(["report", "--input", str(tmp_path / "s" / "report.json"), "--model", str(tmp_path / "t"),
                 "--out", str(tmp_path / "r2"), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("# model: tiny")
    assert {p.name for p in (tmp_path / "r2").iterdir()} >= {"layers.png", "sparsity.png", "report.json"}


def test_exact_mode_flag_matches_reference(tmp_path):
    main(["make-fixture", "toy", "--out", str(tmp_path / "t")])
    assert main(["simulate", "--model", str(tmp_path / "t"), "--out", str(tmp_path / "s"), "--exact-mode", "--no-figures"]) == 0
    report = json.loads((tmp_path / "s" / "report.json").read_text())
    assert report["quant"]["exact_mode"] is True


@pytest.mark.parametrize("argv,code,fragment", [
    (["simulate", "--model", "/nonexistent", "--out", "x"], 3, "MissingInputError"),
    (["prune", "--model", "{m}", "--out", "{o}"], 2, "no sparsity"),
    (["prune", "--model", "{m}", "--sparsity", "1.5", "--out", "{o}"], 4, "must lie in"),
    (["simulate", "--model", "{m}", "--config", "{bad}", "--out", "{o}"], 2, "unknown key"),
    (["simulate", "--model", "{junk}", "--out", "{o}"], 4, "ContainerError"),
    (["report", "--input", "/nonexistent.json", "--out", "{o}"], 3, "does not exist"),
])
def test_error_exit_codes(tmp_path, capsys, argv, code, fragment):
    main(["make-fixture", "tiny", "--out", str(tmp_path / "m")])
    (tmp_path / "bad.cfg").write_text("arch.z = 1\n")
    (tmp_path / "junk").mkdir()
    paths = {"m": tmp_path / "m", "o": tmp_path / "o", "bad": tmp_path / "bad.cfg", "junk": tmp_path / "junk"}
    argv = [a.format(**paths) for a in argv]
    capsys.readouterr()
    assert main(argv) == code
    assert fragment in capsys.readouterr().err


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "photosparse", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout
