import json
import struct

import numpy as np
import pytest

from photosparse import fixtures
from photosparse.cluster import cluster_weights
from photosparse.container import load_masked, load_model, read_manifest, save_model
from photosparse.errors import ContainerError, ModelError
from photosparse.sparsify import SparsityPlan, count_nonzero, prune


def _same(a, b):
    assert a.base.layers == b.base.layers and a.base.input_shape == b.base.input_shape
    assert a.base.tensors.keys() == b.base.tensors.keys()
    for k in a.base.tensors:
        np.testing.assert_array_equal(a.base.tensors[k], b.base.tensors[k])
    assert a.masks.keys() == b.masks.keys()
    for k in a.masks:
        np.testing.assert_array_equal(a.masks[k], b.masks[k])
    assert a.codebooks.keys() == b.codebooks.keys()
    for k in a.codebooks:
        np.testing.assert_array_equal(a.codebooks[k].centroids, b.codebooks[k].centroids)
        np.testing.assert_array_equal(a.codebooks[k].assignments, b.codebooks[k].assignments)
    assert a.clusters == b.clusters


@pytest.mark.parametrize("suffix", ["", ".zip"])
def test_roundtrip_is_bit_exact(tmp_path, suffix):
    model = fixtures.toy_model()
    masked, _ = cluster_weights(prune(model, SparsityPlan.uniform(model, 0.5)), 16)
    path = tmp_path / f"m{suffix}"
    save_model(masked, path)
    _same(masked, load_masked(path))
    manifest = read_manifest(path)
    assert manifest["surviving_parameters"] == count_nonzero(masked)
    assert manifest["clusters"] == 16


def test_load_model_applies_masks(tmp_path):
    model = fixtures.tiny_model()
    pruned = prune(model, SparsityPlan.uniform(model, 0.5))
    save_model(pruned, tmp_path / "m")
    np.testing.assert_array_equal(load_model(tmp_path / "m").weight(0), pruned.effective_weight(0))


def _saved(tmp_path):
    path = tmp_path / "m"
    save_model(fixtures.tiny_model(), path)
    return path, json.loads((path / "manifest.json").read_text())


def _rewrite(path, manifest):
    (path / "manifest.json").write_text(json.dumps(manifest))


def test_truncated_blob(tmp_path):
    path, _ = _saved(tmp_path)
    blob = (path / "tensors.bin").read_bytes()
    (path / "tensors.bin").write_bytes(blob[:-4])
    with pytest.raises(ContainerError, match="truncated"):
        load_masked(path)


def test_length_shape_mismatch(tmp_path):
    path, manifest = _saved(tmp_path)
    manifest["tensors"][0]["shape"][0] += 1
    _rewrite(path, manifest)
    with pytest.raises(ContainerError, match="needs"):
        load_masked(path)


def test_non_finite_tensor(tmp_path):
    path, manifest = _saved(tmp_path)
    blob = bytearray((path / "tensors.bin").read_bytes())
    blob[0:4] = struct.pack("<f", float("nan"))
    (path / "tensors.bin").write_bytes(bytes(blob))
    with pytest.raises(ModelError, match="NaN"):
        load_masked(path)


@pytest.mark.parametrize("edit", [
    lambda m: m.update(format="other"),
    lambda m: m.update(version=99),
    lambda m: m.pop("layers"),
    lambda m: m["layers"][0].update(kind="Dropout"),
    lambda m: m.update(parameters=1),
])
def test_malformed_manifest(tmp_path, edit):
    path, manifest = _saved(tmp_path)
    edit(manifest)
    _rewrite(path, manifest)
    with pytest.raises(ContainerError):
        load_masked(path)


def test_not_json_and_missing(tmp_path):
    path, _ = _saved(tmp_path)
    (path / "manifest.json").write_text("{not json")
    with pytest.raises(ContainerError, match="malformed"):
        load_masked(path)
    with pytest.raises(ContainerError):
        load_masked(tmp_path / "absent")


def test_codebook_inconsistent_with_weights(tmp_path):
    model = fixtures.tiny_model()
    masked, _ = cluster_weights(prune(model, SparsityPlan.uniform(model, 0.5)), 4)
    save_model(masked, tmp_path / "m")
    manifest = read_manifest(tmp_path / "m")
    manifest["layers"][0]["codebook"] = [c + 0.125 for c in manifest["layers"][0]["codebook"]]
    _rewrite(tmp_path / "m", manifest)
    with pytest.raises(ModelError, match="codebook"):
        load_masked(tmp_path / "m")
