"""On-disk model container: ``manifest.json`` plus ``tensors.bin``.

The blob holds little-endian float32 values, row-major, tensors concatenated
in manifest order. The manifest lists each tensor's name, shape, byte offset
and byte length. A container is either a directory holding both files or a
zip archive with the two files at its root.
"""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np

from .cluster import codebook_from_weights
from .errors import ContainerError, ModelError
from .model import LayerKind, LayerSpec, ModelIR, count_parameters
from .sparsify import MaskedModel, count_nonzero

FORMAT = "photosparse-model"
VERSION = 1
MANIFEST = "manifest.json"
BLOB = "tensors.bin"
_DTYPE = np.dtype("<f4")


def _layer_record(layer: LayerSpec) -> dict:
    rec = {"kind": layer.kind.value, "name": layer.name}
    if layer.kind is LayerKind.CONV:
        rec.update(weight=layer.weight, bias=layer.bias, stride=layer.stride, padding=layer.padding)
    elif layer.kind is LayerKind.FC:
        rec.update(weight=layer.weight, bias=layer.bias)
    elif layer.kind is LayerKind.BN:
        rec.update(scale=layer.scale, shift=layer.shift)
    elif layer.kind is LayerKind.POOL:
        rec.update(window=layer.window, stride=layer.stride)
    return rec


def _encode(model: ModelIR | MaskedModel) -> tuple[dict, bytes]:
    masked = model if isinstance(model, MaskedModel) else MaskedModel(model)
    base = masked.base
    tensors = dict(base.tensors)
    layers = []
    for i, layer in enumerate(base.layers):
        rec = _layer_record(layer)
        if i in masked.masks:
            rec["mask"] = f"{layer.name}.mask"
            tensors[rec["mask"]] = masked.masks[i]
        if i in masked.codebooks:
            rec["codebook"] = [float(c) for c in masked.codebooks[i].centroids]
        layers.append(rec)

    entries, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype=_DTYPE)
        if not np.all(np.isfinite(data)):
            raise ModelError(f"tensor {name!r} is not representable as finite float32")
        raw = data.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "length": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "name": base.name,
        "input_shape": list(base.input_shape),
        "parameters": count_parameters(base),
        "surviving_parameters": count_nonzero(masked),
        "clusters": masked.clusters,
        "layers": layers,
        "tensors": entries,
    }
    return manifest, b"".join(chunks)


def save_model(model: ModelIR | MaskedModel, path) -> None:
    """Write a container. Paths ending in ``.zip`` produce an archive, others a directory.

    Tensor data is stored as float32; values that are already float32-exact
    round-trip bit for bit.
    """
    manifest, blob = _encode(model)
    text = json.dumps(manifest, indent=1, sort_keys=False) + "\n"
    path = Path(path)
    try:
        if path.suffix == ".zip":
            path.parent.mkdir(parents=True, exist_ok=True)
            with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
                zf.writestr(MANIFEST, text)
                zf.writestr(BLOB, blob)
        else:
            path.mkdir(parents=True, exist_ok=True)
            (path / MANIFEST).write_text(text, encoding="utf-8")
            (path / BLOB).write_bytes(blob)
    except OSError as exc:
        raise ContainerError(f"cannot write container {path}: {exc}") from exc


def _read(path: Path) -> tuple[dict, bytes]:
    try:
        if path.is_file() and zipfile.is_zipfile(path):
            with zipfile.ZipFile(path) as zf:
                text, blob = zf.read(MANIFEST).decode("utf-8"), zf.read(BLOB)
        elif path.is_dir():
            text = (path / MANIFEST).read_text(encoding="utf-8")
            blob = (path / BLOB).read_bytes()
        else:
            raise ContainerError(f"{path} is neither a container directory nor a zip archive")
    except (OSError, KeyError, UnicodeDecodeError) as exc:
        raise ContainerError(f"cannot read container {path}: {exc}") from exc
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContainerError(f"malformed manifest: {exc}") from exc
    return manifest, blob


def _decode_tensors(manifest: dict, blob: bytes) -> dict[str, np.ndarray]:
    tensors = {}
    for entry in manifest["tensors"]:
        name, shape = entry["name"], tuple(int(d) for d in entry["shape"])
        offset, length = int(entry["offset"]), int(entry["length"])
        expected = int(np.prod(shape)) * _DTYPE.itemsize
        if length != expected:
            raise ContainerError(f"tensor {name!r}: shape {shape} needs {expected} bytes, manifest says {length}")
        if offset < 0 or offset + length > len(blob):
            raise ContainerError(
                f"tensor {name!r}: blob truncated (needs bytes {offset}..{offset + length}, blob has {len(blob)})"
            )
        data = np.frombuffer(blob, dtype=_DTYPE, count=length // _DTYPE.itemsize, offset=offset)
        if not np.all(np.isfinite(data)):
            raise ModelError(f"tensor {name!r} contains NaN or Inf")
        tensors[name] = data.astype(np.float64).reshape(shape)
    return tensors


def _decode(manifest: dict, blob: bytes) -> MaskedModel:
    try:
        if manifest.get("format") != FORMAT:
            raise ContainerError(f"unknown container format {manifest.get('format')!r}")
        if manifest.get("version") != VERSION:
            raise ContainerError(f"unsupported container version {manifest.get('version')!r}")
        tensors = _decode_tensors(manifest, blob)
        layers, masks, books = [], {}, {}
        for i, rec in enumerate(manifest["layers"]):
            kind = LayerKind(rec["kind"])
            fields = {k: rec[k] for k in ("weight", "bias", "scale", "shift", "stride", "padding", "window") if k in rec}
            layers.append(LayerSpec(kind=kind, name=rec["name"], **fields))
            if "mask" in rec:
                masks[i] = tensors.pop(rec["mask"])
            if "codebook" in rec:
                books[i] = rec["codebook"]
        base = ModelIR(manifest["name"], tuple(layers), tensors, tuple(manifest["input_shape"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ContainerError(f"malformed manifest: {exc!r}") from exc
    masked = MaskedModel(base, masks)
    codebooks = {i: codebook_from_weights(masked.effective_weight(i), masked.mask(i), c) for i, c in books.items()}
    masked = MaskedModel(base, masks, codebooks, manifest.get("clusters"))
    if "parameters" in manifest and manifest["parameters"] != count_parameters(base):
        raise ContainerError("manifest parameter count disagrees with tensor data")
    return masked


def load_masked(path) -> MaskedModel:
    """Load a container including any masks and codebooks it carries."""
    return _decode(*_read(Path(path)))


def load_model(path) -> ModelIR:
    """Load a container as a plain model (masks, if any, applied to the weights)."""
    return load_masked(path).effective_model()


def read_manifest(path) -> dict:
    return _read(Path(path))[0]
