"""Tensors, the layer-chain model representation and the dense reference forward pass.

Tensors are plain ``numpy.ndarray`` objects (float64, C order, read-only once
they belong to a model). The reference forward pass uses exact real
arithmetic with no quantization and serves as the oracle every photonic-path
result is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ModelError

Tensor = np.ndarray


class LayerKind(str, Enum):
    CONV = "Conv2D"
    FC = "FullyConnected"
    BN = "BatchNorm"
    RELU = "ReLU"
    POOL = "MaxPool"

    @property
    def parameterized(self) -> bool:
        return self in (LayerKind.CONV, LayerKind.FC)


def as_tensor(data, shape: Sequence[int] | None = None) -> Tensor:
    """Return a read-only float64 copy of ``data``, checking shape and finiteness."""
    arr = np.array(data, dtype=np.float64, order="C")
    if shape is not None:
        shape = tuple(int(d) for d in shape)
        if any(d <= 0 for d in shape):
            raise ModelError(f"tensor dimensions must be positive, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ModelError(f"{arr.size} values cannot fill shape {shape}")
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ModelError("tensor contains NaN or Inf")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a sequential CNN.

    Conv2D and FullyConnected reference a weight tensor (and optionally a bias);
    BatchNorm references per-channel ``scale`` and ``shift`` tensors; MaxPool
    uses ``window`` and ``stride``. Conv2D padding is symmetric zero padding.
    """

    kind: LayerKind
    name: str
    weight: str | None = None
    bias: str | None = None
    scale: str | None = None
    shift: str | None = None
    stride: int = 1
    padding: int = 0
    window: int = 2

    def tensor_refs(self) -> list[str]:
        return [t for t in (self.weight, self.bias, self.scale, self.shift) if t is not None]


@dataclass(frozen=True)
class ModelIR:
    name: str
    layers: tuple[LayerSpec, ...]
    tensors: Mapping[str, Tensor]
    input_shape: tuple[int, ...]
    shapes: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "tensors", {k: as_tensor(v) for k, v in self.tensors.items()})
        object.__setattr__(self, "shapes", tuple(infer_shapes(self)))

    def weight(self, index: int) -> Tensor:
        layer = self.layers[index]
        if not layer.kind.parameterized:
            raise ModelError(f"layer {index} ({layer.kind.value}) has no weights")
        return self.tensors[layer.weight]

    def parameterized_layers(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if layer.kind.parameterized]

    def output_shape(self, index: int) -> tuple[int, ...]:
        return self.shapes[index]

    def input_shape_of(self, index: int) -> tuple[int, ...]:
        return self.input_shape if index == 0 else self.shapes[index - 1]

    def with_tensors(self, updates: Mapping[str, Tensor]) -> "ModelIR":
        tensors = dict(self.tensors)
        tensors.update(updates)
        return replace(self, tensors=tensors)


def _conv_out(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def infer_shapes(model: ModelIR) -> list[tuple[int, ...]]:
    """Validate the chain and return the output shape of every layer."""
    if not model.layers:
        raise ModelError("model must contain at least one layer")
    if not model.input_shape or any(d <= 0 for d in model.input_shape):
        raise ModelError(f"invalid input shape {model.input_shape}")
    shape = model.input_shape
    out = []
    for i, layer in enumerate(model.layers):
        for ref in layer.tensor_refs():
            if ref not in model.tensors:
                raise ModelError(f"layer {i} references unknown tensor {ref!r}")
        where = f"layer {i} ({layer.name})"
        if layer.kind is LayerKind.CONV:
            if layer.weight is None:
                raise ModelError(f"{where}: Conv2D needs a weight tensor")
            w = model.tensors[layer.weight]
            if w.ndim != 4 or len(shape) != 3:
                raise ModelError(f"{where}: kernel {w.shape} incompatible with input {shape}")
            oc, ic, kh, kw = w.shape
            if ic != shape[0]:
                raise ModelError(f"{where}: kernel expects {ic} channels, input has {shape[0]}")
            if layer.stride < 1 or layer.padding < 0:
                raise ModelError(f"{where}: invalid stride/padding")
            oh = _conv_out(shape[1], kh, layer.stride, layer.padding)
            ow = _conv_out(shape[2], kw, layer.stride, layer.padding)
            if oh < 1 or ow < 1:
                raise ModelError(f"{where}: kernel larger than padded input")
            shape = (oc, oh, ow)
            if layer.bias is not None and model.tensors[layer.bias].shape != (oc,):
                raise ModelError(f"{where}: bias shape must be ({oc},)")
        elif layer.kind is LayerKind.FC:
            if layer.weight is None:
                raise ModelError(f"{where}: FullyConnected needs a weight tensor")
            w = model.tensors[layer.weight]
            size = int(np.prod(shape))
            if w.ndim != 2 or w.shape[1] != size:
                raise ModelError(f"{where}: weight {w.shape} incompatible with {size} inputs")
            shape = (w.shape[0],)
            if layer.bias is not None and model.tensors[layer.bias].shape != shape:
                raise ModelError(f"{where}: bias shape must be {shape}")
        elif layer.kind is LayerKind.BN:
            if layer.scale is None or layer.shift is None:
                raise ModelError(f"{where}: BatchNorm needs scale and shift")
            for ref in (layer.scale, layer.shift):
                if model.tensors[ref].shape != (shape[0],):
                    raise ModelError(f"{where}: {ref} must have shape ({shape[0]},)")
        elif layer.kind is LayerKind.POOL:
            if len(shape) != 3 or layer.window < 1 or layer.stride < 1:
                raise ModelError(f"{where}: MaxPool needs a (C, H, W) input")
            oh = (shape[1] - layer.window) // layer.stride + 1
            ow = (shape[2] - layer.window) // layer.stride + 1
            if oh < 1 or ow < 1:
                raise ModelError(f"{where}: pooling window larger than input")
            shape = (shape[0], oh, ow)
        out.append(tuple(shape))
    return out


def count_parameters(model: ModelIR) -> int:
    """Number of weight elements over all Conv2D/FullyConnected layers (biases excluded)."""
    return sum(int(model.weight(i).size) for i in model.parameterized_layers())


def concatenate(first: ModelIR, second: ModelIR, name: str | None = None) -> ModelIR:
    """Chain ``second`` after ``first``; tensor names of ``second`` get a prefix."""
    prefix = "b."
    renamed = {}
    layers = list(first.layers)
    for layer in second.layers:
        refs = {}
        for attr in ("weight", "bias", "scale", "shift"):
            ref = getattr(layer, attr)
            if ref is not None:
                refs[attr] = prefix + ref
                renamed[prefix + ref] = second.tensors[ref]
        layers.append(replace(layer, name=prefix + layer.name, **refs))
    tensors = dict(first.tensors)
    tensors.update(renamed)
    return ModelIR(name or f"{first.name}+{second.name}", tuple(layers), tensors, first.input_shape)


# Dense layer kernels shared by the reference pass and the simulator's
# electronic post-processing.

def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    kh, kw = w.shape[2:]
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # windows: (C, oH, oW, kH, kW)
    return np.einsum("chwij,ocij->ohw", windows, w, optimize=True)


def fully_connected(x: Tensor, w: Tensor) -> Tensor:
    return w @ x.reshape(-1)


def batch_norm(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    bshape = (-1,) + (1,) * (x.ndim - 1)
    return x * scale.reshape(bshape) + shift.reshape(bshape)


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def max_pool(x: Tensor, window: int, stride: int) -> Tensor:
    windows = sliding_window_view(x, (window, window), axis=(1, 2))[:, ::stride, ::stride]
    return windows.max(axis=(3, 4))


def apply_layer(model: ModelIR, index: int, x: Tensor) -> Tensor:
    layer = model.layers[index]
    t = model.tensors
    if layer.kind is LayerKind.CONV:
        y = conv2d(x, t[layer.weight], layer.stride, layer.padding)
        if layer.bias is not None:
            y = y + t[layer.bias][:, None, None]
    elif layer.kind is LayerKind.FC:
        y = fully_connected(x, t[layer.weight])
        if layer.bias is not None:
            y = y + t[layer.bias]
    elif layer.kind is LayerKind.BN:
        y = batch_norm(x, t[layer.scale], t[layer.shift])
    elif layer.kind is LayerKind.RELU:
        y = relu(x)
    else:
        y = max_pool(x, layer.window, layer.stride)
    return y


def check_input(model: ModelIR, x) -> Tensor:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.input_shape:
        raise ModelError(f"input shape {x.shape} does not match model input {model.input_shape}")
    if not np.all(np.isfinite(x)):
        raise ModelError("input contains NaN or Inf")
    return x


def reference_forward(model: ModelIR, x, capture: bool = False):
    """Exact dense forward pass.

    With ``capture=True`` returns the list of every layer's output instead of
    only the final one.
    """
    x = check_input(model, x)
    outputs = []
    for i in range(len(model.layers)):
        x = apply_layer(model, i, x)
        if capture:
            outputs.append(x)
    return outputs if capture else x
