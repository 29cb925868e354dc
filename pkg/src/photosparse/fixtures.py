"""Deterministic reference models.

The four dataset-shaped models reproduce the published layer counts and total
weight counts; the exact layer dimensions were never published, so the shapes
below are one choice that hits those totals with bias-free layers. Weights are
He-normal draws rounded to float32, so containers round-trip exactly.
"""

from __future__ import annotations

import numpy as np

from .model import LayerKind, LayerSpec, ModelIR

CONV, FC, BN, RELU, POOL = LayerKind.CONV, LayerKind.FC, LayerKind.BN, LayerKind.RELU, LayerKind.POOL


def _he(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return w.astype(np.float32).astype(np.float64)


class _Builder:
    def __init__(self, name: str, input_shape, seed: int, bias: bool = False):
        self.name, self.input_shape = name, tuple(input_shape)
        self.rng = np.random.default_rng(seed)
        self.bias = bias
        self.layers: list[LayerSpec] = []
        self.tensors: dict[str, np.ndarray] = {}
        self.channels = input_shape[0]

    def conv(self, out_ch: int, k: int = 3, padding: int = 1, stride: int = 1):
        name = f"conv{sum(l.kind is CONV for l in self.layers) + 1}"
        self.tensors[f"{name}.weight"] = _he(self.rng, (out_ch, self.channels, k, k), self.channels * k * k)
        bias = None
        if self.bias:
            bias = f"{name}.bias"
            self.tensors[bias] = (0.05 * self.rng.standard_normal(out_ch)).astype(np.float32).astype(np.float64)
        self.layers.append(LayerSpec(CONV, name, weight=f"{name}.weight", bias=bias, stride=stride, padding=padding))
        self.channels = out_ch
        return self

    def fc(self, out_dim: int, in_dim: int):
        name = f"fc{sum(l.kind is FC for l in self.layers) + 1}"
        self.tensors[f"{name}.weight"] = _he(self.rng, (out_dim, in_dim), in_dim)
        bias = None
        if self.bias:
            bias = f"{name}.bias"
            self.tensors[bias] = (0.05 * self.rng.standard_normal(out_dim)).astype(np.float32).astype(np.float64)
        self.layers.append(LayerSpec(FC, name, weight=f"{name}.weight", bias=bias))
        self.channels = out_dim
        return self

    def bn(self):
        name = f"bn{sum(l.kind is BN for l in self.layers) + 1}"
        c = self.channels
        self.tensors[f"{name}.scale"] = (1.0 + 0.1 * self.rng.standard_normal(c)).astype(np.float32).astype(np.float64)
        self.tensors[f"{name}.shift"] = (0.05 * self.rng.standard_normal(c)).astype(np.float32).astype(np.float64)
        self.layers.append(LayerSpec(BN, name, scale=f"{name}.scale", shift=f"{name}.shift"))
        return self

    def relu(self):
        self.layers.append(LayerSpec(RELU, f"relu{len(self.layers)}"))
        return self

    def pool(self, window: int = 2, stride: int = 2):
        self.layers.append(LayerSpec(POOL, f"pool{len(self.layers)}", window=window, stride=stride))
        return self

    def build(self) -> ModelIR:
        return ModelIR(self.name, tuple(self.layers), self.tensors, self.input_shape)


def mnist_like(seed: int = 0) -> ModelIR:
    """2 CONV + 2 FC, 1,498,730 weights."""
    b = _Builder("mnist", (1, 28, 28), seed)
    b.conv(30).relu().pool().conv(30).relu().pool()
    b.fc(1007, 30 * 7 * 7).relu().fc(10, 1007)
    return b.build()


def cifar10_like(seed: int = 0) -> ModelIR:
    """6 CONV + 1 FC, 552,874 weights."""
    b = _Builder("cifar10", (3, 32, 32), seed)
    b.conv(34).relu().conv(34).relu().pool()
    b.conv(54).relu().conv(54).relu().pool()
    b.conv(208).relu().pool().conv(208).relu().pool()
    b.fc(10, 208 * 2 * 2)
    return b.build()


def svhn_like(seed: int = 0) -> ModelIR:
    """4 CONV + 3 FC, 552,362 weights."""
    b = _Builder("svhn", (3, 32, 32), seed)
    b.conv(28).relu().conv(28).relu().pool()
    b.conv(32).relu().conv(32).relu().pool()
    b.fc(240, 32 * 8 * 8).relu().fc(143, 240).relu().fc(10, 143)
    return b.build()


def toy_model(seed: int = 0, bias: bool = True, batch_norm: bool = True) -> ModelIR:
    """3 CONV + 2 FC on a 3x12x12 input, with biases and batch norm."""
    b = _Builder("toy", (3, 12, 12), seed, bias=bias)
    b.conv(6)
    if batch_norm:
        b.bn()
    b.relu().conv(8).relu().pool()
    b.conv(8, padding=0)
    if batch_norm:
        b.bn()
    b.relu()
    b.fc(24, 8 * 4 * 4).relu().fc(10, 24)
    return b.build()


def tiny_model(seed: int = 0) -> ModelIR:
    """1 CONV + 1 FC, small enough for exhaustive sweeps."""
    b = _Builder("tiny", (2, 6, 6), seed, bias=True)
    b.conv(4).relu().pool()
    b.fc(5, 4 * 3 * 3)
    return b.build()


def sample_input(model: ModelIR, seed: int = 0) -> np.ndarray:
    """Non-negative image-like input in [0, 1), float32-exact."""
    rng = np.random.default_rng(seed)
    return rng.random(model.input_shape).astype(np.float32).astype(np.float64)


FIXTURES = {
    "mnist": mnist_like,
    "cifar10": cifar10_like,
    "svhn": svhn_like,
    "toy": toy_model,
    "tiny": tiny_model,
}
