"""Layer-wise magnitude pruning with binary masks."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Mapping

import numpy as np

from .errors import ModelError
from .model import ModelIR, Tensor, as_tensor, count_parameters, reference_forward

if TYPE_CHECKING:
    from .cluster import Codebook


@dataclass(frozen=True)
class SparsityPlan:
    """Target sparsity per layer index. Layers not listed are left untouched."""

    targets: Mapping[int, float]

    def __post_init__(self):
        targets = {}
        for idx, s in self.targets.items():
            s = float(s)
            if not 0.0 <= s <= 1.0:
                raise ModelError(f"sparsity for layer {idx} must lie in [0, 1], got {s}")
            targets[int(idx)] = s
        object.__setattr__(self, "targets", dict(sorted(targets.items())))

    @classmethod
    def uniform(cls, model: ModelIR, sparsity: float, layers=None) -> "SparsityPlan":
        layers = model.parameterized_layers() if layers is None else layers
        return cls({i: sparsity for i in layers})

    def validate(self, model: ModelIR) -> None:
        for idx in self.targets:
            if not 0 <= idx < len(model.layers):
                raise ModelError(f"sparsity plan references layer {idx}, model has {len(model.layers)}")
            if not model.layers[idx].kind.parameterized:
                kind = model.layers[idx].kind.value
                raise ModelError(f"sparsity plan references non-parameterized layer {idx} ({kind})")


@dataclass(frozen=True)
class MaskedModel:
    """A model plus binary masks (1 keeps, 0 prunes) for some of its layers.

    ``codebooks`` and ``clusters`` are filled in by the clusterer.
    """

    base: ModelIR
    masks: Mapping[int, Tensor] = field(default_factory=dict)
    codebooks: Mapping[int, "Codebook"] = field(default_factory=dict)
    clusters: int | None = None

    def __post_init__(self):
        masks = {}
        for idx, mask in self.masks.items():
            w = self.base.weight(idx)
            mask = as_tensor(mask)
            if mask.shape != w.shape:
                raise ModelError(f"mask for layer {idx} has shape {mask.shape}, weight has {w.shape}")
            if not np.all((mask == 0.0) | (mask == 1.0)):
                raise ModelError(f"mask for layer {idx} is not binary")
            masks[int(idx)] = mask
        object.__setattr__(self, "masks", dict(sorted(masks.items())))
        object.__setattr__(self, "codebooks", dict(sorted(self.codebooks.items())))

    @classmethod
    def unpruned(cls, model: ModelIR) -> "MaskedModel":
        return cls(model)

    def mask(self, index: int) -> Tensor:
        if index in self.masks:
            return self.masks[index]
        return np.ones_like(self.base.weight(index))

    def effective_weight(self, index: int) -> Tensor:
        w = self.base.weight(index)
        if index in self.masks:
            return w * self.masks[index]
        return w

    def effective_model(self) -> ModelIR:
        """The base model with every mask multiplied into its weight tensor."""
        updates = {self.base.layers[i].weight: self.effective_weight(i) for i in self.masks}
        return self.base.with_tensors(updates) if updates else self.base


def prune_layer(weights: np.ndarray, sparsity: float) -> np.ndarray:
    """Binary mask zeroing the ``floor(sparsity * P)`` smallest-magnitude weights.

    Ties in magnitude are broken by flat index: the lower index is pruned first.
    """
    flat = np.abs(np.asarray(weights, dtype=np.float64)).reshape(-1)
    count = int(np.floor(sparsity * flat.size))
    mask = np.ones(flat.size)
    if count:
        order = np.argsort(flat, kind="stable")
        mask[order[:count]] = 0.0
    return mask.reshape(np.shape(weights))


def prune(model: ModelIR | MaskedModel, plan: SparsityPlan) -> MaskedModel:
    """Apply ``plan`` to a model.

    Given an already masked model the ranking uses the effective (masked)
    weights and the new masks are combined with the old ones, so pruning
    again at the same sparsity changes nothing.
    """
    masked = model if isinstance(model, MaskedModel) else MaskedModel(model)
    plan.validate(masked.base)
    masks = dict(masked.masks)
    for idx, s in plan.targets.items():
        new = prune_layer(masked.effective_weight(idx), s)
        masks[idx] = new * masked.mask(idx)
    return replace(masked, masks=masks)


def count_nonzero(masked: MaskedModel) -> int:
    """Surviving weights: mask bits set in pruned layers plus all weights of unpruned ones."""
    total = count_parameters(masked.base)
    for idx, mask in masked.masks.items():
        total -= int(mask.size - np.count_nonzero(mask))
    return total


@dataclass(frozen=True)
class LayerSparsity:
    index: int
    name: str
    kind: str
    weight_sparsity: float | None
    activation_sparsity: float


def layer_sparsity_profile(masked: MaskedModel, probe) -> list[LayerSparsity]:
    """Fraction of zero weights and of zero output activations, layer by layer."""
    model = masked.effective_model()
    outputs = reference_forward(model, probe, capture=True)
    profile = []
    for i, (layer, out) in enumerate(zip(model.layers, outputs)):
        ws = None
        if layer.kind.parameterized:
            w = model.weight(i)
            ws = float(np.count_nonzero(w == 0.0)) / w.size
        act = float(np.count_nonzero(out == 0.0)) / out.size
        profile.append(LayerSparsity(i, layer.name, layer.kind.value, ws, act))
    return profile
