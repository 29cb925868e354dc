"""Per-layer weight clustering with density-based centroid initialization.

Each clustered layer gets its own codebook. Only surviving (unmasked) weights
take part; pruned zeros are structural and stay zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ModelError
from .sparsify import MaskedModel

log = logging.getLogger(__name__)

MAX_LLOYD_ITERATIONS = 100


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # strictly increasing
    assignments: np.ndarray  # one index per surviving weight, flat order

    @property
    def C(self) -> int:
        return int(self.centroids.size)

    @property
    def bits(self) -> int:
        return required_dac_bits(self.C)

    def values(self) -> np.ndarray:
        return self.centroids[self.assignments]


def required_dac_bits(clusters: int) -> int:
    """DAC resolution needed to address ``clusters`` distinct weight levels."""
    if clusters < 1:
        raise ValueError("cluster count must be positive")
    return max(1, math.ceil(math.log2(clusters)))


def init_centroids_density(weights, clusters: int) -> np.ndarray:
    """Centroids at the midpoints of ``clusters`` equal-probability regions.

    The empirical CDF is cut at levels (k + 0.5) / C and each centroid is the
    linearly interpolated quantile there. Duplicate centroids are merged, so
    the result may hold fewer than ``clusters`` values.
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise ModelError("cannot initialize centroids from an empty weight list")
    if clusters < 1:
        raise ModelError("cluster count must be positive")
    levels = (np.arange(clusters) + 0.5) / clusters
    return np.unique(np.quantile(w, levels, method="linear"))


def assign_nearest(values: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of the nearest centroid; a value exactly between two goes to the lower one."""
    mids = (centroids[:-1] + centroids[1:]) / 2.0
    return np.searchsorted(mids, values, side="left")


def within_cluster_sse(values: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    return float(np.sum((values - centroids[assignments]) ** 2))


def lloyd_1d(values, init, max_iter: int = MAX_LLOYD_ITERATIONS):
    """1-D k-means from ``init``.

    Returns ``(centroids, assignments, sse_history)``. Empty clusters are
    dropped after every update. Stops when assignments repeat exactly.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    centroids = np.unique(np.asarray(init, dtype=np.float64))
    assignments = assign_nearest(values, centroids)
    history = [within_cluster_sse(values, centroids, assignments)]
    for _ in range(max_iter):
        counts = np.bincount(assignments, minlength=centroids.size)
        sums = np.bincount(assignments, weights=values, minlength=centroids.size)
        keep = counts > 0
        centroids = np.unique(sums[keep] / counts[keep])
        new = assign_nearest(values, centroids)
        history.append(within_cluster_sse(values, centroids, new))
        if new.shape == assignments.shape and np.array_equal(new, assignments) and keep.all():
            assignments = new
            break
        assignments = new
    return centroids, assignments, history


def cluster_values(values, clusters: int) -> Codebook:
    """Cluster one layer's surviving weights.

    Centroids are rounded to float32 so that a clustered model survives a
    save/load round trip unchanged.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    centroids, _, _ = lloyd_1d(values, init_centroids_density(values, clusters))
    centroids = np.unique(centroids.astype(np.float32).astype(np.float64))
    return Codebook(centroids, assign_nearest(values, centroids))


def cluster_weights(masked: MaskedModel, clusters: int, layers=None):
    """Cluster every parameterized layer (or ``layers``) of ``masked``.

    Returns ``(clustered, codebooks)``; the clustered model carries the
    codebooks too. Layers without surviving weights are skipped with a warning.
    """
    if clusters < 1:
        raise ModelError("cluster count must be positive")
    base = masked.base
    layers = base.parameterized_layers() if layers is None else list(layers)
    updates, codebooks = {}, dict(masked.codebooks)
    for idx in layers:
        w = masked.effective_weight(idx)
        keep = masked.mask(idx).reshape(-1) != 0.0
        if not keep.any():
            log.warning("layer %d (%s) has no surviving weights; not clustered", idx, base.layers[idx].name)
            codebooks.pop(idx, None)
            continue
        book = cluster_values(w.reshape(-1)[keep], clusters)
        flat = np.zeros(w.size)
        flat[keep] = book.values()
        updates[base.layers[idx].weight] = flat.reshape(w.shape)
        codebooks[idx] = book
    clustered = replace(masked, base=base.with_tensors(updates), codebooks=codebooks, clusters=clusters)
    return clustered, codebooks


def codebook_from_weights(weights, mask, centroids) -> Codebook:
    """Rebuild a codebook's assignments from stored weights and centroid values."""
    centroids = np.asarray(centroids, dtype=np.float64)
    keep = np.asarray(mask).reshape(-1) != 0.0
    values = np.asarray(weights, dtype=np.float64).reshape(-1)[keep]
    assignments = assign_nearest(values, centroids)
    if values.size and not np.array_equal(centroids[assignments], values):
        raise ModelError("stored weights do not match their codebook centroids")
    return Codebook(centroids, assignments)
