"""Zero-elimination transforms that turn layers into dot-product work.

FC layers: zero activations are removed together with the matching weight
columns. CONV layers: kernels and input patches are unrolled (im2col), then
zero kernel entries are removed together with the matching patch rows. In
both cases the zero-free side is the *dense* vector that drives the VCSELs;
the other side may keep residual zeros, handled later by power gating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError


@dataclass(frozen=True)
class CompressedGemm:
    """``sparse_matrix @ dense_vector`` with every zero of the dense side removed.

    ``sparse_matrix`` has one row per output element and one column per
    retained dense entry; ``dense_index`` maps columns back to positions in
    the uncompressed vector.
    """

    dense_vector: np.ndarray
    dense_index: np.ndarray
    sparse_matrix: np.ndarray
    output_dim: int

    @property
    def length(self) -> int:
        return int(self.dense_vector.size)

    def evaluate(self) -> np.ndarray:
        if self.length == 0:
            return np.zeros(self.output_dim)
        return self.sparse_matrix @ self.dense_vector


@dataclass(frozen=True)
class UnrolledConv:
    kernel_vectors: np.ndarray  # (out_ch, in_ch*kH*kW)
    patch_matrix: np.ndarray  # (in_ch*kH*kW, oH*oW), one column per output pixel
    output_map_shape: tuple[int, int, int]


@dataclass(frozen=True)
class WorkChunk:
    """One chunk of a compressed dot product.

    ``sparse`` holds one row per output element. ``valid`` is False on the
    zero padding appended to the last chunk.
    """

    dense: np.ndarray  # (width,)
    sparse: np.ndarray  # (rows, width)
    valid: np.ndarray  # (width,) bool


def _compress(dense_side: np.ndarray, matrix: np.ndarray, output_dim: int) -> CompressedGemm:
    index = np.flatnonzero(dense_side != 0.0)
    return CompressedGemm(dense_side[index], index, matrix[:, index], output_dim)


def compress_fc(weight, activations) -> CompressedGemm:
    w = np.asarray(weight, dtype=np.float64)
    a = np.asarray(activations, dtype=np.float64).reshape(-1)
    if w.ndim != 2 or w.shape[1] != a.size:
        raise ModelError(f"weight {w.shape} incompatible with {a.size} activations")
    return _compress(a, w, w.shape[0])


def im2col(ifmap: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> tuple[np.ndarray, int, int]:
    """Patch matrix with rows in (in_ch, kH, kW) order and columns in row-major pixel order."""
    c, h, w = ifmap.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ModelError(f"kernel {kh}x{kw} does not fit a padded {h}x{w} map")
    img = np.pad(ifmap, ((0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((c, kh, kw, oh, ow))
    for y in range(kh):
        y_max = y + stride * oh
        for x in range(kw):
            x_max = x + stride * ow
            cols[:, y, x] = img[:, y:y_max:stride, x:x_max:stride]
    return cols.reshape(c * kh * kw, oh * ow), oh, ow


def unroll_conv(kernels, ifmap, stride: int = 1, padding: int = 0) -> UnrolledConv:
    k = np.asarray(kernels, dtype=np.float64)
    x = np.asarray(ifmap, dtype=np.float64)
    if k.ndim != 4 or x.ndim != 3 or k.shape[1] != x.shape[0]:
        raise ModelError(f"kernels {k.shape} incompatible with feature map {x.shape}")
    if stride < 1 or padding < 0:
        raise ModelError("stride must be >= 1 and padding >= 0")
    patches, oh, ow = im2col(x, k.shape[2], k.shape[3], stride, padding)
    return UnrolledConv(k.reshape(k.shape[0], -1), patches, (k.shape[0], oh, ow))


def compress_conv(unrolled: UnrolledConv) -> list[CompressedGemm]:
    """One work item per output channel; an all-zero kernel yields an empty item."""
    pixels = unrolled.patch_matrix.T
    return [_compress(kv, pixels, pixels.shape[0]) for kv in unrolled.kernel_vectors]


def chunk_arrays(item: CompressedGemm, chunk: int):
    """Vectorised chunking: ``(dense, sparse, valid)`` of shapes
    ``(n_chunks, chunk)``, ``(rows, n_chunks, chunk)`` and ``(n_chunks, chunk)``.
    """
    if chunk < 1:
        raise ValueError("chunk width must be positive")
    length = item.length
    n_chunks = -(-length // chunk)
    padded = n_chunks * chunk
    dense = np.zeros(padded)
    dense[:length] = item.dense_vector
    valid = np.zeros(padded, dtype=bool)
    valid[:length] = True
    rows = item.sparse_matrix.shape[0]
    sparse = np.zeros((rows, padded))
    sparse[:, :length] = item.sparse_matrix
    return (
        dense.reshape(n_chunks, chunk),
        sparse.reshape(rows, n_chunks, chunk),
        valid.reshape(n_chunks, chunk),
    )


def chunk_work(item: CompressedGemm, chunk: int) -> list[WorkChunk]:
    """Split the dense vector and every aligned matrix row into ``ceil(L / chunk)`` segments."""
    dense, sparse, valid = chunk_arrays(item, chunk)
    return [WorkChunk(dense[c], sparse[:, c], valid[c]) for c in range(dense.shape[0])]


@dataclass(frozen=True)
class CompressionStats:
    """Lane counts of one layer, where a lane is one multiply of a dot product."""

    layer: int
    name: str
    kind: str
    lanes_before: int
    lanes_retained: int
    zeros_eliminated: int
    residual_zeros: int  # zeros left on the sparse side of retained lanes


def compression_stats(index: int, name: str, kind: str, items: list[CompressedGemm], full_length: int):
    before = sum(full_length * item.output_dim for item in items)
    retained = sum(item.length * item.output_dim for item in items)
    residual = sum(int(np.count_nonzero(item.sparse_matrix == 0.0)) for item in items)
    return CompressionStats(index, name, kind, before, retained, before - retained, residual)
