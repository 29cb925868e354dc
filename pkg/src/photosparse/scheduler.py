"""Maps compressed work onto the VDU array and runs whole models.

The array has N CONV units of width n and K FC units of width m. Passes of a
layer are dealt round-robin to that layer's units, which run in lockstep
waves: a layer takes ``ceil(passes / units)`` pass latencies. Partial sums,
ReLU, pooling, bias and batch-norm shift are electronic and, by default,
free.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataflow import CompressedGemm, chunk_arrays, compress_conv, compress_fc, compression_stats, unroll_conv
from .errors import ModelError, StageError
from .model import LayerKind, ModelIR, apply_layer, batch_norm, check_input, conv2d, max_pool, reference_forward
from .photonic import (
    DeviceParams,
    QuantSpec,
    lane_energy,
    pass_overhead_energy,
    per_pass_latency,
    quantization_step_bound,
    quantize_array,
)
from .sparsify import MaskedModel

FPS_DEFINITION = "fps = frames / total latency (batch of one image per frame, layers run back to back)"
POWER_DEFINITION = "avg_power_w = total energy / total latency; fps_per_watt = fps / avg_power_w"
EPB_DEFINITION = (
    "epb = total energy / bits processed; bits processed = sum over photonic passes of "
    "active lanes x (dense-side DAC bits + sparse-side DAC bits) + ADC output bits per pass"
)


@dataclass(frozen=True)
class VduConfig:
    n: int = 5
    m: int = 50
    N: int = 50
    K: int = 10

    def __post_init__(self):
        if min(self.n, self.m, self.N, self.K) < 1:
            raise ValueError(f"all VDU array dimensions must be positive, got {self.as_tuple()}")
        if self.m <= self.n:
            warnings.warn(f"FC width m={self.m} is not larger than CONV width n={self.n}", stacklevel=3)
        if self.K >= self.N:
            warnings.warn(f"FC unit count K={self.K} is not smaller than CONV unit count N={self.N}", stacklevel=3)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.n, self.m, self.N, self.K)

    def width(self, kind: LayerKind) -> int:
        return self.n if kind is LayerKind.CONV else self.m

    def units(self, kind: LayerKind) -> int:
        return self.N if kind is LayerKind.CONV else self.K


@dataclass(frozen=True)
class ElectronicCosts:
    """Per-element cost of electronic post-processing (zero unless configured)."""

    op_latency: float = 0.0
    op_energy: float = 0.0


@dataclass(frozen=True)
class LayerRecord:
    layer: int
    name: str
    kind: str
    passes: int = 0
    gated: int = 0  # multiplies of the dense layer whose lane is never driven
    active: int = 0  # lanes driven
    vdu_gated: int = 0  # lanes inside issued passes that were gated (zero sparse operand or padding)
    waves: int = 0
    energy_j: float = 0.0
    latency_s: float = 0.0
    bits: int = 0
    calibration_j: float = 0.0

    @property
    def photonic(self) -> bool:
        return self.kind in (LayerKind.CONV.value, LayerKind.FC.value)


def bits_processed(active_lanes: int, passes: int, dense_bits: int, sparse_bits: int, adc_bits: int = 16) -> int:
    """Bits moved through the photonic core: DAC inputs of lit lanes plus one ADC word per pass."""
    return int(active_lanes) * (dense_bits + sparse_bits) + int(passes) * adc_bits


def round_robin(passes: int, units: int) -> list[int]:
    """Number of passes each unit receives when pass i goes to unit i mod units."""
    base, extra = divmod(passes, units)
    return [base + (1 if u < extra else 0) for u in range(units)]


@dataclass(frozen=True)
class SimReport:
    model: str
    config: VduConfig
    records: tuple[LayerRecord, ...]
    frames: int = 1
    device: dict = field(default_factory=dict, compare=False)
    quant: dict = field(default_factory=dict, compare=False)

    @property
    def energy_j(self) -> float:
        return math.fsum(r.energy_j for r in self.records)

    @property
    def latency_s(self) -> float:
        return math.fsum(r.latency_s for r in self.records)

    @property
    def bits(self) -> int:
        return sum(r.bits for r in self.records)

    @property
    def passes(self) -> int:
        return sum(r.passes for r in self.records)

    @property
    def gated(self) -> int:
        return sum(r.gated for r in self.records)

    @property
    def degenerate(self) -> bool:
        """True when nothing reached the photonic core, leaving the rates undefined."""
        return self.latency_s == 0.0 or self.energy_j == 0.0 or self.bits == 0

    @property
    def fps(self) -> float:
        return self.frames / self.latency_s if self.latency_s else math.inf

    @property
    def avg_power_w(self) -> float:
        return self.energy_j / self.latency_s if self.latency_s else 0.0

    @property
    def fps_per_watt(self) -> float:
        return self.fps / self.avg_power_w if self.avg_power_w else math.inf

    @property
    def epb(self) -> float:
        return self.energy_j / self.bits if self.bits else 0.0

    def identity_errors(self) -> dict[str, float]:
        """Relative residuals of the two metric identities."""
        if self.degenerate:
            return {"fps_per_watt*avg_power=fps": 0.0, "epb*bits=energy": 0.0}
        return {
            "fps_per_watt*avg_power=fps": abs(self.fps_per_watt * self.avg_power_w - self.fps) / self.fps,
            "epb*bits=energy": abs(self.epb * self.bits - self.energy_j) / self.energy_j,
        }

    def check_identities(self, rtol: float = 1e-9) -> None:
        for name, err in self.identity_errors().items():
            if not err <= rtol:
                raise StageError(f"metric identity {name} violated (relative error {err:.3e})")

    def totals(self) -> dict:
        return {
            "energy_j": self.energy_j,
            "latency_s": self.latency_s,
            "bits": self.bits,
            "passes": self.passes,
            "gated": self.gated,
            "active": sum(r.active for r in self.records),
            "vdu_gated": sum(r.vdu_gated for r in self.records),
            "fps": self.fps,
            "avg_power_w": self.avg_power_w,
            "fps_per_watt": self.fps_per_watt,
            "epb": self.epb,
        }

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "definitions": {"fps": FPS_DEFINITION, "power": POWER_DEFINITION, "epb": EPB_DEFINITION},
            "model": self.model,
            "frames": self.frames,
            "config": dict(zip("nmNK", self.config.as_tuple())),
            "device": self.device,
            "quant": self.quant,
            "totals": self.totals(),
            "layers": [asdict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimReport":
        if data.get("schema") != 1:
            raise ModelError(f"unsupported report schema {data.get('schema')!r}")
        cfg = data["config"]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            config = VduConfig(cfg["n"], cfg["m"], cfg["N"], cfg["K"])
        records = tuple(LayerRecord(**r) for r in data["layers"])
        return cls(data["model"], config, records, data.get("frames", 1), data.get("device", {}), data.get("quant", {}))


def merge_reports(reports: list[SimReport]) -> SimReport:
    """Sum per-layer records of several single-frame runs of the same model."""
    first = reports[0]
    merged = []
    for recs in zip(*(r.records for r in reports)):
        base = recs[0]
        merged.append(
            replace(
                base,
                passes=sum(r.passes for r in recs),
                gated=sum(r.gated for r in recs),
                active=sum(r.active for r in recs),
                vdu_gated=sum(r.vdu_gated for r in recs),
                waves=sum(r.waves for r in recs),
                energy_j=math.fsum(r.energy_j for r in recs),
                latency_s=math.fsum(r.latency_s for r in recs),
                bits=sum(r.bits for r in recs),
                calibration_j=math.fsum(r.calibration_j for r in recs),
            )
        )
    return replace(first, records=tuple(merged), frames=sum(r.frames for r in reports))


def _max_abs(arrays) -> float:
    return max((float(np.max(np.abs(a))) for a in arrays if np.size(a)), default=0.0)


def schedule_layer(
    work: list[CompressedGemm],
    kind: LayerKind,
    cfg: VduConfig,
    dev: DeviceParams,
    quant: QuantSpec,
    *,
    bn_scales=None,
    dense_max: float | None = None,
    sparse_max: float | None = None,
    full_length: int | None = None,
):
    """Run one CONV or FC layer's work items on the array.

    ``bn_scales`` gives, per work item, a scalar or per-row batch-norm scale
    applied by the broadband MR. ``dense_max``/``sparse_max`` are the
    quantization ranges (default: maxima over the work). ``full_length`` is
    the uncompressed dot-product length, used to count skipped multiplies.

    Returns ``(record, outputs)`` with one output vector per work item.
    """
    kind = LayerKind(kind)
    if kind not in (LayerKind.CONV, LayerKind.FC):
        raise ValueError(f"{kind.value} layers are not photonic")
    width, units = cfg.width(kind), cfg.units(kind)
    dense_bits, sparse_bits = quant.side_bits(kind)
    if dense_max is None:
        dense_max = _max_abs(item.dense_vector for item in work)
    if sparse_max is None:
        sparse_max = _max_abs(item.sparse_matrix for item in work)
    exact_d = quant.exact_mode or dense_max == 0.0
    exact_s = quant.exact_mode or sparse_max == 0.0
    bn_scales = [1.0] * len(work) if bn_scales is None else bn_scales

    outputs, passes, active, vdu_gated, lit_passes, nominal = [], 0, 0, 0, 0, 0
    for item, bn in zip(work, bn_scales):
        rows = item.sparse_matrix.shape[0]
        nominal += (full_length if full_length is not None else item.length) * item.output_dim
        if item.length == 0:
            outputs.append(np.zeros(item.output_dim))
            continue
        dense, sparse, valid = chunk_arrays(item, width)
        qd = quantize_array(dense, dense_bits, dense_max, exact_d)
        qs = quantize_array(sparse, sparse_bits, sparse_max, exact_s)
        lit = valid[None, :, :] & (sparse != 0.0)
        products = np.where(lit, qd[None, :, :] * qs, 0.0)
        pass_values = products.sum(axis=2) * np.reshape(np.asarray(bn, dtype=np.float64), (-1, 1))
        acc = np.zeros(rows)
        for c in range(pass_values.shape[1]):
            acc += pass_values[:, c]
        outputs.append(acc)
        n_passes = rows * dense.shape[0]
        n_active = int(np.count_nonzero(lit))
        passes += n_passes
        active += n_active
        vdu_gated += n_passes * width - n_active
        lit_passes += int(np.count_nonzero(lit.any(axis=2)))

    waves = max(round_robin(passes, units)) if passes else 0
    banks = min(passes, units)
    calibration = dev.to_calibration_energy(banks)
    energy = (
        active * lane_energy(dev, quant, kind)
        + lit_passes * dev.eo_event_energy
        + passes * pass_overhead_energy(dev)
        + calibration
    )
    record = LayerRecord(
        layer=-1,
        name="",
        kind=kind.value,
        passes=passes,
        gated=nominal - active,
        active=active,
        vdu_gated=vdu_gated,
        waves=waves,
        energy_j=energy,
        latency_s=waves * per_pass_latency(dev, quant, kind),
        bits=bits_processed(active, passes, dense_bits, sparse_bits, dev.adc_bits),
        calibration_j=calibration,
    )
    return record, outputs


def _weight_bits(masked: MaskedModel, index: int, quant: QuantSpec) -> int:
    if index in masked.codebooks:
        return masked.codebooks[index].bits
    if masked.clusters is not None and np.any(masked.mask(index)):
        raise StageError(f"layer {index} ({masked.base.layers[index].name}) was clustered but has no codebook")
    return quant.weight_bits


def _folded_bn(model: ModelIR, index: int):
    """Scale/shift of a BatchNorm directly after layer ``index``, else None."""
    nxt = index + 1
    if nxt < len(model.layers) and model.layers[nxt].kind is LayerKind.BN:
        layer = model.layers[nxt]
        return model.tensors[layer.scale], model.tensors[layer.shift]
    return None


def _layer_work(model: ModelIR, index: int, x: np.ndarray, w: np.ndarray, bn):
    """Work items, per-item BN scales and uncompressed dot-product length for one layer."""
    layer = model.layers[index]
    if layer.kind is LayerKind.CONV:
        unrolled = unroll_conv(w, x, layer.stride, layer.padding)
        work = compress_conv(unrolled)
        scales = [1.0] * len(work) if bn is None else [float(s) for s in bn[0]]
        return work, scales, unrolled.kernel_vectors.shape[1], unrolled.output_map_shape
    work = [compress_fc(w, x)]
    scales = [1.0] if bn is None else [bn[0]]
    return work, scales, w.shape[1], (w.shape[0],)


def simulate(
    masked: MaskedModel | ModelIR,
    x,
    cfg: VduConfig | None = None,
    dev: DeviceParams | None = None,
    quant: QuantSpec | None = None,
    electronic: ElectronicCosts | None = None,
):
    """Run a (pruned, clustered) model through the photonic array.

    Returns ``(report, output)``. CONV/FC layers run on the VDUs; a BatchNorm
    that directly follows one is folded into its passes (scale on the
    broadband MR, shift added electronically).
    """
    masked = masked if isinstance(masked, MaskedModel) else MaskedModel(masked)
    cfg = cfg or VduConfig()
    dev = dev or DeviceParams()
    quant = quant or QuantSpec()
    electronic = electronic or ElectronicCosts()
    model = masked.effective_model()
    x = check_input(model, x)

    records = []
    folded = set()
    for i, layer in enumerate(model.layers):
        if i in folded:
            records.append(LayerRecord(i, layer.name, layer.kind.value))
            continue
        if not layer.kind.parameterized:
            x = apply_layer(model, i, x)
            ops = x.size
            records.append(
                LayerRecord(
                    i, layer.name, layer.kind.value,
                    energy_j=ops * electronic.op_energy, latency_s=ops * electronic.op_latency,
                )
            )
            continue

        w = model.weight(i)
        layer_quant = replace(quant, weight_bits=_weight_bits(masked, i, quant))
        bn = _folded_bn(model, i)
        if bn is not None:
            folded.add(i + 1)
        work, scales, full_length, out_shape = _layer_work(model, i, x, w, bn)
        wmax, xmax = float(np.max(np.abs(w))), float(np.max(np.abs(x)))
        dense_max, sparse_max = (wmax, xmax) if layer.kind is LayerKind.CONV else (xmax, wmax)
        record, outputs = schedule_layer(
            work, layer.kind, cfg, dev, layer_quant,
            bn_scales=scales, dense_max=dense_max, sparse_max=sparse_max, full_length=full_length,
        )
        y = np.stack(outputs).reshape(out_shape)
        # electronic: bias and BN shift, y = s*(Wx) + s*b + t
        offset = None
        if layer.bias is not None:
            offset = model.tensors[layer.bias] * (bn[0] if bn is not None else 1.0)
        if bn is not None:
            offset = bn[1] if offset is None else offset + bn[1]
        post_ops = 0
        if offset is not None:
            y = y + (offset[:, None, None] if y.ndim == 3 else offset)
            post_ops = y.size
        record = replace(
            record,
            layer=i,
            name=layer.name,
            energy_j=record.energy_j + post_ops * electronic.op_energy,
            latency_s=record.latency_s + post_ops * electronic.op_latency,
        )
        records.append(record)
        x = y

    report = SimReport(
        model.name,
        cfg,
        tuple(records),
        device=_device_dict(dev),
        quant=asdict(quant),
    )
    return report, x


def _device_dict(dev: DeviceParams) -> dict:
    return {k: (asdict(v) if hasattr(v, "latency") else v) for k, v in dev.__dict__.items()}


def quantization_error_bound(masked: MaskedModel | ModelIR, x, quant: QuantSpec | None = None) -> np.ndarray:
    """Per-element upper bound on ``|simulate - reference_forward|`` from DAC quantization.

    For each photonic layer with input ``x`` (carrying propagated error ``e``),
    weight ``w``, batch-norm scale ``s`` and quantization half-steps ``ew``,
    ``ex``, each lit product obeys

        |q(w) q(x~) - w x| <= ew (|x| + e + ex) [w != 0] + |w| (ex + e)

    and the row bound is ``|s|`` times the sum of these terms. ReLU and
    max-pool are 1-Lipschitz; a stand-alone batch norm scales the error by
    ``|s|``. The activation range used by the simulator is bounded by
    ``max|x| + max e``.
    """
    masked = masked if isinstance(masked, MaskedModel) else MaskedModel(masked)
    quant = quant or QuantSpec()
    model = masked.effective_model()
    x = check_input(model, x)
    e = np.zeros_like(x)
    folded = set()
    for i, layer in enumerate(model.layers):
        if i in folded:
            continue
        if layer.kind is LayerKind.RELU:
            x = apply_layer(model, i, x)
        elif layer.kind is LayerKind.POOL:
            x = apply_layer(model, i, x)
            e = max_pool(e, layer.window, layer.stride)
        elif layer.kind is LayerKind.BN:
            e = e * np.abs(model.tensors[layer.scale]).reshape((-1,) + (1,) * (e.ndim - 1))
            x = apply_layer(model, i, x)
        else:
            w = model.weight(i)
            bits_w = _weight_bits(masked, i, quant)
            ew = 0.0 if quant.exact_mode else quantization_step_bound(bits_w, float(np.max(np.abs(w))) or 1.0)
            xrange = float(np.max(np.abs(x))) + float(np.max(e))
            ex = 0.0 if quant.exact_mode or xrange == 0.0 else quantization_step_bound(quant.activation_bits, xrange)
            absw, nzw = np.abs(w), (w != 0.0).astype(np.float64)
            bn = _folded_bn(model, i)
            if layer.kind is LayerKind.CONV:
                bound = conv2d(e + ex, absw, layer.stride, layer.padding)
                bound += ew * conv2d(np.abs(x) + e + ex, nzw, layer.stride, layer.padding)
            else:
                bound = absw @ (e.reshape(-1) + ex) + ew * (nzw @ (np.abs(x).reshape(-1) + e.reshape(-1) + ex))
            if bn is not None:
                folded.add(i + 1)
                scale = np.abs(bn[0])
                bound = bound * (scale[:, None, None] if bound.ndim == 3 else scale)
            # advance the reference through the layer and its folded batch norm
            x = apply_layer(model, i, x)
            if bn is not None:
                x = batch_norm(x, bn[0], bn[1])
            e = bound
    return e


def simulate_reference_gap(masked, x, **kwargs) -> float:
    """Relative L-infinity distance between the simulator and the reference pass."""
    model = masked.effective_model() if isinstance(masked, MaskedModel) else masked
    ref = reference_forward(model, x)
    _, out = simulate(masked, x, **kwargs)
    scale = max(float(np.max(np.abs(ref))), 1e-300)
    return float(np.max(np.abs(out - ref))) / scale


def compression_report(masked: MaskedModel | ModelIR, x) -> list:
    """Per photonic layer: lanes before/after zero elimination and residual zeros,
    for the activations produced by the reference pass on ``x``."""
    masked = masked if isinstance(masked, MaskedModel) else MaskedModel(masked)
    model = masked.effective_model()
    x = check_input(model, x)
    stats = []
    for i, layer in enumerate(model.layers):
        if layer.kind.parameterized:
            work, _, full_length, _ = _layer_work(model, i, x, model.weight(i), None)
            stats.append(compression_stats(i, layer.name, layer.kind.value, work, full_length))
        x = apply_layer(model, i, x)
    return stats
