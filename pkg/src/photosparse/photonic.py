"""Functional and energy/latency model of one vector-dot-product unit (VDU).

A pass through a VDU: DACs drive a VCSEL per lane (dense operand) and an MR
per lane (sparse operand), the broadband MR applies the batch-norm scale, a
photodetector sums all wavelengths and an ADC digitises the result. Lanes
whose sparse operand is zero, and padding lanes, are power gated: neither
their VCSEL nor their DACs are driven.

Units are SI throughout (seconds, watts, joules).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import LayerKind

LOW_RES_DAC_BITS = 6


@dataclass(frozen=True)
class Device:
    latency: float  # s
    power: float  # W (per nm for EO tuning, per FSR for TO tuning)

    def __post_init__(self):
        if not (self.latency > 0 and self.power > 0):
            raise ValueError(f"device latency and power must be positive, got {self}")

    @property
    def energy(self) -> float:
        return self.power * self.latency


@dataclass(frozen=True)
class DeviceParams:
    """Device latencies and powers; defaults are the published device figures."""

    eo_tuning: Device = field(default_factory=lambda: Device(20e-9, 4e-6))
    to_tuning: Device = field(default_factory=lambda: Device(4e-6, 27.5e-3))
    vcsel: Device = field(default_factory=lambda: Device(0.07e-9, 1.3e-3))
    photodetector: Device = field(default_factory=lambda: Device(5.8e-12, 2.8e-3))
    dac16: Device = field(default_factory=lambda: Device(0.33e-9, 40e-3))
    dac6: Device = field(default_factory=lambda: Device(0.25e-9, 3e-3))
    adc16: Device = field(default_factory=lambda: Device(14e-9, 62e-3))
    to_power_scale: float = 1.0  # collective-tuning saving on TO power, in (0, 1]
    eo_shift_nm: float = 1.0  # assumed mean resonance shift per EO tuning event
    adc_bits: int = 16

    def __post_init__(self):
        if not 0.0 < self.to_power_scale <= 1.0:
            raise ValueError("to_power_scale must lie in (0, 1]")
        if not self.eo_shift_nm > 0:
            raise ValueError("eo_shift_nm must be positive")

    @property
    def eo_event_energy(self) -> float:
        return self.eo_tuning.power * self.eo_shift_nm * self.eo_tuning.latency

    def dac(self, bits: int) -> Device:
        return self.dac6 if bits <= LOW_RES_DAC_BITS else self.dac16

    def to_calibration_energy(self, banks: int) -> float:
        """Thermo-optic bias of ``banks`` MR banks, one FSR each, once per layer."""
        return banks * self.to_tuning.power * self.to_power_scale * self.to_tuning.latency


@dataclass(frozen=True)
class QuantSpec:
    weight_bits: int = LOW_RES_DAC_BITS
    activation_bits: int = 16
    exact_mode: bool = False

    def __post_init__(self):
        if self.weight_bits < 1 or self.activation_bits < 1:
            raise ValueError("bit widths must be positive")

    def side_bits(self, kind: LayerKind) -> tuple[int, int]:
        """(dense-side bits, sparse-side bits). CONV drives weights densely, FC activations."""
        if kind is LayerKind.CONV:
            return self.weight_bits, self.activation_bits
        return self.activation_bits, self.weight_bits


@dataclass(frozen=True)
class VduPassResult:
    value: float
    energy: float
    latency: float
    vcsels_gated: int


def _quant_step(bits: int, max_abs: float) -> float:
    return 2.0 * max_abs / (2**bits - 1)


def quantize(value: float, bits: int, max_abs: float, exact: bool = False) -> float:
    """Symmetric mid-rise quantizer with ``2**bits`` levels spanning ``[-max_abs, max_abs]``.

    Levels sit at odd multiples of half a step, so both endpoints are
    representable; values on a decision boundary round away from zero.
    Zero maps to zero (a zero operand is never driven).
    """
    if bits < 1 or not max_abs > 0:
        raise ValueError("need bits >= 1 and max_abs > 0")
    if exact or value == 0.0:
        return value
    step = _quant_step(bits, max_abs)
    top = 2 ** (bits - 1) - 1
    idx = min(math.floor(abs(value) / step), top)
    return math.copysign((idx + 0.5) * step, value)


def quantize_array(values: np.ndarray, bits: int, max_abs: float, exact: bool = False) -> np.ndarray:
    """Vectorised :func:`quantize`."""
    values = np.asarray(values, dtype=np.float64)
    if exact:
        return values
    if bits < 1 or not max_abs > 0:
        raise ValueError("need bits >= 1 and max_abs > 0")
    step = _quant_step(bits, max_abs)
    idx = np.minimum(np.floor(np.abs(values) / step), 2 ** (bits - 1) - 1)
    return np.where(values == 0.0, 0.0, np.copysign((idx + 0.5) * step, values))


def quantization_step_bound(bits: int, max_abs: float) -> float:
    """Largest ``|quantize(v) - v|`` over ``|v| <= max_abs``."""
    return max_abs / (2**bits - 1)


def per_pass_latency(dev: DeviceParams, quant: QuantSpec, kind: LayerKind) -> float:
    """Serial datapath: dense DAC, EO tuning, VCSEL, photodetector, ADC."""
    dense_bits, _ = quant.side_bits(kind)
    return (
        dev.dac(dense_bits).latency
        + dev.eo_tuning.latency
        + dev.vcsel.latency
        + dev.photodetector.latency
        + dev.adc16.latency
    )


def lane_energy(dev: DeviceParams, quant: QuantSpec, kind: LayerKind) -> float:
    """Energy of one active lane: both DACs, the VCSEL and the lane's EO tuning event."""
    dense_bits, sparse_bits = quant.side_bits(kind)
    return dev.dac(dense_bits).energy + dev.vcsel.energy + dev.dac(sparse_bits).energy + dev.eo_event_energy


def pass_overhead_energy(dev: DeviceParams) -> float:
    """Energy every pass pays regardless of gating: photodetector and ADC."""
    return dev.photodetector.energy + dev.adc16.energy


def vdu_pass(
    dense_chunk,
    sparse_chunk,
    bn_scale: float,
    quant: QuantSpec,
    dev: DeviceParams,
    layer_kind: LayerKind,
    *,
    valid=None,
    dense_max: float | None = None,
    sparse_max: float | None = None,
) -> VduPassResult:
    """Evaluate one pass lane by lane.

    ``valid`` flags real lanes (False for padding). ``dense_max``/``sparse_max``
    are the layer-wide quantization ranges; they default to the chunk maxima.
    The broadband batch-norm MR costs one EO tuning event when any lane is lit.
    """
    dense = [float(v) for v in dense_chunk]
    sparse = [float(v) for v in sparse_chunk]
    if len(dense) != len(sparse):
        raise ValueError(f"chunk length mismatch: {len(dense)} dense vs {len(sparse)} sparse")
    valid = [True] * len(dense) if valid is None else [bool(v) for v in valid]
    dense_bits, sparse_bits = quant.side_bits(layer_kind)
    dmax = dense_max if dense_max is not None else max((abs(v) for v in dense), default=0.0)
    smax = sparse_max if sparse_max is not None else max((abs(v) for v in sparse), default=0.0)
    per_lane = lane_energy(dev, quant, layer_kind)

    acc, energy, gated, lit = 0.0, 0.0, 0, False
    for d, s, ok in zip(dense, sparse, valid):
        if not ok or s == 0.0:
            gated += 1
            continue
        qd = quantize(d, dense_bits, dmax, quant.exact_mode) if dmax > 0 else d
        qs = quantize(s, sparse_bits, smax, quant.exact_mode) if smax > 0 else s
        acc += qd * qs
        energy += per_lane
        lit = True
    if lit:
        energy += dev.eo_event_energy
    energy += pass_overhead_energy(dev)
    return VduPassResult(bn_scale * acc, energy, per_pass_latency(dev, quant, layer_kind), gated)
