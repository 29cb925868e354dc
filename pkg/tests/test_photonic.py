import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from photosparse.model import LayerKind
from photosparse.photonic import (
    Device, DeviceParams, QuantSpec, lane_energy, pass_overhead_energy, per_pass_latency,
    quantization_step_bound, quantize, quantize_array, vdu_pass,
)

DEV = DeviceParams()


def test_frozen_device_arithmetic():
    # values computed by hand from the device table
    assert lane_energy(DEV, QuantSpec(), LayerKind.FC) == pytest.approx(14.121e-12, rel=1e-12)
    assert lane_energy(DEV, QuantSpec(), LayerKind.CONV) == pytest.approx(14.121e-12, rel=1e-12)
    assert lane_energy(DEV, QuantSpec(weight_bits=16), LayerKind.FC) == pytest.approx(26.571e-12, rel=1e-12)
    assert pass_overhead_energy(DEV) == pytest.approx(8.6801624e-10, rel=1e-12)
    assert DEV.eo_event_energy == pytest.approx(0.08e-12, rel=1e-12)
    assert DEV.to_calibration_energy(3) == pytest.approx(3.3e-7, rel=1e-12)
    assert per_pass_latency(DEV, QuantSpec(), LayerKind.FC) == pytest.approx(34.4058e-9, abs=1e-15)
    assert per_pass_latency(DEV, QuantSpec(), LayerKind.CONV) == pytest.approx(34.3258e-9, abs=1e-15)


@pytest.mark.parametrize("kind,dense_bits", [(LayerKind.FC, 16), (LayerKind.CONV, 6)])
def test_energy_and_latency_match_oracle(kind, dense_bits):
    q = QuantSpec()
    sparse_bits = q.side_bits(kind)[1]
    assert lane_energy(DEV, q, kind) == pytest.approx(oracles.lane_energy(dense_bits, sparse_bits), rel=1e-12)
    assert per_pass_latency(DEV, q, kind) == pytest.approx(oracles.per_pass_latency(dense_bits), abs=1e-18)


def test_dac_selection_by_resolution():
    assert DEV.dac(1) is DEV.dac6 and DEV.dac(6) is DEV.dac6
    assert DEV.dac(7) is DEV.dac16 and DEV.dac(16) is DEV.dac16


def test_device_validation():
    with pytest.raises(ValueError):
        Device(0.0, 1.0)
    with pytest.raises(ValueError):
        DeviceParams(to_power_scale=0.0)
    with pytest.raises(ValueError):
        QuantSpec(weight_bits=0)


def test_frozen_quantizer_levels():
    # 2 bits over [-3, 3]: step 2, levels +-1, +-3
    assert [quantize(v, 2, 3.0) for v in (0.5, 1.9, 2.0, 3.0, -0.1, 0.0)] == [1.0, 1.0, 3.0, 3.0, -1.0, 0.0]


@given(st.floats(-10, 10, allow_nan=False), st.integers(1, 16), st.floats(0.01, 10))
def test_quantizer_properties(v, bits, max_abs):
    v = max(-max_abs, min(max_abs, v))
    q = quantize(v, bits, max_abs)
    assert abs(q - v) <= quantization_step_bound(bits, max_abs) * (1 + 1e-12)
    assert quantize(-v, bits, max_abs) == -q
    assert abs(q) <= max_abs * (1 + 1e-12)
    assert quantize(v, bits, max_abs, exact=True) == v
    assert quantize_array(np.array([v]), bits, max_abs)[0] == q


@given(st.integers(1, 6), st.floats(0.1, 5))
def test_quantizer_uses_2_pow_bits_levels(bits, max_abs):
    grid = np.linspace(-max_abs, max_abs, 2001)
    levels = np.unique(quantize_array(grid[grid != 0.0], bits, max_abs))
    assert levels.size == 2**bits


def _loop_pass(dense, sparse, valid, quant, kind, dmax, smax):
    db, sb = quant.side_bits(kind)
    acc, energy, lit = 0.0, 0.0, False
    for d, s, ok in zip(dense, sparse, valid):
        if ok and s != 0.0:
            acc += quantize(d, db, dmax) * quantize(s, sb, smax)
            energy += oracles.lane_energy(db, sb)
            lit = True
    energy += (oracles.EO[0] * oracles.EO[1] if lit else 0.0) + oracles.PD[0] * oracles.PD[1]
    energy += oracles.ADC16[0] * oracles.ADC16[1]
    return acc, energy


@given(st.integers(0, 2**31 - 1), st.integers(1, 12), st.sampled_from([LayerKind.FC, LayerKind.CONV]))
def test_vdu_pass_matches_lane_oracle(seed, width, kind):
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal(width) + 0.1
    sparse = rng.standard_normal(width) * (rng.random(width) < 0.6)
    valid = rng.random(width) < 0.8
    q = QuantSpec()
    res = vdu_pass(dense, sparse, 1.5, q, DEV, kind, valid=valid, dense_max=4.0, sparse_max=4.0)
    acc, energy = _loop_pass(dense, sparse, valid, q, kind, 4.0, 4.0)
    assert res.value == pytest.approx(1.5 * acc, rel=1e-12, abs=1e-15)
    assert res.energy == pytest.approx(energy, rel=1e-12)
    assert res.vcsels_gated == int(np.sum(~valid | (sparse == 0.0)))
    assert res.latency == per_pass_latency(DEV, q, kind)


def test_fully_gated_pass_pays_only_readout():
    res = vdu_pass([1.0, 2.0], [0.0, 0.0], 1.0, QuantSpec(), DEV, LayerKind.FC)
    assert res.value == 0.0 and res.vcsels_gated == 2
    assert res.energy == pytest.approx(pass_overhead_energy(DEV))


def test_exact_pass_is_a_dot_product():
    res = vdu_pass([1.0, -2.0, 3.0], [0.5, 0.25, -1.0], 2.0, QuantSpec(exact_mode=True), DEV, LayerKind.CONV)
    assert res.value == 2.0 * (0.5 - 0.5 - 3.0)


def test_chunk_length_mismatch():
    with pytest.raises(ValueError):
        vdu_pass([1.0], [1.0, 2.0], 1.0, QuantSpec(), DEV, LayerKind.FC)
