import pytest

from photosparse.config import RunConfig, device_as_config, parse_config
from photosparse.errors import ConfigError
from photosparse.photonic import DeviceParams
from photosparse.scheduler import VduConfig


def test_defaults():
    cfg = RunConfig()
    assert cfg.arch() == VduConfig(5, 50, 50, 10)
    assert cfg.device() == DeviceParams()
    assert cfg.quant().weight_bits == 6 and not cfg.quant().exact_mode
    assert cfg.quant(exact_mode=True).exact_mode


def test_parse_sections_comments_and_literals():
    text = """
    # comment
    clusters = 64
    [arch]
    n = 6          # trailing comment
    N = 60
    [explore]
    sparsity = [0.3, 0.5, 0.7]
    clusters = [none, 16]
    arch = [(5, 50, 50, 10)]
    [quant]
    exact_mode = true
    """
    cfg = RunConfig.from_text(text)
    assert cfg.arch() == VduConfig(6, 50, 60, 10)
    assert cfg.get("explore.sparsity") == [0.3, 0.5, 0.7]
    assert cfg.get("explore.clusters") == [None, 16]
    assert cfg.get("clusters") == 64
    assert cfg.quant().exact_mode


def test_device_overrides_with_units():
    cfg = RunConfig.from_text("device.vcsel.power_mw = 2.6\ndevice.adc16.latency_ns = 7\ndevice.to_power_scale = 0.25")
    dev = cfg.device()
    assert dev.vcsel.power == pytest.approx(2.6e-3)
    assert dev.adc16.latency == pytest.approx(7e-9)
    assert dev.to_power_scale == 0.25
    again = RunConfig.from_text(device_as_config(dev)).device()
    assert again.vcsel.power == pytest.approx(dev.vcsel.power) and again.adc16.latency == pytest.approx(dev.adc16.latency)


def test_sparsity_targets():
    cfg = RunConfig.from_text("layer.0.sparsity = 0.5\nlayer.3.sparsity = 0.25\nprune.sparsity = 0.1")
    assert cfg.sparsity_targets() == {0: 0.5, 3: 0.25, -1: 0.1}


@pytest.mark.parametrize("text,fragment", [
    ("arch.q = 3", "arch.q"),
    ("device.laser.power_mw = 1", "laser"),
    ("device.vcsel.colour = 1", "device.vcsel.colour"),
    ("clusters = 'many'", "clusters"),
    ("arch.n = true", "arch.n"),
    ("arch.n = [1", "cannot parse"),
    ("just words", "expected"),
])
def test_errors_name_the_problem(text, fragment):
    with pytest.raises(ConfigError, match=fragment.replace(".", r"\.").replace("[", r"\[")):
        parse_config(text, "x.cfg")


def test_invalid_values_become_config_errors():
    with pytest.raises(ConfigError):
        RunConfig.from_text("arch.n = 0").arch()
    with pytest.raises(ConfigError):
        RunConfig.from_text("device.to_power_scale = 2.0").device()
    with pytest.raises(ConfigError):
        RunConfig.load("/nonexistent/run.cfg")
