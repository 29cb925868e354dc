"""Run configuration: flat ``dotted.key = value`` text.

Blank lines and ``#`` comments are ignored. A ``[section]`` line prefixes the
keys that follow it. Values are Python/TOML-style literals: numbers, quoted
strings, ``true``/``false``, lists and tuples. Unknown keys are rejected.

Example::

    arch.n = 5
    device.vcsel.power_mw = 1.3
    layer.0.sparsity = 0.5
    clusters = 64
    explore.sparsity = [0.3, 0.5, 0.7]
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .photonic import Device, DeviceParams, QuantSpec
from .scheduler import ElectronicCosts, VduConfig

DEVICES = ("eo_tuning", "to_tuning", "vcsel", "photodetector", "dac16", "dac6", "adc16")
LATENCY_UNITS = {"latency_s": 1.0, "latency_us": 1e-6, "latency_ns": 1e-9, "latency_ps": 1e-12}
POWER_UNITS = {"power_w": 1.0, "power_mw": 1e-3, "power_uw": 1e-6, "power_uw_per_nm": 1e-6, "power_mw_per_fsr": 1e-3}

_SCALAR_KEYS = {
    "arch.n": int, "arch.m": int, "arch.N": int, "arch.K": int,
    "device.to_power_scale": float, "device.eo_shift_nm": float,
    "clusters": int,
    "prune.sparsity": float,
    "quant.weight_bits": int, "quant.activation_bits": int, "quant.exact_mode": bool,
    "explore.sparsity": list, "explore.clusters": list, "explore.layers": list, "explore.arch": list,
    "explore.objective": str, "explore.samples": int, "explore.seed": int,
    "electronic.op_latency_ns": float, "electronic.op_energy_pj": float,
    "io.model": str, "io.out": str, "io.input": str, "io.seed": int,
    "output.format": str,
}
_DEVICE_KEY = re.compile(r"device\.(\w+)\.(\w+)$")
_LAYER_KEY = re.compile(r"layer\.(\d+)\.sparsity$")


def _literal(text: str, where: str):
    text = text.strip()
    lowered = {"true": "True", "false": "False", "none": "None", "null": "None"}
    text = re.sub(r"\b(true|false|none|null)\b", lambda m: lowered[m.group(1)], text)
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        raise ConfigError(f"{where}: cannot parse value {text!r}") from None


def _check(key: str, value, where: str):
    if key in _SCALAR_KEYS:
        want = _SCALAR_KEYS[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if want is list and isinstance(value, tuple):
            value = list(value)
        if not isinstance(value, want) or (want in (int, float) and isinstance(value, bool)):
            raise ConfigError(f"{where}: key {key!r} expects {want.__name__}, got {value!r}")
        return value
    m = _DEVICE_KEY.match(key)
    if m:
        dev, attr = m.groups()
        if dev not in DEVICES:
            raise ConfigError(f"{where}: unknown key {key!r} (no device named {dev!r})")
        if attr not in LATENCY_UNITS and attr not in POWER_UNITS:
            raise ConfigError(f"{where}: unknown key {key!r}")
    elif not _LAYER_KEY.match(key):
        raise ConfigError(f"{where}: unknown key {key!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: key {key!r} expects a number, got {value!r}")
    return float(value)


def parse_config(text: str, source: str = "<config>") -> dict:
    values, section = {}, ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        where = f"{source}:{lineno}"
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = f"{section}.{key}" if section else key
        values[key] = _check(key, _literal(value, where), where)
    return values


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(parse_config(text, str(path)))

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(parse_config(text))

    def set(self, key: str, value) -> None:
        self.values[key] = _check(key, value, "override")

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def device(self) -> DeviceParams:
        dev = DeviceParams()
        changes = {}
        for key, value in self.values.items():
            m = _DEVICE_KEY.match(key)
            if not m:
                continue
            name, attr = m.groups()
            current = changes.get(name, getattr(dev, name))
            if attr in LATENCY_UNITS:
                current = replace(current, latency=value * LATENCY_UNITS[attr])
            else:
                current = replace(current, power=value * POWER_UNITS[attr])
            changes[name] = current
        for key in ("to_power_scale", "eo_shift_nm"):
            if f"device.{key}" in self.values:
                changes[key] = self.values[f"device.{key}"]
        try:
            return replace(dev, **changes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def arch(self) -> VduConfig:
        base = VduConfig.__dataclass_fields__
        args = {k: self.values.get(f"arch.{k}", base[k].default) for k in "nmNK"}
        try:
            return VduConfig(**args)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def quant(self, exact_mode: bool | None = None) -> QuantSpec:
        q = QuantSpec(
            weight_bits=self.values.get("quant.weight_bits", 6),
            activation_bits=self.values.get("quant.activation_bits", 16),
            exact_mode=self.values.get("quant.exact_mode", False),
        )
        return replace(q, exact_mode=True) if exact_mode else q

    def electronic(self) -> ElectronicCosts:
        return ElectronicCosts(
            op_latency=self.values.get("electronic.op_latency_ns", 0.0) * 1e-9,
            op_energy=self.values.get("electronic.op_energy_pj", 0.0) * 1e-12,
        )

    def sparsity_targets(self) -> dict[int, float]:
        """Per-layer entries; ``prune.sparsity`` is returned under key -1 when present."""
        targets = {}
        for key, value in self.values.items():
            m = _LAYER_KEY.match(key)
            if m:
                targets[int(m.group(1))] = value
        if "prune.sparsity" in self.values:
            targets[-1] = self.values["prune.sparsity"]
        return targets


def device_as_config(dev: DeviceParams) -> str:
    """Render device parameters back into config lines (ns / mW units)."""
    lines = []
    for name in DEVICES:
        d: Device = getattr(dev, name)
        lines.append(f"device.{name}.latency_ns = {d.latency / 1e-9!r}")
        lines.append(f"device.{name}.power_mw = {d.power / 1e-3!r}")
    lines.append(f"device.to_power_scale = {dev.to_power_scale!r}")
    lines.append(f"device.eo_shift_nm = {dev.eo_shift_nm!r}")
    return "\n".join(lines) + "\n"
