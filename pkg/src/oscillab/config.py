"""Experiment configuration in a flat ``key = value`` text format."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    field: str = "PropC1"
    n: int = 2
    p: float = 2.0
    radii: str = "dyadic:4:16"
    kind: str = "osc"
    window: float = 4.0
    spacing: float = 0.5
    quadrature: str = "productPolar"
    points: int = 1024
    seed: int = 0
    modulus: str = ""
    c: str = "1"
    R: float = 2.0
    cells: int = 256
    tol: float = 1e-10
    max_iter: int = 20000
    kmax: int = 6
    radius: float = 1.0
    boundary: str = "solution"
    estimates: str = "est1,est2,est3,hrep"
    c_cap: float = 100.0
    out: str = ""
    plots: bool = True

    @classmethod
    def keys(cls) -> list:
        return [f.name for f in fields(cls)]

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_render(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls().updated(parse_pairs(text))

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc

    def updated(self, values: dict) -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(self)}
        clean = {}
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            clean[key] = _coerce(key, raw, getattr(self, key))
        return replace(self, **clean)

    def digest(self, command: str = "") -> str:
        """Hash of everything that can change the numbers (not ``out`` or ``plots``)."""
        text = replace(self, out="", plots=True).to_text()
        return hashlib.sha256((command + "\n" + text).encode()).hexdigest()[:16]


def parse_pairs(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key, raw, default):
    if not isinstance(raw, str):
        return type(default)(raw) if not isinstance(default, bool) else bool(raw)
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw
