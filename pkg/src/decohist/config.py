"""Run configuration: a sectioned key = value document with strict validation.

The format is deliberately small: `[section]` headers, `key = value`
lines, `#` comments.  Unknown sections or keys are errors (with line
numbers), every unset key takes a documented default, and the effective
configuration can be echoed back in a form that parses to the same
RunConfig.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError

# defaults follow the production instance: p=1.7, tau=1, beta=0.1 top,
# eps=1, hop=0.2, h=0.05 chain, horizon T=500
_SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "top": {
        "j": (float, 20.0),
        "K": (float, 3.0),
        "p": (float, 1.7),
        "tau": (float, 1.0),
        "beta": (float, 0.1),
    },
    "bath": {
        "eps": (float, 1.0),
        "hop": (float, 0.2),
        "h_sys": (float, 0.05),
        "M": (int, 0),          # 0 = derive from hop and horizon
    },
    "run": {
        "T": (float, 500.0),
        "dt": (float, 0.25),
        "grid_dt": (float, 0.25),
        "a_cut": (float, 1e-4),
        "n_max": (int, 7),
        "seed": (int, 0),
        "n_traj": (int, 100),
        "sample_dt": (float, 5.0),
        "k_sweep": (list, [-10.0, -5.0, 0.0, 1.0, 2.0, 2.5, 3.0, 4.0, 5.0, 10.0]),
    },
    "output": {
        "outdir": (str, "out"),
        "formats": (str, "csv"),
    },
}

_CONSTRAINTS = {
    ("top", "j"): lambda v: v > 0 and abs(2 * v - round(2 * v)) < 1e-9,
    ("top", "tau"): lambda v: v > 0,
    ("bath", "hop"): lambda v: v >= 0,
    ("bath", "M"): lambda v: v >= 0,
    ("run", "T"): lambda v: v > 0,
    ("run", "dt"): lambda v: v > 0,
    ("run", "grid_dt"): lambda v: v > 0,
    ("run", "a_cut"): lambda v: v > 0,
    ("run", "n_max"): lambda v: v >= 1,
    ("run", "n_traj"): lambda v: v >= 1,
    ("run", "sample_dt"): lambda v: v > 0,
    ("run", "seed"): lambda v: v >= 0,
}


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters for a full run, grouped by section."""

    top: dict = field(default_factory=dict)
    bath: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return getattr(self, name)


def _defaults() -> dict[str, dict]:
    return {sec: {k: (list(d) if isinstance(d, list) else d)
                  for k, (_, d) in keys.items()}
            for sec, keys in _SCHEMA.items()}


def _convert(section: str, key: str, raw: str, lineno: int):
    typ, _ = _SCHEMA[section][key]
    try:
        if typ is list:
            return [float(x) for x in raw.replace(",", " ").split()]
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"line {lineno}: {section}.{key} expects {typ.__name__}, got {raw!r}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document.

    Every diagnostic names the offending key path and line number.
    """
    values = _defaults()
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {section}.{key}")
        val = _convert(section, key, raw, lineno)
        check = _CONSTRAINTS.get((section, key))
        if check is not None and not check(val):
            raise ConfigError(
                f"line {lineno}: {section}.{key} = {val} violates its constraint")
        values[section][key] = val
    cfg = RunConfig(**values)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: RunConfig) -> None:
    run = cfg.run
    n = run["T"] / run["grid_dt"]
    if abs(n - round(n)) > 1e-9:
        raise ConfigError("run.T must be a multiple of run.grid_dt")


def default_config() -> RunConfig:
    return parse_config("")


def echo_config(cfg: RunConfig) -> str:
    """Render a RunConfig to text that parses back to the same config."""
    lines = []
    for sec in _SCHEMA:
        lines.append(f"[{sec}]")
        for key in _SCHEMA[sec]:
            v = cfg.section(sec)[key]
            if isinstance(v, list):
                v = " ".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{key} = {v}")
        lines.append("")
    return "\n".join(lines)
