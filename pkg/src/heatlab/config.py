"""Flat ``key = value`` configuration files with ``[section]`` headers."""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .field_grid import GridSpec
from .params import ProofParameters

__all__ = ["ConfigError", "LabConfig", "load_config", "parse_config"]

_SECTIONS = {"experiment", "grid", "params", "input", "measure", "qp", "atoms", "tolerances", "output"}
_PARAM_KEYS = {"A": int, "K": int, "p": float, "epsilon": float, "theta1": float, "theta2": float,
               "theta3": float, "theta4": float, "theta5": float, "lambda_override": float,
               "window_radius": int, "Ksat": float}


class ConfigError(ValueError):
    """Invalid configuration; carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)


@dataclass
class LabConfig:
    source: str
    sections: dict
    lines: dict = field(repr=False, default_factory=dict)

    def _line(self, section, key):
        return self.lines.get((section, key))

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})

    def raw(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def get(self, section: str, key: str, kind=str, default=None):
        raw = self.raw(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing key '{key}' in [{section}]", source=self.source)
            return default
        try:
            if kind is bool:
                low = raw.strip().lower()
                if low not in ("1", "0", "yes", "no", "true", "false", "on", "off"):
                    raise ValueError(raw)
                return low in ("1", "yes", "true", "on")
            if kind in (list, "floats"):
                return [float(v) for v in re.split(r"[,\s]+", raw.strip()) if v]
            return kind(raw)
        except ValueError:
            raise ConfigError(f"bad value for '{key}': {raw!r}", self._line(section, key),
                              self.source) from None

    def positive(self, section: str, key: str, default=None) -> float:
        v = self.get(section, key, float, default)
        if not v > 0:
            raise ConfigError(f"'{key}' must be positive", self._line(section, key), self.source)
        return v

    # -- typed views -------------------------------------------------------------
    def grid(self) -> GridSpec:
        try:
            return GridSpec(self.get("grid", "d", int), self.get("grid", "N", int),
                            self.get("grid", "L", float))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), self._line("grid", "N"), self.source) from None

    def params(self, d: int | None = None) -> ProofParameters:
        kw = {}
        for key, kind in _PARAM_KEYS.items():
            if self.has("params", key):
                kw[key] = self.get("params", key, kind)
        if d is None:
            d = self.get("grid", "d", int, 1) if self.has("grid", "d") else 1
        try:
            return ProofParameters(d=d, **kw)
        except ValueError as exc:
            first = next(iter(self.sections.get("params", {})), None)
            line = self._line("params", first) if first else None
            raise ConfigError(str(exc), line, self.source) from None


def _key_lines(text: str) -> dict:
    out, sec = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
        elif sec and "=" in s and not s.startswith(("#", ";")):
            out[(sec, s.split("=", 1)[0].strip())] = n
    return out


def parse_config(text: str, source: str = "<config>") -> LabConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header before any key", exc.lineno, source) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line (expected key = value)", line, source) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1] if hasattr(exc, "message") else str(exc),
                          exc.lineno, source) from None
    lines = _key_lines(text)
    sections = {}
    for name in cp.sections():
        if name not in _SECTIONS:
            n = next((i for i, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{name}]"), None)
            raise ConfigError(f"unknown section [{name}]", n, source)
        sections[name] = dict(cp[name])
    for key in sections.get("params", {}):
        if key not in _PARAM_KEYS:
            raise ConfigError(f"unknown parameter '{key}'", lines.get(("params", key)), source)
    for key, val in sections.get("tolerances", {}).items():
        try:
            ok = float(val) > 0
        except ValueError:
            ok = False
        if not ok:
            raise ConfigError(f"tolerance '{key}' must be a positive number",
                              lines.get(("tolerances", key)), source)
    return LabConfig(source, sections, lines)


def load_config(path) -> LabConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_config(text, str(path))
