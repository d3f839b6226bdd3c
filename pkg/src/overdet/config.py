"""Scenario files: INI sections with key = value entries.

Sections
--------
[run]          command, expect, seed, samples, searches
[equation]     name, operator parameters; sphere / anisotropy ids with dotted parameters
[family]       base (closed-form id or expr), kind, box, t_range, parameters of the base
[candidate]    source = closed-form | grid | solve | quadratic-differential
[domain]       implicit domain for solve: name (closed-form id), bbox, parameters
[solve]        data (closed-form id), h, tol, max_iter, continuation, initial
[neumann]      source = candidate | family | constant | file
[tolerances]   pde, dirichlet, neumann, canonicality, tangent, umbilic
[output]       dir
[render]       linefield, curve, report, title

Dotted keys (``data.eps = 0.02``) pass parameters to the named object.
Relative file paths are resolved against the scenario file's directory.
"""
from __future__ import annotations

import configparser
import os
import re

from .errors import ConfigError

SECTIONS = ("run", "equation", "family", "candidate", "domain", "solve", "neumann", "tolerances", "output", "render")


def _value(text):
    t = text.strip()
    if re.fullmatch(r"[+-]?(\d+)", t):
        return int(t)
    try:
        return float(t)
    except ValueError:
        pass
    if t.lower() in ("true", "yes", "on"):
        return True
    if t.lower() in ("false", "no", "off"):
        return False
    return t


def parse_floats(text, n=None, key=""):
    try:
        vals = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers for {key!r}, got {text!r}", key=key) from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} numbers for {key!r}, got {len(vals)}", key=key)
    return vals


class Scenario:
    """Parsed scenario with typed access to sections."""

    def __init__(self, sections, path=None, lines=None):
        self.sections = sections
        self.path = path
        self.base_dir = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()
        self._lines = lines or {}

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        return cls.parse(text, path)

    @classmethod
    def parse(cls, text, path=None):
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text, source=path or "<scenario>")
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(f"malformed scenario: {exc.message if hasattr(exc, 'message') else exc}",
                              line=line) from exc
        lines = {}
        current = None
        for no, raw in enumerate(text.splitlines(), 1):
            m = re.match(r"\s*\[([^\]]+)\]", raw)
            if m:
                current = m.group(1).strip()
                lines[(current, None)] = no
                continue
            m = re.match(r"\s*([^=#;\s][^=]*?)\s*=", raw)
            if m and current:
                lines[(current, m.group(1))] = no
        sections = {}
        for name in cp.sections():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]; known: {', '.join(SECTIONS)}",
                                  key=name, line=lines.get((name, None)))
            sections[name] = {k: _value(v) for k, v in cp.items(name)}
        return cls(sections, path, lines)

    def section(self, name):
        return dict(self.sections.get(name, {}))

    def has(self, name):
        return name in self.sections

    def line(self, section, key=None):
        return self._lines.get((section, key))

    def require(self, section, key):
        sec = self.sections.get(section, {})
        if key not in sec:
            raise ConfigError(f"missing key {key!r} in [{section}]", key=f"{section}.{key}",
                              line=self.line(section))
        return sec[key]

    def error(self, section, key, message):
        return ConfigError(message, key=f"{section}.{key}", line=self.line(section, key))

    def resolve(self, p):
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)


def split_params(sec, reserved=()):
    """Plain keys (not reserved, not dotted) and dotted groups {prefix: {key: value}}."""
    plain, groups = {}, {}
    for k, v in sec.items():
        if k in reserved:
            continue
        if "." in k:
            head, tail = k.split(".", 1)
            groups.setdefault(head, {})[tail] = v
        else:
            plain[k] = v
    return plain, groups
