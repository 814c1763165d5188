"""Flat experiment configuration files.

Format: UTF-8 text, one `key = value` per line, `#` comments, optional
`[section]` headers for visual grouping only (keys are global and must be
unique).  No nesting; values are parsed as bool, int, float, or string.
"""

from __future__ import annotations

from .errors import ConfigError


def parse_value(text: str):
    t = text.strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t


def parse_config(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_value(val)
    return out


def render_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_config(cfg: dict, header: str | None = None) -> str:
    lines = []
    if header:
        lines.append(f"# {header}")
    for key in sorted(cfg):
        lines.append(f"{key} = {render_value(cfg[key])}")
    return "\n".join(lines) + "\n"
