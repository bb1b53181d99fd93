"""Session configuration and the plain key=value config file format."""

import types
from dataclasses import dataclass, fields
from pathlib import Path

from .phy import CHANNEL_COUNT, DEFAULT_JAM_TONE_HZ, M_SEQUENCE_TAPS


class ConfigError(ValueError):
    pass


@dataclass
class SessionConfig:
    """Everything a two-node chat simulation needs, seedable end to end."""

    node_a: int = 8
    node_b: int = 1
    seed: int = 0
    start_channel: int = 0
    channel_count: int = CHANNEL_COUNT
    noise_dbm: float | None = None
    jammer_enabled: bool = False
    jam_dwell_s: float = 20.0
    jam_power_dbm: float = 10.0
    jam_tone_hz: float = DEFAULT_JAM_TONE_HZ
    fsk_mark_hz: float = 2400.0
    fsk_space_hz: float = 1200.0
    pn_degree: int = 7
    chars_per_frame: int = 4

    def __post_init__(self):
        for name in ("node_a", "node_b"):
            addr = getattr(self, name)
            if not 1 <= addr <= 63:
                raise ConfigError(f"{name} must be in 1..63, got {addr}")
        if self.node_a == self.node_b:
            raise ConfigError("node_a and node_b must differ")
        if self.channel_count < 2:
            raise ConfigError("need at least 2 channels to divert")
        if not 0 <= self.start_channel < self.channel_count:
            raise ConfigError(f"start_channel outside 0..{self.channel_count - 1}")
        if self.jam_dwell_s <= 0:
            raise ConfigError("jam_dwell_s must be positive")
        if self.pn_degree not in M_SEQUENCE_TAPS:
            raise ConfigError(
                f"pn_degree must be one of {sorted(M_SEQUENCE_TAPS)}")
        if self.chars_per_frame < 1:
            raise ConfigError("chars_per_frame must be at least 1")
        if self.fsk_mark_hz == self.fsk_space_hz:
            raise ConfigError("fsk_mark_hz and fsk_space_hz must differ")


def _coerce(name: str, annotation, raw: str):
    if annotation is bool:
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if annotation is int:
        return int(raw)
    if annotation is float:
        return float(raw)
    if isinstance(annotation, types.UnionType):
        if raw.lower() in ("none", "off"):
            return None
        for member in annotation.__args__:
            if member is not type(None):
                return _coerce(name, member, raw)
    raise ConfigError(f"{name}: unsupported value {raw!r}")


def parse_config_text(text: str) -> SessionConfig:
    """Parse `key = value` lines; `#` starts a comment, blank lines ignored."""
    types_by_name = {f.name: f.type for f in fields(SessionConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in types_by_name:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, types_by_name[key], raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return SessionConfig(**values)


def load_config(path: str | Path) -> SessionConfig:
    return parse_config_text(Path(path).read_text())


def dump_config(cfg: SessionConfig) -> str:
    lines = []
    for f in fields(SessionConfig):
        value = getattr(cfg, f.name)
        if value is None:
            value = "none"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
