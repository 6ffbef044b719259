"""Versioned pipeline configuration shared by every CLI subcommand.

Config files are plain ``key = value`` lines ('#' comments allowed). The
version key is mandatory in files, unknown keys are rejected, and the
precedence is: command-line flag > config file > built-in default. The
effective configuration is echoed into artifact headers wherever the
format permits, so outputs are self-describing.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError

CONFIG_VERSION = "1"


@dataclass(frozen=True)
class PipelineConfig:
    rate: int = 16000
    frame_ms: int = 20
    frames_per_chunk: int = 50
    vad_level: int = 2
    voice_threshold: float | None = None
    silence_dbfs: float = -40.0
    min_voice_ratio: float = 0.10
    max_voice_ratio: float = 1.00
    min_silence_ratio: float = 0.00
    max_silence_ratio: float = 0.90
    max_other_ratio: float = 0.00
    min_span_ms: int = 30000
    span_ms: int = 30000
    lm_order: int = 4
    alpha: float = 0.5
    beta: float = 1.0
    beam_width: int = 32

    @property
    def chunk_ms(self) -> int:
        return self.frame_ms * self.frames_per_chunk

    def echo(self) -> list[str]:
        """Canonical `key=value` lines for artifact headers."""
        out = [f"config_version={CONFIG_VERSION}"]
        for f in sorted(fields(self), key=lambda f: f.name):
            out.append(f"{f.name}={getattr(self, f.name)}")
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    ftype = _FIELD_TYPES[name]
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "float | None":
            return None if raw in ("", "none", "None") else float(raw)
    except ValueError:
        raise ConfigError(f"config key {name}: cannot parse {raw!r}") from None
    return raw


def load_config(path) -> PipelineConfig:
    """Parse a key = value config file; unknown keys are an error."""
    values = {}
    saw_version = False
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if "=" not in s:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {s!r}")
            key, _, raw = s.partition("=")
            key = key.strip()
            if key == "config_version":
                if raw.strip() != CONFIG_VERSION:
                    raise ConfigError(
                        f"{path}: config_version {raw.strip()!r} != {CONFIG_VERSION!r}"
                    )
                saw_version = True
                continue
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = _coerce(key, raw)
    if not saw_version:
        raise ConfigError(f"{path}: missing mandatory config_version key")
    return PipelineConfig(**values)


def merge_overrides(cfg: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Apply non-None override values (command-line flags) on top of cfg."""
    keep = {k: v for k, v in overrides.items() if v is not None}
    bad = set(keep) - set(_FIELD_TYPES)
    if bad:
        raise ConfigError(f"unknown config overrides: {sorted(bad)}")
    return replace(cfg, **keep) if keep else cfg
