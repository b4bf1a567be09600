"""Pipeline configuration: one INI file, flag overrides win over file values.

Every command logs the resolved configuration with the origin of each value
(default, file, or flag) so reports are reproducible from their own text.
"""

import configparser
import dataclasses
from dataclasses import dataclass

from .errors import BadConfig, MissingFile

SECTION = "pipeline"


@dataclass
class PipelineConfig:
    data_root: str = "data"
    work_dir: str = "work"
    fps: float = 5.0
    crop_size: int = 224
    window_length: int = 16
    window_stride: int = 1
    learning_rate: float = 0.0001
    batch_size: int = 16
    fusion_epochs: int = 10
    temporal_epochs: int = 40
    channel_scale: int = 1
    output_dim: int = 1
    seed: int = 0
    workers: int = 1

    def validate(self):
        if self.fps <= 0:
            raise BadConfig("fps must be positive")
        if self.crop_size < 8:
            raise BadConfig("crop_size must be >= 8")
        if self.window_length < 1 or self.window_stride < 1:
            raise BadConfig("window_length and window_stride must be >= 1")
        if self.learning_rate <= 0:
            raise BadConfig("learning_rate must be positive")
        if self.batch_size < 1:
            raise BadConfig("batch_size must be >= 1")
        if self.fusion_epochs < 0 or self.temporal_epochs < 0:
            raise BadConfig("epoch counts must be >= 0")
        if self.channel_scale < 1:
            raise BadConfig("channel_scale must be >= 1")
        if self.output_dim not in (1, 2):
            raise BadConfig("output_dim must be 1 or 2")
        if self.workers < 1:
            raise BadConfig("workers must be >= 1")
        return self


def _parse_value(name, text, target_type):
    try:
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
        return text
    except ValueError:
        raise BadConfig(f"config key {name}: cannot parse {text!r} "
                        f"as {target_type.__name__}") from None


def load_config(path=None):
    """Read an INI file into (PipelineConfig, per-key source map)."""
    cfg = PipelineConfig()
    sources = {f.name: "default" for f in dataclasses.fields(PipelineConfig)}
    if path is None:
        return cfg, sources
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise MissingFile(f"config file not found: {path}")
    if not parser.has_section(SECTION):
        raise BadConfig(f"config file must have a [{SECTION}] section")
    types = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    kinds = {"str": str, "float": float, "int": int}
    for name, text in parser.items(SECTION):
        if name not in types:
            raise BadConfig(f"unknown config key: {name}")
        kind = kinds[types[name]] if isinstance(types[name], str) else types[name]
        setattr(cfg, name, _parse_value(name, text, kind))
        sources[name] = "file"
    return cfg, sources


def apply_overrides(cfg, sources, overrides):
    """Apply flag overrides (a name -> value mapping, None entries skipped)."""
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    for name, value in overrides.items():
        if value is None:
            continue
        if name not in names:
            raise BadConfig(f"unknown override: {name}")
        setattr(cfg, name, value)
        sources[name] = "flag"
    return cfg


def resolved_text(cfg, sources):
    """The config verbatim, one `key = value  # origin` line per field."""
    lines = ["[resolved config]"]
    for f in dataclasses.fields(PipelineConfig):
        lines.append(f"{f.name} = {getattr(cfg, f.name)}  # {sources[f.name]}")
    return "\n".join(lines)
