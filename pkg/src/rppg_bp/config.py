"""Run configuration: one JSON document holding every tunable, defaults at the published constants."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass


@dataclass
class FilterSection:
    order: int = 2
    f_lo: float = 0.7
    f_hi: float = 16.0
    zero_phase: bool = True


@dataclass
class PeakSection:
    min_height: float = 0.7
    min_distance: int = 20


@dataclass
class ScreeningSection:
    min_peaks: int = 50
    sqi_threshold: float = 0.8
    window_beats: int = 5
    max_windows: int = 20
    pad_length: int = 512
    sqi_screen: bool = True


@dataclass
class ModelSection:
    variant: str = "Hybrid"
    head: str = "Regression2"
    conv_kernels: list = field(default_factory=lambda: [7, 5, 3, 3, 3])
    conv_channels: list = field(default_factory=lambda: [16, 32, 64, 128, 128])
    vit_heads: int = 8
    vit_ff_dim: int = 512
    vit_depth: int = 2
    ppg_embed_dim: int = 128
    baseline_hidden: list = field(default_factory=lambda: [64])
    baseline_out: int = 64
    head_hidden: int = 64


@dataclass
class TrainSection:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    train_fraction: float = 0.8
    windows_per_session: int = 20
    select_best: bool = True


@dataclass
class SynthSection:
    n_sessions: int = 300
    duration_s: float = 120.0
    fs: float = 60.0
    white_sd: float = 0.02
    wander_amp: float = 0.05
    rhythms: list = field(default_factory=lambda: ["NSR"])
    sessions_per_subject: int = 2


@dataclass
class RunConfig:
    seed: int = 0
    sbp_threshold: float = 130.0
    filter: FilterSection = field(default_factory=FilterSection)
    peaks: PeakSection = field(default_factory=PeakSection)
    screening: ScreeningSection = field(default_factory=ScreeningSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    synth: SynthSection = field(default_factory=SynthSection)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        return _build(cls, doc, "")

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        doc = {}
        if path is not None:
            with open(path) as fh:
                doc = json.load(fh)
        cfg = cls.from_dict(doc)
        for item in overrides:
            cfg.set(item)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """Reject values the downstream constructors would refuse, before any work starts."""
        from .neural.model import ModelConfig
        from .synth import Rhythm

        m = asdict(self.model)
        ModelConfig(**m)
        for r in self.synth.rhythms:
            Rhythm(r)
        if not 0 < self.filter.f_lo < self.filter.f_hi:
            raise ValueError("filter cutoffs must satisfy 0 < f_lo < f_hi")
        if not 0 < self.train.train_fraction < 1:
            raise ValueError("train.train_fraction must lie in (0, 1)")
        for name in ("min_peaks", "window_beats", "max_windows", "pad_length"):
            if int(getattr(self.screening, name)) < 1:
                raise ValueError(f"screening.{name} must be positive")

    def set(self, assignment: str) -> None:
        """Apply one ``dotted.key=value`` override; the value is parsed as JSON when possible."""
        key, sep, raw = assignment.partition("=")
        if not sep:
            raise ValueError(f"override {assignment!r} is not key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        *path, leaf = key.strip().split(".")
        target = self
        for part in path:
            if not is_dataclass(target) or part not in {f.name for f in fields(target)}:
                raise ValueError(f"unknown config key {key!r}")
            target = getattr(target, part)
        if not is_dataclass(target) or leaf not in {f.name for f in fields(target)}:
            raise ValueError(f"unknown config key {key!r}")
        if is_dataclass(getattr(target, leaf)):
            raise ValueError(f"{key!r} is a section, not a value")
        setattr(target, leaf, value)


def _build(cls, doc: dict, prefix: str):
    if not isinstance(doc, dict):
        raise ValueError(f"config section {prefix or '<root>'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in doc.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{prefix}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)
