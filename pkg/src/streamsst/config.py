"""Harness configuration: one JSON file plus command-line overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .corpus import CorpusParams
from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .generation import GenerationConstraints
from .session import CostModel

MAX_MULTIPLIER = 12


@dataclass
class HarnessConfig:
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    constraints: GenerationConstraints = field(default_factory=lambda: GenerationConstraints(beam_width=1))
    cost: CostModel = field(default_factory=CostModel)
    corpus: CorpusParams = field(default_factory=CorpusParams)
    m: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    w_s: list[int] = field(default_factory=lambda: [10])
    w_t: list[int] = field(default_factory=lambda: [1000])
    manifest: str | None = None
    out_dir: str = "runs"
    ca_mode: str = "simulated"
    weighting: str = "unweighted"
    max_multiplier: int = MAX_MULTIPLIER  # M, for trajectory augmentation

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.m or any(not 1 <= m <= MAX_MULTIPLIER for m in self.m):
            raise ConfigError(f"m values must lie in [1, {MAX_MULTIPLIER}], got {self.m}")
        if not 1 <= self.max_multiplier <= MAX_MULTIPLIER:
            raise ConfigError(f"max_multiplier must lie in [1, {MAX_MULTIPLIER}]")
        if not self.w_s or any(w < 1 for w in self.w_s):
            raise ConfigError("w_s values must be >= 1")
        if not self.w_t or any(w < 1 for w in self.w_t):
            raise ConfigError("w_t values must be >= 1")
        if self.ca_mode not in ("simulated", "wallclock"):
            raise ConfigError(f"ca_mode must be simulated or wallclock, got {self.ca_mode!r}")
        if self.weighting not in ("unweighted", "duration"):
            raise ConfigError(f"weighting must be unweighted or duration, got {self.weighting!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "HarnessConfig":
        nested = {"encoder": EncoderConfig, "decoder": DecoderConfig,
                  "constraints": GenerationConstraints, "cost": CostModel, "corpus": CorpusParams}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key in nested:
                sub = nested[key]
                sub_known = {f.name for f in fields(sub)}
                bad = set(value) - sub_known
                if bad:
                    raise ConfigError(f"unknown {key} keys: {sorted(bad)}")
                base = cls.__dataclass_fields__[key].default_factory()
                merged = {**asdict(base), **value}
                kwargs[key] = sub(**merged)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "HarnessConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)
