"""Deterministic synthetic corpora with a parametric ground-truth energy oracle.

The oracle stands in for the measurement rig: energy grows with pixels x frames,
is scaled per coding standard and preset, and carries multiplicative lognormal
noise that is reproducible per (seed, config, draw index).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .features import (
    Dataset,
    EncodingConfig,
    Preset,
    Sample,
    Standard,
    sample_id,
    validate_config,
)

DEFAULT_RESOLUTIONS = ((480, 270), (640, 360), (1280, 720), (1920, 1080), (3840, 2160))
DEFAULT_QP_GRID = {
    Standard.H264: (22, 27, 32, 37),
    Standard.H265: (22, 27, 32, 37),
    Standard.AV1: (108, 132, 160, 184),
}
ENERGY_DECIMALS = 9


@dataclass(frozen=True)
class CorpusSpec:
    resolutions: tuple = DEFAULT_RESOLUTIONS
    standards: tuple = (Standard.H264, Standard.H265, Standard.AV1)
    presets: tuple = (Preset.ULTRAFAST, Preset.SLOW)
    qp_grid: dict = field(default_factory=lambda: dict(DEFAULT_QP_GRID))
    sequences_per_class: int = 5
    frame_range: tuple = (65, 130)
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "resolutions", tuple(tuple(int(v) for v in r) for r in self.resolutions))
        object.__setattr__(self, "standards", tuple(Standard(s) for s in self.standards))
        object.__setattr__(self, "presets", tuple(Preset(p) for p in self.presets))
        object.__setattr__(
            self, "qp_grid", {Standard(k): tuple(int(q) for q in v) for k, v in self.qp_grid.items()}
        )
        if not (self.resolutions and self.standards and self.presets):
            raise ConfigError("resolutions, standards and presets must be non-empty")
        if self.sequences_per_class < 1:
            raise ConfigError("sequences_per_class must be >= 1")
        lo, hi = self.frame_range
        if not 1 <= lo <= hi <= 10000:
            raise ConfigError(f"frame_range must satisfy 1 <= lo <= hi <= 10000, got {self.frame_range}")
        for std in self.standards:
            grid = self.qp_grid.get(std)
            if not grid:
                raise ConfigError(f"qp_grid has no entries for {std.name}")
            for qp in grid:
                validate_config(EncodingConfig("spec", 1, 1, 1, std, Preset.ULTRAFAST, qp))
        for w, h in self.resolutions:
            validate_config(EncodingConfig("spec", w, h, 1, self.standards[0], Preset.ULTRAFAST,
                                           self.qp_grid[self.standards[0]][0]))

    def to_dict(self) -> dict:
        return {
            "resolutions": [list(r) for r in self.resolutions],
            "standards": [s.name for s in self.standards],
            "presets": [p.label for p in self.presets],
            "qp_grid": {k.name: list(v) for k, v in self.qp_grid.items()},
            "sequences_per_class": self.sequences_per_class,
            "frame_range": list(self.frame_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        kw = dict(d)
        try:
            if "standards" in kw:
                kw["standards"] = tuple(Standard.parse(s) for s in kw["standards"])
            if "presets" in kw:
                kw["presets"] = tuple(Preset.parse(p) for p in kw["presets"])
            if "qp_grid" in kw:
                kw["qp_grid"] = {Standard.parse(k): v for k, v in kw["qp_grid"].items()}
            if "frame_range" in kw:
                kw["frame_range"] = tuple(kw["frame_range"])
            return cls(**kw)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid corpus spec: {exc}") from exc


@dataclass(frozen=True)
class OracleParams:
    base_j: float = 0.5
    per_pixel_frame_j: float = 1e-8
    standard_factor: dict = field(
        default_factory=lambda: {Standard.H264: 1.0, Standard.H265: 1.1, Standard.AV1: 1.25}
    )
    preset_factor: dict = field(default_factory=lambda: {Preset.ULTRAFAST: 1.0, Preset.SLOW: 1.6})
    qp_slope: float = 0.0
    noise_rel: float = 0.05
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "standard_factor", {Standard(k): float(v) for k, v in self.standard_factor.items()})
        object.__setattr__(self, "preset_factor", {Preset(k): float(v) for k, v in self.preset_factor.items()})
        if self.base_j < 0 or not self.per_pixel_frame_j > 0 or self.noise_rel < 0:
            raise ConfigError("need base_j >= 0, per_pixel_frame_j > 0, noise_rel >= 0")
        factors = list(self.standard_factor.values()) + list(self.preset_factor.values())
        if any(not f > 0 for f in factors):
            raise ConfigError("standard and preset factors must be > 0")
        if set(self.standard_factor) != set(Standard) or set(self.preset_factor) != set(Preset):
            raise ConfigError("factors must cover every standard and preset")

    def to_dict(self) -> dict:
        return {
            "base_j": self.base_j,
            "per_pixel_frame_j": self.per_pixel_frame_j,
            "standard_factor": {k.name: v for k, v in self.standard_factor.items()},
            "preset_factor": {k.label: v for k, v in self.preset_factor.items()},
            "qp_slope": self.qp_slope,
            "noise_rel": self.noise_rel,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OracleParams":
        kw = dict(d)
        try:
            if "standard_factor" in kw:
                kw["standard_factor"] = {Standard.parse(k): v for k, v in kw["standard_factor"].items()}
            if "preset_factor" in kw:
                kw["preset_factor"] = {Preset.parse(k): v for k, v in kw["preset_factor"].items()}
            return cls(**kw)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid oracle params: {exc}") from exc


def qp_midpoint(standard: Standard) -> float:
    lo, hi = Standard(standard).qp_range
    return 0.5 * (lo + hi)


def _noise_rng(seed: int, config: EncodingConfig, draw_index: int) -> np.random.Generator:
    key = f"{seed}|{sample_id(config)}|{config.width}x{config.height}|{draw_index}".encode()
    return np.random.default_rng(int.from_bytes(hashlib.sha256(key).digest()[:16], "little"))


def oracle_energy(config: EncodingConfig, params: OracleParams, draw_index: int = 0) -> float:
    qp_term = 1.0 + params.qp_slope * (config.qp - qp_midpoint(config.standard))
    if qp_term <= 0:
        raise ConfigError(f"qp_slope={params.qp_slope} drives energy non-positive at qp={config.qp}")
    energy = (
        params.base_j
        + params.per_pixel_frame_j
        * config.pixels
        * config.frame_count
        * params.standard_factor[Standard(config.standard)]
        * params.preset_factor[Preset(config.preset)]
        * qp_term
    )
    if params.noise_rel > 0:
        energy *= math.exp(params.noise_rel * float(_noise_rng(params.seed, config, draw_index).standard_normal()))
    return energy


def generate_corpus(spec: CorpusSpec = CorpusSpec(), params: OracleParams = OracleParams()) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.frame_range
    samples = []
    for width, height in spec.resolutions:
        for j in range(spec.sequences_per_class):
            frames = int(rng.integers(lo, hi + 1))
            seq = f"{width}x{height}_s{j:02d}"
            for std in spec.standards:
                for preset in spec.presets:
                    for qp in spec.qp_grid[std]:
                        cfg = EncodingConfig(seq, width, height, frames, std, preset, qp)
                        validate_config(cfg)
                        e = round(oracle_energy(cfg, params), ENERGY_DECIMALS)
                        samples.append(Sample(cfg, e))
    return Dataset(tuple(samples))


def load_json_config(path, cls):
    if path is None:
        return cls()
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return cls.from_dict(d)


def save_json_config(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj.to_dict(), fh, indent=2)
        fh.write("\n")
