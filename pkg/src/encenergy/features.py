"""Encoding configurations, the nine high-level features and dataset I/O.

Feature columns (fixed order used by every matrix in the package)::

    0 offset (always 1)     3 H.264    6 ultrafast
    1 encoded frames        4 H.265    7 slow
    2 pixels (w * h)        5 AV1      8 QP
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    InvariantViolation,
    NonPositiveDimension,
    NonPositiveFrameCount,
    ParseError,
    QpOutOfRange,
)

N_FEATURES = 9
FEATURE_NAMES = (
    "offset",
    "frames",
    "pixels",
    "standard_h264",
    "standard_h265",
    "standard_av1",
    "preset_ultrafast",
    "preset_slow",
    "qp",
)
CSV_HEADER = ("sequence_id", "width", "height", "frames", "standard", "preset", "qp", "energy_j")
# largest integer a float64 represents exactly
_MAX_EXACT = 2**53


class Standard(enum.IntEnum):
    H264 = 0
    H265 = 1
    AV1 = 2

    @property
    def qp_range(self) -> tuple[int, int]:
        return (1, 255) if self is Standard.AV1 else (0, 51)

    @classmethod
    def parse(cls, text: str) -> "Standard":
        return cls[text.strip().upper()]


class Preset(enum.IntEnum):
    ULTRAFAST = 0
    SLOW = 1

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Preset":
        return cls[text.strip().upper()]


@dataclass(frozen=True)
class EncodingConfig:
    sequence_id: str
    width: int
    height: int
    frame_count: int
    standard: Standard
    preset: Preset
    qp: int

    @property
    def pixels(self) -> int:
        return self.width * self.height


def validate_config(config: EncodingConfig) -> None:
    """Raise the first violated invariant of ``config``; return None if valid."""
    if config.width <= 0 or config.height <= 0:
        raise NonPositiveDimension(
            f"width and height must be > 0, got {config.width}x{config.height}"
        )
    if config.pixels > _MAX_EXACT:
        raise NonPositiveDimension(
            f"{config.width}x{config.height} exceeds the exact float range (2**53 pixels)"
        )
    if config.frame_count <= 0:
        raise NonPositiveFrameCount(f"frame_count must be > 0, got {config.frame_count}")
    lo, hi = Standard(config.standard).qp_range
    if not lo <= config.qp <= hi:
        raise QpOutOfRange(Standard(config.standard).name, config.qp, lo, hi)


def extract_features(config: EncodingConfig) -> np.ndarray:
    x = np.zeros(N_FEATURES)
    x[0] = 1.0
    x[1] = float(config.frame_count)
    x[2] = float(config.pixels)
    x[3 + int(config.standard)] = 1.0
    x[6 + int(config.preset)] = 1.0
    x[8] = float(config.qp)
    return x


def sample_id(config: EncodingConfig) -> str:
    """Stable key built from the fields that identify a sample in a dataset."""
    return (
        f"{config.sequence_id}|{Standard(config.standard).name}|"
        f"{Preset(config.preset).label}|qp{config.qp}|f{config.frame_count}"
    )


@dataclass(frozen=True)
class Sample:
    config: EncodingConfig
    energy_j: float
    features: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = extract_features(self.config)
        x.setflags(write=False)
        object.__setattr__(self, "features", x)

    @property
    def sample_id(self) -> str:
        return sample_id(self.config)


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        seen = {}
        for i, s in enumerate(self.samples):
            key = s.sample_id
            if key in seen:
                raise InvariantViolation(i, f"duplicate of sample {seen[key]} ({key})")
            seen[key] = i

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def feature_matrix(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, N_FEATURES))
        return np.vstack([s.features for s in self.samples])

    def energies(self) -> np.ndarray:
        return np.array([s.energy_j for s in self.samples], dtype=float)

    def sample_ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]

    def configs(self) -> list[EncodingConfig]:
        return [s.config for s in self.samples]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.samples[i] for i in indices))

    def sorted_by_id(self) -> "Dataset":
        return Dataset(tuple(sorted(self.samples, key=lambda s: s.sample_id)))


# -- CSV ----------------------------------------------------------------------

def format_energy(value: float) -> str:
    """Decimal with at most 9 fractional digits (nanojoule resolution)."""
    text = f"{value:.9f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def _parse_int(text: str, line: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(line, column, f"expected integer, got {text!r}") from None


def _parse_row(row: Sequence[str], line: int) -> tuple[EncodingConfig, float]:
    if len(row) != len(CSV_HEADER):
        raise ParseError(line, "*", f"expected {len(CSV_HEADER)} fields, got {len(row)}")
    seq, width, height, frames, standard, preset, qp, energy = row
    if not seq:
        raise ParseError(line, "sequence_id", "empty sequence id")
    try:
        std = Standard.parse(standard)
    except KeyError:
        raise ParseError(line, "standard", f"unknown standard {standard!r}") from None
    if preset != preset.lower() or preset.upper() not in Preset.__members__:
        raise ParseError(line, "preset", f"unknown preset {preset!r}")
    try:
        energy_j = float(energy)
    except ValueError:
        raise ParseError(line, "energy_j", f"expected decimal, got {energy!r}") from None
    if not np.isfinite(energy_j):
        raise ParseError(line, "energy_j", "energy must be finite")
    config = EncodingConfig(
        sequence_id=seq,
        width=_parse_int(width, line, "width"),
        height=_parse_int(height, line, "height"),
        frame_count=_parse_int(frames, line, "frames"),
        standard=std,
        preset=Preset.parse(preset),
        qp=_parse_int(qp, line, "qp"),
    )
    return config, energy_j


def read_dataset(stream) -> Dataset:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "*", "missing header row") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        unknown = [h for h in header if h.strip() not in CSV_HEADER]
        reason = f"unknown columns {unknown}" if unknown else f"header must be {','.join(CSV_HEADER)}"
        raise ParseError(1, "*", reason)
    samples = []
    for line, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        config, energy_j = _parse_row(row, line)
        index = len(samples)
        try:
            validate_config(config)
        except ConfigError as exc:
            raise InvariantViolation(index, f"{exc.kind}: {exc}") from exc
        if energy_j < 0:
            raise InvariantViolation(index, f"negative energy {energy_j}")
        samples.append(Sample(config, energy_j))
    return Dataset(tuple(samples))


def write_dataset(dataset: Dataset, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in dataset:
        c = s.config
        writer.writerow(
            [
                c.sequence_id,
                c.width,
                c.height,
                c.frame_count,
                Standard(c.standard).name,
                Preset(c.preset).label,
                c.qp,
                format_energy(s.energy_j),
            ]
        )


def load_dataset(path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_dataset(fh)


def save_dataset(dataset: Dataset, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_dataset(dataset, fh)


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    write_dataset(dataset, buf)
    return buf.getvalue()
