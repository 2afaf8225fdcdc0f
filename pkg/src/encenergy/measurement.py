"""Encoding energy from power traces and the confidence-interval stopping rule.

One measurement is ``E_enc = E_dynamic - E_static``: the integral of the power
drawn while encoding minus the integral of idle power over a window of equal
duration. Measurements are repeated until the confidence interval of their
mean is narrower than a fraction ``beta`` of the mean itself.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy.special import betainc

from . import _accel
from .errors import (
    ConfigError,
    DegenerateTrace,
    InvalidProbability,
    NonPositiveMean,
    ParseError,
    ProbeExhausted,
    TooFewValues,
    WindowOutOfRange,
)

TRACE_HEADER = ("t_s", "p_w")
QUANTILE_CONVENTIONS = ("two_sided", "one_sided")


# -- traces -------------------------------------------------------------------

@dataclass(frozen=True)
class PowerTrace:
    t: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=float)
        p = np.ascontiguousarray(self.p, dtype=float)
        if t.ndim != 1 or t.shape != p.shape:
            raise DegenerateTrace("time and power must be 1-D arrays of equal length")
        if t.size < 2:
            raise DegenerateTrace(f"need at least 2 samples, got {t.size}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
            raise DegenerateTrace("trace contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise DegenerateTrace("timestamps must be strictly increasing")
        if np.any(p < 0):
            raise DegenerateTrace("power must be non-negative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "p", p)

    @property
    def start(self) -> float:
        return float(self.t[0])

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


def integrate_power(trace: PowerTrace, t_start: float, duration: float) -> float:
    """Trapezoidal energy over ``[t_start, t_start + duration]`` in joules.

    Window edges falling between samples are linearly interpolated.
    """
    if not duration > 0:
        raise WindowOutOfRange(f"duration must be > 0, got {duration}")
    t, p = trace.t, trace.p
    a, b = float(t_start), float(t_start) + float(duration)
    # absorb rounding in t_start + duration at the trace edges
    slack = 1e-12 * max(abs(t[0]), abs(t[-1]), t[-1] - t[0])
    if t[-1] < b <= t[-1] + slack:
        b = float(t[-1])
    if t[0] - slack <= a < t[0]:
        a = float(t[0])
    if a < t[0] or b > t[-1]:
        raise WindowOutOfRange(
            f"window [{a:g}, {b:g}] s not inside trace span [{t[0]:g}, {t[-1]:g}] s"
        )
    lo = np.searchsorted(t, a, side="right")
    hi = np.searchsorted(t, b, side="left")
    tw = np.concatenate(([a], t[lo:hi], [b]))
    pw = np.concatenate(([np.interp(a, t, p)], p[lo:hi], [np.interp(b, t, p)]))
    return float(_accel.trapezoid(tw, pw))


def trace_energy(trace: PowerTrace) -> float:
    """Energy over the whole trace."""
    return float(_accel.trapezoid(trace.t, trace.p))


def encoding_energy(e_dynamic: float, e_static: float) -> float:
    # may be negative when idle power is noisy; callers decide
    return e_dynamic - e_static


def load_trace(path) -> PowerTrace:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise ParseError(1, "*", f"{path}: header must be {','.join(TRACE_HEADER)}")
        t, p = [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(line, "*", f"{path}: expected 2 fields, got {len(row)}")
            try:
                t.append(float(row[0]))
                p.append(float(row[1]))
            except ValueError:
                raise ParseError(line, "*", f"{path}: non-numeric value in {row}") from None
    return PowerTrace(np.array(t), np.array(p))


def save_trace(trace: PowerTrace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for ti, pi in zip(trace.t, trace.p):
            w.writerow([repr(float(ti)), repr(float(pi))])


# -- Student t ----------------------------------------------------------------

def _t_upper_tail(t: float, df: float) -> float:
    """P(T > t) for t >= 0."""
    return 0.5 * float(betainc(0.5 * df, 0.5, df / (df + t * t)))


@lru_cache(maxsize=4096)
def student_t_quantile(p: float, df: float) -> float:
    """Inverse CDF of Student's t by bisection on the incomplete-beta tail."""
    if not 0.0 < p < 1.0:
        raise InvalidProbability(f"p must lie in (0, 1), got {p}")
    if not df >= 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -student_t_quantile(1.0 - p, df)
    tail = 1.0 - p
    lo, hi = 0.0, 1.0
    while _t_upper_tail(hi, df) > tail:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _t_upper_tail(mid, df) > tail:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- confidence interval test -------------------------------------------------

@dataclass(frozen=True)
class CitConfig:
    alpha: float = 0.99
    beta: float = 0.02
    m_min: int = 2
    m_max: int = 200
    quantile_convention: str = "two_sided"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")
        if not 2 <= self.m_min <= self.m_max:
            raise ConfigError(f"need 2 <= m_min <= m_max, got {self.m_min}, {self.m_max}")
        if self.quantile_convention not in QUANTILE_CONVENTIONS:
            raise ConfigError(f"quantile_convention must be one of {QUANTILE_CONVENTIONS}")


def _quantile_level(alpha: float, convention: str) -> float:
    return (1.0 + alpha) / 2.0 if convention == "two_sided" else alpha


def cit_halfwidth(values, alpha: float, convention: str = "two_sided") -> float:
    """Interval width ``2 * s / sqrt(m) * t_q(m - 1)`` with ddof=1 sample std."""
    v = np.asarray(values, dtype=float)
    m = v.size
    if m < 2:
        raise TooFewValues(f"need at least 2 values, got {m}")
    s = float(np.std(v, ddof=1))
    if s == 0.0:
        return 0.0
    t_q = student_t_quantile(_quantile_level(alpha, convention), m - 1)
    return 2.0 * s / math.sqrt(m) * t_q


def cit_converged(values, cfg: CitConfig) -> bool:
    mean = float(np.mean(values)) if len(values) else 0.0
    if len(values) < 2:
        raise TooFewValues(f"need at least 2 values, got {len(values)}")
    if not mean > 0:
        raise NonPositiveMean(f"mean energy {mean:g} J is not positive")
    return cit_halfwidth(values, cfg.alpha, cfg.quantile_convention) < cfg.beta * mean


# -- probes -------------------------------------------------------------------

class EnergyProbe(Protocol):
    def next_measurement(self) -> float: ...


class SyntheticProbe:
    """Draws ``mu * (1 + sigma_rel * z)`` with standard-normal ``z``."""

    def __init__(self, mu: float, sigma_rel: float, seed: int = 42):
        if not math.isfinite(mu) or sigma_rel < 0:
            raise ConfigError("mu must be finite and sigma_rel >= 0")
        self.mu = mu
        self.sigma_rel = sigma_rel
        self._rng = np.random.default_rng(seed)

    def next_measurement(self) -> float:
        return self.mu * (1.0 + self.sigma_rel * float(self._rng.standard_normal()))


_PAIR_RE = re.compile(r"^(dyn|stat)_(\d+)\.csv$")


class TraceReplayProbe:
    """Replays ``dyn_<k>.csv`` / ``stat_<k>.csv`` pairs from one job directory in ascending k."""

    def __init__(self, job_dir):
        self.job_dir = Path(job_dir)
        if not self.job_dir.is_dir():
            raise ConfigError(f"{self.job_dir} is not a directory")
        found: dict[int, dict[str, Path]] = {}
        for f in self.job_dir.iterdir():
            m = _PAIR_RE.match(f.name)
            if m:
                found.setdefault(int(m.group(2)), {})[m.group(1)] = f
        for k, pair in found.items():
            if len(pair) != 2:
                raise ConfigError(f"{self.job_dir}: trace {k} lacks a dyn/stat partner")
        self._pairs = [found[k] for k in sorted(found)]
        self._next = 0

    def __len__(self) -> int:
        return len(self._pairs)

    def next_measurement(self) -> float:
        if self._next >= len(self._pairs):
            raise ProbeExhausted(f"{self.job_dir}: all {len(self._pairs)} trace pairs consumed")
        pair = self._pairs[self._next]
        self._next += 1
        dyn = load_trace(pair["dyn"])
        stat = load_trace(pair["stat"])
        # static window: same duration as the encode, from the start of the idle trace
        e_dyn = trace_energy(dyn)
        e_stat = integrate_power(stat, stat.start, dyn.duration)
        return encoding_energy(e_dyn, e_stat)


# -- protocol -----------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementResult:
    mean_energy_j: float
    m: int
    converged: bool
    history: tuple[float, ...] = field(default=())
    final_halfwidth: float = float("nan")


def measure_until_confident(probe: EnergyProbe, cfg: CitConfig = CitConfig()) -> MeasurementResult:
    history: list[float] = []
    halfwidth = float("nan")
    converged = False
    while len(history) < cfg.m_max:
        e = float(probe.next_measurement())
        if not math.isfinite(e):
            raise ConfigError(f"probe returned non-finite energy {e}")
        history.append(e)
        if len(history) < 2:
            continue
        halfwidth = cit_halfwidth(history, cfg.alpha, cfg.quantile_convention)
        if len(history) < cfg.m_min:
            continue
        mean = float(np.mean(history))
        # a non-positive running mean cannot satisfy the test; keep measuring
        if mean > 0 and halfwidth < cfg.beta * mean:
            converged = True
            break
    return MeasurementResult(
        mean_energy_j=float(np.mean(history)),
        m=len(history),
        converged=converged,
        history=tuple(history),
        final_halfwidth=halfwidth,
    )


# -- measurement CSV ----------------------------------------------------------

MEASUREMENT_HEADER = ("sequence_id", "mean_energy_j", "m", "converged", "final_halfwidth", "history_j")


def write_measurements(rows, path) -> None:
    """Write ``(sequence_id, MeasurementResult)`` pairs at full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEASUREMENT_HEADER)
        for seq, r in rows:
            w.writerow([
                seq,
                repr(r.mean_energy_j),
                r.m,
                "true" if r.converged else "false",
                repr(r.final_halfwidth),
                ";".join(repr(v) for v in r.history),
            ])


def read_measurements(path) -> list[tuple[str, MeasurementResult]]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MEASUREMENT_HEADER:
            raise ParseError(1, "*", f"header must be {','.join(MEASUREMENT_HEADER)}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                seq, mean, m, conv, hw, hist = row
                history = tuple(float(v) for v in hist.split(";")) if hist else ()
                res = MeasurementResult(float(mean), int(m), conv == "true", history, float(hw))
            except ValueError as exc:
                raise ParseError(line, "*", str(exc)) from None
            out.append((seq, res))
    return out
