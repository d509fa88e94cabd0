"""Convex rate-to-power maps and energy accounting for transmission segments."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

REL_TOL = 1e-9

POLYNOMIAL = "polynomial"
EXPONENTIAL = "exponential"
TABULATED = "tabulated"


@dataclass(frozen=True)
class PowerFunction:
    """Power drawn while transmitting at speed ``s``.

    Three families are supported: ``s**alpha`` (alpha > 1), ``2**s - 1`` and a
    user-tabulated convex piecewise-linear map through ``(0, 0)``.  Tabulated
    maps are extended past their last breakpoint with the final slope.
    Instances are immutable; build them with the classmethods.
    """

    kind: str
    alpha: float | None = None
    breakpoints: tuple[tuple[float, float], ...] = ()
    _xs: np.ndarray = field(default=None, repr=False, compare=False)
    _ys: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == POLYNOMIAL:
            if self.alpha is None or not (self.alpha > 1) or not math.isfinite(self.alpha):
                raise ValueError(f"polynomial power needs alpha > 1, got {self.alpha!r}")
        elif self.kind == TABULATED:
            xs, ys = _check_table(self.breakpoints)
            object.__setattr__(self, "_xs", xs)
            object.__setattr__(self, "_ys", ys)
        elif self.kind != EXPONENTIAL:
            raise ValueError(f"unknown power function kind {self.kind!r}")

    @classmethod
    def polynomial(cls, alpha: float) -> "PowerFunction":
        return cls(POLYNOMIAL, alpha=float(alpha))

    @classmethod
    def exponential(cls) -> "PowerFunction":
        return cls(EXPONENTIAL)

    @classmethod
    def tabulated(cls, pairs: Iterable[Sequence[float]]) -> "PowerFunction":
        bp = tuple((float(s), float(p)) for s, p in pairs)
        return cls(TABULATED, breakpoints=bp)

    def eval(self, s):
        """P(s) for a scalar or array of speeds; negative speeds are rejected."""
        arr = np.asarray(s, dtype=float)
        if np.any(arr < 0) or np.any(np.isnan(arr)):
            raise ValueError(f"speed must be non-negative, got {s!r}")
        if self.kind == POLYNOMIAL:
            out = np.power(arr, self.alpha)
        elif self.kind == EXPONENTIAL:
            with np.errstate(over="ignore"):  # huge speeds cost inf
                out = np.expm1(arr * math.log(2.0))
        else:
            out = np.interp(arr, self._xs, self._ys)
            last_slope = (self._ys[-1] - self._ys[-2]) / (self._xs[-1] - self._xs[-2])
            beyond = arr > self._xs[-1]
            if np.any(beyond):
                out = np.where(beyond, self._ys[-1] + last_slope * (arr - self._xs[-1]), out)
        if np.ndim(out) == 0:
            return float(out)
        return out

    __call__ = eval

    def spec(self) -> str:
        if self.kind == POLYNOMIAL:
            return f"poly:alpha={self.alpha:g}"
        if self.kind == EXPONENTIAL:
            return "exp"
        return "table"


def _check_table(breakpoints):
    if len(breakpoints) < 2:
        raise ValueError("tabulated power needs at least two breakpoints")
    xs = np.array([b[0] for b in breakpoints], dtype=float)
    ys = np.array([b[1] for b in breakpoints], dtype=float)
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("tabulated power breakpoints must be finite")
    if xs[0] != 0.0 or ys[0] != 0.0:
        raise ValueError("tabulated power must start at (0, 0)")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("tabulated speeds must be strictly increasing")
    slopes = np.diff(ys) / np.diff(xs)
    if slopes[0] < 0:
        raise ValueError("tabulated power must be non-decreasing")
    # a chord below the curve shows up as a slope that drops
    scale = max(1.0, float(np.max(np.abs(slopes))))
    if np.any(np.diff(slopes) < -REL_TOL * scale):
        raise ValueError("tabulated power is not convex")
    return xs, ys


def parse_power(text: str) -> PowerFunction:
    """Parse ``poly:alpha=<float>``, ``exp`` or ``table:<csv path>``."""
    text = text.strip()
    if text == "exp":
        return PowerFunction.exponential()
    if text.startswith("poly:"):
        key, _, value = text[len("poly:"):].partition("=")
        if key.strip() != "alpha" or not value:
            raise ValueError(f"bad polynomial power spec {text!r}")
        return PowerFunction.polynomial(float(value))
    if text.startswith("table:"):
        return PowerFunction.tabulated(_read_table(text[len("table:"):]))
    raise ValueError(f"unrecognised power spec {text!r}")


def _read_table(path):
    pairs = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                pairs.append((float(row[0]), float(row[1])))
            except ValueError:
                if pairs:
                    raise
                # header line
    return pairs


@dataclass(frozen=True)
class Segment:
    """Packet ``packet_id`` transmitted at constant ``speed`` over [start, end)."""

    packet_id: int
    start: float
    end: float
    speed: float

    def __post_init__(self):
        if not (self.end > self.start):
            raise ValueError(f"segment must have start < end, got [{self.start}, {self.end})")
        if not (self.speed > 0):
            raise ValueError(f"segment speed must be positive, got {self.speed}")

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def bits(self) -> float:
        return self.speed * (self.end - self.start)


def segment_energy(P: PowerFunction, bits: float, duration: float) -> float:
    """Minimum energy to move ``bits`` in a window of length ``duration``."""
    if not (duration > 0):
        raise ValueError(f"window length must be positive, got {duration}")
    if bits < 0:
        raise ValueError(f"bits must be non-negative, got {bits}")
    return P.eval(bits / duration) * duration


def schedule_energy(P: PowerFunction, schedule) -> float:
    """Total energy of a schedule (or a plain iterable of segments)."""
    segments = getattr(schedule, "segments", schedule)
    ordered = sorted(segments, key=lambda seg: seg.start)
    total = 0.0
    for prev, seg in zip(ordered, ordered[1:]):
        if seg.start < prev.end - REL_TOL * max(1.0, abs(prev.end)):
            raise ValueError(f"segments overlap: {prev} and {seg}")
    for seg in ordered:
        total += P.eval(seg.speed) * seg.duration
    return total
