"""Behavioral model of a ternary 1T1R junction.

Programming draws a log-normal resistance around the state's target; every
read adds Gaussian sense noise proportional to the ideal current; a pair of
comparators decodes the current back to a ternary value.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain_algebra import TruthValue

DEFAULT_STAGES_NS = {
    "row_driver": 1.0,
    "wordline_settle": 2.0,
    "sense": 5.0,
    "comparator": 1.0,
    "latch": 1.0,
}


class NonConvergentError(RuntimeError):
    """The flow operator did not settle: the +1 structure has a conductive cycle."""


@dataclass(frozen=True)
class DeviceParams:
    R_low: float = 10e3
    R_mid: float = 100e3
    R_high: float = 1e6
    V_read: float = 0.2
    I_high_threshold: float | None = None
    I_low_threshold: float | None = None
    sigma_log: float = 0.15
    snr_db: float = 20.0
    cycle_stage_ns: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_STAGES_NS))
    register_read_ns: float = 1.0

    def __post_init__(self):
        if not (0 < self.R_low < self.R_mid < self.R_high):
            raise ValueError("resistance levels must satisfy 0 < R_low < R_mid < R_high")
        if self.R_mid / self.R_low < 10 or self.R_high / self.R_mid < 10:
            raise ValueError("adjacent resistance levels need a ratio of at least 10")
        if self.V_read <= 0:
            raise ValueError("V_read must be positive")
        if self.sigma_log < 0:
            raise ValueError("sigma_log must be non-negative")
        i_plus, i_zero, i_minus = (self.V_read / r for r in (self.R_low, self.R_mid, self.R_high))
        if self.I_high_threshold is None:
            object.__setattr__(self, "I_high_threshold", math.sqrt(i_plus * i_zero))
        if self.I_low_threshold is None:
            object.__setattr__(self, "I_low_threshold", math.sqrt(i_zero * i_minus))
        if not self.I_low_threshold < self.I_high_threshold:
            raise ValueError("I_low_threshold must be below I_high_threshold")
        object.__setattr__(self, "cycle_stage_ns", dict(self.cycle_stage_ns))

    @property
    def noise_fraction(self) -> float:
        """Sense-noise std as a fraction of the ideal current."""
        return 10.0 ** (-self.snr_db / 20.0)

    @property
    def cycle_ns(self) -> float:
        return float(sum(self.cycle_stage_ns.values()))

    def replace(self, **changes) -> "DeviceParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown device parameters: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "DeviceParams":
        text = Path(path).read_text(encoding="utf-8").strip()
        return cls.from_dict(json.loads(text) if text else {})


@dataclass(frozen=True)
class DeviceInstance:
    target: TruthValue
    sampled_R: float


def target_resistance(v: TruthValue, p: DeviceParams) -> float:
    if v == TruthValue.HOLDS:
        return p.R_low
    if v == TruthValue.UNDEFINED:
        return p.R_mid
    if v == TruthValue.NEGATED:
        return p.R_high
    raise ValueError(f"not a ternary value: {v!r}")


def write_junction(v: TruthValue, p: DeviceParams, rng: np.random.Generator) -> DeviceInstance:
    v = TruthValue(v)
    r = target_resistance(v, p) * math.exp(p.sigma_log * rng.standard_normal())
    return DeviceInstance(v, r)


def sense_currents(resistances, p: DeviceParams, rng: np.random.Generator) -> np.ndarray:
    """Noisy bit-line currents for an array of junction resistances."""
    ideal = p.V_read / np.asarray(resistances, dtype=float)
    return ideal + ideal * p.noise_fraction * rng.standard_normal(ideal.shape)


def read_current(inst: DeviceInstance, p: DeviceParams, rng: np.random.Generator) -> float:
    ideal = p.V_read / inst.sampled_R
    return ideal + ideal * p.noise_fraction * rng.standard_normal()


def decode(current: float, p: DeviceParams) -> TruthValue:
    # strict > on both comparators: a current exactly at a threshold decodes downward
    if current > p.I_high_threshold:
        return TruthValue.HOLDS
    if current > p.I_low_threshold:
        return TruthValue.UNDEFINED
    return TruthValue.NEGATED


def decode_array(currents: np.ndarray, p: DeviceParams) -> np.ndarray:
    currents = np.asarray(currents)
    return np.where(currents > p.I_high_threshold, 1, np.where(currents > p.I_low_threshold, 0, -1))


def network_flow_fixed_point(
    plane,
    drive,
    max_iter: int | None = None,
    tol: float = 1e-9,
    p: DeviceParams | None = None,
) -> np.ndarray:
    """Settle the row-to-column flow over the +1 structure of a conductance plane.

    ``plane[i, j]`` is the conductance of the junction from concept i to j.
    Only junctions whose read current clears the high comparator carry flow,
    each with unit gain (the comparator regenerates the signal), so the
    settled state counts driven +1 paths into every node; a node is reached
    iff its state is positive. Raises NonConvergentError when iterates are
    still changing after ``max_iter`` sweeps, which happens exactly when a
    driven +1 cycle exists.
    """
    p = p or DeviceParams()
    g = np.asarray(plane, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("conductance plane must be square")
    x0 = np.asarray(drive, dtype=float)
    if x0.shape != (g.shape[0],) or not np.all(np.isfinite(x0)):
        raise ValueError("drive must be a finite vector over the plane's concepts")
    adjacency = (g * p.V_read > p.I_high_threshold).astype(float)
    if max_iter is None:
        max_iter = 10 * max(1, g.shape[0])
    x = x0
    for _ in range(max_iter):
        nxt = x0 + adjacency.T @ x
        if np.max(np.abs(nxt - x), initial=0.0) <= tol * max(1.0, np.max(np.abs(nxt), initial=0.0)):
            return nxt
        x = nxt
    raise NonConvergentError(f"flow did not settle within {max_iter} iterations")
