"""Gridded solver output: single fields and time series of fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Values on a uniform grid, stored flat in row-major order.

    Non-finite values are allowed here so that a diverged run can still be
    handed to the audit, which reports them.
    """

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    values: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(h) for h in self.spacing)
        if len(spacing) != len(shape):
            raise ValueError("spacing needs one entry per grid axis")
        if any(h <= 0 for h in spacing):
            raise ValueError("grid spacing must be positive")
        vals = np.array(self.values, dtype=np.float64).ravel()
        if vals.size != math.prod(shape):
            raise ValueError(f"{vals.size} values do not fill a grid of shape {shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_array(cls, array, spacing: Sequence[float] | float, metadata: dict | None = None) -> "SolutionField":
        arr = np.asarray(array, dtype=np.float64)
        if np.isscalar(spacing) or isinstance(spacing, (int, float)):
            spacing = (float(spacing),) * arr.ndim
        return cls(arr.shape, tuple(spacing), arr.ravel(), dict(metadata or {}))

    @property
    def array(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass(frozen=True, eq=False)
class SolutionSeries:
    times: tuple[float, ...]
    frames: tuple[SolutionField, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a series needs at least one frame")
        if len(times) != len(frames):
            raise ValueError("one time per frame")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        s0 = (frames[0].shape, frames[0].spacing)
        if any((f.shape, f.spacing) != s0 for f in frames):
            raise ValueError("all frames must share shape and spacing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "frames", frames)

    @property
    def final(self) -> SolutionField:
        return self.frames[-1]

    def stack(self) -> np.ndarray:
        return np.stack([f.array for f in self.frames])
