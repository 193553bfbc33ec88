"""Procedural hilly terrain as a piecewise-linear heightmap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Terrain:
    """Polyline ground profile.

    ``xs`` is strictly increasing and starts at 0. The first
    ``start_plateau_length`` meters are flat at height 0.
    """

    xs: np.ndarray
    ys: np.ndarray
    start_plateau_length: float
    generation_seed: int

    @property
    def control_points(self) -> list[tuple[float, float]]:
        return list(zip(self.xs.tolist(), self.ys.tolist()))

    @property
    def span(self) -> tuple[float, float]:
        return float(self.xs[0]), float(self.xs[-1])

    @classmethod
    def from_points(cls, points, start_plateau_length: float = 0.0, generation_seed: int = 0) -> "Terrain":
        pts = np.asarray(points, dtype=float)
        xs, ys = pts[:, 0].copy(), pts[:, 1].copy()
        if len(xs) < 2 or np.any(np.diff(xs) <= 0):
            raise ValueError("terrain control points must have strictly increasing x")
        xs.setflags(write=False)
        ys.setflags(write=False)
        return cls(xs, ys, float(start_plateau_length), int(generation_seed))


def generate_terrain(
    seed: int,
    span: float = 1000.0,
    avg_bump_height: float = 1.0,
    avg_bump_distance: float = 10.0,
    start_plateau: float = 20.0,
) -> Terrain:
    """Sample a hilly terrain.

    Control-point spacings are uniform on ``[0.5 d, 1.5 d]`` and heights
    uniform on ``[0, 2 h]``, so the averages are ``d`` and ``h``. The
    polyline always covers ``[0, span]``.
    """
    if span <= 0 or avg_bump_height <= 0 or avg_bump_distance <= 0:
        raise ValueError("span and bump averages must be positive")
    if start_plateau < 0 or start_plateau >= span:
        raise ValueError("start_plateau must lie in [0, span)")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    xs = [0.0]
    ys = [0.0]
    if start_plateau > 0:
        xs.append(float(start_plateau))
        ys.append(0.0)
    x = xs[-1]
    while x < span:
        x += rng.uniform(0.5 * avg_bump_distance, 1.5 * avg_bump_distance)
        xs.append(x)
        ys.append(rng.uniform(0.0, 2.0 * avg_bump_height))
    return Terrain.from_points(np.column_stack([xs, ys]), start_plateau, seed)


def terrain_height_at(terrain: Terrain, x: float) -> float:
    lo, hi = terrain.span
    if not lo <= x <= hi:
        raise IndexError(f"x={x} outside terrain span [{lo}, {hi}]")
    return float(np.interp(x, terrain.xs, terrain.ys))


def bump_statistics(terrain: Terrain) -> tuple[float, float]:
    """Mean bump height and mean control-point spacing past the plateau."""
    mask = terrain.xs > terrain.start_plateau_length
    heights = terrain.ys[mask]
    idx = np.flatnonzero(mask)
    spacings = terrain.xs[idx] - terrain.xs[idx - 1]
    return float(heights.mean()), float(spacings.mean())


def ground_heights(terrain: Terrain, x: np.ndarray) -> np.ndarray:
    """Vectorized height lookup; beyond the span the end heights extend flat."""
    return np.interp(x, terrain.xs, terrain.ys)
