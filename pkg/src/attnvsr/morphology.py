"""Voxel shapes, their mass-spring topology, and per-voxel sensing."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .terrain import ground_heights

# Channel order of every sensor vector.
SENSOR_NAMES = ("touch", "vx", "vy", "area")

# Neighbor directions used by message passing: (d_row, d_col) on the grid, top row first.
DIRECTIONS = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}
OPPOSITE = {"N": "S", "E": "W", "S": "N", "W": "E"}


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class GridShape:
    width: int
    height: int
    mask: tuple[tuple[bool, ...], ...]  # row-major, top row first

    @property
    def n_voxels(self) -> int:
        return sum(sum(row) for row in self.mask)

    def cells(self) -> list[tuple[int, int]]:
        """Occupied (row, col) cells in voxel-index order."""
        return [(r, c) for r in range(self.height) for c in range(self.width) if self.mask[r][c]]


def parse_shape(mask_string: str) -> GridShape:
    """Parse ``"1111-1111-1001"`` style masks (rows top to bottom)."""
    text = mask_string.strip()
    if not text:
        raise ShapeError("empty shape mask")
    rows = text.split("-")
    if any(not row for row in rows):
        raise ShapeError(f"empty row in shape mask {mask_string!r}")
    bad = set("".join(rows)) - {"0", "1"}
    if bad:
        raise ShapeError(f"invalid characters {sorted(bad)} in shape mask {mask_string!r}")
    widths = {len(row) for row in rows}
    if len(widths) != 1:
        raise ShapeError(f"ragged rows in shape mask {mask_string!r}: lengths {[len(r) for r in rows]}")
    mask = tuple(tuple(ch == "1" for ch in row) for row in rows)
    shape = GridShape(width=len(rows[0]), height=len(rows), mask=mask)
    cells = shape.cells()
    if not cells:
        raise ShapeError(f"shape mask {mask_string!r} has no voxels")
    if not _connected(cells):
        raise ShapeError(f"shape mask {mask_string!r} is not a single 4-connected component")
    return shape


def render_shape(shape: GridShape) -> str:
    return "-".join("".join("1" if v else "0" for v in row) for row in shape.mask)


def _connected(cells: list[tuple[int, int]]) -> bool:
    todo = [cells[0]]
    seen = {cells[0]}
    occupied = set(cells)
    while todo:
        r, c = todo.pop()
        for dr, dc in DIRECTIONS.values():
            nb = (r + dr, c + dc)
            if nb in occupied and nb not in seen:
                seen.add(nb)
                todo.append(nb)
    return len(seen) == len(occupied)


@dataclass(frozen=True, eq=False)
class Morphology:
    """Immutable mass-spring model of a grid shape.

    Each voxel owns four corner masses (shared with adjacent voxels) listed
    counter-clockwise from bottom-left, four edge springs and two diagonal
    springs. Springs are per voxel, so a shared edge carries two springs.
    """

    shape: GridShape
    side: float
    rest_positions: np.ndarray  # (n_masses, 2), bottom-left of the grid at the origin
    voxel_corners: np.ndarray  # (n_voxels, 4) mass indices, CCW from bottom-left
    spring_a: np.ndarray
    spring_b: np.ndarray
    spring_voxel: np.ndarray
    spring_is_diagonal: np.ndarray
    neighbors: np.ndarray  # (n_voxels, 4) voxel index in N, E, S, W or -1
    voxel_index_map: dict = field(default_factory=dict)

    @property
    def n_voxels(self) -> int:
        return len(self.voxel_corners)

    @property
    def n_masses(self) -> int:
        return len(self.rest_positions)

    @property
    def edge_springs(self) -> np.ndarray:
        return np.flatnonzero(~self.spring_is_diagonal)


def build_morphology(shape: GridShape, side: float = 1.0) -> Morphology:
    cells = shape.cells()
    index_map = {cell: i for i, cell in enumerate(cells)}
    node_ids: dict[tuple[int, int], int] = {}
    corners = []
    for r, c in cells:
        y0 = shape.height - 1 - r  # grid rows are top first, physics y points up
        quad = []
        for cx, cy in ((c, y0), (c + 1, y0), (c + 1, y0 + 1), (c, y0 + 1)):
            quad.append(node_ids.setdefault((cx, cy), len(node_ids)))
        corners.append(quad)
    rest = np.zeros((len(node_ids), 2))
    for (cx, cy), k in node_ids.items():
        rest[k] = (cx * side, cy * side)

    a, b, vox, diag = [], [], [], []
    for v, (bl, br, tr, tl) in enumerate(corners):
        for p, q, is_diag in ((bl, br, False), (br, tr, False), (tr, tl, False), (tl, bl, False),
                              (bl, tr, True), (br, tl, True)):
            a.append(p)
            b.append(q)
            vox.append(v)
            diag.append(is_diag)

    neighbors = np.full((len(cells), 4), -1, dtype=np.int64)
    for v, (r, c) in enumerate(cells):
        for k, (dr, dc) in enumerate(DIRECTIONS.values()):
            neighbors[v, k] = index_map.get((r + dr, c + dc), -1)

    return Morphology(
        shape=shape,
        side=float(side),
        rest_positions=rest,
        voxel_corners=np.asarray(corners, dtype=np.int64),
        spring_a=np.asarray(a, dtype=np.int64),
        spring_b=np.asarray(b, dtype=np.int64),
        spring_voxel=np.asarray(vox, dtype=np.int64),
        spring_is_diagonal=np.asarray(diag, dtype=bool),
        neighbors=neighbors,
        voxel_index_map=index_map,
    )


@lru_cache(maxsize=64)
def morphology_from_mask(mask_string: str, side: float = 1.0) -> Morphology:
    return build_morphology(parse_shape(mask_string), side)


# -- sensing -----------------------------------------------------------------


@dataclass(frozen=True)
class SensorRanges:
    velocity: tuple[float, float] = (-5.0, 5.0)
    area: tuple[float, float] = (0.5, 1.5)


def voxel_areas(positions: np.ndarray, morphology: Morphology) -> np.ndarray:
    """Shoelace area of every voxel quad."""
    q = positions[morphology.voxel_corners]  # (n, 4, 2)
    x, y = q[..., 0], q[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)


def read_all_raw_sensors(state, morphology: Morphology, terrain, contact_tolerance: float = 1e-3) -> np.ndarray:
    """Raw ``(touch, vx, vy, area_ratio)`` for every voxel, shape ``(n, 4)``."""
    pos = state.mass_positions
    vel = state.mass_velocities
    gap = pos[:, 1] - ground_heights(terrain, pos[:, 0])
    touching = gap <= contact_tolerance
    corners = morphology.voxel_corners
    out = np.empty((morphology.n_voxels, 4))
    out[:, 0] = touching[corners].any(axis=1)
    out[:, 1:3] = vel[corners].mean(axis=1)
    out[:, 3] = voxel_areas(pos, morphology) / morphology.side**2
    return out


def read_raw_sensors(state, morphology: Morphology, terrain, voxel: int) -> np.ndarray:
    if not 0 <= voxel < morphology.n_voxels:
        raise IndexError(f"voxel index {voxel} out of range for {morphology.n_voxels} voxels")
    return read_all_raw_sensors(state, morphology, terrain)[voxel]


def _squash(v, lo, hi):
    return 0.5 * (1.0 + np.tanh(2.0 * (v - lo) / (hi - lo) - 1.0))


def soft_normalize(raw: np.ndarray, ranges: SensorRanges = SensorRanges()) -> np.ndarray:
    """Map raw readings into [0, 1] per channel; works on ``(4,)`` or ``(n, 4)``.

    Touch passes through; the other channels go through a tanh squash
    centred on the middle of their nominal range.
    """
    raw = np.asarray(raw, dtype=float)
    out = np.empty_like(raw)
    out[..., 0] = raw[..., 0]
    out[..., 1] = _squash(raw[..., 1], *ranges.velocity)
    out[..., 2] = _squash(raw[..., 2], *ranges.velocity)
    out[..., 3] = _squash(raw[..., 3], *ranges.area)
    return out


def add_noise(s: np.ndarray, rng: np.random.Generator, sigma: float = 0.01) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if sigma == 0:
        return s.copy()
    return s + sigma * rng.standard_normal(s.shape)


def one_hot_encode(s: np.ndarray, i: int, n: int) -> np.ndarray:
    """``X = s h_i^T``: a ``(len(s), n)`` matrix holding ``s`` in column ``i``."""
    if not 0 <= i < n:
        raise IndexError(f"voxel index {i} out of range for n={n}")
    s = np.asarray(s, dtype=float)
    X = np.zeros((len(s), n))
    X[:, i] = s
    return X
