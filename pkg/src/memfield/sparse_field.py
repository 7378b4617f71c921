"""Sparse twin of the dense engine.

Only nonzero cells are stored (dict keyed by (row, col)).  Each step
touches the active set plus a one-cell halo; everything further out has a
zero value, zero Laplacian and therefore a zero update, so skipping it is
exact, not an approximation.  The update arithmetic repeats the dense
expressions term for term, which keeps the two engines bitwise equal.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .field_engine import DenseField, FieldParams, ImportanceMask, _check_bounded

Cell = tuple[int, int]


def _as_arrays(cells: dict[Cell, float]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not cells:
        z = np.zeros(0, dtype=np.int64)
        return z, z.copy(), np.zeros(0, dtype=np.float64)
    rows = np.fromiter((rc[0] for rc in cells), dtype=np.int64, count=len(cells))
    cols = np.fromiter((rc[1] for rc in cells), dtype=np.int64, count=len(cells))
    vals = np.fromiter(cells.values(), dtype=np.float64, count=len(cells))
    return rows, cols, vals


def _gather(sorted_codes: np.ndarray, values: np.ndarray, query: np.ndarray,
            default: float = 0.0) -> np.ndarray:
    """Values at the query codes; `default` where a code is not present."""
    out = np.full(query.shape, default, dtype=np.float64)
    if len(sorted_codes) == 0:
        return out
    pos = np.clip(np.searchsorted(sorted_codes, query), 0, len(sorted_codes) - 1)
    hit = sorted_codes[pos] == query
    out[hit] = values[pos[hit]]
    return out


class SparseField:
    """Nonzero field cells plus grid size and accumulated sim time."""

    __slots__ = ("cells", "grid_size", "time")

    def __init__(self, cells: dict[Cell, float] | None = None, grid_size: int = 128,
                 time: float = 0.0):
        cells = dict(cells) if cells else {}
        for (r, c) in cells:
            if not (0 <= r < grid_size and 0 <= c < grid_size):
                raise ConfigError(f"cell {(r, c)} outside {grid_size}x{grid_size} grid")
        self.cells = cells
        self.grid_size = int(grid_size)
        self.time = float(time)

    @classmethod
    def _from_arrays(cls, codes: np.ndarray, values: np.ndarray, grid_size: int,
                     time: float) -> "SparseField":
        # Internal fast path: codes come from clamped arithmetic, skip range checks.
        out = object.__new__(cls)
        n = grid_size
        out.cells = {(int(code) // n, int(code) % n): float(v)
                     for code, v in zip(codes, values)}
        out.grid_size = n
        out.time = time
        return out

    @property
    def active_count(self) -> int:
        return len(self.cells)

    def get(self, cell: Cell) -> float:
        return self.cells.get(cell, 0.0)

    def set(self, cell: Cell, value: float) -> None:
        r, c = cell
        if not (0 <= r < self.grid_size and 0 <= c < self.grid_size):
            raise ConfigError(f"cell {cell} outside {self.grid_size}x{self.grid_size} grid")
        if value == 0.0:
            self.cells.pop(cell, None)
        else:
            self.cells[cell] = float(value)

    def mass(self) -> float:
        """Sum of all cell values (zero-flux edges keep this fixed under pure diffusion)."""
        _, _, vals = _as_arrays(self.cells)
        return float(np.sum(vals))

    def copy(self) -> "SparseField":
        return SparseField(self.cells, self.grid_size, self.time)

    def to_dense(self) -> DenseField:
        v = np.zeros((self.grid_size, self.grid_size))
        for (r, c), val in self.cells.items():
            v[r, c] = val
        return DenseField(v, self.time)

    @classmethod
    def from_dense(cls, field: DenseField) -> "SparseField":
        rows, cols = np.nonzero(field.values)
        cells = {(int(r), int(c)): float(field.values[r, c]) for r, c in zip(rows, cols)}
        return cls(cells, field.grid_size, field.time)


class SparseMask:
    """Importance cells above the floor; absent cells read as the floor."""

    __slots__ = ("cells", "floor")

    def __init__(self, cells: dict[Cell, float] | None = None, floor: float = 0.0):
        if floor < 0:
            raise ConfigError(f"mask floor must be non-negative, got {floor}")
        cells = dict(cells) if cells else {}
        for cell, v in cells.items():
            if v < floor:
                raise ConfigError(f"mask value {v} at {cell} below floor {floor}")
        # Cells exactly at the floor carry no information.
        self.cells = {cell: float(v) for cell, v in cells.items() if v != floor}
        self.floor = float(floor)

    def value_at(self, cell: Cell) -> float:
        return self.cells.get(cell, self.floor)

    def raise_to(self, cell: Cell, value: float) -> None:
        """Lift a cell to max(current, value); used when a memory is written."""
        if value > self.value_at(cell):
            self.cells[cell] = float(value)

    def copy(self) -> "SparseMask":
        return SparseMask(self.cells, self.floor)

    def to_dense(self, grid_size: int) -> ImportanceMask:
        v = np.full((grid_size, grid_size), self.floor)
        for (r, c), val in self.cells.items():
            v[r, c] = val
        return ImportanceMask(v, self.floor)

    @classmethod
    def from_dense(cls, mask: ImportanceMask) -> "SparseMask":
        rows, cols = np.nonzero(mask.values != mask.floor)
        cells = {(int(r), int(c)): float(mask.values[r, c]) for r, c in zip(rows, cols)}
        return cls(cells, mask.floor)


def update_codes(field: SparseField) -> np.ndarray:
    """Sorted unique codes (row*N + col) of the active set plus its halo."""
    n = field.grid_size
    rows, cols, _ = _as_arrays(field.cells)
    if len(rows) == 0:
        return np.zeros(0, dtype=np.int64)
    # Mirror closure: out-of-range neighbours clamp back onto the edge cell.
    rn = np.maximum(rows - 1, 0)
    rs = np.minimum(rows + 1, n - 1)
    cw = np.maximum(cols - 1, 0)
    ce = np.minimum(cols + 1, n - 1)
    codes = np.concatenate([
        rows * n + cols,
        rn * n + cols,
        rs * n + cols,
        rows * n + cw,
        rows * n + ce,
    ])
    return np.unique(codes)


def _neighbor_values(codes: np.ndarray, sorted_active: np.ndarray, active_vals: np.ndarray,
                     n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    rows = codes // n
    cols = codes % n
    v = _gather(sorted_active, active_vals, codes)
    north = _gather(sorted_active, active_vals, np.maximum(rows - 1, 0) * n + cols)
    south = _gather(sorted_active, active_vals, np.minimum(rows + 1, n - 1) * n + cols)
    west = _gather(sorted_active, active_vals, rows * n + np.maximum(cols - 1, 0))
    east = _gather(sorted_active, active_vals, rows * n + np.minimum(cols + 1, n - 1))
    return v, north, south, west, east


def _field_codes_values(field: SparseField) -> tuple[np.ndarray, np.ndarray]:
    rows, cols, vals = _as_arrays(field.cells)
    codes = rows * field.grid_size + cols
    order = np.argsort(codes)
    return codes[order], vals[order]


def _mask_lookup(mask: SparseMask, codes: np.ndarray, n: int) -> np.ndarray:
    rows, cols, vals = _as_arrays(mask.cells)
    mcodes = rows * n + cols
    order = np.argsort(mcodes)
    return _gather(mcodes[order], vals[order], codes, default=mask.floor)


def sparse_evolve_step(field: SparseField, mask: SparseMask,
                       params: FieldParams) -> SparseField:
    """One Euler step over the active set and its halo.

    Matches evolve_step on the dense grid bit for bit: same stencil, same
    expression order, mirror edges.
    """
    n = field.grid_size
    t = field.time + params.dt
    codes = update_codes(field)
    if len(codes) == 0:
        return SparseField({}, n, t)
    sorted_active, active_vals = _field_codes_values(field)
    v, north, south, west, east = _neighbor_values(codes, sorted_active, active_vals, n)
    lap = (north + south + west + east - 4.0 * v) / (params.spacing * params.spacing)
    denom = 1.0 + params.alpha * _mask_lookup(mask, codes, n)
    rate = (params.diffusion * lap) / denom - (params.decay * v) / denom
    new = v + params.dt * rate
    _check_bounded(new, t)
    keep = new != 0.0
    return SparseField._from_arrays(codes[keep], new[keep], n, t)


def sparse_evolve_mask(mask: SparseMask, params: FieldParams,
                       access_events: list[tuple[Cell, float]] = ()) -> SparseMask:
    """Multiplicative decay toward the floor, then access boosts.

    Same update rule as the dense mask path: I <- max(floor, I*(1-beta*dt)),
    then +gamma*weight per event, clamped at the importance ceiling.
    """
    rows, cols, vals = _as_arrays(mask.cells)
    decayed = np.maximum(mask.floor, vals * (1.0 - params.beta * params.dt))
    cells = {(int(r), int(c)): float(v)
             for r, c, v in zip(rows, cols, decayed) if v != mask.floor}
    out = SparseMask.__new__(SparseMask)
    out.cells = cells
    out.floor = mask.floor
    for cell, weight in access_events:
        if weight < 0:
            raise ConfigError(f"access weight must be non-negative, got {weight}")
        boosted = min(out.value_at(cell) + params.gamma * weight, params.importance_max)
        if boosted != out.floor:
            out.cells[cell] = float(boosted)
    return out


def prune(field: SparseField, mask: SparseMask,
          eps: float) -> tuple[SparseField, SparseMask, int]:
    """Drop cells with |value| < eps; mask cells without field support go too.

    Returns (field, mask, removed_cell_count).
    """
    kept = {cell: v for cell, v in field.cells.items() if abs(v) >= eps}
    removed = len(field.cells) - len(kept)
    new_field = SparseField(kept, field.grid_size, field.time)
    new_mask = SparseMask({cell: v for cell, v in mask.cells.items() if cell in kept},
                          mask.floor)
    return new_field, new_mask, removed
