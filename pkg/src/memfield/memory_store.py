"""Memory records plus the agent's field and importance mask.

The store is a single-writer state machine.  Writing a memory stamps a
Gaussian bump onto the field at the text's projected cell (peak equals the
memory's importance), raises the importance mask underneath it, and appends
a record.  tick() is the sole owner of time evolution: it advances the
field in fixed dt steps up to a target timestamp, decaying the mask and
pruning as it goes.  Access events boost the mask immediately.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass

import numpy as np

from .embedding import FieldPosition, LocalProvider, embed, project
from .errors import ClockSkew, ConfigError, ImportanceOutOfRange, UnknownMemory
from .field_engine import FieldParams
from .sparse_field import SparseField, SparseMask, prune, sparse_evolve_mask, sparse_evolve_step


@dataclass(eq=False)
class MemoryRecord:
    id: int
    text: str
    embedding: np.ndarray
    position: FieldPosition
    importance: float
    created_at: float
    last_access: float
    access_count: int = 0
    session_id: str | None = None


@dataclass(frozen=True)
class EvolutionReport:
    """What one tick() did: steps run, cells pruned, resulting field state."""

    steps: int
    pruned_cells: int
    field_time: float
    active_cells: int


def gaussian_footprint(cell: tuple[int, int], importance: float,
                       params: FieldParams) -> list[tuple[int, int, float]]:
    """Cells receiving amplitude >= prune_eps for a bump centered on `cell`.

    Spread widens with importance: sigma = sigma0 * (1 + 0.5*I/I_cap), so a
    maximally important memory reaches 1.5x further.  Distances are cell
    offsets scaled by the grid spacing; the peak value is exactly I at the
    center cell.  Returns (row, col, amplitude) triples.
    """
    if importance < params.prune_eps:
        return []
    sigma = params.sigma0 * (1.0 + 0.5 * importance / params.i_cap)
    h = params.spacing
    n = params.grid_size
    r0, c0 = cell
    radius = int(math.sqrt(2.0 * math.log(importance / params.prune_eps)) * sigma / h)
    rows = np.arange(max(0, r0 - radius), min(n - 1, r0 + radius) + 1)
    cols = np.arange(max(0, c0 - radius), min(n - 1, c0 + radius) + 1)
    d2 = (rows[:, None] - r0) ** 2 + (cols[None, :] - c0) ** 2
    amp = importance * np.exp(-(d2 * h * h) / (2.0 * sigma * sigma))
    rr, cc = np.nonzero(amp >= params.prune_eps)
    return [(int(rows[r]), int(cols[c]), float(amp[r, c])) for r, c in zip(rr, cc)]


class MemoryStore:
    """Owns records, field, mask and the clock for one agent."""

    def __init__(self, params: FieldParams | None = None, provider=None,
                 seed: int = 0, mask_floor: float = 0.0,
                 evolution_interval: float | None = None, prune_every: int = 1,
                 default_weights=None):
        self.params = params if params is not None else FieldParams()
        self.provider = provider if provider is not None else LocalProvider()
        self.seed = int(seed)
        if evolution_interval is not None and evolution_interval <= 0:
            raise ConfigError(f"evolution_interval must be positive, got {evolution_interval}")
        if prune_every < 0:
            raise ConfigError(f"prune_every must be >= 0 (0 disables), got {prune_every}")
        self.evolution_interval = evolution_interval
        self.prune_every = int(prune_every)
        self.records: list[MemoryRecord] = []
        self.field = SparseField(grid_size=self.params.grid_size)
        self.mask = SparseMask(floor=mask_floor)
        self.clock = 0.0
        self.steps_done = 0
        self.default_weights = default_weights
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.records)

    def get(self, memory_id: int) -> MemoryRecord:
        if 0 <= memory_id < len(self.records):
            return self.records[memory_id]
        raise UnknownMemory(f"no memory with id {memory_id}")

    def embedding_matrix(self) -> np.ndarray:
        """Row-stacked embeddings of all records (cached by record count)."""
        if self._matrix is None or self._matrix.shape[0] != len(self.records):
            if self.records:
                self._matrix = np.stack([r.embedding for r in self.records])
            else:
                self._matrix = np.zeros((0, self.provider.dimension))
        return self._matrix

    def inject(self, text: str, importance: float, when: float | None = None,
               session_id: str | None = None) -> MemoryRecord:
        """Store a memory and stamp its Gaussian onto the field.

        The bump center snaps to the projected grid cell so the peak cell
        carries exactly `importance`.  The mask under the footprint is
        lifted to at least `importance` (max, not add; accesses add).
        """
        if when is None:
            when = _time.time()
        if not (0.0 < importance <= self.params.i_cap):
            raise ImportanceOutOfRange(
                f"importance must be in (0, {self.params.i_cap}], got {importance}")
        if when < self.clock:
            raise ClockSkew(f"injection at {when} precedes store clock {self.clock}")
        if (self.evolution_interval is not None
                and when - self.field.time >= self.evolution_interval):
            self.tick(when)
        vec = embed(self.provider, text)
        pos = project(vec, self.seed, self.params.grid_size)
        for r, c, amp in gaussian_footprint(pos.cell, importance, self.params):
            self.field.cells[(r, c)] = self.field.cells.get((r, c), 0.0) + amp
            self.mask.raise_to((r, c), importance)
        record = MemoryRecord(
            id=len(self.records), text=text, embedding=vec, position=pos,
            importance=float(importance), created_at=float(when),
            last_access=float(when), session_id=session_id)
        self.records.append(record)
        self.clock = float(when)
        return record

    def tick(self, until: float) -> EvolutionReport:
        """Evolve field and mask forward to `until` in dt-sized steps.

        Runs floor((until - field.time)/dt) steps, so fractional remainders
        carry over instead of being dropped.  Prunes every `prune_every`
        steps (0 disables pruning).
        """
        if until < self.clock:
            raise ClockSkew(f"tick target {until} precedes store clock {self.clock}")
        dt = self.params.dt
        quotient = (until - self.field.time) / dt
        # Relative epsilon: targets that are exact multiples of dt must not
        # lose a step to float roundoff, even at 1e4+ steps per call.
        steps = int(quotient + 1e-9 * max(1.0, quotient))
        pruned = 0
        for _ in range(steps):
            self.field = sparse_evolve_step(self.field, self.mask, self.params)
            self.mask = sparse_evolve_mask(self.mask, self.params)
            self.steps_done += 1
            # cadence counts lifetime steps, not steps within this call
            if self.prune_every and self.steps_done % self.prune_every == 0:
                self.field, self.mask, removed = prune(
                    self.field, self.mask, self.params.prune_eps)
                pruned += removed
        # Accumulated dt roundoff can overshoot `until` by an ulp; clamp so
        # field.time <= clock stays exact.
        if self.field.time > until:
            self.field.time = until
        self.clock = float(until)
        return EvolutionReport(steps=steps, pruned_cells=pruned,
                               field_time=self.field.time,
                               active_cells=self.field.active_count)

    def record_access(self, memory_id: int, when: float | None = None) -> MemoryRecord:
        """Mark a retrieval hit: bump access stats and the mask at the cell."""
        if when is None:
            when = _time.time()
        rec = self.get(memory_id)
        if when < self.clock:
            raise ClockSkew(f"access at {when} precedes store clock {self.clock}")
        rec.last_access = float(when)
        rec.access_count += 1
        cell = rec.position.cell
        boosted = min(self.mask.value_at(cell) + self.params.gamma,
                      self.params.importance_max)
        if boosted != self.mask.floor:
            self.mask.cells[cell] = float(boosted)
        self.clock = float(when)
        return rec

    def field_amplitude_at(self, record: MemoryRecord) -> float:
        """|phi| at the record's cell; 0 once pruned away."""
        return abs(self.field.get(record.position.cell))
