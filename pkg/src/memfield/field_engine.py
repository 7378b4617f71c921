"""Dense-grid reference engine for the memory field.

The field amplitude lives on an N x N float64 grid and evolves under
forward Euler:

    phi <- phi + dt * ( D * lap(phi) / (1 + alpha*I)
                        - lambda * phi / (1 + alpha*I) + S )

with a 5-point Laplacian and zero-flux (mirror) edges.  The sparse engine
mirrors this update cell for cell; keep the arithmetic expression order in
the two paths identical so they agree bitwise.
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass

import numpy as np

from .errors import ConfigError, NumericalBlowup

# A cell whose magnitude passes this bound is treated as an exploding
# solution (CFL violation) instead of letting NaNs propagate silently.
BLOWUP_LIMIT = 1e12

# Importance is clamped at this multiple of the per-memory cap so the
# effective rates D/(1+alpha*I) stay bounded away from zero.
IMPORTANCE_CLAMP_FACTOR = 10.0

# Fraction of the stability bound used when dt is chosen automatically.
DT_SAFETY_FACTOR = 0.4


@dataclass(frozen=True)
class FieldParams:
    """Grid geometry and rate constants for field evolution.

    Defaults follow the reference configuration: 128 cells per side,
    D = 0.02, lambda = 0.02, dt = 0.1, alpha = 2.

    Pass check_stability=False to deliberately build an unstable
    configuration (e.g. to demonstrate divergence past the Euler bound);
    evolve_step still aborts with NumericalBlowup once values explode.
    """

    grid_size: int = 128
    diffusion: float = 0.02   # D, semantic area per unit time
    decay: float = 0.02       # lambda, 1/time
    dt: float = 0.1
    spacing: float = 1.0      # h, semantic distance per cell
    alpha: float = 2.0        # importance gain (dimensionless)
    beta: float = 0.01        # importance baseline decay, 1/time
    gamma: float = 0.5        # importance boost per access event
    sigma0: float = 2.0       # base injection spread, semantic distance
    prune_eps: float = 1e-6   # amplitude pruning threshold
    i_cap: float = 1.0        # per-memory importance cap
    check_stability: InitVar[bool] = True

    def __post_init__(self, check_stability: bool):
        if int(self.grid_size) != self.grid_size or self.grid_size < 8:
            raise ConfigError(f"grid_size must be an integer >= 8, got {self.grid_size}")
        for name in ("diffusion", "decay", "alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name in ("dt", "spacing", "sigma0", "prune_eps", "i_cap"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if check_stability:
            bound = max_stable_dt(self)
            if self.dt >= bound:
                raise ConfigError(
                    f"dt={self.dt} violates the stability bound "
                    f"h^2/(4D + lambda*h^2) = {bound:.6g}; choose dt below it "
                    f"(e.g. {DT_SAFETY_FACTOR * bound:.6g})"
                )

    @property
    def importance_max(self) -> float:
        """Hard clamp applied to the importance mask."""
        return IMPORTANCE_CLAMP_FACTOR * self.i_cap

    @classmethod
    def with_auto_dt(cls, **kwargs) -> "FieldParams":
        """Build params with dt at DT_SAFETY_FACTOR times the stability bound."""
        kwargs.pop("dt", None)
        d = kwargs.get("diffusion", cls.diffusion)
        lam = kwargs.get("decay", cls.decay)
        h = kwargs.get("spacing", cls.spacing)
        if d == 0 and lam == 0:
            raise ConfigError("no stability constraint with D = 0 and decay = 0; pass dt explicitly")
        bound = h * h / (4.0 * d + lam * h * h)
        return cls(dt=DT_SAFETY_FACTOR * bound, **kwargs)


def max_stable_dt(params: FieldParams | None = None, *, diffusion: float | None = None,
                  decay: float | None = None, spacing: float | None = None) -> float:
    """Largest stable forward-Euler step, h^2 / (4D + lambda*h^2).

    With D = 0 and lambda = 0 there is no constraint and +inf is returned.
    """
    if params is not None:
        d, lam, h = params.diffusion, params.decay, params.spacing
    else:
        d, lam, h = diffusion, decay, spacing
    if d == 0 and lam == 0:
        return math.inf
    return h * h / (4.0 * d + lam * h * h)


@dataclass
class DenseField:
    """Scalar field amplitude on the full grid plus accumulated sim time."""

    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ConfigError(f"field values must be a square 2D array, got shape {self.values.shape}")

    @classmethod
    def zeros(cls, grid_size: int) -> "DenseField":
        return cls(np.zeros((grid_size, grid_size)))

    @property
    def grid_size(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "DenseField":
        return DenseField(self.values.copy(), self.time)


@dataclass
class ImportanceMask:
    """Per-cell importance I(x, y) with a baseline floor I_min."""

    values: np.ndarray
    floor: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.floor < 0:
            raise ConfigError(f"mask floor must be non-negative, got {self.floor}")
        if np.any(self.values < self.floor):
            raise ConfigError("mask values must not drop below the floor")

    @classmethod
    def uniform(cls, grid_size: int, floor: float = 0.0) -> "ImportanceMask":
        return cls(np.full((grid_size, grid_size), float(floor)), floor)


def laplacian(field: DenseField, spacing: float) -> np.ndarray:
    """5-point Laplacian with zero-flux (mirror) closure at the edges.

    Mirror ghost cells make the total flux across the boundary zero, which
    is what lets pure diffusion conserve mass exactly.
    """
    v = field.values
    p = np.pad(v, 1, mode="edge")
    north = p[:-2, 1:-1]
    south = p[2:, 1:-1]
    west = p[1:-1, :-2]
    east = p[1:-1, 2:]
    # Term order matters: the sparse kernel repeats this exact expression.
    return (north + south + west + east - 4.0 * v) / (spacing * spacing)


def _check_bounded(values: np.ndarray, time: float) -> None:
    if not np.all(np.isfinite(values)) or np.max(np.abs(values)) > BLOWUP_LIMIT:
        raise NumericalBlowup(
            f"field magnitude exceeded {BLOWUP_LIMIT:g} at t={time:.6g}; "
            "dt is too large for these parameters"
        )


def evolve_step(field: DenseField, mask: ImportanceMask, params: FieldParams,
                source: np.ndarray | None = None) -> DenseField:
    """One forward-Euler update of the importance-weighted evolution equation.

    With alpha = 0 this degenerates to plain diffusion plus decay.  The
    source array, when given, is applied inside the same Euler step; the
    memory store instead writes injections directly into the field.
    """
    v = field.values
    lap = laplacian(field, params.spacing)
    denom = 1.0 + params.alpha * mask.values
    rate = (params.diffusion * lap) / denom - (params.decay * v) / denom
    if source is not None:
        rate = rate + source
    new = v + params.dt * rate
    t = field.time + params.dt
    _check_bounded(new, t)
    return DenseField(new, t)


def evolve_mask(mask: ImportanceMask, params: FieldParams,
                access_events: list[tuple[tuple[int, int], float]] = ()) -> ImportanceMask:
    """Decay the mask toward its floor, then apply access boosts.

    Every cell follows I <- max(floor, I*(1 - beta*dt)); each access event
    (cell, weight) then adds gamma*weight at its cell, clamped to the
    importance ceiling.
    """
    decayed = np.maximum(mask.floor, mask.values * (1.0 - params.beta * params.dt))
    for cell, weight in access_events:
        if weight < 0:
            raise ConfigError(f"access weight must be non-negative, got {weight}")
        decayed[cell] = min(decayed[cell] + params.gamma * weight, params.importance_max)
    return ImportanceMask(decayed, mask.floor)
