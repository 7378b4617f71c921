"""Coupled ensembles: K agent fields exchanging amplitude linearly.

Each coupled step advances every agent by its own importance-weighted
diffusion/decay update plus dt * sum_j k_ij (phi_j - phi_i), with all
coupling terms read from pre-step snapshots (synchronous update).  The
coupling term is deliberately not divided by (1 + alpha*I): importance
shields a region from forgetting, not from hearing about other agents.

Agreement is measured by collective intelligence (mean pairwise cosine of
flattened fields) and sharing efficiency (fraction of foreign knowledge
sites detectable above a threshold).
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .embedding import LocalProvider, embed, project
from .errors import ConfigError
from .field_engine import FieldParams, _check_bounded
from .memory_store import MemoryStore
from .sparse_field import (
    SparseField,
    _field_codes_values,
    _gather,
    prune,
    sparse_evolve_mask,
    sparse_evolve_step,
    update_codes,
)

# Amplitude an agent must show at a foreign knowledge site to count as
# having received it; 10x the prune threshold keeps it above engine noise.
DETECTION_FACTOR = 10.0


class CouplingMatrix:
    """Symmetric non-negative coupling strengths with a zero diagonal."""

    def __init__(self, k: np.ndarray, topology: str = "custom"):
        k = np.asarray(k, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ConfigError(f"coupling matrix must be square, got shape {k.shape}")
        if np.any(k < 0):
            raise ConfigError("coupling strengths must be non-negative")
        if np.any(np.diagonal(k) != 0.0):
            raise ConfigError("coupling diagonal must be zero (no self-coupling)")
        if not np.array_equal(k, k.T):
            raise ConfigError("coupling matrix must be symmetric")
        if topology not in ("full", "ring", "custom"):
            raise ConfigError(f"unknown topology {topology!r}")
        self.k = k
        self.topology = topology

    @property
    def size(self) -> int:
        return self.k.shape[0]

    @classmethod
    def full(cls, n_agents: int, strength: float) -> "CouplingMatrix":
        k = np.full((n_agents, n_agents), float(strength))
        np.fill_diagonal(k, 0.0)
        return cls(k, "full")

    @classmethod
    def ring(cls, n_agents: int, strength: float) -> "CouplingMatrix":
        k = np.zeros((n_agents, n_agents))
        for i in range(n_agents):
            k[i, (i + 1) % n_agents] = strength
            k[(i + 1) % n_agents, i] = strength
        return cls(k, "ring")

    @classmethod
    def none(cls, n_agents: int) -> "CouplingMatrix":
        return cls(np.zeros((n_agents, n_agents)), "custom")


class AgentEnsemble:
    """K stores with commensurable grids plus their coupling matrix."""

    def __init__(self, agents: list[MemoryStore], coupling: CouplingMatrix):
        if not agents:
            raise ConfigError("ensemble needs at least one agent")
        if coupling.size != len(agents):
            raise ConfigError(
                f"coupling is {coupling.size}x{coupling.size} for {len(agents)} agents")
        first = agents[0]
        for a in agents[1:]:
            if a.params != first.params or a.seed != first.seed:
                raise ConfigError("all agents must share FieldParams and projection seed")
        self.agents = list(agents)
        self.coupling = coupling

    @classmethod
    def create(cls, n_agents: int, coupling: CouplingMatrix,
               params: FieldParams | None = None, seed: int = 0,
               provider=None, prune_every: int = 1) -> "AgentEnsemble":
        params = params if params is not None else FieldParams()
        provider = provider if provider is not None else LocalProvider()
        agents = [MemoryStore(params=params, provider=provider, seed=seed,
                              prune_every=prune_every)
                  for _ in range(n_agents)]
        return cls(agents, coupling)

    @property
    def params(self) -> FieldParams:
        return self.agents[0].params

    def __len__(self) -> int:
        return len(self.agents)


def coupling_stability_margin(params: FieldParams, coupling: CouplingMatrix) -> float:
    """dt * (4D/h^2 + lambda + max row sum of k); must stay below 2."""
    row_max = float(coupling.k.sum(axis=1).max()) if coupling.size else 0.0
    rate = 4.0 * params.diffusion / (params.spacing * params.spacing) + params.decay
    return params.dt * (rate + row_max)


def coupled_step(ensemble: AgentEnsemble) -> AgentEnsemble:
    """Advance every agent one dt with synchronous linear coupling.

    Agents with an all-zero coupling row take exactly the single-agent code
    path, so a k=0 ensemble evolves bit-identically to independent stores.
    Coupling contributions are summed in value order, which makes relabeled
    ensembles produce bitwise-permuted fields.
    """
    params = ensemble.params
    margin = coupling_stability_margin(params, ensemble.coupling)
    if margin >= 2.0:
        raise ConfigError(
            f"coupled step unstable: dt*(4D/h^2 + decay + max coupling row) = "
            f"{margin:.3g} >= 2")
    kmat = ensemble.coupling.k
    n = params.grid_size
    snaps = [_field_codes_values(a.field) for a in ensemble.agents]
    new_fields: list[SparseField] = []
    for i, agent in enumerate(ensemble.agents):
        own = sparse_evolve_step(agent.field, agent.mask, params)
        partners = [j for j in range(len(ensemble.agents)) if kmat[i, j] > 0.0]
        if not partners:
            new_fields.append(own)
            continue
        region = update_codes(agent.field)
        for j in partners:
            region = np.union1d(region, snaps[j][0])
        phi_i = _gather(snaps[i][0], snaps[i][1], region)
        contribs = np.empty((len(partners), len(region)))
        for row, j in enumerate(partners):
            phi_j = _gather(snaps[j][0], snaps[j][1], region)
            contribs[row] = kmat[i, j] * (phi_j - phi_i)
        contribs.sort(axis=0)  # canonical summation order across agent labels
        own_codes, own_vals = _field_codes_values(own)
        vals = _gather(own_codes, own_vals, region) + params.dt * contribs.sum(axis=0)
        _check_bounded(vals, own.time)
        keep = vals != 0.0
        new_fields.append(SparseField._from_arrays(region[keep], vals[keep], n, own.time))
    for agent, fresh in zip(ensemble.agents, new_fields):
        agent.field = fresh
        agent.mask = sparse_evolve_mask(agent.mask, params)
        agent.steps_done += 1
        if agent.prune_every and agent.steps_done % agent.prune_every == 0:
            agent.field, agent.mask, _ = prune(agent.field, agent.mask, params.prune_eps)
        agent.clock = max(agent.clock, agent.field.time)
    return ensemble


def _pair_stats(fa: SparseField, fb: SparseField) -> tuple[float, float]:
    """(cosine in [0,1], L2 difference norm) for two sparse fields."""
    ca, va = _field_codes_values(fa)
    cb, vb = _field_codes_values(fb)
    na2 = float(va @ va)
    nb2 = float(vb @ vb)
    if na2 == 0.0 and nb2 == 0.0:
        return 1.0, 0.0
    if na2 == 0.0 or nb2 == 0.0:
        return 0.0, math.sqrt(na2 + nb2)
    _, ia, ib = np.intersect1d(ca, cb, assume_unique=True, return_indices=True)
    dot = float(va[ia] @ vb[ib])
    cos = dot / math.sqrt(na2 * nb2)
    diff = math.sqrt(max(0.0, na2 + nb2 - 2.0 * dot))
    return max(0.0, min(1.0, cos)), diff


def collective_intelligence(ensemble: AgentEnsemble) -> float:
    """Mean pairwise cosine between flattened fields, in [0, 1].

    Two empty fields agree perfectly (1); an empty field against a nonzero
    one contributes 0; negative cosines floor at 0.
    """
    k = len(ensemble.agents)
    if k < 2:
        raise ConfigError("collective intelligence needs at least 2 agents")
    cosines = [_pair_stats(ensemble.agents[i].field, ensemble.agents[j].field)[0]
               for i in range(k) for j in range(i + 1, k)]
    return math.fsum(cosines) / len(cosines)


def max_pairwise_diff(ensemble: AgentEnsemble) -> float:
    k = len(ensemble.agents)
    return max(_pair_stats(ensemble.agents[i].field, ensemble.agents[j].field)[1]
               for i in range(k) for j in range(i + 1, k))


def sharing_efficiency(ensemble: AgentEnsemble,
                       knowledge_items: list[tuple[str, int]],
                       threshold: float | None = None) -> float | None:
    """Fraction of (item, non-origin agent) pairs detectable above threshold.

    An item counts as transferred to an agent when that agent's field
    magnitude at the item's projected cell exceeds the threshold (default
    10x the prune epsilon).  None when there are no non-origin pairs.
    """
    params = ensemble.params
    if threshold is None:
        threshold = DETECTION_FACTOR * params.prune_eps
    provider = ensemble.agents[0].provider
    seed = ensemble.agents[0].seed
    pairs = 0
    hits = 0
    for text, origin in knowledge_items:
        cell = project(embed(provider, text), seed, params.grid_size).cell
        for idx, agent in enumerate(ensemble.agents):
            if idx == origin:
                continue
            pairs += 1
            if abs(agent.field.get(cell)) > threshold:
                hits += 1
    if pairs == 0:
        return None
    return hits / pairs


@dataclass(frozen=True)
class ScenarioRow:
    step: int
    ci: float
    max_pairwise_diff: float
    active_cells_total: int


@dataclass
class ScenarioReport:
    n_agents: int
    topology: str
    coupling_strength: float
    rows: list[ScenarioRow] = dc_field(default_factory=list)
    final_ci: float = 0.0
    efficiency: float | None = None
    steps_to_convergence: int | None = None
    converged: bool = False
    wall_time_s: float = 0.0

    def trace(self) -> list[tuple[int, float, float, int]]:
        return [(r.step, r.ci, r.max_pairwise_diff, r.active_cells_total)
                for r in self.rows]


_NOUNS = ("ledger harbor furnace orchard compass quarry beacon plaza "
          "archive turbine meadow cistern gable trellis forge lagoon").split()
_VERBS = ("tracks stores routes filters heats maps signals records "
          "splits merges shields anchors").split()


def run_scenario(n_agents: int, topology: str = "full", coupling_k: float = 0.05,
                 items_per_agent: int = 3, max_steps: int = 2000,
                 target_ci: float = 0.99, params: FieldParams | None = None,
                 seed: int = 0, check_every: int = 1) -> ScenarioReport:
    """Inject distinct items per agent, couple until agreement or step cap.

    Emits one row per checked step (collective intelligence, max pairwise
    field difference, total active cells) plus the final sharing efficiency
    and wall time.  Failure to reach target_ci is reported via
    converged=False, not an exception.
    """
    if not 2 <= n_agents <= 16:
        raise ConfigError(f"scenario supports 2..16 agents, got {n_agents}")
    params = params if params is not None else FieldParams()
    if topology == "full":
        coupling = CouplingMatrix.full(n_agents, coupling_k)
    elif topology == "ring":
        coupling = CouplingMatrix.ring(n_agents, coupling_k)
    else:
        raise ConfigError(f"scenario topology must be full or ring, got {topology!r}")
    ensemble = AgentEnsemble.create(n_agents, coupling, params=params, seed=seed)
    rng = random.Random(seed)
    items: list[tuple[str, int]] = []
    for a, agent in enumerate(ensemble.agents):
        for i in range(items_per_agent):
            text = (f"{rng.choice(_NOUNS)} {rng.choice(_VERBS)} "
                    f"{rng.choice(_NOUNS)} item {a}-{i}")
            agent.inject(text, importance=1.0, when=0.0)
            items.append((text, a))
    report = ScenarioReport(n_agents=n_agents, topology=topology,
                            coupling_strength=coupling_k)
    start = time.perf_counter()
    for step in range(1, max_steps + 1):
        coupled_step(ensemble)
        if step % check_every and step != max_steps:
            continue
        ci = collective_intelligence(ensemble)
        diff = max_pairwise_diff(ensemble)
        cells = sum(a.field.active_count for a in ensemble.agents)
        report.rows.append(ScenarioRow(step, ci, diff, cells))
        if ci >= target_ci:
            report.steps_to_convergence = step
            report.converged = True
            break
    report.wall_time_s = time.perf_counter() - start
    report.final_ci = report.rows[-1].ci if report.rows else 1.0
    report.efficiency = sharing_efficiency(ensemble, items)
    return report
