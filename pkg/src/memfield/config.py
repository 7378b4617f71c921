"""Layered runtime configuration.

Precedence, highest first: command-line flags, environment variables
(EMBED_ENDPOINT, EMBED_MODEL, EMBED_API_KEY, EMBED_TIMEOUT_MS), a JSON
config file, built-in defaults.  Everything validates at load time so a
bad setup fails before any work starts.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Any, Mapping

from .embedding import LOCAL_DIM, REMOTE_DIM, LocalProvider, RemoteProvider
from .errors import ConfigError
from .field_engine import FieldParams
from .memory_store import MemoryStore
from .retrieval import RetrievalWeights

_FIELD_KEYS = ("grid_size", "diffusion", "decay", "dt", "spacing", "alpha",
               "beta", "gamma", "sigma0", "prune_eps", "i_cap")
_INT_KEYS = {"grid_size", "projection_seed", "prune_every", "dimension"}
_PROVIDER_KINDS = ("local", "remote")

ENV_VARS = {
    "EMBED_ENDPOINT": "endpoint",
    "EMBED_MODEL": "model",
    "EMBED_API_KEY": "api_key",
    "EMBED_TIMEOUT_MS": "timeout_ms",
}


@dataclass
class Config:
    grid_size: int = 128
    diffusion: float = 0.02
    decay: float = 0.02
    dt: float = 0.1
    spacing: float = 1.0
    alpha: float = 2.0
    beta: float = 0.01
    gamma: float = 0.5
    sigma0: float = 2.0
    prune_eps: float = 1e-6
    i_cap: float = 1.0
    weights: tuple[float, float, float, float] | None = None
    projection_seed: int = 0
    provider: str = "local"
    endpoint: str | None = None
    model: str | None = None
    api_key: str | None = None
    timeout_ms: float = 30000.0
    dimension: int | None = None
    evolution_interval: float | None = None
    mask_floor: float = 0.0
    prune_every: int = 1
    snapshot: str | None = None

    def __post_init__(self):
        if self.provider not in _PROVIDER_KINDS:
            raise ConfigError(
                f"provider must be one of {_PROVIDER_KINDS}, got {self.provider!r}")
        if self.timeout_ms <= 0:
            raise ConfigError(f"timeout_ms must be positive, got {self.timeout_ms}")
        self.field_params()
        self.retrieval_weights()

    def field_params(self) -> FieldParams:
        return FieldParams(**{k: getattr(self, k) for k in _FIELD_KEYS})

    def retrieval_weights(self) -> RetrievalWeights | None:
        if self.weights is None:
            return None
        return RetrievalWeights(*self.weights)

    def make_provider(self):
        if self.provider == "local":
            return LocalProvider(dimension=self.dimension or LOCAL_DIM)
        if not self.endpoint or not self.model:
            raise ConfigError(
                "remote provider needs an endpoint and a model; set "
                "--endpoint/--model, EMBED_ENDPOINT/EMBED_MODEL, or the config file")
        return RemoteProvider(self.endpoint, self.model, api_key=self.api_key,
                              dimension=self.dimension or REMOTE_DIM,
                              timeout=self.timeout_ms / 1000.0)

    def make_store(self, provider=None) -> MemoryStore:
        return MemoryStore(
            params=self.field_params(),
            provider=provider if provider is not None else self.make_provider(),
            seed=self.projection_seed,
            mask_floor=self.mask_floor,
            evolution_interval=self.evolution_interval,
            prune_every=self.prune_every,
            default_weights=self.retrieval_weights())


def parse_weights(text: str) -> tuple[float, float, float, float]:
    """Parse 'a,b,c,d' into a validated weight 4-tuple."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise ConfigError(
            f"weights need exactly 4 comma-separated values, got {len(parts)}")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"weights must be numbers: {exc}") from exc
    RetrievalWeights(*vals)
    return vals


def _read_config_file(path: str) -> dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _env_settings(env: Mapping[str, str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for var, key in ENV_VARS.items():
        if env.get(var):
            out[key] = env[var]
    if "endpoint" in out and "provider" not in out:
        out["provider"] = "remote"
    return out


_FLOAT_KEYS = set(_FIELD_KEYS) | {"timeout_ms", "evolution_interval", "mask_floor"}


def _coerce(key: str, value: Any) -> Any:
    if value is None or key not in _INT_KEYS and key not in _FLOAT_KEYS:
        return value
    try:
        return int(value) if key in _INT_KEYS else float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config value {key}={value!r} is not numeric") from exc


def load_config(config_file: str | None = None,
                env: Mapping[str, str] | None = None,
                overrides: Mapping[str, Any] | None = None) -> Config:
    """Merge defaults, config file, environment and explicit overrides."""
    if env is None:
        env = os.environ
    valid = {f.name for f in dataclasses.fields(Config)}
    merged: dict[str, Any] = {}
    for layer_name, layer in (("config file", _read_config_file(config_file) if config_file else {}),
                              ("environment", _env_settings(env)),
                              ("flags", dict(overrides) if overrides else {})):
        for key, value in layer.items():
            if key not in valid:
                raise ConfigError(
                    f"unknown setting {key!r} in {layer_name}; "
                    f"valid settings: {', '.join(sorted(valid))}")
            if value is not None:
                merged[key] = _coerce(key, value)
    if isinstance(merged.get("weights"), str):
        merged["weights"] = parse_weights(merged["weights"])
    elif isinstance(merged.get("weights"), (list, tuple)):
        merged["weights"] = parse_weights(",".join(str(v) for v in merged["weights"]))
    return Config(**merged)
