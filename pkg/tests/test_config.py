"""Config layering: defaults, file, environment, explicit overrides."""

import json

import pytest

from memfield.config import Config, ENV_VARS, load_config, parse_weights
from memfield.embedding import LocalProvider, RemoteProvider
from memfield.errors import ConfigError
from memfield.field_engine import FieldParams
from memfield.retrieval import RetrievalWeights


def write_config(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return str(path)


class TestLayering:
    def test_defaults(self):
        cfg = load_config(env={})
        assert cfg.grid_size == 128
        assert cfg.dt == 0.1
        assert cfg.provider == "local"
        assert cfg.weights is None
        assert cfg.snapshot is None
        assert cfg.field_params() == FieldParams()

    def test_file_layer(self, tmp_path):
        path = write_config(tmp_path, {"grid_size": 64, "dt": 0.2,
                                       "snapshot": "mem.fmem"})
        cfg = load_config(path, env={})
        assert cfg.grid_size == 64
        assert cfg.dt == 0.2
        assert cfg.snapshot == "mem.fmem"
        assert cfg.diffusion == 0.02

    def test_env_layer(self):
        env = {"EMBED_ENDPOINT": "http://e.test/v1", "EMBED_MODEL": "m1",
               "EMBED_API_KEY": "sk-x", "EMBED_TIMEOUT_MS": "1500"}
        cfg = load_config(env=env)
        assert cfg.endpoint == "http://e.test/v1"
        assert cfg.model == "m1"
        assert cfg.api_key == "sk-x"
        assert cfg.timeout_ms == 1500.0
        assert cfg.provider == "remote"

    def test_flags_beat_env(self):
        env = {"EMBED_ENDPOINT": "http://env.test", "EMBED_MODEL": "env-model"}
        cfg = load_config(env=env, overrides={"model": "flag-model"})
        assert cfg.model == "flag-model"
        assert cfg.endpoint == "http://env.test"

    def test_env_beats_file(self, tmp_path):
        path = write_config(tmp_path, {"endpoint": "http://file.test",
                                       "model": "file-model", "provider": "remote"})
        cfg = load_config(path, env={"EMBED_ENDPOINT": "http://env.test"})
        assert cfg.endpoint == "http://env.test"
        assert cfg.model == "file-model"

    def test_flags_beat_file(self, tmp_path):
        path = write_config(tmp_path, {"dt": 0.2, "grid_size": 64})
        cfg = load_config(path, env={}, overrides={"dt": 0.05})
        assert cfg.dt == 0.05
        assert cfg.grid_size == 64

    def test_none_overrides_are_ignored(self):
        cfg = load_config(env={}, overrides={"dt": None, "grid_size": None})
        assert cfg.dt == 0.1

    def test_env_var_names(self):
        assert set(ENV_VARS) == {"EMBED_ENDPOINT", "EMBED_MODEL",
                                 "EMBED_API_KEY", "EMBED_TIMEOUT_MS"}


class TestValidation:
    def test_unknown_file_key(self, tmp_path):
        path = write_config(tmp_path, {"grid_sze": 64})
        with pytest.raises(ConfigError, match="grid_sze"):
            load_config(path, env={})

    def test_unknown_flag_key(self):
        with pytest.raises(ConfigError, match="unknown setting"):
            load_config(env={}, overrides={"velocity": 3})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(str(tmp_path / "absent.json"), env={})

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(str(path), env={})

    def test_non_object_json(self, tmp_path):
        path = tmp_path / "arr.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="JSON object"):
            load_config(str(path), env={})

    def test_non_numeric_value(self):
        with pytest.raises(ConfigError, match="dt"):
            load_config(env={}, overrides={"dt": "fast"})

    def test_cfl_violation_fails_fast(self):
        with pytest.raises(ConfigError, match="dt"):
            load_config(env={}, overrides={"dt": 50.0})

    def test_bad_weight_sum_rejected_at_load(self):
        with pytest.raises(ConfigError):
            load_config(env={}, overrides={"weights": "0.5,0.5,0.5,0.5"})

    def test_bad_provider_kind(self):
        with pytest.raises(ConfigError, match="provider"):
            load_config(env={}, overrides={"provider": "psychic"})

    def test_bad_timeout(self):
        with pytest.raises(ConfigError, match="timeout"):
            load_config(env={}, overrides={"timeout_ms": -5})


class TestWeightsParsing:
    def test_baseline_string(self):
        assert parse_weights("1,0,0,0") == (1.0, 0.0, 0.0, 0.0)

    def test_spaces_tolerated(self):
        assert parse_weights("0.6, 0.15, 0.15, 0.1") == (0.6, 0.15, 0.15, 0.1)

    def test_wrong_arity(self):
        with pytest.raises(ConfigError, match="4"):
            parse_weights("0.5,0.5")

    def test_non_numeric(self):
        with pytest.raises(ConfigError):
            parse_weights("a,b,c,d")

    def test_sum_violation(self):
        with pytest.raises(ConfigError):
            parse_weights("0.9,0.9,0.1,0.1")

    def test_weights_list_in_file(self, tmp_path):
        path = write_config(tmp_path, {"weights": [1, 0, 0, 0]})
        cfg = load_config(path, env={})
        assert cfg.weights == (1.0, 0.0, 0.0, 0.0)
        assert cfg.retrieval_weights() == RetrievalWeights.baseline()


class TestFactories:
    def test_local_provider_default(self):
        p = load_config(env={}).make_provider()
        assert isinstance(p, LocalProvider)
        assert p.dimension == 256

    def test_local_provider_dimension_override(self):
        p = load_config(env={}, overrides={"dimension": 32}).make_provider()
        assert p.dimension == 32

    def test_remote_provider(self):
        cfg = load_config(env={"EMBED_ENDPOINT": "http://e.test", "EMBED_MODEL": "m",
                               "EMBED_API_KEY": "k", "EMBED_TIMEOUT_MS": "2000"})
        p = cfg.make_provider()
        assert isinstance(p, RemoteProvider)
        assert p.endpoint == "http://e.test"
        assert p.timeout == 2.0

    def test_remote_needs_endpoint_and_model(self):
        with pytest.raises(ConfigError, match="endpoint"):
            load_config(env={}, overrides={"provider": "remote"}).make_provider()

    def test_make_store_wiring(self):
        cfg = load_config(env={}, overrides={
            "grid_size": 32, "projection_seed": 9, "mask_floor": 0.2,
            "prune_every": 4, "evolution_interval": 10.0, "weights": "1,0,0,0"})
        store = cfg.make_store()
        assert store.params.grid_size == 32
        assert store.seed == 9
        assert store.mask.floor == 0.2
        assert store.prune_every == 4
        assert store.evolution_interval == 10.0
        assert store.default_weights == RetrievalWeights.baseline()

    def test_direct_construction_validates(self):
        with pytest.raises(ConfigError):
            Config(provider="nonsense")
