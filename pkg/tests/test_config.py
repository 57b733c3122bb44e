import numpy as np
import pytest

from conftest import MEDIUM_MAZE
from src.Config.Config import Config, ConfigError
from src.FB.FbTrainer import RepTrainConfig
from src.Hierarchy.PolicyTrainer import PolicyTrainConfig
from src.utils.logger import get_logger, init_logger
from src.utils.seeding import SEED_ENV_VAR, derived_rng, master_seed, stage_seed


@pytest.fixture
def config():
    config = Config.default()
    config["maze"] = MEDIUM_MAZE
    return config


def test_defaults_validate(config):
    config.validate()
    assert config.get_value("training.latent_dim") == 24
    assert config.get_value("policy.advantage") == "proxy"
    assert config.get_value("evaluation.episodes") == 50


def test_shipped_config_matches_defaults():
    shipped = Config.from_file(MEDIUM_MAZE.replace("maze_medium.json", "config.yaml"), default_first=False)
    assert shipped == Config.default()


def test_partial_file_keeps_defaults(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("seed: 7\ntraining:\n  latent_dim: 8\n")
    config = Config.from_file(str(path))
    assert config["seed"] == 7
    assert config.get_value("training.latent_dim") == 8
    assert config.get_value("training.batch_size") == 32


def test_write_read_round_trip(tmp_path, config):
    config.set_value("policy.hidden", [16, 16])
    path = str(tmp_path / "config.yaml")
    config.write_config(path)
    loaded = Config.from_file(path, default_first=False)
    assert loaded == config
    assert loaded.digest() == config.digest()


def test_digest_tracks_values(config):
    digest = config.digest()
    assert len(digest) == 64
    assert Config(config).digest() == digest
    config.set_value("training.lr", 1e-3)
    assert config.digest() != digest


def test_set_value_creates_sections():
    config = Config()
    config.set_value("extra.key", 3)
    config.set_value("flat", 1)
    assert config == {"extra": {"key": 3}, "flat": 1}
    assert config.get_value("flat") == 1


@pytest.mark.parametrize("key, value, message", [
    ("training.expectile", 1.0, "training.expectile"),
    ("training.batch_size", 0, "must be positive"),
    ("dataset.n_traj", -1, "dataset.n_traj"),
    ("policy.advantage", "other", "policy.advantage"),
    ("training.query_p_cur", 1.5, "probability"),
    ("training.hidden", [64, 0], "training.hidden"),
    ("policy.adv_clip", 0.0, "policy.adv_clip"),
    ("dataset.start", "corner", "dataset.start"),
    ("training.lr", "fast", "malformed"),
])
def test_invalid_values(config, key, value, message):
    config.set_value(key, value)
    with pytest.raises(ConfigError, match=message):
        config.validate()


def test_missing_key(config):
    del config["policy"]["beta_low"]
    with pytest.raises(ConfigError, match="missing config key"):
        config.validate()


def test_missing_maze_file(config, tmp_path):
    config["maze"] = str(tmp_path / "nowhere.json")
    with pytest.raises(ConfigError, match="does not exist"):
        config.validate()
    config.validate(check_files=False)


def test_stage_configs(config):
    rep = RepTrainConfig.from_config(config, seed=5)
    assert (rep.epochs, rep.steps_per_epoch, rep.batch_size) == (50, 1000, 32)
    assert (rep.expectile, rep.orthonorm_coeff, rep.query_p_cur, rep.seed) == (0.7, 1e-4, 0.2, 5)
    policy = PolicyTrainConfig.from_config(config, seed=6)
    assert policy.hidden == (64, 64)
    assert (policy.awr.beta_low, policy.awr.beta_high, policy.awr.adv_clip) == (3.0, 0.1, 5.0)
    assert policy.advantage == "proxy"


def test_master_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    assert master_seed(3) == 3
    monkeypatch.setenv(SEED_ENV_VAR, "42")
    assert master_seed(3) == 42
    monkeypatch.setenv(SEED_ENV_VAR, " ")
    assert master_seed(3) == 3


def test_stage_seeds():
    seeds = {stage: stage_seed(0, stage) for stage in ("data", "rep", "low", "high", "eval")}
    assert len(set(seeds.values())) == 5
    assert stage_seed(0, "rep") == seeds["rep"]
    assert stage_seed(1, "rep") != seeds["rep"]
    assert all(0 <= seed < 2 ** 64 for seed in seeds.values())


def test_derived_generators():
    a = derived_rng(1, 2).random(4)
    np.testing.assert_array_equal(a, derived_rng(1, 2).random(4))
    assert not np.array_equal(a, derived_rng(1, 3).random(4))


def test_logger_writes_file(tmp_path):
    path = tmp_path / "run.log"
    logger = init_logger(str(path), level="info")
    logger.debug("hidden line")
    logger.info("visible line")
    for handler in logger.handlers:
        handler.flush()
    text = path.read_text()
    assert "visible line" in text
    assert "hidden line" not in text
    assert get_logger() is logger
    init_logger(level="warning")
