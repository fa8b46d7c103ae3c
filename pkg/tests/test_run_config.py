import pytest

from src.interface import ConfigError
from src.util.run_config import RunConfig, load_config

from conftest import FIXTURES


def test_defaults_cover_the_standard_grid():
    config = RunConfig()
    assert len(config.grid()) == 3 * 7
    assert config.estimator.bootstrap == 800
    assert config.train.stages[0] == (0.003, 30000)


def test_fixture_loads():
    config = load_config(FIXTURES / "tiny.toml")
    assert config.model.L == 4
    assert [p.tag() for p in config.grid()] == ["L4_l1_k2_dt0.4000_J1.0000_h1.0000"]
    assert config.run.seed == 7


def test_precedence_cli_over_env_over_file(monkeypatch):
    monkeypatch.setenv("HAN_SEED", "11")
    assert load_config(FIXTURES / "tiny.toml").run.seed == 11
    assert load_config(FIXTURES / "tiny.toml", {"run": {"seed": 12}}).run.seed == 12


def test_config_path_from_environment(monkeypatch):
    monkeypatch.setenv("HAN_CONFIG", str(FIXTURES / "tiny.toml"))
    assert load_config().model.L == 4


def test_config_errors(tmp_path, monkeypatch):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[model\nL = ")
    with pytest.raises(ConfigError):
        load_config(bad)
    empty_grid = tmp_path / "empty.toml"
    empty_grid.write_text("[model]\nks = []\n")
    with pytest.raises(ConfigError):
        load_config(empty_grid)
    monkeypatch.setenv("HAN_JOBS", "many")
    with pytest.raises(ConfigError):
        load_config()


def test_subsystem_larger_than_chain_is_a_config_error():
    config = load_config(overrides={"model": {"L": 4, "l_values": [4]}})
    with pytest.raises(ConfigError):
        config.grid()


def test_config_hash_ignores_scheduling():
    base = RunConfig()
    assert len(base.config_hash()) == 16
    assert base.model_copy(update={"run": base.run.model_copy(update={"jobs": 8})}).config_hash() == base.config_hash()
    assert base.model_copy(update={"run": base.run.model_copy(update={"seed": 1})}).config_hash() != base.config_hash()


def test_point_seeds(small_params):
    config = RunConfig()
    grid = config.grid()
    seeds = {config.point_seed(p) for p in grid}
    assert len(seeds) == len(grid)
    assert config.train_config(grid[0]).seed == config.point_seed(grid[0])


def test_prepare_creates_directories(tiny_config):
    tiny_config.prepare()
    assert tiny_config.paths.checkpoints.is_dir()
    assert tiny_config.stream_dir(tiny_config.grid()[0]).name == "L4_l1_k2_dt0.4000_J1.0000_h1.0000"


def test_checkpoint_path_depends_on_couplings(tiny_config):
    other = tiny_config.model_copy(deep=True)
    other.model.h = 2.0
    (first,), (second,) = tiny_config.grid(), other.grid()
    assert tiny_config.checkpoint_path(first) != other.checkpoint_path(second)
    assert other.checkpoint_path(second).name == "L4_l1_k2_dt0.4000_J1.0000_h2.0000.ckpt"
