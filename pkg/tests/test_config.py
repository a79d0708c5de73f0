import pathlib

import pytest
from pytest_mock import MockerFixture

from trackscan import config
from trackscan.config import (
    ConfigError,
    RunConfig,
    read_config,
    resolve_config,
    save_run_config,
    write_config,
)
from trackscan.layers import Precision


@pytest.fixture()
def user_config(tmp_path: pathlib.Path, mocker: MockerFixture) -> pathlib.Path:
    path = tmp_path / "user" / "config.toml"
    mocker.patch.object(config, "get_config_path").return_value = path
    return path


class TestReadWrite:
    def test_missing_user_config_is_empty(self, user_config):
        assert read_config() == {}

    def test_unparsable_user_config_is_empty(self, user_config):
        user_config.parent.mkdir(parents=True)
        user_config.write_text("not = [valid")
        assert read_config() == {}

    def test_write_user_config(self, user_config):
        write_config({"pipeline": {"diff_threshold": 20}})
        assert user_config.is_file()
        assert read_config() == {"pipeline": {"diff_threshold": 20}}

    def test_explicit_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            read_config(tmp_path / "missing.toml")

    def test_explicit_invalid_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("[pipeline\n")
        with pytest.raises(ConfigError, match="TOML"):
            read_config(path)

    def test_unwritable_value_leaves_no_file(self, tmp_path):
        path = tmp_path / "run.toml"
        with pytest.raises(TypeError):
            write_config({"scene": {"width": None}}, path)
        assert not path.exists()


class TestResolve:
    def test_defaults(self, user_config):
        resolved = resolve_config()
        assert resolved == RunConfig()
        assert resolved.pipeline.diff_threshold == 10
        assert resolved.train.batch_size == 20

    def test_precedence(self, user_config, tmp_path):
        write_config({"pipeline": {"diff_threshold": 20, "min_blob_area": 5}})
        run_file = tmp_path / "run.toml"
        write_config({"pipeline": {"diff_threshold": 30}}, run_file)
        resolved = resolve_config(run_file, overrides={"train": {"epochs": 2}})
        assert resolved.pipeline.diff_threshold == 30
        assert resolved.pipeline.min_blob_area == 5
        assert resolved.train.epochs == 2

    def test_overrides_win(self, user_config, tmp_path):
        run_file = tmp_path / "run.toml"
        write_config({"pipeline": {"diff_threshold": 30}}, run_file)
        resolved = resolve_config(run_file, overrides={"pipeline": {"diff_threshold": 40}})
        assert resolved.pipeline.diff_threshold == 40

    def test_user_config_skipped(self, user_config):
        write_config({"pipeline": {"diff_threshold": 20}})
        assert resolve_config(use_user_config=False).pipeline.diff_threshold == 10

    def test_seed_applies_everywhere(self, user_config):
        resolved = resolve_config(seed=7)
        assert resolved.scene.master_seed == 7
        assert resolved.dataset.seed == 7
        assert resolved.train.seed == 7

    @pytest.mark.parametrize(
        "overrides",
        [
            {"pipeline": {"diff_threshold": 0}},
            {"pipeline": {"unknown": 1}},
            {"unknown": {}},
            {"augment": {"max_shift_fraction": 0.5}},
            {"train": {"precision": "half"}},
        ],
    )
    def test_invalid_values(self, user_config, overrides):
        with pytest.raises(ConfigError):
            resolve_config(overrides=overrides)


def test_saved_config_resolves_to_same(user_config, tmp_path):
    resolved = resolve_config(seed=3, overrides={"train": {"precision": "double"}})
    path = save_run_config(resolved, tmp_path / "out")
    assert path.name == "config.toml"
    again = resolve_config(path, use_user_config=False)
    assert again == resolved
    assert again.train.precision is Precision.DOUBLE
