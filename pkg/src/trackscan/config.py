import pathlib
import tomllib

import appdirs
import tomli_w
from pydantic import BaseModel, ConfigDict, ValidationError

from trackscan.datasets import AugmentConfig, DatasetSpec
from trackscan.inspection import PipelineConfig
from trackscan.report_files import NAME
from trackscan.scene import SceneConfig
from trackscan.training import TrainConfig

APP_NAME = NAME
CONFIG_FILE = "config.toml"


class ConfigError(ValueError):
    """Configuration file or value is invalid."""


class RunConfig(BaseModel):
    """All settings of a run, one section per concern."""

    model_config = ConfigDict(extra="forbid")

    scene: SceneConfig = SceneConfig()
    pipeline: PipelineConfig = PipelineConfig()
    dataset: DatasetSpec = DatasetSpec()
    augment: AugmentConfig = AugmentConfig()
    train: TrainConfig = TrainConfig()

    def with_seed(self, seed: int) -> "RunConfig":
        """Use one seed for rendering, dataset generation and training."""
        return self.model_copy(
            update={
                "scene": self.scene.model_copy(update={"master_seed": seed}),
                "dataset": self.dataset.model_copy(update={"seed": seed}),
                "train": self.train.model_copy(update={"seed": seed}),
            }
        )


def read_config(path: pathlib.Path | None = None) -> dict:
    """Read a configuration file.

    Without a path, the user configuration file is read; a missing or
    unparsable user file gives an empty configuration.

    Raises:
        ConfigError: if an explicitly given file is missing or invalid TOML.
    """
    if path is None:
        config_path = get_config_path()
        if config_path.is_file():
            try:
                with open(config_path, "rb") as f:
                    return tomllib.load(f)
            except (tomllib.TOMLDecodeError, UnicodeDecodeError):
                # error parsing TOML
                return {}
        else:
            return {}
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}") from exc
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"Config file {path} is not valid TOML: {exc}") from exc


def write_config(config: dict, path: pathlib.Path | None = None) -> None:
    """Write a configuration file, by default the user configuration file.

    Args:
        config: a dictionary containing the configuration.
        path: the file to write.
    """
    if path is None:
        create_config_dir()
        path = get_config_path()
    # make sure that TOML conversion works before opening file
    tomli_w.dumps(config)
    with open(path, "wb") as f:
        # correct TOML unicode handling requires writing bytes
        tomli_w.dump(config, f)


def get_config_path() -> pathlib.Path:
    """Get path of the user configuration file."""
    config_dir = pathlib.Path(appdirs.user_config_dir(APP_NAME))
    return config_dir / CONFIG_FILE


def create_config_dir() -> None:
    """Create configuration directory if necessary."""
    get_config_path().parent.mkdir(parents=True, exist_ok=True)


def _merge(base: dict, update: dict) -> dict:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def resolve_config(
    config_path: pathlib.Path | None = None,
    overrides: dict | None = None,
    seed: int | None = None,
    use_user_config: bool = True,
) -> RunConfig:
    """Merge built-in defaults, the user file, a run file and overrides.

    Later sources win. Overrides are nested per section, e.g.
    {"pipeline": {"diff_threshold": 20}}; a seed overrides all seeds.

    Raises:
        ConfigError: if a file cannot be read or a value is invalid.
    """
    settings = read_config() if use_user_config else {}
    if config_path is not None:
        settings = _merge(settings, read_config(config_path))
    if overrides:
        settings = _merge(settings, overrides)
    try:
        config = RunConfig.model_validate(settings)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from exc
    if seed is not None:
        config = config.with_seed(seed)
    return config


def save_run_config(config: RunConfig, out_dir: pathlib.Path) -> pathlib.Path:
    """Echo the resolved configuration into an output directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / CONFIG_FILE
    write_config(config.model_dump(mode="json"), path)
    return path
