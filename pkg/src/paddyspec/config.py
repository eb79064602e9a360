"""Pipeline configuration: JSON file, explicit defaults, strict keys.

Precedence: built-in defaults < config file < PADDYSPEC_CACHE env var
(cache dir only) < command-line flags. Paths are used exactly as written
(relative paths resolve against the working directory), so identical runs
from identical trees produce byte-identical outputs.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .training import TrainConfig, TrainingError

CACHE_ENV_VAR = "PADDYSPEC_CACHE"


class ConfigError(ValueError):
    """Malformed configuration file or flag combination."""


@dataclass
class PathsConfig:
    data_root: str = "data"
    cache_dir: str = "cache"
    output_dir: str = "out"


@dataclass
class RegistrationConfig:
    target_count: int = 10000
    drop_fraction: float = 0.10
    drop_best: bool = False
    ransac_iters: int = 2000
    inlier_px: float = 3.0
    min_inliers: int = 10


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    calibration_session: str = ""
    training: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def train_config(self, **overrides) -> TrainConfig:
        """Training section with the pipeline seed folded in."""
        values = dataclasses.asdict(self.training)
        values["seed"] = self.seed
        values.update(overrides)
        try:
            return TrainConfig(**values)
        except TrainingError as exc:
            raise ConfigError(str(exc)) from exc

    def registration_params(self):
        from .registration import RansacParams, RegistrationParams
        r = self.registration
        return RegistrationParams(
            target_count=r.target_count,
            drop_fraction=r.drop_fraction,
            drop_best=r.drop_best,
            ransac=RansacParams(iters=r.ransac_iters, inlier_px=r.inlier_px,
                                min_inliers=r.min_inliers, seed=self.seed),
        )


def default_config() -> PipelineConfig:
    return PipelineConfig()


def config_to_dict(cfg: PipelineConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["training"].pop("seed")  # the pipeline seed is the single source
    return d


def _apply_section(obj, values: dict, section: str, skip: tuple[str, ...] = ()):
    allowed = {f.name for f in dataclasses.fields(obj)} - set(skip)
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {sorted(unknown)}; "
                          f"allowed: {sorted(allowed)}")
    for key, value in values.items():
        setattr(obj, key, value)


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    cfg = PipelineConfig()
    top_allowed = {"paths", "registration", "calibration_session", "training", "seed"}
    unknown = set(data) - top_allowed
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}; "
                          f"allowed: {sorted(top_allowed)}")
    if "paths" in data:
        _apply_section(cfg.paths, data["paths"], "paths")
    if "registration" in data:
        _apply_section(cfg.registration, data["registration"], "registration")
    if "training" in data:
        if "seed" in data["training"]:
            raise ConfigError("training.seed is not a key; set the top-level seed")
        _apply_section(cfg.training, data["training"], "training", skip=("seed",))
        cfg.training = TrainConfig(**dataclasses.asdict(cfg.training))  # re-validate
    if "calibration_session" in data:
        cfg.calibration_session = str(data["calibration_session"])
    if "seed" in data:
        cfg.seed = int(data["seed"])
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        return config_from_dict(data)
    except TrainingError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_config(config_path: str | None, seed: int | None = None,
                   input_mode: str | None = None,
                   env: dict | None = None) -> PipelineConfig:
    """Defaults, then file, then environment, then flags."""
    cfg = load_config(config_path) if config_path else default_config()
    env = os.environ if env is None else env
    cache_override = env.get(CACHE_ENV_VAR)
    if cache_override:
        cfg.paths.cache_dir = cache_override
    if seed is not None:
        cfg.seed = seed
    if input_mode is not None:
        if input_mode not in ("rgb", "rgb_ndvi"):
            raise ConfigError(f"--input-mode must be rgb or rgb_ndvi, got {input_mode}")
        cfg.training.input_mode = input_mode
    return cfg


def render_config(cfg: PipelineConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def write_resolved_config(cfg: PipelineConfig, path) -> None:
    """Echo the fully resolved configuration next to a command's outputs."""
    Path(path).write_text(render_config(cfg))
