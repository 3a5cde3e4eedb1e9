import logging
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from execution.stopping_criteria import TrackingConfig
from geometry.sphere import SmoothingConfig
from managers.training_manager import TrainConfig
from model.tracto_transformer import ModelConfig
from phantom.phantom_generator import PhantomSpec
from utils.errors import ConfigError, InvalidArgumentError
from utils.helpers import deep_merge

SECTIONS = ("logging", "sphere", "smoothing", "preprocessing", "streamlines", "model",
            "training", "tracking", "phantom", "paths")

DEFAULT_PATHS = {
    "output_dir": "output",
    "dwi": "dwi.nii",
    "bvals": "bvals",
    "bvecs": "bvecs",
    "wm_mask": "wm_mask.nii",
    "fa": "fa.nii",
    "reference": "reference.tck",
    "ground_truth": "ground_truth",
    "checkpoint": "model.ttrk",
    "metrics_log": "metrics.csv",
    "tractogram": "output.tck",
}


@dataclass(frozen=True)
class PreprocessConfig:
    n_directions: int = 100
    sh_order: Optional[int] = None

    def validate(self) -> "PreprocessConfig":
        if self.n_directions < 2:
            raise InvalidArgumentError("preprocessing.n_directions must be >= 2")
        if self.sh_order is not None and (self.sh_order < 0 or self.sh_order % 2):
            raise InvalidArgumentError(f"preprocessing.sh_order must be a non-negative even number, got {self.sh_order}")
        return self


def _section(cfg: dict, name: str) -> dict:
    value = cfg.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    return dict(value)


def _typed(cls, values: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys in config section '{name}': {sorted(unknown)}")
    return cls(**values)


@dataclass
class RunConfig:
    """
    Every typed setting of one run: built-in defaults, then the YAML file, then CLI flags.
    Cross-section values (K, input channels, step size, seed, ablation switches) are
    propagated so the model, training, tracking and phantom settings agree.
    """
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    preprocessing: PreprocessConfig = field(default_factory=PreprocessConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    paths: dict = field(default_factory=lambda: dict(DEFAULT_PATHS))
    log_level: str = "INFO"
    log_file: Optional[str] = None
    threads: int = 1

    @property
    def step_size(self) -> float:
        return self.tracking.step_size

    @classmethod
    def from_sources(cls, file_cfg: dict = None, overrides: dict = None) -> "RunConfig":
        cfg = deep_merge(file_cfg or {}, overrides or {})
        unknown = set(cfg) - set(SECTIONS) - {"seed", "threads"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")

        log_cfg = _section(cfg, "logging")
        sphere_cfg = _section(cfg, "sphere")
        k = int(sphere_cfg.pop("k", 724))
        if sphere_cfg:
            raise ConfigError(f"unknown keys in config section 'sphere': {sorted(sphere_cfg)}")

        smoothing = _typed(SmoothingConfig, _section(cfg, "smoothing"), "smoothing").validate()
        preprocessing = _typed(PreprocessConfig, _section(cfg, "preprocessing"), "preprocessing").validate()

        streamline_cfg = _section(cfg, "streamlines")
        step_size = streamline_cfg.pop("step_size", None)
        if streamline_cfg:
            raise ConfigError(f"unknown keys in config section 'streamlines': {sorted(streamline_cfg)}")

        seed = cfg.get("seed")
        training_values = _section(cfg, "training")
        if seed is not None:
            training_values["seed"] = seed
        try:
            training = TrainConfig.from_dict(training_values)
        except InvalidArgumentError as e:
            raise ConfigError(str(e)) from e

        model_values = _section(cfg, "model")
        preset = model_values.pop("preset", "toy")
        model_values.update(k=k, g_in=preprocessing.n_directions, use_cnn3d=training.use_cnn3d,
                            max_len=training.max_len, seed=training.seed)
        try:
            model = ModelConfig.preset(preset, **model_values)
        except TypeError as e:
            raise ConfigError(f"bad model config: {e}") from e

        tracking_values = _section(cfg, "tracking")
        if step_size is not None:
            tracking_values.setdefault("step_size", step_size)
        if seed is not None:
            tracking_values["rng_seed"] = seed
        try:
            tracking = TrackingConfig.from_dict(tracking_values)
        except TypeError as e:
            raise ConfigError(f"bad tracking config: {e}") from e

        phantom_values = _section(cfg, "phantom")
        phantom_values.setdefault("step_size", tracking.step_size)
        if seed is not None:
            phantom_values["rng_seed"] = seed
        try:
            phantom = PhantomSpec.from_dict(phantom_values)
        except TypeError as e:
            raise ConfigError(f"bad phantom config: {e}") from e

        paths = dict(DEFAULT_PATHS)
        path_values = _section(cfg, "paths")
        unknown_paths = set(path_values) - set(DEFAULT_PATHS)
        if unknown_paths:
            raise ConfigError(f"unknown keys in config section 'paths': {sorted(unknown_paths)}")
        paths.update({key: value for key, value in path_values.items() if value is not None})

        run = cls(smoothing=smoothing, preprocessing=preprocessing, model=model, training=training,
                  tracking=tracking, phantom=phantom, paths=paths,
                  log_level=str(log_cfg.get("level", "INFO")), log_file=log_cfg.get("file"),
                  threads=int(cfg.get("threads") or 1))
        logging.debug(f"Run config: model={model.to_dict()} training={training.to_dict()} "
                      f"tracking={tracking.to_dict()}")
        return run

    def with_ablation(self, use_cnn3d: bool = True, use_reverse_aug: bool = True,
                      use_smooth_labels: bool = True) -> "RunConfig":
        training = replace(self.training, use_cnn3d=use_cnn3d, use_reverse_aug=use_reverse_aug,
                           use_smooth_labels=use_smooth_labels)
        return replace(self, training=training, model=replace(self.model, use_cnn3d=use_cnn3d))
