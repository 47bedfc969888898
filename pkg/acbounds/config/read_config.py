"""Configuration handling for acbounds runs.

A config file is a flat YAML mapping of ``key: value`` pairs. Values are
layered: mode preset, then the file, then command-line flags.
"""

import math
import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from acbounds.exceptions import ConfigError, ValidationError as ValueCheckError
from acbounds.utils.validators import validate_positive

Mode = Literal['ci', 'paper']
Method = Literal['spectral', 'fixedpoint', 'both']

CANONICAL_GAUSSIAN_EXPONENT = math.pi

MODE_PRESETS: Dict[str, Dict[str, Any]] = {
    "ci": {"delta": 0.01, "lambda_step": 0.01},
    "paper": {"delta": 1.45e-3, "lambda_step": 0.001},
}


class RunConfig(BaseModel):
    """Everything a ``solve`` run depends on."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    weight: Literal['box', 'gaussian', 'tabulated'] = 'box'
    weight_file: Optional[Path] = None
    gaussian_exponent: float = Field(default=CANONICAL_GAUSSIAN_EXPONENT, gt=0)
    mode: Mode = 'ci'
    method: Method = 'spectral'
    delta: Optional[float] = Field(default=None, gt=0)
    eps_target: Optional[float] = Field(default=None, gt=0)
    lambda_step: float = Field(default=0.01, gt=0)
    radius: Optional[float] = Field(default=None, gt=0)
    radius_mode: Literal['auto', 'coarse', 'fine'] = 'auto'
    c_lb_prior: float = Field(default=0.0, ge=0)
    refine: bool = True
    k_scan: Literal['pruned', 'full'] = 'pruned'
    chunk_size: int = Field(default=25, ge=1)
    workers: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    fp_tol: float = Field(default=1e-12, gt=0)
    fp_max_iter: int = Field(default=100_000, ge=1)
    fp_relaxation: float = Field(default=1.0, gt=0, le=1)
    fp_restarts: int = Field(default=1, ge=1)
    out: Path = Path('results')
    logfire: bool = False

    @model_validator(mode='after')
    def _check_consistency(self) -> 'RunConfig':
        if (self.delta is None) == (self.eps_target is None):
            raise ValueError("Exactly one of 'delta' and 'eps_target' must be set")
        if self.weight == 'tabulated' and self.weight_file is None:
            raise ValueError("Tabulated weights need 'weight_file'")
        if self.weight != 'tabulated' and self.weight_file is not None:
            raise ValueError("'weight_file' is only used with the tabulated weight")
        if self.weight != 'gaussian' and self.gaussian_exponent != CANONICAL_GAUSSIAN_EXPONENT:
            raise ValueError("'gaussian_exponent' is only used with the gaussian weight")
        return self

    def identity(self) -> Dict[str, Any]:
        """Fields that determine the numbers in the report; hashed into the manifest."""
        return self.model_dump(mode='json', exclude={'out', 'workers', 'logfire', 'chunk_size'})


def load_config(config_path: Union[str, Path]) -> Dict[str, Any]:
    """Load a flat YAML config file.

    Args:
        config_path: Path to YAML configuration file

    Returns:
        Raw key/value pairs

    Raises:
        FileNotFoundError: If the config file doesn't exist
        ConfigError: If the file is empty, nested or malformed
    """
    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_path, 'r', encoding='utf-8') as f:
        try:
            config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Malformed config file {config_path}: {e}")

    if not config:
        raise ConfigError(f"Empty or invalid configuration file: {config_path}")
    if not isinstance(config, dict):
        raise ConfigError(f"Config file {config_path} must be a mapping of key: value pairs")
    nested = [key for key, value in config.items() if isinstance(value, (dict, list))]
    if nested:
        raise ConfigError(f"Config values must be scalars, got nested values for: {', '.join(map(str, nested))}")

    if config.get("weight_file"):
        weight_file = Path(config["weight_file"])
        if not weight_file.is_absolute():
            config["weight_file"] = str((config_path.parent / weight_file).resolve())
    return config


def build_run_config(
    file_values: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """Merge mode preset, config file values and flag overrides into a RunConfig.

    An explicit ``delta`` or ``eps_target`` from the file or the flags replaces
    the preset's δ; ``None`` overrides mean "not given".

    Raises:
        ConfigError: If the merged values do not validate
    """
    file_values = dict(file_values or {})
    overrides = {key: value for key, value in (overrides or {}).items() if value is not None}

    mode = overrides.get("mode", file_values.get("mode", "ci"))
    if mode not in MODE_PRESETS:
        raise ConfigError(f"Unknown mode {mode!r}; expected one of {', '.join(MODE_PRESETS)}")
    merged = dict(MODE_PRESETS[mode])

    explicit = {**file_values, **overrides}
    if "delta" in explicit or "eps_target" in explicit:
        merged.pop("delta")
    if "eps_target" in overrides and "delta" not in overrides:
        explicit.pop("delta", None)
    if "delta" in overrides and "eps_target" not in overrides:
        explicit.pop("eps_target", None)
    merged.update(explicit)

    for key in ("delta", "eps_target", "lambda_step", "radius"):
        if merged.get(key) is not None:
            try:
                validate_positive(merged[key], key)
            except ValueCheckError as e:
                raise ConfigError(str(e))

    try:
        return RunConfig(**merged)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}")
