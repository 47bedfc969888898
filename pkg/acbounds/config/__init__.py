"""Configuration management for acbounds."""
from .environment import load_environment, logfire_token_present
from .read_config import MODE_PRESETS, RunConfig, build_run_config, load_config

__all__ = ['MODE_PRESETS', 'RunConfig', 'build_run_config', 'load_config', 'load_environment', 'logfire_token_present']
