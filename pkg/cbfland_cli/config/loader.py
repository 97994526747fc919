#!/usr/bin/env python3
"""
Configuration Loader for cbfland

Loads application settings from settings.json into Pydantic models. Scenario
files are handled separately by config.scenario.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator


class LoggingConfig(BaseModel):
    """Logging configuration."""
    level: str = Field(default="WARNING")
    format: str = Field(default="console", description="json or console")
    file_enabled: bool = Field(default=False)
    console_enabled: bool = Field(default=True)
    max_file_size: str = Field(default="10MB")
    backup_count: int = Field(default=5, ge=0)
    log_dir: str = Field(default="logs")

    @field_validator("level")
    @classmethod
    def validate_level(cls, v):
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of: {valid_levels}")
        return v.upper()

    @field_validator("format")
    @classmethod
    def validate_format(cls, v):
        if v not in ("json", "console"):
            raise ValueError("Log format must be 'json' or 'console'")
        return v


class OutputConfig(BaseModel):
    """Result file configuration."""
    base_dir: str = Field(default="output")
    float_format: str = Field(default=".17g", description="format spec for floats in CSV files")
    write_attitude: bool = Field(default=True, description="attitude.csv for full-dynamics runs")
    write_margins: bool = Field(default=True, description="margins.csv with QP row margins")
    write_landing_errors: bool = Field(default=True)


class SimulationConfig(BaseModel):
    """Run-time behaviour of the simulator."""
    progress_every: int = Field(default=200, gt=0, description="ticks between progress log lines")


class ValidationConfig(BaseModel):
    """Sample counts of the built-in validation suites."""
    gradient_points: int = Field(default=1000, gt=0)
    qp_instances: int = Field(default=100, gt=0)
    shaping_samples: int = Field(default=50, gt=0)
    rotation_samples: int = Field(default=100, gt=0)
    max_pairs_n: int = Field(default=10, ge=2)
    seed: int = Field(default=20240601)
    fd_step: float = Field(default=1e-6, gt=0)
    gradient_rel_tol: float = Field(default=1e-5, gt=0)
    oracle_tol: float = Field(default=1e-6, gt=0)
    kkt_tol: float = Field(default=1e-8, gt=0)


class SweepConfig(BaseModel):
    max_workers: int = Field(default=4, ge=1, le=64)


class CbfLandSettings(BaseModel):
    """Main cbfland configuration model."""
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    validation: ValidationConfig = Field(default_factory=ValidationConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)


class ConfigLoader:
    """Loads and manages cbfland configuration."""

    def __init__(self, config_dir: Optional[Path] = None):
        """Initialize the config loader.

        Args:
            config_dir: Directory containing settings.json. Defaults to the
                package's config directory.
        """
        self.config_dir = Path(config_dir) if config_dir is not None else Path(__file__).parent
        self.settings_file = self.config_dir / "settings.json"

    def load_settings_json(self) -> Dict[str, Any]:
        """Load settings from settings.json file."""
        if not self.settings_file.exists():
            return {}

        try:
            with open(self.settings_file, "r", encoding="utf-8") as f:
                return json.load(f)
        except (json.JSONDecodeError, IOError) as e:
            raise ValueError(f"Error loading settings.json: {e}")

    def load_config(self, overrides: Optional[Dict[str, Any]] = None) -> CbfLandSettings:
        """Load complete configuration; overrides are merged over the file."""
        try:
            merged = _merge_configs(self.load_settings_json(), overrides or {})
            return CbfLandSettings(**merged)
        except Exception as e:
            raise ValueError(f"Failed to load configuration: {e}")

    def validate_config(self, config: CbfLandSettings) -> List[str]:
        """Validate configuration and return list of issues."""
        issues = []

        output_dir = Path(config.output.base_dir)
        if output_dir.exists() and not output_dir.is_dir():
            issues.append(f"Output base_dir is not a directory: {output_dir}")

        if config.logging.file_enabled:
            log_dir = Path(config.logging.log_dir)
            try:
                log_dir.mkdir(parents=True, exist_ok=True)
            except OSError as e:
                issues.append(f"Cannot create log directory: {e}")

        try:
            format(0.1, config.output.float_format)
        except ValueError:
            issues.append(f"Invalid float format: {config.output.float_format!r}")

        return issues


def _merge_configs(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge two configuration dictionaries."""
    result = base.copy()
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = _merge_configs(result[key], value)
        else:
            result[key] = value
    return result


# Global config loader instance
_config_loader: Optional[ConfigLoader] = None
_cached_config: Optional[CbfLandSettings] = None


def get_config_loader(config_dir: Optional[Path] = None) -> ConfigLoader:
    """Get or create the global config loader instance."""
    global _config_loader
    if _config_loader is None or config_dir is not None:
        _config_loader = ConfigLoader(config_dir)
    return _config_loader


def load_config(config_dir: Optional[Path] = None, force_reload: bool = False) -> CbfLandSettings:
    """Load configuration using the global config loader."""
    global _cached_config

    if _cached_config is None or force_reload or config_dir is not None:
        loader = get_config_loader(config_dir)
        _cached_config = loader.load_config()

    return _cached_config


def validate_config(config: Optional[CbfLandSettings] = None) -> List[str]:
    """Validate configuration and return list of issues."""
    if config is None:
        config = load_config()

    loader = get_config_loader()
    return loader.validate_config(config)
