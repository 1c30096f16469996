"""
Configuration management for the Fourier-restricted flow laboratory.
Uses Pydantic settings for type-safe, environment-based configuration.
"""
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Laboratory settings loaded from environment variables or a .env file."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = "fourier-restricted-lab"
    app_version: str = "1.0.0"

    # Logging
    log_level: str = Field(
        default="INFO",
        description="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)"
    )
    log_file: str = Field(
        default="logs/fourier_lab.log",
        description="Log file path"
    )
    log_max_bytes: int = Field(
        default=10485760,  # 10MB
        description="Max log file size in bytes"
    )
    log_backup_count: int = Field(
        default=5,
        description="Number of log file backups to keep"
    )
    log_to_file: bool = Field(
        default=True,
        description="Also write logs to the rotating log file"
    )

    # Integrator defaults
    default_rtol: float = Field(
        default=1e-10,
        gt=0.0,
        description="Relative tolerance of the embedded Runge-Kutta pair"
    )
    default_atol: float = Field(
        default=1e-13,
        gt=0.0,
        description="Absolute tolerance of the embedded Runge-Kutta pair"
    )
    dt_min_factor: float = Field(
        default=1e-14,
        gt=0.0,
        description="Smallest accepted step as a fraction of the time scale"
    )
    max_steps: int = Field(
        default=1_000_000,
        gt=0,
        description="Step budget per trajectory"
    )
    blowup_threshold: float = Field(
        default=1e6,
        gt=0.0,
        description="Norm value at which a run is stopped as blowing up"
    )

    # Symmetry and diagnostics
    symmetry_tol: float = Field(
        default=1e-10,
        gt=0.0,
        description="Relative tolerance used when classifying symmetries"
    )
    saturation_fraction: float = Field(
        default=1e-3,
        gt=0.0,
        lt=1.0,
        description="E_N/E_0 above which the truncation is considered saturated"
    )
    default_gamma: float = Field(
        default=0.1,
        gt=0.0,
        description="Exponent of the Lyapunov functional reported in run tables"
    )
    golden_tol: float = Field(
        default=1e-10,
        gt=0.0,
        description="Tolerance of the golden-section search for the blowup bound"
    )
    lyapunov_scan_shells: int = Field(
        default=200,
        gt=0,
        description="Shells scanned when computing the dissipation constant"
    )

    # Lattice
    lattice_int_bits: int = Field(
        default=128,
        ge=64,
        description="Signed integer capacity enforced on lattice arithmetic"
    )

    # Output
    output_dir: str = Field(
        default="runs",
        description="Default directory for CSV/JSON outputs"
    )
    jobs: int = Field(
        default=1,
        ge=1,
        description="Maximum worker processes for parameter sweeps"
    )
    seed: Optional[int] = Field(
        default=None,
        description="Seed for randomized sweeps (None draws fresh entropy)"
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"log_level must be one of {valid_levels}")
        return v.upper()


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """
    Get laboratory settings singleton.

    Returns:
        Settings: Settings instance
    """
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reload_settings() -> Settings:
    """
    Reload settings from environment.

    Returns:
        Settings: Fresh settings instance
    """
    global _settings
    _settings = Settings()
    return _settings
