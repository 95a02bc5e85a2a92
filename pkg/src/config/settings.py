"""
Application settings and configuration management
"""
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values
from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.utils.exceptions import ConfigFileError


class Settings(BaseSettings):
    """Run settings loaded from defaults, MDP_* environment variables and .env"""

    model_config = SettingsConfigDict(
        env_prefix="MDP_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Application Configuration
    log_level: str = Field("INFO")
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)

    # Mixture Configuration
    alpha: float = Field(3.0, gt=0)
    trunc: int = Field(10, ge=1)
    basis_count: int = Field(200, ge=0)
    occupancy_threshold: float = Field(1e-6, ge=0)

    # Prior Constants
    a_tau: float = Field(5.0, gt=0)
    b_tau: float = Field(0.5, gt=0)
    a_omega: float = Field(20.0, gt=0)
    b_omega: float = Field(0.5, gt=0)
    sigma_dof: Optional[float] = Field(None, gt=0)

    # Kernel Basis Configuration
    kernel: str = Field("literal", pattern="^(literal|gaussian-sq)$")
    bandwidth_mode: str = Field("mean", pattern="^(mean|mean-sq)$")
    bandwidth_subsample: int = Field(5000, ge=2)

    # Fitting Configuration
    warm_count: int = Field(200, ge=0)
    max_iter: int = Field(100, ge=1)
    tol: float = Field(1e-8, gt=0)
    tau_mode: str = Field("accumulate", pattern="^(accumulate|recompute)$")
    track_elbo: bool = Field(False)

    # Prediction and Adjustment Configuration
    k_neighbors: int = Field(50, ge=1)
    point_estimate: str = Field("mean", pattern="^(mean|median)$")
    test_count: int = Field(100, ge=1)

    # Prior Scan Configuration
    scan_sim_count: int = Field(50_000, ge=10)
    scan_baseline_count: int = Field(1000, ge=10)
    scan_grid_size: int = Field(20, ge=1)
    scan_sigma0_min: float = Field(0.1, gt=0)
    scan_sigma0_max: float = Field(10.0, gt=0)
    scan_sigma1_min: float = Field(0.1, gt=0)
    scan_sigma1_max: float = Field(20.0, gt=0)
    scan_baseline_sigma0: float = Field(10.0, gt=0)
    scan_baseline_sigma1: float = Field(2.5, gt=0)
    scan_gamma: float = Field(0.05, gt=0, lt=1)
    scan_k_neighbors: int = Field(1000, ge=1)
    scan_basis_count: int = Field(50, ge=0)
    scan_trunc: int = Field(4, ge=1)
    scan_alpha: float = Field(100.0, gt=0)
    scan_a_omega: float = Field(5.0, gt=0)
    scan_b_omega: float = Field(0.5, gt=0)
    scan_sigma_dof: float = Field(3.0, gt=0)
    scan_warm_count: int = Field(500, ge=0)
    scan_baseline_mode: str = Field("regression", pattern="^(regression|direct)$")
    scan_direct_count: int = Field(10_000, ge=10)
    scan_simulator: str = Field("bioassay")
    scan_lambda_cols: str = Field("sigma0,sigma1")
    scan_stat_cols: str = Field("p2,p3")
    scan_baseline_csv: Optional[str] = Field(None)
    bioassay_transform: str = Field("printed", pattern="^(printed|conventional)$")
    bioassay_trials: int = Field(5, ge=0)
    bioassay_prior_sd: float = Field(10.0, gt=0)

    @model_validator(mode="after")
    def check_scan_ranges(self) -> "Settings":
        for name in ("sigma0", "sigma1"):
            low, high = getattr(self, f"scan_{name}_min"), getattr(self, f"scan_{name}_max")
            if low > high:
                raise ValueError(f"scan_{name}_min {low} exceeds scan_{name}_max {high}")
        return self


# Global settings instance
settings = Settings()


def load_settings(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> Settings:
    """
    Resolve settings for one run.

    Precedence, lowest first: field defaults, MDP_* environment and .env,
    the key=value config file, explicit overrides (CLI flags).

    Args:
        config_path: Optional plain-text key=value file ('#' comments allowed)
        overrides: Values that win over everything else; None entries are dropped

    Returns:
        Validated Settings instance

    Raises:
        ConfigFileError: Missing file, unknown keys or invalid values
    """
    values: Dict[str, Any] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigFileError(f"config file not found: {path}")
        raw = {k.strip().lower(): v for k, v in dotenv_values(path).items()}
        unknown = sorted(k for k in raw if k not in Settings.model_fields)
        if unknown:
            raise ConfigFileError(f"unknown keys in {path}: {', '.join(unknown)}")
        values.update({k: v for k, v in raw.items() if v is not None})

    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    try:
        return Settings(**values)
    except ValidationError as e:
        raise ConfigFileError(f"invalid configuration: {e}") from e
