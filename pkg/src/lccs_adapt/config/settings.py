"""Configuration settings for the LCCS adaptation toolkit."""

from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Batch-norm defaults
    bn_epsilon: float = Field(default=1e-5, gt=0, description="Variance floor inside sigma = sqrt(var + eps)")
    bn_momentum: float = Field(default=0.1, ge=0, le=1, description="Running-statistic EMA momentum")
    gamma_nudge: float = Field(default=1e-8, gt=0, description="Magnitude zero BN weights are nudged to")

    # LCCS defaults
    sigma_floor: float = Field(default=1e-3, gt=0, description="Lower clamp on synthesized sigma")

    # Linear algebra
    svd_tolerance: float = Field(default=1e-12, gt=0, description="Jacobi off-diagonal convergence tolerance")
    svd_max_sweeps: int = Field(default=100, ge=1, description="Maximum Jacobi sweeps")

    # Reproducibility
    default_seed: int = Field(default=0, ge=0, description="Seed used when none is given")

    # Caching Configuration
    cache_enabled: bool = Field(default=True, description="Memoize datasets and source models in the harness")
    cache_max_size: int = Field(default=32, ge=1, description="Maximum cached artifacts")

    # Paths
    data_dir: Path = Field(default=Path("data"), description="Default directory for generated datasets")
    output_dir: Path = Field(default=Path("results"), description="Default directory for reports")

    # Logging Configuration
    log_level: str = Field(default="INFO", description="Logging level")
    log_format: str = Field(default="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    model_config = {
        "env_file": ".env",
        "env_prefix": "LCCS_",
        "case_sensitive": False,
        "extra": "ignore"
    }


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get application settings singleton."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """Drop the cached settings so the next call re-reads the environment."""
    global _settings
    _settings = None
