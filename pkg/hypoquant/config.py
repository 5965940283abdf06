"""Application configuration using Pydantic Settings."""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Get the project root directory (where .env is located)
PROJECT_ROOT = Path(__file__).parent.parent


class Settings(BaseSettings):
    """Application settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_file=str(PROJECT_ROOT / ".env"),
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        env_ignore_empty=False,
        populate_by_name=True,
    )

    # Application
    app_name: str = Field(default="HypoQuant", alias="APP_NAME")
    app_version: str = Field(default="0.1.0", alias="APP_VERSION")
    debug: bool = Field(default=False, alias="DEBUG")

    # Reproducibility
    seed: int = Field(default=42, ge=0, alias="HYPOQUANT_SEED")

    # Execution
    workers: int = Field(default=1, ge=1, alias="HYPOQUANT_WORKERS")
    output_root: str = Field(default="results", alias="HYPOQUANT_OUTPUT_DIR")

    # Descriptors
    variance_fraction: float = Field(
        default=0.70, gt=0.0, le=1.0, alias="HYPOQUANT_VARIANCE_FRACTION"
    )
    threshold_candidates: int = Field(
        default=101, ge=2, alias="HYPOQUANT_THRESHOLD_CANDIDATES"
    )
    tessellation_bands: int = Field(default=10, ge=1, alias="HYPOQUANT_TESSELLATION")

    # Eigen solver
    jacobi_max_sweeps: int = Field(default=100, ge=1, alias="HYPOQUANT_JACOBI_MAX_SWEEPS")
    jacobi_tolerance: float = Field(default=1e-12, gt=0.0, alias="HYPOQUANT_JACOBI_TOLERANCE")

    # Output formatting
    csv_significant_digits: int = Field(default=12, ge=1, le=17, alias="HYPOQUANT_CSV_DIGITS")
    heatmap_cell_size: int = Field(default=16, ge=1, alias="HYPOQUANT_HEATMAP_CELL")

    @property
    def float_format(self) -> str:
        """Format spec used for every float written to CSV."""
        return f".{self.csv_significant_digits}g"


# Global settings instance
settings = Settings()
