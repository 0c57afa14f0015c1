"""Application configuration via environment variables."""

from functools import lru_cache

from pydantic import Field

try:  # Pydantic v2
    from pydantic_settings import BaseSettings, SettingsConfigDict
except ImportError:  # Fallback for Pydantic v1
    from pydantic import BaseSettings

    SettingsConfigDict = dict  # type: ignore[assignment]


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables."""

    app_name: str = Field("Rydberg Phase Retrieval", description="Human-readable service name.")
    environment: str = Field("dev", description="Deployment environment tag.")
    debug: bool = Field(False, description="Enable FastAPI debug mode.")
    log_level: str = Field("INFO", description="Default logging level for the CLI.")

    api_v1_prefix: str = Field("/api", description="Root prefix for versioned API routes.")

    output_dir: str = Field(
        "runs/latest", description="Default artifact directory when the run config leaves it unset."
    )

    lp_tol: float = Field(1e-8, gt=0, description="Default interior-point convergence tolerance.")
    lp_max_iter: int = Field(100, ge=1, description="Default interior-point iteration cap.")
    max_stage1_variables: int = Field(
        200_000,
        ge=1,
        description="Upper bound on the 2K^2 lifted variables accepted by the HTTP surface.",
    )

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )


@lru_cache()
def get_settings() -> Settings:
    """Provide a cached Settings instance."""

    return Settings()
