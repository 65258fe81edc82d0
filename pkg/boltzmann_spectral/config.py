"""Configuration management for the spectral solver."""

from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict

from .models import QuadratureSpec


class Settings(BaseSettings):
    """Configuration settings read from the environment and `.env`."""

    # Default directory for coefficient tables (BOLTZMANN_TABLE_DIR)
    table_dir: Path = Path(".")

    log_level: str = "INFO"

    # Worker pool size for table builds; None means available parallelism
    threads: int | None = None

    # Graded beta-moment quadrature
    quad_rel_tol: float = 1e-10
    quad_max_levels: int = 40
    quad_grading_ratio: float = 0.5
    quad_panel_order: int = 16
    sphere_degree_margin: int = 2

    # Cascade rates closer than this (relative) are treated as resonant
    resonance_tol: float = 1e-12

    # Sparse mu entries below this fraction of their row scale are dropped
    mu_drop_tol: float = 1e-14

    # MCP tool server
    mcp_server_port: int = 8990

    model_config = SettingsConfigDict(env_prefix="BOLTZMANN_", env_file=".env", extra="ignore")

    def quadrature_spec(self) -> QuadratureSpec:
        """Build the default quadrature controls from these settings."""
        return QuadratureSpec(
            rel_tol=self.quad_rel_tol,
            max_levels=self.quad_max_levels,
            grading_ratio=self.quad_grading_ratio,
            panel_order=self.quad_panel_order,
            sphere_degree_margin=self.sphere_degree_margin,
        )


settings = Settings()
