"""Settings resolution from defaults, the environment and `.env`."""

from pathlib import Path

import pytest

from boltzmann_spectral.config import Settings
from boltzmann_spectral.models import QuadratureSpec


class TestSettings:
    def test_defaults_match_quadrature_spec(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        assert Settings().quadrature_spec() == QuadratureSpec()

    def test_environment_overrides(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("BOLTZMANN_TABLE_DIR", "/tmp/tables")
        monkeypatch.setenv("BOLTZMANN_QUAD_REL_TOL", "1e-8")
        monkeypatch.setenv("BOLTZMANN_THREADS", "3")
        settings = Settings()
        assert settings.table_dir == Path("/tmp/tables")
        assert settings.threads == 3
        assert settings.quadrature_spec().rel_tol == 1e-8

    def test_dotenv_file(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        (tmp_path / ".env").write_text("BOLTZMANN_LOG_LEVEL=DEBUG\nBOLTZMANN_MCP_SERVER_PORT=9100\nOTHER=1\n")
        settings = Settings()
        assert settings.log_level == "DEBUG"
        assert settings.mcp_server_port == 9100

    def test_environment_beats_dotenv(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        (tmp_path / ".env").write_text("BOLTZMANN_RESONANCE_TOL=1e-10\n")
        monkeypatch.setenv("BOLTZMANN_RESONANCE_TOL", "1e-11")
        assert Settings().resonance_tol == 1e-11

    def test_invalid_quadrature_override(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("BOLTZMANN_QUAD_GRADING_RATIO", "1.5")
        with pytest.raises(ValueError):
            Settings().quadrature_spec()
