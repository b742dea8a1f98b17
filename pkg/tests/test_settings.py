#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Tests for environment and .env loading."""

import pytest

# pylint: disable=import-error
from topoformer.settings import TopoformerSettings

KEYS = (
    "TOPOFORMER_SEED",
    "TOPOFORMER_JOBS",
    "TOPOFORMER_SOLVER_RTOL",
    "TOPOFORMER_GRID",
    "TOPOFORMER_IMAGE_FORMAT",
)


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch, tmp_path):
    """Start every test without TOPOFORMER_* variables and outside any .env directory."""
    # setenv first so teardown also removes values written by load_dotenv
    for key in KEYS:
        monkeypatch.setenv(key, "")
        monkeypatch.delenv(key)
    monkeypatch.chdir(tmp_path)


class TestTopoformerSettings:
    """Settings resolution."""

    def test_defaults(self):
        """Without variables the documented defaults apply."""
        settings = TopoformerSettings()
        assert settings.seed == 0
        assert settings.jobs >= 1
        assert settings.solver_rtol == 1e-8
        assert settings.grid == 64
        assert settings.image_format == "pgm"

    def test_environment_overrides(self, monkeypatch):
        """Process variables are parsed into typed settings."""
        monkeypatch.setenv("TOPOFORMER_SEED", "17")
        monkeypatch.setenv("TOPOFORMER_JOBS", "3")
        monkeypatch.setenv("TOPOFORMER_SOLVER_RTOL", "1e-6")
        monkeypatch.setenv("TOPOFORMER_IMAGE_FORMAT", "PNG")
        settings = TopoformerSettings()
        assert (settings.seed, settings.jobs, settings.solver_rtol) == (17, 3, 1e-6)
        assert settings.image_format == "png"

    def test_explicit_env_file(self, monkeypatch, tmp_path):
        """An explicit .env file is loaded and wins over the process environment."""
        monkeypatch.setenv("TOPOFORMER_GRID", "16")
        env_file = tmp_path / "custom.env"
        env_file.write_text("TOPOFORMER_GRID=32\nTOPOFORMER_SEED=5\n")
        settings = TopoformerSettings(env_file=str(env_file))
        assert settings.grid == 32
        assert settings.seed == 5

    def test_local_env_file_does_not_override(self, monkeypatch, tmp_path):
        """A .env in the working directory only fills unset variables."""
        monkeypatch.setenv("TOPOFORMER_SEED", "9")
        (tmp_path / ".env").write_text("TOPOFORMER_SEED=1\nTOPOFORMER_GRID=8\n")
        settings = TopoformerSettings()
        assert settings.seed == 9
        assert settings.grid == 8

    def test_missing_env_file(self):
        """An explicit file that does not exist is an error."""
        with pytest.raises(FileNotFoundError, match="not found"):
            TopoformerSettings(env_file="does-not-exist.env")

    @pytest.mark.parametrize(
        "key,value,message",
        [
            ("TOPOFORMER_SEED", "seven", "Invalid integer"),
            ("TOPOFORMER_JOBS", "0", "TOPOFORMER_JOBS"),
            ("TOPOFORMER_SOLVER_RTOL", "2", "TOPOFORMER_SOLVER_RTOL"),
            ("TOPOFORMER_GRID", "-4", "TOPOFORMER_GRID"),
            ("TOPOFORMER_IMAGE_FORMAT", "tiff", "TOPOFORMER_IMAGE_FORMAT"),
        ],
    )
    def test_malformed_values(self, monkeypatch, key, value, message):
        """Bad values raise ValueError naming the variable."""
        monkeypatch.setenv(key, value)
        with pytest.raises(ValueError, match=message):
            TopoformerSettings()
