#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
settings.py

Description:
    Environment configuration for topoformer workflows

Usage:
    from topoformer.settings import TopoformerSettings

    settings = TopoformerSettings(env_file=".env")
    print(settings.seed, settings.jobs)

Requirements:
    - python-dotenv

References:
    - python-dotenv: https://github.com/theskumar/python-dotenv

"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

IMAGE_FORMATS = ("pgm", "png")


class TopoformerSettings:  # pylint: disable=too-few-public-methods
    """Runtime settings read from the process environment and an optional .env file"""

    def __init__(
        self,
        env_file: Optional[str] = None,
        logger: Optional[logging.Logger] = None,
    ):
        """
        Initialize TopoformerSettings

        Parameters:
            env_file (str, optional): Path to a .env file. When given it must exist; when
                omitted, a .env file in the current directory is loaded if present.
            logger (logging.Logger, optional): Logger instance. If None, uses a NullHandler.

        Raises:
            FileNotFoundError: If env_file is given but does not exist
            ValueError: If a variable holds a malformed value
        """
        self.seed: int = 0
        self.jobs: int = os.cpu_count() or 1
        self.solver_rtol: float = 1e-8
        self.grid: int = 64
        self.image_format: str = "pgm"

        self.logger = logger or logging.getLogger(__name__)
        if not logger:
            self.logger.addHandler(logging.NullHandler())

        self._load_environment_variables(env_file)

    def _load_environment_variables(self, env_file: Optional[str] = None) -> None:
        """
        Load environment variables from a .env file and the process environment

        Parameters:
            env_file (str, optional): Path to .env file

        Raises:
            FileNotFoundError: If an explicit .env file is not found
            ValueError: If a variable cannot be parsed
        """
        if env_file is not None:
            if not Path(env_file).exists():
                raise FileNotFoundError(f"Environment file not found: {env_file}")
            self.logger.debug(f"Loading environment from: {env_file}")
            load_dotenv(env_file, override=True)
        elif Path(".env").exists():
            self.logger.debug("Loading environment from: .env")
            load_dotenv(".env", override=False)

        self.seed = self._get_int("TOPOFORMER_SEED", self.seed)
        self.jobs = self._get_int("TOPOFORMER_JOBS", self.jobs)
        if self.jobs < 1:
            raise ValueError(f"TOPOFORMER_JOBS must be >= 1, got {self.jobs}")

        self.solver_rtol = self._get_float("TOPOFORMER_SOLVER_RTOL", self.solver_rtol)
        if not 0.0 < self.solver_rtol < 1.0:
            raise ValueError(f"TOPOFORMER_SOLVER_RTOL must be in (0, 1), got {self.solver_rtol}")

        self.grid = self._get_int("TOPOFORMER_GRID", self.grid)
        if self.grid < 1:
            raise ValueError(f"TOPOFORMER_GRID must be >= 1, got {self.grid}")

        self.image_format = self._get_env_var("TOPOFORMER_IMAGE_FORMAT", default="pgm").lower()
        if self.image_format not in IMAGE_FORMATS:
            raise ValueError(
                f"TOPOFORMER_IMAGE_FORMAT must be one of {IMAGE_FORMATS}, "
                f"got '{self.image_format}'"
            )

        self.logger.debug(
            f"Settings: seed={self.seed} jobs={self.jobs} rtol={self.solver_rtol} "
            f"grid={self.grid} image_format={self.image_format}"
        )

    def _get_env_var(self, key: str, required: bool = False, default: str = "") -> str:
        """
        Get environment variable with error handling

        Parameters:
            key (str): Environment variable key
            required (bool): Whether the variable is required
            default (str): Default value if not found

        Returns:
            str: Environment variable value

        Raises:
            ValueError: If required variable is missing
        """
        value = os.getenv(key, default)
        if required and not value:
            raise ValueError(
                f"Required environment variable '{key}' is not set. "
                "Please check your .env file."
            )
        return value

    def _get_int(self, key: str, default: int) -> int:
        raw = self._get_env_var(key, default="")
        if not raw:
            return default
        try:
            return int(raw)
        except ValueError as e:
            raise ValueError(f"Invalid integer for {key}: '{raw}'") from e

    def _get_float(self, key: str, default: float) -> float:
        raw = self._get_env_var(key, default="")
        if not raw:
            return default
        try:
            return float(raw)
        except ValueError as e:
            raise ValueError(f"Invalid number for {key}: '{raw}'") from e
