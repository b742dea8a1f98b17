#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
runmanifest.py

Description:
    Run manifests written next to every command-line output as
    <output>.manifest.json: the subcommand, its merged configuration, seed, package
    version, git commit when available, timestamps, produced paths and final status.

Usage:
    from topoformer.runmanifest import RunManifest

    manifest = RunManifest.start("gen", config={"n": 10}, seed=7)
    manifest.add_output("train.topods")
    manifest.finish("ok").write("train.topods.manifest.json")

"""

from __future__ import annotations

import dataclasses
import json
import subprocess
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Union

from ._about import __version__


def git_commit(cwd: Optional[Union[str, Path]] = None) -> Optional[str]:
    """HEAD commit of the enclosing git checkout, or None outside one"""
    try:
        completed = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=cwd,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
    except (OSError, subprocess.SubprocessError):
        return None
    commit = completed.stdout.strip()
    return commit or None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def manifest_path(output: Union[str, Path]) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


@dataclass
class RunManifest:
    subcommand: str
    config: dict[str, Any]
    seed: Optional[int]
    version: str = __version__
    git_commit: Optional[str] = None
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    status: str = "running"
    error: Optional[str] = None
    outputs: list[str] = field(default_factory=list)

    @classmethod
    def start(
        cls, subcommand: str, config: dict[str, Any], seed: Optional[int] = None
    ) -> RunManifest:
        return cls(subcommand=subcommand, config=config, seed=seed, git_commit=git_commit())

    def add_output(self, path: Union[str, Path]) -> None:
        self.outputs.append(str(path))

    def finish(self, status: str, error: Optional[str] = None) -> RunManifest:
        self.status = status
        self.error = error
        self.finished = _now()
        return self

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        if data["git_commit"] is None:
            del data["git_commit"]
        return data

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, default=str) + "\n")
        return path
