#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Exception types raised by topoformer.

Every error derives from a builtin type as well, so callers that only know about
``ValueError`` or ``RuntimeError`` keep working.
"""

from __future__ import annotations


class TopoformerError(Exception):
    """Root of all topoformer errors."""


class SchemaError(TopoformerError, ValueError):
    """Data does not match the expected layout (condition width, dataset kind, version)."""


class ContainerError(TopoformerError, ValueError):
    """A dataset or checkpoint container could not be decoded."""


class ChecksumError(ContainerError):
    """A CRC32 stored in a container does not match its payload."""


class TruncatedFileError(ContainerError):
    """A container ended before the announced payload was read."""


class SingularSystemError(TopoformerError, RuntimeError):
    """A linear system could not be solved (missing supports or no convergence)."""


class ConvergenceError(TopoformerError, RuntimeError):
    """An optimizer reached its iteration cap without meeting its tolerance."""
