#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
datasetstore.py

Description:
    TOPODS01 dataset container. A file holds an 8-byte magic, a length-prefixed JSON
    manifest with its CRC32, then one record per sample:

        u32 meta length | meta JSON | f32 fields (2*H*W) | f32 topology (H*W)
        | f32 fft (10, dynamic only) | u32 CRC32 of everything before it in the record

    All integers and floats are little-endian; images are row-major with row 0 at the top.
    Also provides seeded train / validation splitting with cross-referenced seeds.

Usage:
    from topoformer.datasetstore import read_dataset, write_dataset

    write_dataset("train.topods", samples, kind="static", grid=Grid(64, 64))
    dataset = read_dataset("train.topods")

"""

from __future__ import annotations

import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from ._about import __version__
from .autodiff import make_rng
from .datasetgenerator import FFT_BINS, KINDS, Sample
from .exceptions import ChecksumError, ContainerError, SchemaError, TruncatedFileError
from .problem import LOAD_NODE_RULE, Grid, ProblemSpec

DATASET_MAGIC = b"TOPODS01"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_F32 = np.dtype("<f4")

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


@dataclass
class Dataset:
    """Samples plus the manifest they were stored with"""

    manifest: dict[str, Any]
    samples: list[Sample] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return str(self.manifest["kind"])

    @property
    def grid(self) -> Grid:
        return Grid.from_dict(self.manifest["grid"])

    @property
    def seeds(self) -> list[Optional[int]]:
        return [s.spec.seed for s in self.samples]

    def __len__(self) -> int:
        return len(self.samples)


def build_manifest(
    kind: str,
    grid: Grid,
    count: int,
    generator: Optional[dict[str, Any]] = None,
    split: Optional[dict[str, Any]] = None,
) -> dict[str, Any]:
    if kind not in KINDS:
        raise SchemaError(f"kind must be one of {KINDS}, got '{kind}'")
    return {
        "format_version": FORMAT_VERSION,
        "producer": f"topoformer {__version__}",
        "kind": kind,
        "grid": grid.to_dict(),
        "count": count,
        "generator": generator or {},
        "split": split or {},
        "layout": {
            "fields": ["sed", "vm"],
            "image_order": "row-major, row 0 at the top",
            "dtype": "float32",
            "endianness": "little",
            "fft_bins": FFT_BINS if kind == "dynamic" else 0,
            "fft_features": "magnitudes of DFT bins 0..9 divided by the sample count",
            "load_node_rule": LOAD_NODE_RULE,
        },
    }


def _encode_record(sample: Sample) -> bytes:
    meta = {
        "spec": sample.spec.to_dict(),
        "gt_compliance": sample.gt_compliance,
        "threshold": sample.threshold,
        "iterations": sample.iterations,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    body = [_U32.pack(len(meta_bytes)), meta_bytes]
    body.append(np.ascontiguousarray(sample.fields, dtype=_F32).tobytes())
    body.append(np.ascontiguousarray(sample.topology, dtype=_F32).tobytes())
    if sample.fft is not None:
        body.append(np.ascontiguousarray(sample.fft, dtype=_F32).tobytes())
    payload = b"".join(body)
    return payload + _U32.pack(zlib.crc32(payload))


def write_dataset(
    path: Union[str, Path],
    samples: list[Sample],
    kind: Optional[str] = None,
    grid: Optional[Grid] = None,
    generator: Optional[dict[str, Any]] = None,
    split: Optional[dict[str, Any]] = None,
) -> Path:
    """
    Write samples to a TOPODS01 container

    Parameters:
        path: Output file
        samples: Samples sharing one kind and grid
        kind, grid: Required when `samples` is empty; otherwise checked against it
        generator: Generation config echoed into the manifest
        split: Split metadata (role, seeds of the other split)

    Raises:
        SchemaError: Mixed kinds or grids, or kind / grid missing for an empty dataset
    """
    if samples:
        kind = kind or samples[0].kind
        grid = grid or samples[0].spec.grid
    if kind is None or grid is None:
        raise SchemaError("An empty dataset needs an explicit kind and grid")
    for index, sample in enumerate(samples):
        if sample.kind != kind or sample.spec.grid != grid:
            raise SchemaError(
                f"Sample {index} is {sample.kind} on {sample.spec.grid}; dataset is {kind} "
                f"on {grid}"
            )

    manifest = build_manifest(kind, grid, len(samples), generator, split)
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    path = Path(path)
    with path.open("wb") as handle:
        handle.write(DATASET_MAGIC)
        handle.write(_U32.pack(len(manifest_bytes)))
        handle.write(manifest_bytes)
        handle.write(_U32.pack(zlib.crc32(manifest_bytes)))
        for sample in samples:
            handle.write(_encode_record(sample))
    logger.debug(f"Wrote {len(samples)} {kind} samples to {path}")
    return path


class _Reader:
    """Cursor over container bytes with truncation checks"""

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise TruncatedFileError(
                f"{self.path}: truncated while reading {what} "
                f"(need {size} bytes at offset {self.offset}, file has {len(self.data)})"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return int(_U32.unpack(self.take(4, what))[0])


def _decode_array(raw: bytes, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(raw, dtype=_F32).astype(np.float32).reshape(shape)


def read_dataset(path: Union[str, Path]) -> Dataset:
    """
    Read a TOPODS01 container

    Raises:
        ContainerError: Not a TOPODS01 file
        SchemaError: Unsupported format version or malformed manifest
        TruncatedFileError: File ends early
        ChecksumError: Manifest or record CRC mismatch
    """
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    magic = reader.take(len(DATASET_MAGIC), "magic")
    if magic != DATASET_MAGIC:
        raise ContainerError(f"{path}: not a TOPODS01 dataset (magic {magic!r})")

    manifest_bytes = reader.take(reader.u32("manifest length"), "manifest")
    if reader.u32("manifest checksum") != zlib.crc32(manifest_bytes):
        raise ChecksumError(f"{path}: manifest checksum mismatch")
    try:
        manifest = json.loads(manifest_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SchemaError(f"{path}: manifest is not valid JSON: {e}") from e
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaError(
            f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})"
        )

    grid = Grid.from_dict(manifest["grid"])
    kind = manifest["kind"]
    fft_bins = FFT_BINS if kind == "dynamic" else 0
    image = grid.nely * grid.nelx
    samples = []
    for index in range(int(manifest["count"])):
        start = reader.offset
        meta_bytes = reader.take(reader.u32(f"record {index} meta length"), f"record {index}")
        fields_raw = reader.take(2 * image * 4, f"record {index} fields")
        topology_raw = reader.take(image * 4, f"record {index} topology")
        fft_raw = reader.take(fft_bins * 4, f"record {index} fft") if fft_bins else b""
        payload = reader.data[start : reader.offset]
        if reader.u32(f"record {index} checksum") != zlib.crc32(payload):
            raise ChecksumError(f"{path}: checksum mismatch in record {index}")
        meta = json.loads(meta_bytes.decode("utf-8"))
        samples.append(
            Sample(
                spec=ProblemSpec.from_dict(meta["spec"]),
                fields=_decode_array(fields_raw, (2, grid.nely, grid.nelx)),
                topology=_decode_array(topology_raw, (grid.nely, grid.nelx)),
                gt_compliance=float(meta["gt_compliance"]),
                fft=_decode_array(fft_raw, (fft_bins,)) if fft_bins else None,
                threshold=float(meta["threshold"]),
                iterations=int(meta["iterations"]),
            )
        )
    if reader.offset != len(reader.data):
        raise ContainerError(f"{path}: {len(reader.data) - reader.offset} trailing bytes")
    return Dataset(manifest=manifest, samples=samples)


def split_dataset(
    samples: list[Sample], validation_count: int, seed: int
) -> tuple[list[Sample], list[Sample]]:
    """
    Seeded disjoint train / validation split; order within each part follows the input

    Raises:
        ValueError: validation_count outside [0, len(samples)]
    """
    if not 0 <= validation_count <= len(samples):
        raise ValueError(
            f"validation_count must be in [0, {len(samples)}], got {validation_count}"
        )
    chosen = set(
        int(i) for i in make_rng(seed).permutation(len(samples))[:validation_count]
    )
    train = [s for i, s in enumerate(samples) if i not in chosen]
    validation = [s for i, s in enumerate(samples) if i in chosen]
    return train, validation


def split_manifest(role: str, other: list[Sample]) -> dict[str, Any]:
    """Split metadata recording the seeds of the complementary split"""
    return {"role": role, "other_seeds": [s.spec.seed for s in other]}
