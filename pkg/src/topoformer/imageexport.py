#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
imageexport.py

Description:
    Grayscale image export for fields, topologies and ground truth / prediction /
    difference triptychs. PGM (P5, maxval 255) is written directly; PNG goes through
    matplotlib.

Usage:
    from topoformer.imageexport import write_pgm, write_triptych

    write_pgm("density.pgm", prediction)
    write_triptych("case.png", target, prediction, image_format="png")

Requirements:
    - numpy
    - matplotlib (PNG only)

"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

PathLike = Union[str, Path]


def to_gray(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats -> uint8, rounded, out-of-range values clipped"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"Expected a 2D image, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("Image contains NaN or Inf")
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path: PathLike, image: np.ndarray) -> Path:
    """Binary PGM, row 0 at the top"""
    gray = to_gray(image)
    height, width = gray.shape
    path = Path(path)
    with path.open("wb") as handle:
        handle.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        handle.write(gray.tobytes())
    return path


def read_pgm(path: PathLike) -> np.ndarray:
    """uint8 pixels of a binary PGM written by write_pgm"""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    width, height = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3][: width * height], dtype=np.uint8)
    if pixels.size != width * height:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(height, width)


def triptych(target: np.ndarray, prediction: np.ndarray) -> np.ndarray:
    """Side-by-side target | prediction | signed difference mapped to [0, 1]"""
    target = np.asarray(target, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if target.shape != prediction.shape:
        raise ValueError(f"Shapes differ: {target.shape} vs {prediction.shape}")
    difference = (prediction - target + 1.0) / 2.0
    return np.concatenate([target, prediction, difference], axis=1)


def write_png(path: PathLike, image: np.ndarray, cmap: str = "gray") -> Path:
    import matplotlib  # pylint: disable=import-outside-toplevel

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt  # pylint: disable=import-outside-toplevel

    path = Path(path)
    pixels = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    plt.imsave(path, pixels, cmap=cmap, vmin=0.0, vmax=1.0)
    return path


def write_image(path: PathLike, image: np.ndarray, image_format: str = "pgm") -> Path:
    if image_format == "pgm":
        return write_pgm(path, image)
    if image_format == "png":
        return write_png(path, image)
    raise ValueError(f"Unknown image format '{image_format}', expected 'pgm' or 'png'")


def write_triptych(
    path: PathLike, target: np.ndarray, prediction: np.ndarray, image_format: str = "pgm"
) -> Path:
    return write_image(path, triptych(target, prediction), image_format)
