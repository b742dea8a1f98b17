#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
losses.py

Description:
    Training objective for the surrogate: pixel MSE against the ground-truth topology
    plus three auxiliary terms. The volume fraction term compares the mean predicted
    density with the target fraction, the load term penalizes missing material under the
    loaded element, and the floating material term penalizes predicted mass that is not
    connected to the loaded element. An optional masked-patch reconstruction term is
    available when the model carries a reconstruction head.

    Floating material follows the label-propagation formulation: every cell starts with a
    unique label scaled by a soft solid gate of its density and repeatedly takes the
    gated maximum label of its 4-neighbours. The loaded element carries the largest seed,
    so its component is where the propagated label exceeds 1. The whole sweep runs on
    Tensor ops, so the gradient reaches the densities through both the soft mass and the
    gates. connected_components is the exact scipy labelling used for evaluation.

Usage:
    from topoformer.losses import LossTargets, LossWeights, total_loss

    targets = LossTargets.from_samples(batch_samples)
    loss, breakdown = total_loss(output.prediction, targets, LossWeights())

Requirements:
    - numpy
    - scipy

"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
from scipy import ndimage

from . import autodiff as ad
from .autodiff import Tensor

# solid gate ramp of the floating material term
FM_GATE_LOW = 0.4
FM_GATE_HIGH = 0.6
# seed of the loaded element, above every other seed in (0, 1]
LOAD_SEED = 2.0
# 4-connectivity
_CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the combined objective"""

    pixel: float = 1.0
    vf: float = 0.1
    load: float = 0.1
    fm: float = 0.1
    mask: float = 0.0

    def __post_init__(self) -> None:
        for name, value in self.to_dict().items():
            if value < 0.0:
                raise ValueError(f"Loss weight '{name}' must be >= 0, got {value}")

    def to_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> LossWeights:
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass
class LossBreakdown:
    """Scalar values of every term, for logging"""

    pixel: float
    vf: float
    load: float
    fm: float
    mask: float
    total: float

    def as_row(self) -> list[float]:
        return [self.pixel, self.vf, self.load, self.fm, self.total]


@dataclass
class LossTargets:
    """Per-batch supervision: (B, H, W) topologies, (B,) fractions, load elements"""

    topology: np.ndarray
    vf: np.ndarray
    load_elements: np.ndarray
    load_magnitudes: np.ndarray

    @classmethod
    def from_samples(cls, samples: Sequence[Any]) -> LossTargets:
        return cls(
            topology=np.stack([s.topology for s in samples]).astype(np.float64),
            vf=np.array([s.spec.vf for s in samples], dtype=np.float64),
            load_elements=np.array([s.spec.point_load.element for s in samples], dtype=np.int64),
            load_magnitudes=np.array(
                [s.spec.point_load.magnitude for s in samples], dtype=np.float64
            ),
        )


def _batched(pred: Tensor) -> Tensor:
    return pred.reshape(1, *pred.shape) if pred.ndim == 2 else pred


def _load_elements(load_elements: Any, batch: int) -> np.ndarray:
    elements = np.asarray(load_elements, dtype=np.int64).reshape(-1, 2)
    if elements.shape[0] != batch:
        raise ValueError(f"{elements.shape[0]} load elements for a batch of {batch}")
    return elements


def pixel_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error over all pixels"""
    return ad.mse_loss(pred, Tensor(target))


def vf_loss(pred: Tensor, vf: Any) -> Tensor:
    """|f - mean(pred)| per map, averaged over the batch"""
    pred = _batched(pred)
    means = ad.mean(pred, axis=(1, 2))
    target = np.broadcast_to(np.asarray(vf, dtype=np.float64), means.shape)
    return ad.mean(ad.abs(means - target))


def load_discrepancy_loss(
    pred: Tensor, load_elements: np.ndarray, load_magnitudes: Optional[np.ndarray] = None
) -> Tensor:
    """
    1 - density * |F| at the loaded element, clamped to [0, 1], averaged over the batch

    load_elements holds (column, row) pairs; row 0 is the top image row.
    """
    pred = _batched(pred)
    elements = _load_elements(load_elements, pred.shape[0])
    if load_magnitudes is None:
        load_magnitudes = np.ones(elements.shape[0])
    at_load = pred[np.arange(pred.shape[0]), elements[:, 1], elements[:, 0]]
    return ad.mean(ad.clip(1.0 - at_load * np.asarray(load_magnitudes), 0.0, 1.0))


def connected_components(binary: np.ndarray) -> tuple[np.ndarray, int]:
    """
    Exact 4-connected labelling of a binary map

    Returns:
        tuple: (int labels, 0 on void and 1..k on solid cells; component count k)
    """
    labels, count = ndimage.label(np.asarray(binary) > 0, structure=_CROSS)
    return labels, int(count)


def solid_gate(density: Tensor) -> Tensor:
    """Soft solid indicator: 0 below FM_GATE_LOW, 1 above FM_GATE_HIGH, linear between"""
    return ad.clip((density - FM_GATE_LOW) / (FM_GATE_HIGH - FM_GATE_LOW), 0.0, 1.0)


def gated_labels(
    density: Tensor,
    load_elements: Optional[np.ndarray] = None,
    min_sweeps: Optional[int] = None,
) -> Tensor:
    """
    Differentiable component labels by gated 4-neighbour max propagation

    Cell (r, c) of an H x W map is seeded with (r * W + c + 1) / (H * W), scaled by its
    solid gate; the loaded element of each map, when given, gets LOAD_SEED instead. Every
    sweep takes L <- max(L, gate * cross_max(L)). At least 2 * max(H, W) sweeps run, then
    sweeps continue until the labels are stable. On a binary map every component ends up
    carrying its largest seed, so the load component is exactly where L > 1.

    Returns:
        Tensor: (B, H, W) labels
    """
    density = _batched(ad.as_tensor(density))
    batch, height, width = density.shape
    gate = solid_gate(density)
    seeds = np.broadcast_to(
        np.arange(1, height * width + 1, dtype=np.float64).reshape(height, width)
        / (height * width),
        (batch, height, width),
    ).copy()
    if load_elements is not None:
        elements = _load_elements(load_elements, batch)
        seeds[np.arange(batch), elements[:, 1], elements[:, 0]] = LOAD_SEED
    labels = gate * seeds
    sweeps = 2 * max(height, width) if min_sweeps is None else min_sweeps
    for step in range(1, max(sweeps, height * width) + 1):
        updated = ad.maximum(labels, gate * ad.cross_max(labels))
        stable = np.array_equal(updated.data, labels.data)
        labels = updated
        if step >= sweeps and stable:
            break
    return labels


def propagate_labels(mask: np.ndarray, min_iterations: Optional[int] = None) -> np.ndarray:
    """
    Integer component labels of a boolean map from gated_labels

    Solid cells carry the largest 1-based flat index of their component; void cells stay 0.
    """
    mask = np.asarray(mask, dtype=bool)
    with ad.no_grad():
        labels = gated_labels(Tensor(mask.astype(np.float64)), min_sweeps=min_iterations)
    return np.rint(labels.data[0] * mask.size).astype(np.int64)


def floating_material_loss(pred: Tensor, load_elements: np.ndarray) -> Tensor:
    """
    Share of solid soft mass not connected to the loaded element, averaged over the batch

    Solid mass is density * solid_gate. A cell counts as connected by clip(L - 1, 0, 1) of
    the gated labels, so on thresholded maps the term is 0 exactly when the solid cells form
    one component containing the loaded element. A void loaded element makes every solid
    cell floating; an all-void map scores 1.
    """
    pred = _batched(pred)
    elements = _load_elements(load_elements, pred.shape[0])
    gate = solid_gate(pred)
    connected = ad.clip(gated_labels(pred, elements) - 1.0, 0.0, 1.0)
    mass = pred * gate
    void = (gate.data.sum(axis=(1, 2)) == 0.0).astype(np.float64)
    floating_mass = ad.sum(mass * (1.0 - connected), axis=(1, 2)) + void
    solid_mass = ad.sum(mass, axis=(1, 2)) + void
    return ad.mean(floating_mass / solid_mass)


def mask_reconstruction_loss(
    reconstruction: Tensor, patches: np.ndarray, mask: np.ndarray
) -> Tensor:
    """MSE between reconstructed and input patches over masked positions only"""
    weight = np.asarray(mask, dtype=np.float64)[..., None]
    count = float(weight.sum()) * patches.shape[-1]
    if count == 0.0:
        return Tensor(0.0)
    return ad.sum(ad.square(reconstruction - patches) * weight) / count


def total_loss(
    pred: Tensor,
    targets: LossTargets,
    weights: Optional[LossWeights] = None,
    reconstruction: Optional[Tensor] = None,
    patches: Optional[np.ndarray] = None,
    mask: Optional[np.ndarray] = None,
) -> tuple[Tensor, LossBreakdown]:
    """
    Weighted sum of the pixel and auxiliary terms

    Terms with weight 0 are reported but left out of the differentiable total.

    Returns:
        tuple: (scalar Tensor, LossBreakdown)
    """
    weights = weights or LossWeights()
    pred = _batched(pred)
    if pred.shape != targets.topology.shape:
        raise ValueError(f"Prediction {pred.shape} vs target {targets.topology.shape}")
    terms = {
        "pixel": pixel_loss(pred, targets.topology),
        "vf": vf_loss(pred, targets.vf),
        "load": load_discrepancy_loss(pred, targets.load_elements, targets.load_magnitudes),
        "fm": floating_material_loss(pred, targets.load_elements),
        "mask": Tensor(0.0),
    }
    if reconstruction is not None and patches is not None and mask is not None:
        terms["mask"] = mask_reconstruction_loss(reconstruction, patches, mask)

    total: Optional[Tensor] = None
    for name, term in terms.items():
        weight = getattr(weights, name)
        if weight == 0.0:
            continue
        weighted = term if weight == 1.0 else term * weight
        total = weighted if total is None else total + weighted
    if total is None:
        total = Tensor(0.0)
    breakdown = LossBreakdown(
        pixel=terms["pixel"].item(),
        vf=terms["vf"].item(),
        load=terms["load"].item(),
        fm=terms["fm"].item(),
        mask=terms["mask"].item(),
        total=total.item(),
    )
    return total, breakdown
