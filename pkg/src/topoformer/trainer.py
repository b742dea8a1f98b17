#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
trainer.py

Description:
    Supervised training of the surrogate on a TOPODS01 dataset with Adam, linear warmup
    and cosine decay, seeded batching with optional dihedral augmentation, CSV loss logs
    and periodic checkpoints. Fine-tuning widens the class projection of a static model
    to the dynamic condition vector and updates only the selected parameter groups.

Usage:
    from topoformer.trainer import TrainConfig, Trainer

    trainer = Trainer(TrainConfig(iterations=2000, batch_size=8))
    result = trainer.train(model, dataset.samples, log_path="loss.csv")

Requirements:
    - numpy

"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence, Union

import numpy as np

from .autodiff import Adam, backward, make_rng, no_grad
from .datasetgenerator import AXIS_PRESERVING, TRANSFORMS, Sample, derive_seeds, transform_sample
from .exceptions import SchemaError
from .losses import LossBreakdown, LossTargets, LossWeights, total_loss
from .visiontransformer import VisionTransformer

LOG_COLUMNS = ("step", "pixel", "vf", "load", "fm", "total")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for train and finetune"""

    iterations: int = 20000
    batch_size: int = 32
    learning_rate: float = 1e-4
    warmup_steps: int = 500
    seed: int = 0
    mask_ratio: float = 0.15
    augment: bool = True
    checkpoint_every: int = 1000
    log_every: int = 100
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0.0 or self.warmup_steps < 0:
            raise ValueError("learning_rate and warmup_steps must be >= 0")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ValueError(f"mask_ratio must be in [0, 1), got {self.mask_ratio}")

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["weights"] = self.weights.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"Unknown training config keys: {sorted(unknown)}")
        values = dict(data)
        if "weights" in values:
            values["weights"] = LossWeights.from_dict(values["weights"])
        return cls(**values)


def learning_rate(step: int, config: TrainConfig) -> float:
    """Linear warmup over warmup_steps, then cosine decay to 0 at the last iteration"""
    if config.warmup_steps and step < config.warmup_steps:
        return config.learning_rate * (step + 1) / config.warmup_steps
    span = max(1, config.iterations - config.warmup_steps)
    progress = min(1.0, (step - config.warmup_steps) / span)
    return 0.5 * config.learning_rate * (1.0 + math.cos(math.pi * progress))


@dataclass
class Batch:
    """Model inputs and loss targets for a group of samples"""

    fields: np.ndarray
    condition: np.ndarray
    targets: LossTargets

    def __len__(self) -> int:
        return self.fields.shape[0]


def collate(samples: Sequence[Sample]) -> Batch:
    if not samples:
        raise ValueError("Cannot collate an empty batch")
    return Batch(
        fields=np.stack([s.fields for s in samples]).astype(np.float64),
        condition=np.stack([s.condition() for s in samples]),
        targets=LossTargets.from_samples(samples),
    )


def batch_stream(
    samples: Sequence[Sample], batch_size: int, seed: int, augment: bool = False
) -> Iterator[Batch]:
    """
    Endless seeded stream of batches

    Each epoch visits the samples in a fresh permutation; batches span epoch boundaries.
    With augment, every drawn sample goes through a random dihedral transform.
    """
    if not samples:
        raise ValueError("No samples to draw batches from")
    rng = make_rng(seed)
    queue: deque[int] = deque()
    while True:
        picked = []
        while len(picked) < batch_size:
            if not queue:
                queue.extend(int(i) for i in rng.permutation(len(samples)))
            picked.append(samples[queue.popleft()])
        if augment:
            picked = [_random_transform(s, rng) for s in picked]
        yield collate(picked)


def _random_transform(sample: Sample, rng: np.random.Generator) -> Sample:
    grid = sample.spec.grid
    names = list(TRANSFORMS) if grid.nelx == grid.nely else list(AXIS_PRESERVING)
    name = names[int(rng.integers(len(names)))]
    try:
        return transform_sample(sample, name)
    except ValueError:
        # Odd grids have fixture sites with no canonical image
        return sample


def check_compatible(model: VisionTransformer, samples: Sequence[Sample]) -> None:
    """
    Raises:
        SchemaError: Empty data, or samples whose grid or condition width the model
            cannot take
    """
    if not samples:
        raise SchemaError("Dataset is empty")
    config = model.config
    for index, sample in enumerate(samples):
        grid = sample.spec.grid
        if grid.nelx != config.grid or grid.nely != config.grid:
            raise SchemaError(
                f"Sample {index} is on a {grid.nelx}x{grid.nely} grid; model expects "
                f"{config.grid}x{config.grid}"
            )
        width = sample.condition().shape[0]
        if width != config.condition_dim:
            raise SchemaError(
                f"Sample {index} is {sample.kind} with a {width}-wide condition vector; model "
                f"expects {config.condition_dim}"
            )


@dataclass
class TrainResult:
    history: list[LossBreakdown]
    trained_parameters: list[str]
    elapsed_seconds: float

    @property
    def final(self) -> Optional[LossBreakdown]:
        """Last step's losses; None for a zero-step run"""
        return self.history[-1] if self.history else None


class Trainer:
    """Adam training loop over a ViT parameter store"""

    def __init__(
        self, config: Optional[TrainConfig] = None, logger: Optional[logging.Logger] = None
    ):
        """
        Initialize Trainer

        Parameters:
            config (TrainConfig, optional): Training settings
            logger (logging.Logger, optional): Logger instance. If None, uses a NullHandler.
        """
        self.config = config or TrainConfig()

        self.logger = logger or logging.getLogger(__name__)
        if not logger:
            self.logger.addHandler(logging.NullHandler())

    def train(
        self,
        model: VisionTransformer,
        samples: Sequence[Sample],
        log_path: Optional[Union[str, Path]] = None,
        checkpoint_path: Optional[Union[str, Path]] = None,
        parameter_names: Optional[list[str]] = None,
        metadata: Optional[dict[str, Any]] = None,
    ) -> TrainResult:
        """
        Train `model` in place

        Parameters:
            model (VisionTransformer): Model to update
            samples (list): Training samples
            log_path (str | Path, optional): CSV loss log (step, pixel, vf, load, fm, total)
            checkpoint_path (str | Path, optional): Checkpoint written every
                checkpoint_every steps and after the last one
            parameter_names (list, optional): Parameters to update; all when omitted
            metadata (dict, optional): Extra checkpoint metadata, e.g. dataset kind and seeds

        Raises:
            SchemaError: The dataset does not fit the model
        """
        config = self.config
        check_compatible(model, samples)
        names = parameter_names if parameter_names is not None else model.store.names()
        optimizer = Adam(model.store, names)
        batch_seed, mask_seed = derive_seeds(config.seed, 2)
        batches = batch_stream(samples, config.batch_size, batch_seed, config.augment)
        mask_rng = make_rng(mask_seed)

        self.logger.info(
            f"Training {len(names)} of {len(model.store)} parameter tensors on "
            f"{len(samples)} samples for {config.iterations} steps"
        )
        writer_handle = Path(log_path).open("w", newline="") if log_path else None
        writer = csv.writer(writer_handle) if writer_handle else None
        if writer:
            writer.writerow(LOG_COLUMNS)
        history: list[LossBreakdown] = []
        start = time.perf_counter()
        try:
            for step in range(config.iterations):
                batch = next(batches)
                model.store.zero_grad()
                output = model.forward(
                    batch.fields,
                    batch.condition,
                    training=True,
                    rng=mask_rng,
                    mask_ratio=config.mask_ratio,
                )
                loss, breakdown = total_loss(
                    output.prediction,
                    batch.targets,
                    config.weights,
                    output.mask_reconstruction,
                    output.patches,
                    output.mask,
                )
                backward(loss)
                optimizer.step(learning_rate(step, config))
                history.append(breakdown)
                if writer:
                    writer.writerow([step, *breakdown.as_row()])
                if (step + 1) % config.log_every == 0 or step == 0:
                    self.logger.info(
                        f"Step {step + 1}/{config.iterations} total {breakdown.total:.5f} "
                        f"pixel {breakdown.pixel:.5f} vf {breakdown.vf:.4f} "
                        f"load {breakdown.load:.4f} fm {breakdown.fm:.4f}"
                    )
                if checkpoint_path and (step + 1) % config.checkpoint_every == 0:
                    self._checkpoint(model, checkpoint_path, step + 1, metadata)
        finally:
            if writer_handle:
                writer_handle.close()
        if checkpoint_path:
            self._checkpoint(model, checkpoint_path, config.iterations, metadata)
        return TrainResult(history, list(names), time.perf_counter() - start)

    def _checkpoint(
        self,
        model: VisionTransformer,
        path: Union[str, Path],
        step: int,
        metadata: Optional[dict[str, Any]] = None,
    ) -> None:
        header = dict(metadata or {})
        header.update({"train": self.config.to_dict(), "step": step})
        model.save(path, header)
        self.logger.debug(f"Checkpoint at step {step} written to {path}")

    def finetune(
        self,
        model: VisionTransformer,
        groups: list[str],
        samples: Sequence[Sample],
        log_path: Optional[Union[str, Path]] = None,
        checkpoint_path: Optional[Union[str, Path]] = None,
        metadata: Optional[dict[str, Any]] = None,
    ) -> TrainResult:
        """
        Transfer a static model to dynamic data

        The class projection is widened to the dynamic condition width with zero rows, then
        only the parameters of `groups` are trained; all others stay bit-identical.

        Raises:
            ValueError: Empty or unknown group set
        """
        names = model.group_parameters(groups)
        if samples:
            model.widen_condition(samples[0].condition().shape[0])
        self.logger.info(f"Fine-tuning groups {groups}: {len(names)} parameter tensors")
        return self.train(
            model, samples, log_path, checkpoint_path, parameter_names=names, metadata=metadata
        )


def validation_loss(
    model: VisionTransformer,
    samples: Sequence[Sample],
    weights: Optional[LossWeights] = None,
    batch_size: int = 32,
) -> float:
    """Sample-weighted mean total loss in inference mode"""
    check_compatible(model, samples)
    total = 0.0
    with no_grad():
        for start in range(0, len(samples), batch_size):
            batch = collate(samples[start : start + batch_size])
            prediction = model.forward(batch.fields, batch.condition).prediction
            _, breakdown = total_loss(prediction, batch.targets, weights)
            total += breakdown.total * len(batch)
    return total / len(samples)
