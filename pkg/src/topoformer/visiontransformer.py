#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
visiontransformer.py

Description:
    Vision transformer surrogate mapping normalized stress / strain field images plus a
    problem condition vector to a density map. Fields are cut into P x P patches and
    linearly embedded; the condition vector goes through a two-layer MLP into a class
    token placed in front of the patch tokens. Learned positional embeddings are added,
    patch tokens are optionally masked during training, and a stack of pre-norm blocks
    (multi-head self-attention, GELU MLP) follows. The class token is dropped and each
    patch token is projected back to P x P pixels, then squashed by a sigmoid.

Usage:
    from topoformer.visiontransformer import ViTConfig, VisionTransformer

    model = VisionTransformer(ViTConfig.preset("desk"), seed=0)
    density = model.predict(sample.fields[None], sample.condition()[None])

Requirements:
    - numpy
    - scipy

References:
    - https://arxiv.org/abs/2010.11929

"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from scipy.stats import truncnorm

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor, make_rng, no_grad
from .datasetgenerator import DYNAMIC_CONDITION_DIM, STATIC_CONDITION_DIM
from .exceptions import SchemaError

INIT_STD = 0.02
FINETUNE_GROUPS = ("class_projection", "decoder_projection", "decoder_layers")
DECODER_LAYER_COUNT = 3

# name -> (hidden dim, layers, heads)
PRESETS: dict[str, tuple[int, int, int]] = {
    "tiny": (192, 12, 3),
    "small": (384, 12, 6),
    "base": (768, 12, 12),
    "large": (1024, 24, 16),
    "huge": (1280, 32, 16),
    "desk": (64, 4, 4),
}


@dataclass(frozen=True)
class ViTConfig:
    """Architecture hyperparameters"""

    hidden_dim: int = 64
    layers: int = 4
    heads: int = 4
    patch_size: int = 8
    grid: int = 64
    in_channels: int = 2
    mlp_ratio: int = 4
    mask_ratio: float = 0.15
    condition_dim: int = STATIC_CONDITION_DIM
    mask_head: bool = False

    def __post_init__(self) -> None:
        if self.hidden_dim < 1 or self.layers < 1 or self.heads < 1:
            raise ValueError("hidden_dim, layers and heads must be positive")
        if self.hidden_dim % self.heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} is not divisible by heads {self.heads}"
            )
        if self.patch_size < 1 or self.grid % self.patch_size:
            raise ValueError(
                f"grid {self.grid} is not divisible by patch size {self.patch_size}"
            )
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ValueError(f"mask_ratio must be in [0, 1), got {self.mask_ratio}")
        if self.condition_dim not in (STATIC_CONDITION_DIM, DYNAMIC_CONDITION_DIM):
            raise ValueError(
                f"condition_dim must be {STATIC_CONDITION_DIM} or {DYNAMIC_CONDITION_DIM}, "
                f"got {self.condition_dim}"
            )

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> ViTConfig:
        if name not in PRESETS:
            raise ValueError(f"Unknown preset '{name}', expected one of {list(PRESETS)}")
        hidden_dim, layers, heads = PRESETS[name]
        values: dict[str, Any] = {"hidden_dim": hidden_dim, "layers": layers, "heads": heads}
        values.update(overrides)
        return cls(**values)

    @property
    def patches_per_side(self) -> int:
        return self.grid // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.patches_per_side**2

    @property
    def patch_dim(self) -> int:
        return self.patch_size**2 * self.in_channels

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.heads

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ViTConfig:
        if "preset" in data:
            rest = {k: v for k, v in data.items() if k != "preset"}
            return cls.preset(data["preset"], **rest)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"Unknown ViT config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ForwardOutput:
    """Prediction plus what the losses and diagnostics need from one forward pass"""

    prediction: Tensor
    attention: list[np.ndarray]
    mask: np.ndarray
    mask_reconstruction: Optional[Tensor] = None
    patches: Optional[np.ndarray] = None


def patchify(fields: np.ndarray, patch_size: int) -> np.ndarray:
    """
    (..., C, H, W) images -> (..., N, C*P*P) patch rows

    Patch i sits at patch column i mod (W/P), patch row i div (W/P); each row is
    flattened channel-major then row-major.
    """
    fields = np.asarray(fields)
    *lead, channels, height, width = fields.shape
    if height % patch_size or width % patch_size:
        raise ValueError(f"Image {height}x{width} is not divisible by patch size {patch_size}")
    gy, gx = height // patch_size, width // patch_size
    blocks = fields.reshape(*lead, channels, gy, patch_size, gx, patch_size)
    n = len(lead)
    axes = list(range(n)) + [n + 1, n + 3, n, n + 2, n + 4]
    return blocks.transpose(axes).reshape(*lead, gy * gx, channels * patch_size**2)


def unpatchify(patches: np.ndarray, patch_size: int, channels: int, grid: int) -> np.ndarray:
    """Inverse of patchify for a square grid"""
    patches = np.asarray(patches)
    *lead, n_patches, width = patches.shape
    side = grid // patch_size
    if n_patches != side * side or width != channels * patch_size**2:
        raise ValueError(
            f"Patch matrix {patches.shape[-2:]} does not match grid {grid}, P {patch_size}, "
            f"C {channels}"
        )
    blocks = patches.reshape(*lead, side, side, channels, patch_size, patch_size)
    n = len(lead)
    axes = list(range(n)) + [n + 2, n, n + 3, n + 1, n + 4]
    return blocks.transpose(axes).reshape(*lead, channels, grid, grid)


def mask_count(ratio: float, n_tokens: int) -> int:
    """Number of masked patch tokens, round half up"""
    return int(math.floor(ratio * n_tokens + 0.5))


def draw_mask(ratio: float, n_tokens: int, batch: int, rng: np.random.Generator) -> np.ndarray:
    """(batch, n_tokens) 0/1 matrix with mask_count ones per row, drawn without replacement"""
    mask = np.zeros((batch, n_tokens))
    k = mask_count(ratio, n_tokens)
    if k == 0:
        return mask
    for b in range(batch):
        mask[b, rng.choice(n_tokens, size=k, replace=False)] = 1.0
    return mask


def linear(x: Tensor, store: ParameterStore, name: str) -> Tensor:
    return x @ store[f"{name}.weight"] + store[f"{name}.bias"]


def attention(
    x: Tensor, store: ParameterStore, prefix: str, heads: int
) -> tuple[Tensor, np.ndarray]:
    """
    Multi-head scaled dot-product self-attention over (B, T, D) tokens

    Returns:
        tuple: (output tokens, attention weights of shape (B, heads, T, T))
    """
    batch, tokens, width = x.shape
    head_dim = width // heads

    def split(t: Tensor) -> Tensor:
        return t.reshape(batch, tokens, heads, head_dim).transpose((0, 2, 1, 3))

    q = split(linear(x, store, f"{prefix}.q"))
    k = split(linear(x, store, f"{prefix}.k"))
    v = split(linear(x, store, f"{prefix}.v"))
    weights = ad.softmax((q @ k.transpose()) / math.sqrt(head_dim), axis=-1)
    merged = (weights @ v).transpose((0, 2, 1, 3)).reshape(batch, tokens, width)
    return linear(merged, store, f"{prefix}.proj"), weights.data


def transformer_block(
    x: Tensor, store: ParameterStore, prefix: str, heads: int
) -> tuple[Tensor, np.ndarray]:
    """Pre-norm block: x + MHSA(LN(x)), then + MLP(LN(x))"""
    normed = ad.layer_norm(x, store[f"{prefix}.norm1.weight"], store[f"{prefix}.norm1.bias"])
    attended, weights = attention(normed, store, f"{prefix}.attn", heads)
    x = x + attended
    normed = ad.layer_norm(x, store[f"{prefix}.norm2.weight"], store[f"{prefix}.norm2.bias"])
    hidden = ad.gelu(linear(normed, store, f"{prefix}.mlp.fc1"))
    return x + linear(hidden, store, f"{prefix}.mlp.fc2"), weights


class VisionTransformer:
    """Field-to-density transformer with a condition class token"""

    def __init__(
        self,
        config: Optional[ViTConfig] = None,
        seed: int = 0,
        store: Optional[ParameterStore] = None,
        logger: Optional[logging.Logger] = None,
    ):
        """
        Initialize VisionTransformer

        Parameters:
            config (ViTConfig, optional): Architecture; defaults to the desk preset
            seed (int): Initialization seed, ignored when `store` is given
            store (ParameterStore, optional): Existing parameters, e.g. from a checkpoint
            logger (logging.Logger, optional): Logger instance. If None, uses a NullHandler.
        """
        self.config = config or ViTConfig.preset("desk")
        self.logger = logger or logging.getLogger(__name__)
        if not logger:
            self.logger.addHandler(logging.NullHandler())

        if store is None:
            store = self._init_parameters(seed)
        else:
            self._check_store(store)
        self.store = store
        self.logger.info(
            f"ViT D={self.config.hidden_dim} L={self.config.layers} h={self.config.heads} "
            f"P={self.config.patch_size}: {self.parameter_count():,} parameters"
        )

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        """Every parameter name with its shape, in registration order"""
        cfg = self.config
        d = cfg.hidden_dim
        shapes: dict[str, tuple[int, ...]] = {}

        def dense(name: str, fan_in: int, fan_out: int) -> None:
            shapes[f"{name}.weight"] = (fan_in, fan_out)
            shapes[f"{name}.bias"] = (fan_out,)

        dense("patch_embed", cfg.patch_dim, d)
        dense("class_proj.fc1", cfg.condition_dim, d)
        dense("class_proj.fc2", d, d)
        shapes["pos_embed"] = (cfg.n_patches + 1, d)
        shapes["mask_token"] = (d,)
        for i in range(cfg.layers):
            prefix = f"blocks.{i}"
            shapes[f"{prefix}.norm1.weight"] = (d,)
            shapes[f"{prefix}.norm1.bias"] = (d,)
            for proj in ("q", "k", "v", "proj"):
                dense(f"{prefix}.attn.{proj}", d, d)
            shapes[f"{prefix}.norm2.weight"] = (d,)
            shapes[f"{prefix}.norm2.bias"] = (d,)
            dense(f"{prefix}.mlp.fc1", d, cfg.mlp_ratio * d)
            dense(f"{prefix}.mlp.fc2", cfg.mlp_ratio * d, d)
        shapes["norm.weight"] = (d,)
        shapes["norm.bias"] = (d,)
        dense("decoder", d, cfg.patch_size**2)
        if cfg.mask_head:
            dense("mask_head", d, cfg.patch_dim)
        return shapes

    def _init_parameters(self, seed: int) -> ParameterStore:
        rng = make_rng(seed)
        store = ParameterStore()
        for name, shape in self.parameter_shapes().items():
            if name.endswith(".bias"):
                value = np.zeros(shape)
            elif name.endswith("norm1.weight") or name.endswith("norm2.weight") or (
                name == "norm.weight"
            ):
                value = np.ones(shape)
            else:
                value = INIT_STD * truncnorm.rvs(-2.0, 2.0, size=shape, random_state=rng)
            store.add(name, np.asarray(value, dtype=np.float64).reshape(shape))
        return store

    def _check_store(self, store: ParameterStore) -> None:
        expected = self.parameter_shapes()
        if list(expected) != store.names():
            missing = sorted(set(expected) - set(store.names()))
            extra = sorted(set(store.names()) - set(expected))
            raise SchemaError(
                f"Checkpoint does not match the ViT config: missing {missing}, unexpected {extra}"
            )
        for name, shape in expected.items():
            if store[name].shape != shape:
                raise SchemaError(f"'{name}' has shape {store[name].shape}, expected {shape}")

    def parameter_count(self) -> int:
        return self.store.parameter_count()

    def class_token(self, condition: Union[np.ndarray, Tensor]) -> Tensor:
        """(B, condition_dim) -> (B, D) class tokens through the two-layer GELU MLP"""
        cond = ad.as_tensor(condition)
        if cond.ndim != 2 or cond.shape[1] != self.config.condition_dim:
            raise SchemaError(
                f"Condition vector has shape {cond.shape}; this model expects "
                f"(batch, {self.config.condition_dim})"
            )
        hidden = ad.gelu(linear(cond, self.store, "class_proj.fc1"))
        return linear(hidden, self.store, "class_proj.fc2")

    def forward(
        self,
        fields: np.ndarray,
        condition: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        mask_ratio: Optional[float] = None,
    ) -> ForwardOutput:
        """
        Predict density maps for a batch

        Parameters:
            fields (np.ndarray): (B, C, grid, grid) normalized field images
            condition (np.ndarray): (B, condition_dim) condition vectors
            training (bool): Apply token masking
            rng (np.random.Generator, optional): Mask draws; required when masking
            mask_ratio (float, optional): Overrides config.mask_ratio in training mode

        Returns:
            ForwardOutput: prediction Tensor of shape (B, grid, grid) in (0, 1)
        """
        cfg = self.config
        fields = np.asarray(fields, dtype=np.float64)
        expected = (cfg.in_channels, cfg.grid, cfg.grid)
        if fields.ndim != 4 or fields.shape[1:] != expected:
            raise ValueError(f"fields shape {fields.shape} != (batch, {expected})")
        condition = np.asarray(condition, dtype=np.float64)
        batch = fields.shape[0]
        if condition.shape[0] != batch:
            raise ValueError(f"Batch sizes differ: fields {batch}, condition {condition.shape[0]}")

        patches = patchify(fields, cfg.patch_size)
        tokens = linear(Tensor(patches), self.store, "patch_embed")
        cls = self.class_token(condition).reshape(batch, 1, cfg.hidden_dim)
        x = ad.concat([cls, tokens], axis=1) + self.store["pos_embed"]

        ratio = cfg.mask_ratio if mask_ratio is None else mask_ratio
        mask = np.zeros((batch, cfg.n_patches))
        if training and mask_count(ratio, cfg.n_patches) > 0:
            if rng is None:
                raise ValueError("Token masking needs an rng")
            mask = draw_mask(ratio, cfg.n_patches, batch, rng)
            # Class token slot 0 is never masked
            gate = np.concatenate([np.zeros((batch, 1)), mask], axis=1)[..., None]
            x = x * (1.0 - gate) + Tensor(gate) * self.store["mask_token"]

        maps = []
        for i in range(cfg.layers):
            x, weights = transformer_block(x, self.store, f"blocks.{i}", cfg.heads)
            maps.append(weights)
        x = ad.layer_norm(x, self.store["norm.weight"], self.store["norm.bias"])
        patch_tokens = x[:, 1:, :]

        decoded = linear(patch_tokens, self.store, "decoder")
        side = cfg.patches_per_side
        image = (
            decoded.reshape(batch, side, side, cfg.patch_size, cfg.patch_size)
            .transpose((0, 1, 3, 2, 4))
            .reshape(batch, cfg.grid, cfg.grid)
        )
        reconstruction = None
        if cfg.mask_head:
            reconstruction = linear(patch_tokens, self.store, "mask_head")
        return ForwardOutput(
            prediction=ad.sigmoid(image),
            attention=maps,
            mask=mask,
            mask_reconstruction=reconstruction,
            patches=patches,
        )

    def predict(self, fields: np.ndarray, condition: np.ndarray) -> np.ndarray:
        """Inference-mode densities as a (B, grid, grid) array, without graph recording"""
        with no_grad():
            return self.forward(fields, condition, training=False).prediction.data.copy()

    def widen_condition(self, condition_dim: int = DYNAMIC_CONDITION_DIM) -> None:
        """
        Grow the class-projection input to `condition_dim` with zero rows

        The widened model gives the same output as before whenever the new inputs are 0.
        """
        current = self.config.condition_dim
        if condition_dim < current:
            raise ValueError(f"Cannot narrow condition input from {current} to {condition_dim}")
        if condition_dim == current:
            return
        weight = self.store["class_proj.fc1.weight"].data
        extra = np.zeros((condition_dim - current, weight.shape[1]))
        self.store.replace("class_proj.fc1.weight", np.vstack([weight, extra]))
        self.config = dataclasses.replace(self.config, condition_dim=condition_dim)
        self.logger.info(f"Class projection widened from {current} to {condition_dim} inputs")

    def group_parameters(self, groups: list[str]) -> list[str]:
        """
        Parameter names covered by fine-tune groups

        decoder_layers covers the last three blocks, the final norm and both projections.

        Raises:
            ValueError: Empty or unknown group set
        """
        if not groups:
            raise ValueError(f"Select at least one fine-tune group from {FINETUNE_GROUPS}")
        unknown = [g for g in groups if g not in FINETUNE_GROUPS]
        if unknown:
            raise ValueError(f"Unknown fine-tune groups {unknown}, expected {FINETUNE_GROUPS}")
        prefixes: set[str] = set()
        if "class_projection" in groups or "decoder_layers" in groups:
            prefixes.add("class_proj.")
        if "decoder_projection" in groups or "decoder_layers" in groups:
            prefixes.add("decoder.")
        if "decoder_layers" in groups:
            first = max(0, self.config.layers - DECODER_LAYER_COUNT)
            prefixes.update(f"blocks.{i}." for i in range(first, self.config.layers))
            prefixes.add("norm.")
        return [n for n in self.store.names() if any(n.startswith(p) for p in prefixes)]

    def save(self, path: Union[str, Path], metadata: Optional[dict[str, Any]] = None) -> Path:
        header = dict(metadata or {})
        header["vit"] = self.config.to_dict()
        return self.store.save(path, header)

    @classmethod
    def load(
        cls, path: Union[str, Path], logger: Optional[logging.Logger] = None
    ) -> tuple[VisionTransformer, dict[str, Any]]:
        """
        Rebuild a model from a TOPOCK01 checkpoint written by save()

        Raises:
            SchemaError: Missing architecture metadata or mismatched parameters
        """
        store, metadata = ParameterStore.load(path)
        if "vit" not in metadata:
            raise SchemaError(f"{path}: checkpoint carries no ViT configuration")
        config = ViTConfig.from_dict(metadata["vit"])
        return cls(config, store=store, logger=logger), metadata
