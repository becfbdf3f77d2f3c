"""Embedding encoder for fused descriptors.

A fused vector is reshaped into its most-square 2-D grid and run through a
deep pre-activation conv stack (BN -> ReLU -> conv, stride 2 every third
block) down to a single cell, then layer-normalized without affine terms so
every embedding leaves with zero mean and unit variance.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
from torch import nn


def most_square_grid(n: int) -> Tuple[int, int]:
    """Factor n as h*w with h <= w and h the largest divisor <= sqrt(n)."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    h = int(math.isqrt(n))
    while n % h:
        h -= 1
    return h, n // h


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int = 64
    embed_dim: int = 64
    blocks: int = 15
    stride_every: int = 3
    grid: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if self.grid is not None and self.grid[0] * self.grid[1] != self.input_dim:
            raise ValueError("grid %r does not tile input_dim %d"
                             % (self.grid, self.input_dim))

    @property
    def input_grid(self) -> Tuple[int, int]:
        return self.grid if self.grid is not None else most_square_grid(self.input_dim)


class VectorEncoder(nn.Module):
    """Vector -> grid -> conv stack -> 64-d normalized embedding."""

    def __init__(self, config: EncoderConfig = EncoderConfig()):
        super().__init__()
        self.config = config
        c = config.embed_dim
        self.stem = nn.Conv2d(1, c, 3, padding=1)
        blocks = []
        for i in range(config.blocks):
            stride = 2 if (i + 1) % config.stride_every == 0 else 1
            blocks.append(nn.Sequential(
                nn.BatchNorm2d(c),
                nn.ReLU(),
                nn.Conv2d(c, c, 3, stride=stride, padding=1),
            ))
        self.blocks = nn.ModuleList(blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.norm = nn.LayerNorm(c, elementwise_affine=False)
        self.double()

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        """(B, input_dim) -> (B, embed_dim), zero mean and unit variance per row."""
        if z.ndim != 2 or z.shape[1] != self.config.input_dim:
            raise ValueError("expected (B, %d) input, got %r"
                             % (self.config.input_dim, tuple(z.shape)))
        h, w = self.config.input_grid
        x = z.reshape(-1, 1, h, w)
        x = self.stem(x)
        for block in self.blocks:
            x = block(x)
        x = self.pool(x).flatten(1)
        return self.norm(x)


def encode(z, encoder) -> np.ndarray:
    """Embed one fused descriptor: layer-normalized embed_dim vector.

    Accepts a raw array or anything with a ``values`` attribute; the
    encoder runs in inference mode.
    """
    if hasattr(encoder, "encoder"):  # full model passed instead of its encoder
        encoder = encoder.encoder
    vec = np.asarray(getattr(z, "values", z), dtype=np.float64).ravel()
    encoder.eval()
    with torch.no_grad():
        out = encoder(torch.from_numpy(vec)[None, :])
    return out[0].numpy()
