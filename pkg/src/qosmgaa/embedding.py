"""Learnable per-node embedding tables with id lookup."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import DomainError


class EmbeddingTable(nn.Module):
    """num_nodes x dim parameter matrix; one row per graph node (entity and
    attribute nodes share the table)."""

    def __init__(self, weight: torch.Tensor):
        super().__init__()
        if weight.ndim != 2:
            raise DomainError("embedding weight must be 2-D")
        self.weight = nn.Parameter(weight)

    @property
    def num_nodes(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def forward(self, indices) -> torch.Tensor:
        return lookup(self, indices)


def init_embeddings(num_nodes: int, dim: int, seed: int,
                    scale: float = 0.1, dtype: torch.dtype = torch.float32
                    ) -> EmbeddingTable:
    """Zero-mean Gaussian rows with standard deviation ``scale``;
    deterministic under ``seed``."""
    if num_nodes < 1 or dim < 1:
        raise DomainError(f"num_nodes and dim must be >= 1, got ({num_nodes}, {dim})")
    if scale <= 0:
        raise DomainError(f"scale must be > 0, got {scale}")
    gen = torch.Generator().manual_seed(int(seed))
    weight = torch.randn(num_nodes, dim, generator=gen, dtype=dtype) * scale
    return EmbeddingTable(weight)


def lookup(table: EmbeddingTable, indices) -> torch.Tensor:
    """Pure gather: row k of the output is table row indices[k]."""
    idx = torch.as_tensor(indices, dtype=torch.long)
    if idx.numel() and (idx.min() < 0 or idx.max() >= table.num_nodes):
        raise IndexError(f"embedding index outside [0, {table.num_nodes})")
    return table.weight[idx]


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    """Serialize as .npy (shape header + row-major values); round-trips
    bit-exactly."""
    np.save(Path(path), table.weight.detach().cpu().numpy())


def load_embeddings(path: str | Path) -> EmbeddingTable:
    arr = np.load(Path(path))
    return EmbeddingTable(torch.from_numpy(arr))
