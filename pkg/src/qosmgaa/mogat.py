"""Multi-order, multi-head graph attention over exact-distance neighborhoods.

Per head n and order d, a node's update is the attention-weighted sum of its
projected order-d neighbors: weights are a softmax over LeakyReLU'd logits
a . [W h_i || W h_k] computed within each order-d set, sums run over the
orders, and an ELU nonlinearity finishes each head. Head outputs are
concatenated. Nodes whose neighbor set is empty at every order map to
ELU(0) = 0.

Dropout (training mode only) is applied to the normalized attention weights
with an explicit torch.Generator so full runs stay reproducible.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterator

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import DomainError, ShapeError
from .graphbuild import NeighborhoodIndex


def leaky_relu(x, leak: float):
    """max(0, x) + leak * min(0, x), for floats or tensors."""
    if isinstance(x, torch.Tensor):
        return torch.clamp(x, min=0) + leak * torch.clamp(x, max=0)
    return max(0.0, x) + leak * min(0.0, x)


def attention_logits(h_i: torch.Tensor, h_j: torch.Tensor,
                     W: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
    """Unnormalized pair similarity a . [W h_i || W h_j]."""
    p_i = h_i @ W
    p_j = h_j @ W
    if a.numel() != 2 * p_i.numel():
        raise ShapeError(f"attention vector length {a.numel()} != 2*{p_i.numel()}")
    k = p_i.numel()
    return a[:k] @ p_i + a[k:] @ p_j


class GraphTensors:
    """Order-indexed flat (center, neighbor) long tensors for one graph,
    built once from a NeighborhoodIndex and shared by every forward pass."""

    def __init__(self, index: NeighborhoodIndex, device="cpu"):
        self.num_nodes = index.num_nodes
        self.max_order = index.max_order
        self.centers: list[torch.Tensor] = []
        self.neighbors: list[torch.Tensor] = []
        for d in range(1, index.max_order + 1):
            c, nb = index.pairs(d)
            self.centers.append(torch.from_numpy(np.ascontiguousarray(c)).to(device))
            self.neighbors.append(torch.from_numpy(np.ascontiguousarray(nb)).to(device))


def _as_graph_tensors(graph) -> GraphTensors:
    return graph if isinstance(graph, GraphTensors) else GraphTensors(graph)


class MultiOrderAttention(nn.Module):
    """One attention layer whose update rule internally spans orders 1..D."""

    def __init__(self, in_dim: int, proj_dim: int, num_heads: int, max_order: int,
                 leak: float = 0.2, dropout: float = 0.1,
                 share_order_params: bool = False, seed: int = 0,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        if not (0.0 < leak < 1.0):
            raise DomainError(f"leak must lie in (0,1), got {leak}")
        if not (0.0 <= dropout < 1.0):
            raise DomainError(f"dropout must lie in [0,1), got {dropout}")
        if num_heads < 1 or max_order < 1:
            raise DomainError("num_heads and max_order must be >= 1")
        self.in_dim = in_dim
        self.proj_dim = proj_dim
        self.num_heads = num_heads
        self.max_order = max_order
        self.leak = leak
        self.dropout = dropout
        self.share_order_params = share_order_params

        gen = torch.Generator().manual_seed(int(seed))
        n_order_params = 1 if share_order_params else max_order
        self.proj = nn.ParameterDict()
        self.attn = nn.ParameterDict()
        w_bound = (6.0 / (in_dim + proj_dim)) ** 0.5
        a_bound = (6.0 / (2 * proj_dim + 1)) ** 0.5
        for n in range(num_heads):
            for d in range(n_order_params):
                w = (torch.rand(in_dim, proj_dim, generator=gen, dtype=dtype) * 2 - 1) * w_bound
                a = (torch.rand(2 * proj_dim, generator=gen, dtype=dtype) * 2 - 1) * a_bound
                self.proj[f"h{n}d{d}"] = nn.Parameter(w)
                self.attn[f"h{n}d{d}"] = nn.Parameter(a)

    def _params(self, head: int, order: int) -> tuple[torch.Tensor, torch.Tensor]:
        d = 0 if self.share_order_params else order - 1
        key = f"h{head}d{d}"
        return self.proj[key], self.attn[key]

    @property
    def out_dim(self) -> int:
        return self.num_heads * self.proj_dim

    def _order_weights(self, features: torch.Tensor, gt: GraphTensors,
                       head: int, order: int
                       ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """Per-pair softmax weights for one (head, order); returns
        (centers, neighbors, weights, projected features)."""
        W, a = self._params(head, order)
        P = features @ W
        centers = gt.centers[order - 1]
        neighbors = gt.neighbors[order - 1]
        s_c = P @ a[: self.proj_dim]
        s_n = P @ a[self.proj_dim:]
        logits = leaky_relu(s_c[centers] + s_n[neighbors], self.leak)
        # segment softmax over each center's neighbor set (shift by the
        # segment max for stability; the shift is a constant wrt gradients)
        m = torch.zeros(gt.num_nodes, dtype=logits.dtype, device=logits.device)
        if centers.numel():
            m.scatter_reduce_(0, centers, logits.detach(), reduce="amax",
                              include_self=False)
        ex = torch.exp(logits - m[centers])
        denom = torch.zeros(gt.num_nodes, dtype=ex.dtype, device=ex.device
                            ).index_add(0, centers, ex)
        weights = ex / denom[centers]
        return centers, neighbors, weights, P

    def aggregate_multi_order(self, features: torch.Tensor, graph, head: int,
                              generator: torch.Generator | None = None
                              ) -> torch.Tensor:
        """Sum the attention-weighted projected neighbors over all orders,
        then apply the ELU nonlinearity."""
        gt = _as_graph_tensors(graph)
        if features.shape[0] != gt.num_nodes:
            raise ShapeError(f"features rows {features.shape[0]} != nodes {gt.num_nodes}")
        acc = torch.zeros(gt.num_nodes, self.proj_dim,
                          dtype=features.dtype, device=features.device)
        for order in range(1, self.max_order + 1):
            centers, neighbors, weights, P = self._order_weights(features, gt, head, order)
            if self.training and self.dropout > 0 and weights.numel():
                keep = (torch.rand(weights.shape, generator=generator,
                                   device=weights.device) >= self.dropout)
                weights = weights * keep.to(weights.dtype) / (1.0 - self.dropout)
            acc = acc.index_add(0, centers, weights.unsqueeze(1) * P[neighbors])
        return F.elu(acc)

    def forward(self, features: torch.Tensor, graph,
                generator: torch.Generator | None = None) -> torch.Tensor:
        """Concatenate per-head aggregates: (num_nodes, num_heads*proj_dim)."""
        gt = _as_graph_tensors(graph)
        return torch.cat(
            [self.aggregate_multi_order(features, gt, h, generator)
             for h in range(self.num_heads)], dim=1)

    # spec-facing alias
    multi_head_forward = forward

    @torch.no_grad()
    def attention_weights(self, node: int, order: int, head: int, graph,
                          features: torch.Tensor
                          ) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor ids and softmax weights of one (node, order, head);
        empty neighbor set yields empty arrays. Dropout never applies here."""
        if order > self.max_order:
            raise DomainError(f"order {order} exceeds max_order {self.max_order}")
        gt = _as_graph_tensors(graph)
        centers, neighbors, weights, _ = self._order_weights(features, gt, head, order)
        sel = centers == node
        return (neighbors[sel].cpu().numpy(),
                weights[sel].cpu().numpy())

    @torch.no_grad()
    def attention_report(self, features: torch.Tensor, graph
                         ) -> Iterator[tuple[int, int, int, int, float]]:
        """Yield (node, order, head, neighbor, weight) rows, eval semantics."""
        gt = _as_graph_tensors(graph)
        for head in range(self.num_heads):
            for order in range(1, self.max_order + 1):
                centers, neighbors, weights, _ = self._order_weights(
                    features, gt, head, order)
                for c, nb, w in zip(centers.tolist(), neighbors.tolist(),
                                    weights.tolist()):
                    yield c, order, head, nb, w


def export_attention_csv(layer: MultiOrderAttention, features: torch.Tensor,
                         graph, path: str | Path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "order", "head", "neighbor", "weight"])
        for row in layer.attention_report(features, graph):
            writer.writerow(row)
