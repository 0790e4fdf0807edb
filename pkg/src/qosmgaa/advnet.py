"""Adversarial interaction module: pairwise interaction rows, Gumbel-Softmax
negative sampling, the predictor MLP and the discriminator.

The predictor maps a concatenated (user, service) embedding row through two
LayerNorm+ReLU hidden layers to a scalar QoS estimate; the discriminator
classifies those scalar estimates as coming from real interaction rows or
sampled fakes. One predictor serves both the real and the fake path.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .errors import DomainError, ShapeError

_GUMBEL_EPS = 1e-20


@dataclass
class InteractionBatch:
    """One row per (user, service) pair: [u_emb || s_emb], plus targets."""

    rows: torch.Tensor      # (B, user_width + service_width)
    targets: torch.Tensor   # (B,)


@dataclass
class GumbelConfig:
    tau: float
    dim: int

    def __post_init__(self):
        if self.tau <= 0:
            raise DomainError(f"tau must be > 0, got {self.tau}")
        if self.dim < 1:
            raise DomainError(f"dim must be >= 1, got {self.dim}")


def build_interaction(u_embs: torch.Tensor, s_embs: torch.Tensor,
                      users, services, values=None) -> InteractionBatch:
    """Gather and concatenate the embedding rows for each pair."""
    u_idx = torch.as_tensor(users, dtype=torch.long)
    s_idx = torch.as_tensor(services, dtype=torch.long)
    if u_idx.numel() and (u_idx.min() < 0 or u_idx.max() >= u_embs.shape[0]):
        raise IndexError("user index out of range")
    if s_idx.numel() and (s_idx.min() < 0 or s_idx.max() >= s_embs.shape[0]):
        raise IndexError("service index out of range")
    rows = torch.cat([u_embs[u_idx], s_embs[s_idx]], dim=1)
    if values is None:
        targets = torch.zeros(rows.shape[0], dtype=rows.dtype)
    else:
        targets = torch.as_tensor(values, dtype=rows.dtype)
    return InteractionBatch(rows, targets)


def gumbel_noise(shape, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """-log(-log(U)) with U ~ Uniform(0,1), epsilon-guarded at both logs."""
    u = torch.rand(shape, generator=generator, dtype=dtype)
    return -torch.log(-torch.log(u + _GUMBEL_EPS) + _GUMBEL_EPS)


def gumbel_softmax_rows(z: torch.Tensor, g: torch.Tensor, tau: float) -> torch.Tensor:
    """Row-wise softmax of (z + g) / tau; each output row is a probability
    vector. Differentiable in z and g."""
    if tau <= 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    return torch.softmax((z + g) / tau, dim=-1)


def gumbel_sample(batch_size: int, cfg: GumbelConfig,
                  seed: int | None = None,
                  generator: torch.Generator | None = None,
                  dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Draw a (batch_size, cfg.dim) matrix of pseudo-interaction rows:
    softmax((Z + G)/tau) with Z standard Gaussian and G Gumbel noise."""
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    if generator is None:
        generator = torch.Generator()
        if seed is not None:
            generator.manual_seed(int(seed))
    z = torch.randn(batch_size, cfg.dim, generator=generator, dtype=dtype)
    g = gumbel_noise((batch_size, cfg.dim), generator, dtype)
    return gumbel_softmax_rows(z, g, cfg.tau)


def match_row_statistics(fake: torch.Tensor, real: torch.Tensor) -> torch.Tensor:
    """Optionally rescale fake rows to the real batch's mean/std (the fake
    simplex rows otherwise live on a very different scale than embedding
    rows). Real statistics are detached so no gradient leaks through them."""
    r_mean = real.detach().mean()
    r_std = real.detach().std().clamp_min(1e-8)
    f_mean = fake.mean()
    f_std = fake.std().clamp_min(1e-8)
    return (fake - f_mean) / f_std * r_std + r_mean


def _init_linear(linear: nn.Linear, gen: torch.Generator) -> None:
    # same distribution as torch's default Linear reset, but generator-driven
    bound = 1.0 / linear.in_features ** 0.5
    with torch.no_grad():
        linear.weight.uniform_(-bound, bound, generator=gen)
        linear.bias.uniform_(-bound, bound, generator=gen)


class Predictor(nn.Module):
    """in_dim -> hidden -> hidden -> 1 with per-row LayerNorm + ReLU on the
    two hidden layers. LayerNorm uses per-row statistics, so train and eval
    behave identically and rows are processed independently."""

    def __init__(self, in_dim: int, hidden: int = 128, seed: int = 0,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        if hidden < 1:
            raise DomainError("hidden width must be >= 1")
        self.fc1 = nn.Linear(in_dim, hidden, dtype=dtype)
        self.ln1 = nn.LayerNorm(hidden, eps=1e-5, dtype=dtype)
        self.fc2 = nn.Linear(hidden, hidden, dtype=dtype)
        self.ln2 = nn.LayerNorm(hidden, eps=1e-5, dtype=dtype)
        self.out = nn.Linear(hidden, 1, dtype=dtype)
        gen = torch.Generator().manual_seed(int(seed))
        for layer in (self.fc1, self.fc2, self.out):
            _init_linear(layer, gen)

    def forward(self, rows: torch.Tensor) -> torch.Tensor:
        if rows.ndim != 2 or rows.shape[1] != self.fc1.in_features:
            raise ShapeError(
                f"expected (B, {self.fc1.in_features}) rows, got {tuple(rows.shape)}")
        h = F.relu(self.ln1(self.fc1(rows)))
        h = F.relu(self.ln2(self.fc2(h)))
        return self.out(h).squeeze(-1)


class Discriminator(nn.Module):
    """Scalar prediction -> hidden -> hidden -> logit, with LeakyReLU then
    BatchNorm on the hidden layers. Train mode normalizes with batch
    statistics (and updates the running ones); eval mode uses the running
    statistics, so eval is row-wise independent."""

    def __init__(self, hidden: int = 4, leak: float = 0.2, seed: int = 0,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        if hidden < 1:
            raise DomainError("hidden width must be >= 1")
        self.leak = leak
        self.fc1 = nn.Linear(1, hidden, dtype=dtype)
        self.bn1 = nn.BatchNorm1d(hidden, eps=1e-5, momentum=0.1, dtype=dtype)
        self.fc2 = nn.Linear(hidden, hidden, dtype=dtype)
        self.bn2 = nn.BatchNorm1d(hidden, eps=1e-5, momentum=0.1, dtype=dtype)
        self.out = nn.Linear(hidden, 1, dtype=dtype)
        gen = torch.Generator().manual_seed(int(seed))
        for layer in (self.fc1, self.fc2, self.out):
            _init_linear(layer, gen)

    def forward(self, preds: torch.Tensor) -> torch.Tensor:
        if preds.ndim != 1:
            raise ShapeError(f"expected a 1-D prediction vector, got {tuple(preds.shape)}")
        if self.training and preds.shape[0] < 2:
            raise DomainError("train-mode discriminator batch needs >= 2 samples "
                              "for batch statistics")
        x = preds.unsqueeze(-1)
        x = self.bn1(F.leaky_relu(self.fc1(x), self.leak))
        x = self.bn2(F.leaky_relu(self.fc2(x), self.leak))
        return self.out(x).squeeze(-1)
