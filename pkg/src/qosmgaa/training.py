"""Losses, alternating generator/discriminator optimization and evaluation.

Per batch the discriminator is updated first on detached predictions, then
the generator (embeddings + attention encoders + predictor) is updated with
the discriminator's parameters untouched, one step each. Discriminator
batch-norm running statistics are buffers, not parameters; any train-mode
forward (including the one inside the generator step) refreshes them, which
is the usual alternating-GAN behavior.

Everything is deterministic under the configured seed: splits, batch order,
dropout masks and fake samples all derive from it.
"""
from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .advnet import (Discriminator, GumbelConfig, Predictor, build_interaction,
                     gumbel_sample, match_row_statistics)
from .dataset import InteractionSet, batch_iter
from .embedding import EmbeddingTable, init_embeddings
from .errors import DivergenceError, DomainError, ShapeError
from .graphbuild import HeterogeneousGraph, NeighborhoodIndex
from .mogat import GraphTensors, MultiOrderAttention


# ---------------------------------------------------------------------------
# losses and metrics

def bce_with_logits(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Mean binary cross entropy on logits, log-sum-exp form (no explicit
    sigmoid is ever evaluated)."""
    if x.shape != y.shape:
        raise ShapeError(f"logits {tuple(x.shape)} vs labels {tuple(y.shape)}")
    return (torch.clamp(x, min=0) - x * y + torch.log1p(torch.exp(-torch.abs(x)))).mean()


def mse(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Mean squared difference."""
    if x.shape != y.shape:
        raise ShapeError(f"predictions {tuple(x.shape)} vs targets {tuple(y.shape)}")
    return ((x - y) ** 2).mean()


def generator_loss(d_hat_t: torch.Tensor, y_hat_t: torch.Tensor,
                   y: torch.Tensor, lam: float) -> torch.Tensor:
    """lam * BCE(d_hat_t, 1) + (1 - lam) * MSE(y_hat_t, y)."""
    if not (0.0 <= lam <= 1.0):
        raise DomainError(f"lambda must lie in [0,1], got {lam}")
    adv = bce_with_logits(d_hat_t, torch.ones_like(d_hat_t))
    return lam * adv + (1.0 - lam) * mse(y_hat_t, y)


def discriminator_loss(d_hat_t: torch.Tensor, d_hat_f: torch.Tensor) -> torch.Tensor:
    """BCE(d_hat_t, 1) + BCE(d_hat_f, 0)."""
    return (bce_with_logits(d_hat_t, torch.ones_like(d_hat_t))
            + bce_with_logits(d_hat_f, torch.zeros_like(d_hat_f)))


@dataclass
class Metrics:
    mae: float
    rmse: float
    count: int

    def to_dict(self) -> dict:
        return {"mae": self.mae, "rmse": self.rmse, "count": self.count}


def mae_rmse(preds: np.ndarray, targets: np.ndarray) -> Metrics:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ShapeError(f"predictions {preds.shape} vs targets {targets.shape}")
    if preds.size == 0:
        raise DomainError("cannot evaluate an empty set")
    err = preds - targets
    return Metrics(float(np.mean(np.abs(err))),
                   float(np.sqrt(np.mean(err ** 2))),
                   int(preds.size))


# ---------------------------------------------------------------------------
# configuration

@dataclass
class TrainingConfig:
    lambda_adv: float = 0.2
    tau: float = 0.5
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    patience: int = 15
    seed: int = 0
    order: int = 2
    heads: int = 2
    embed_dim: int = 32
    proj_dim: int = 32
    hidden_dim: int = 128
    disc_hidden_dim: int = 4
    dropout: float = 0.1
    leak: float = 0.2
    init_scale: float = 0.1
    val_fraction: float = 0.1
    # ablation switches
    adversarial_on: bool = True
    gumbel_on: bool = True
    max_order_override: int | None = None
    share_order_params: bool = False
    # variants (off by default)
    adv_generator_on_fake: bool = False
    rescale_fake: bool = False
    device: str = "cpu"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (0.0 <= self.lambda_adv <= 1.0):
            raise DomainError(f"lambda must lie in [0,1], got {self.lambda_adv}")
        if self.tau <= 0:
            raise DomainError(f"tau must be > 0, got {self.tau}")
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise DomainError("learning_rate must be > 0 and weight_decay >= 0")
        if self.patience < 0:
            raise DomainError("patience must be >= 0")
        if not (1 <= self.effective_order <= 4):
            raise DomainError(f"attention order must lie in [1,4], got {self.effective_order}")
        if self.heads < 1 or self.embed_dim < 1 or self.proj_dim < 1:
            raise DomainError("heads, embed_dim and proj_dim must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise DomainError(f"dropout must lie in [0,1), got {self.dropout}")
        if not (0.0 < self.leak < 1.0):
            raise DomainError(f"leak must lie in (0,1), got {self.leak}")
        if not (0.0 <= self.val_fraction < 1.0):
            raise DomainError(f"val_fraction must lie in [0,1), got {self.val_fraction}")

    @property
    def effective_order(self) -> int:
        return self.max_order_override if self.max_order_override else self.order


@dataclass
class EpochRecord:
    epoch: int
    gen_loss: float
    disc_loss: float | None
    val_mae: float
    val_rmse: float
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def best_epoch(self) -> EpochRecord:
        return min(self.records, key=lambda r: r.val_mae)

    def save_jsonl(self, path: str | Path) -> None:
        with open(Path(path), "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(asdict(rec)) + "\n")


@dataclass
class DataBundle:
    fit: InteractionSet
    val: InteractionSet
    test: InteractionSet
    user_graph: HeterogeneousGraph
    service_graph: HeterogeneousGraph
    user_index: NeighborhoodIndex
    service_index: NeighborhoodIndex
    metric_name: str = "rt"

    @property
    def num_users(self) -> int:
        return self.user_graph.num_entity_nodes

    @property
    def num_services(self) -> int:
        return self.service_graph.num_entity_nodes


# ---------------------------------------------------------------------------
# model assembly

class QosmgaaModel(nn.Module):
    """Generator side: embedding tables, the two graph encoders and the
    predictor MLP."""

    def __init__(self, cfg: TrainingConfig, num_user_nodes: int,
                 num_service_nodes: int, dtype: torch.dtype = torch.float32):
        super().__init__()
        ss = np.random.SeedSequence(cfg.seed)
        seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(5)]
        self.cfg = cfg
        order = cfg.effective_order
        self.user_emb = init_embeddings(num_user_nodes, cfg.embed_dim,
                                        seeds[0], cfg.init_scale, dtype)
        self.service_emb = init_embeddings(num_service_nodes, cfg.embed_dim,
                                           seeds[1], cfg.init_scale, dtype)
        self.user_att = MultiOrderAttention(
            cfg.embed_dim, cfg.proj_dim, cfg.heads, order, cfg.leak, cfg.dropout,
            cfg.share_order_params, seeds[2], dtype)
        self.service_att = MultiOrderAttention(
            cfg.embed_dim, cfg.proj_dim, cfg.heads, order, cfg.leak, cfg.dropout,
            cfg.share_order_params, seeds[3], dtype)
        self.predictor = Predictor(2 * self.user_att.out_dim, cfg.hidden_dim,
                                   seeds[4], dtype)

    def encode(self, user_graph, service_graph,
               generator: torch.Generator | None = None
               ) -> tuple[torch.Tensor, torch.Tensor]:
        u = self.user_att(self.user_emb.weight, user_graph, generator)
        s = self.service_att(self.service_emb.weight, service_graph, generator)
        return u, s


def build_discriminator(cfg: TrainingConfig,
                        dtype: torch.dtype = torch.float32) -> Discriminator:
    seed = int(np.random.SeedSequence((cfg.seed, 91)).generate_state(1)[0])
    return Discriminator(cfg.disc_hidden_dim, cfg.leak, seed, dtype)


class TrainedModel:
    """Evaluation-mode wrapper with frozen graph encodings cached once, so a
    single interaction costs one gather plus the predictor MLP."""

    def __init__(self, model: QosmgaaModel, disc: Discriminator | None,
                 user_gt: GraphTensors, service_gt: GraphTensors):
        self.model = model.eval()
        self.disc = disc.eval() if disc is not None else None
        self.user_gt = user_gt
        self.service_gt = service_gt
        with torch.no_grad():
            self.u_enc, self.s_enc = model.encode(user_gt, service_gt)

    def refresh_encodings(self) -> None:
        with torch.no_grad():
            self.u_enc, self.s_enc = self.model.encode(self.user_gt, self.service_gt)

    @torch.no_grad()
    def predict_pairs(self, users, services, chunk: int = 8192) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        services = np.asarray(services, dtype=np.int64)
        out = np.empty(len(users), dtype=np.float64)
        for lo in range(0, len(users), chunk):
            hi = min(lo + chunk, len(users))
            batch = build_interaction(self.u_enc, self.s_enc,
                                      users[lo:hi], services[lo:hi])
            out[lo:hi] = self.model.predictor(batch.rows).cpu().numpy()
        return out

    def predict_single(self, user: int, service: int) -> float:
        return float(self.predict_pairs(np.array([user]), np.array([service]))[0])


# ---------------------------------------------------------------------------
# training loop

def _fake_batch(cfg: TrainingConfig, batch: int, width: int,
                generator: torch.Generator, real_rows: torch.Tensor,
                dtype: torch.dtype) -> torch.Tensor:
    if cfg.gumbel_on:
        fake = gumbel_sample(batch, GumbelConfig(cfg.tau, width),
                             generator=generator, dtype=dtype)
    else:
        # continuous Gaussian negatives (the non-Gumbel ablation arm)
        fake = torch.randn(batch, width, generator=generator, dtype=dtype)
    if cfg.rescale_fake:
        fake = match_row_statistics(fake, real_rows)
    return fake


def discriminator_step(disc: Discriminator, opt_d: torch.optim.Optimizer,
                       y_hat_t: torch.Tensor, y_hat_f: torch.Tensor
                       ) -> float:
    """Update the discriminator on detached predictions; the generator side
    receives no gradient and none of its parameters move."""
    d_t = disc(y_hat_t.detach())
    d_f = disc(y_hat_f.detach())
    loss_d = discriminator_loss(d_t, d_f)
    opt_d.zero_grad()
    loss_d.backward()
    opt_d.step()
    return float(loss_d)


def generator_step(model: QosmgaaModel, disc: Discriminator | None,
                   opt_g: torch.optim.Optimizer, y_hat_t: torch.Tensor,
                   y_hat_f: torch.Tensor | None, y: torch.Tensor,
                   cfg: TrainingConfig) -> float:
    """Update embeddings + encoders + predictor. Gradients reach the
    discriminator's parameters but its optimizer never steps them, so their
    values stay bit-identical (running batch-norm statistics, being buffers,
    still refresh as in any alternating GAN)."""
    if cfg.adversarial_on and disc is not None:
        adv_in = y_hat_f if cfg.adv_generator_on_fake else y_hat_t
        loss_g = generator_loss(disc(adv_in), y_hat_t, y, cfg.lambda_adv)
    else:
        loss_g = mse(y_hat_t, y)
    opt_g.zero_grad()
    loss_g.backward()
    opt_g.step()
    return float(loss_g)


def train_epoch(model: QosmgaaModel, disc: Discriminator,
                opt_g: torch.optim.Optimizer, opt_d: torch.optim.Optimizer,
                fit_set: InteractionSet, cfg: TrainingConfig,
                user_gt: GraphTensors, service_gt: GraphTensors,
                epoch: int, torch_gen: torch.Generator, batch_seed: int
                ) -> tuple[float, float | None]:
    """One pass over the training triples, discriminator then generator once
    per batch (1:1); returns mean (gen, disc) losses."""
    model.train()
    disc.train()
    dtype = model.user_emb.weight.dtype
    gen_losses, disc_losses = [], []
    for b, (users, services, values) in enumerate(
            batch_iter(fit_set, cfg.batch_size, batch_seed, shuffle=True)):
        y = torch.as_tensor(values, dtype=dtype)
        u_enc, s_enc = model.encode(user_gt, service_gt, torch_gen)
        real = build_interaction(u_enc, s_enc, users, services, values)
        y_hat_t = model.predictor(real.rows)
        y_hat_f = None
        if cfg.adversarial_on:
            fake_rows = _fake_batch(cfg, len(users), real.rows.shape[1],
                                    torch_gen, real.rows, dtype)
            y_hat_f = model.predictor(fake_rows)
            disc_losses.append(discriminator_step(disc, opt_d, y_hat_t, y_hat_f))
        gen_losses.append(generator_step(model, disc if cfg.adversarial_on else None,
                                         opt_g, y_hat_t, y_hat_f, y, cfg))
        if not math.isfinite(gen_losses[-1]) or (
                disc_losses and not math.isfinite(disc_losses[-1])):
            raise DivergenceError(f"non-finite loss at epoch {epoch} batch {b}")
    gen_mean = float(np.mean(gen_losses)) if gen_losses else 0.0
    disc_mean = float(np.mean(disc_losses)) if disc_losses else None
    return gen_mean, disc_mean


class EarlyStopper:
    """Track best validation MAE; ``should_stop`` turns true once the count
    of consecutive non-improving epochs reaches ``patience`` (with patience 0
    the first non-improving epoch stops)."""

    def __init__(self, patience: int):
        if patience < 0:
            raise DomainError("patience must be >= 0")
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad = 0
        self.should_stop = False
        self.epoch = 0

    def update(self, val_mae: float) -> bool:
        """Record one epoch's validation MAE; returns True on improvement."""
        self.epoch += 1
        if val_mae < self.best:
            self.best = val_mae
            self.best_epoch = self.epoch
            self.bad = 0
            return True
        self.bad += 1
        if self.bad >= self.patience:
            self.should_stop = True
        return False


def _validation_metrics(model: QosmgaaModel, user_gt: GraphTensors,
                        service_gt: GraphTensors, val: InteractionSet,
                        fallback: InteractionSet) -> Metrics:
    probe = val if len(val) else fallback
    model.eval()
    with torch.no_grad():
        u_enc, s_enc = model.encode(user_gt, service_gt)
        batch = build_interaction(u_enc, s_enc, probe.users, probe.services)
        preds = model.predictor(batch.rows).cpu().numpy()
    return mae_rmse(preds, probe.values)


def fit(bundle: DataBundle, cfg: TrainingConfig,
        history_path: str | Path | None = None
        ) -> tuple[TrainedModel, TrainHistory]:
    """Train up to cfg.epochs with 1:1 alternation, track the best validation
    MAE, stop after ``patience`` consecutive non-improving epochs and return
    the parameters of the best-validation epoch."""
    if len(bundle.fit) == 0:
        raise DomainError("empty training set")
    dtype = torch.float32
    model = QosmgaaModel(cfg, bundle.user_index.num_nodes,
                         bundle.service_index.num_nodes, dtype)
    disc = build_discriminator(cfg, dtype)
    user_gt = GraphTensors(bundle.user_index, cfg.device)
    service_gt = GraphTensors(bundle.service_index, cfg.device)
    opt_g = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate,
                              weight_decay=cfg.weight_decay)
    opt_d = torch.optim.AdamW(disc.parameters(), lr=cfg.learning_rate,
                              weight_decay=cfg.weight_decay)

    history = TrainHistory()
    stopper = EarlyStopper(cfg.patience)
    best_state = None
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        seeds = np.random.SeedSequence((cfg.seed, epoch)).generate_state(2)
        torch_gen = torch.Generator().manual_seed(int(seeds[0]))
        gen_loss, disc_loss = train_epoch(
            model, disc, opt_g, opt_d, bundle.fit, cfg,
            user_gt, service_gt, epoch, torch_gen, int(seeds[1]))
        vm = _validation_metrics(model, user_gt, service_gt, bundle.val, bundle.fit)
        history.records.append(EpochRecord(
            epoch, gen_loss, disc_loss, vm.mae, vm.rmse,
            time.perf_counter() - t0))
        if stopper.update(vm.mae):
            best_state = (copy.deepcopy(model.state_dict()),
                          copy.deepcopy(disc.state_dict()))
        if stopper.should_stop:
            break
    if best_state is not None:
        model.load_state_dict(best_state[0])
        disc.load_state_dict(best_state[1])
    if history_path is not None:
        history.save_jsonl(history_path)
    return TrainedModel(model, disc, user_gt, service_gt), history


def evaluate(trained: TrainedModel, test: InteractionSet) -> Metrics:
    """MAE and RMSE over all test triples (evaluation mode)."""
    if len(test) == 0:
        raise DomainError("cannot evaluate an empty interaction set")
    preds = trained.predict_pairs(test.users, test.services)
    return mae_rmse(preds, test.values)


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path: str | Path, trained: TrainedModel, cfg: TrainingConfig,
                    opt_g: torch.optim.Optimizer | None = None,
                    opt_d: torch.optim.Optimizer | None = None,
                    epoch: int = 0) -> None:
    """Single-file archive: config echo, every parameter section (including
    batch-norm running statistics) and, when given, optimizer state."""
    payload = {
        "config": asdict(cfg),
        "model": trained.model.state_dict(),
        "disc": trained.disc.state_dict() if trained.disc is not None else None,
        "opt_g": opt_g.state_dict() if opt_g is not None else None,
        "opt_d": opt_d.state_dict() if opt_d is not None else None,
        "epoch": epoch,
    }
    torch.save(payload, Path(path))


def load_checkpoint(path: str | Path) -> dict:
    return torch.load(Path(path), weights_only=False)
