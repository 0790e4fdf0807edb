"""Experiment orchestration: grid runs, metrics/timing/memory reports.

A run walks the (model, density, noise_ratio, seed) grid: sample the matrix
at the target density, build the heterogeneous graphs (optionally noised),
train or fit the selected model, evaluate on the holdout and append a cell
to the report. The report JSON is rewritten after every cell so partial
results survive an abort.
"""
from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import torch

from . import baselines
from .dataset import (AttributeTable, InteractionSet, QoSMatrix,
                      load_entity_attributes, load_qos_matrix, sample_sparse,
                      split_validation)
from .errors import DomainError
from .graphbuild import (HeterogeneousGraph, NeighborhoodIndex,
                         build_heterogeneous_graph, inject_edge_noise)
from .training import (DataBundle, Metrics, TrainedModel, TrainingConfig,
                       evaluate, fit, mae_rmse)

KNOWN_MODELS = ("qosmgaa", "upcc", "ipcc", "uipcc", "pmf")

DEFAULT_USER_SCHEMA = ["ip_address", "country", "ip_no", "autonomous_system",
                       "latitude", "longitude"]
DEFAULT_SERVICE_SCHEMA = ["wsdl_address", "provider", "ip_address", "country",
                          "ip_no", "autonomous_system", "latitude", "longitude"]
DEFAULT_USER_GRAPH_SCHEMA = ["country", "autonomous_system"]
DEFAULT_SERVICE_GRAPH_SCHEMA = ["country", "autonomous_system", "provider"]


@dataclass
class ExperimentConfig:
    dataset: str
    format: str = "wsdream_dense"
    metric: str = "rt"
    densities: list[float] = field(default_factory=lambda: [0.05])
    models: list[str] = field(default_factory=lambda: ["qosmgaa"])
    seeds: list[int] = field(default_factory=lambda: [0])
    noise_ratios: list[float] = field(default_factory=lambda: [0.0])
    training: TrainingConfig = field(default_factory=TrainingConfig)
    out_dir: str = "runs"
    user_attributes: str | None = None
    service_attributes: str | None = None
    user_schema: list[str] = field(default_factory=lambda: list(DEFAULT_USER_SCHEMA))
    service_schema: list[str] = field(default_factory=lambda: list(DEFAULT_SERVICE_SCHEMA))
    user_graph_schema: list[str] = field(default_factory=lambda: list(DEFAULT_USER_GRAPH_SCHEMA))
    service_graph_schema: list[str] = field(default_factory=lambda: list(DEFAULT_SERVICE_GRAPH_SCHEMA))
    k_neighbors: int = 10
    uipcc_alpha: float = 0.5
    pmf_rank: int = 10
    pmf_lr: float = 1e-2
    pmf_reg: float = 0.1
    pmf_epochs: int = 300
    measure_timing: bool = True
    timing_pairs: int = 50
    timing_repetitions: int = 5

    def validate(self) -> None:
        if not self.seeds:
            raise DomainError("seeds list must be non-empty")
        if not self.densities:
            raise DomainError("densities list must be non-empty")
        for rho in self.densities:
            if not (0.0 < rho < 1.0):
                raise DomainError(f"density {rho} outside (0,1)")
        for r in self.noise_ratios:
            if not (0.0 <= r < 1.0):
                raise DomainError(f"noise ratio {r} outside [0,1)")
        for m in self.models:
            if m not in KNOWN_MODELS:
                raise DomainError(f"unknown model {m!r}; choose from {KNOWN_MODELS}")
        self.training.validate()


# ---------------------------------------------------------------------------
# memory and timing instrumentation

@dataclass
class MemoryEstimate:
    total_bytes: int
    by_component: dict[str, int]

    @property
    def megabytes(self) -> float:
        return self.total_bytes / 2 ** 20


def estimate_memory(model) -> MemoryEstimate:
    """Parameter count times bytes per scalar, broken down per component."""
    by: dict[str, int] = {}
    if isinstance(model, TrainedModel):
        parts = {
            "user_embeddings": model.model.user_emb,
            "service_embeddings": model.model.service_emb,
            "user_attention": model.model.user_att,
            "service_attention": model.model.service_att,
            "predictor": model.model.predictor,
        }
        if model.disc is not None:
            parts["discriminator"] = model.disc
        for name, module in parts.items():
            by[name] = sum(p.numel() * p.element_size() for p in module.parameters())
    elif isinstance(model, torch.nn.Module):
        by["parameters"] = sum(p.numel() * p.element_size()
                               for p in model.parameters())
    elif isinstance(model, baselines.PMFModel):
        by["user_factors"] = model.user_factors.nbytes
        by["service_factors"] = model.service_factors.nbytes
    elif isinstance(model, (baselines.UPCC, baselines.IPCC)):
        by["similarity_cache"] = model._cf.cache.sim.nbytes
    elif isinstance(model, baselines.UIPCC):
        by["user_similarity_cache"] = model.upcc._cf.cache.sim.nbytes
        by["service_similarity_cache"] = model.ipcc._cf.cache.sim.nbytes
    else:
        raise DomainError(f"cannot estimate memory for {type(model).__name__}")
    return MemoryEstimate(sum(by.values()), by)


@dataclass
class InferenceTiming:
    seconds_per_interaction: float   # median over repetitions
    per_repetition: list[float]
    num_pairs: int
    repetitions: int


def measure_inference(model, pairs: list[tuple[int, int]],
                      repetitions: int = 5, warmup: int = 3) -> InferenceTiming:
    """Median wall-clock seconds per single-pair prediction; the first
    ``warmup`` calls are excluded."""
    if repetitions < 3:
        raise DomainError(f"repetitions must be >= 3, got {repetitions}")
    if not pairs:
        raise DomainError("need at least one pair to time")
    for u, s in pairs[:max(warmup, 1)]:
        model.predict_single(u, s)
    per_rep = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for u, s in pairs:
            model.predict_single(u, s)
        per_rep.append((time.perf_counter() - t0) / len(pairs))
    return InferenceTiming(statistics.median(per_rep), per_rep,
                           len(pairs), repetitions)


# ---------------------------------------------------------------------------
# report assembly

def load_report_schema() -> dict:
    with resources.files("qosmgaa").joinpath("report_schema.json").open() as fh:
        return json.load(fh)


def validate_report(report: dict, schema: dict | None = None) -> list[str]:
    """Superset check: every field the schema requires must be present.
    Returns the missing field paths (empty list = valid)."""
    schema = schema or load_report_schema()
    missing = [k for k in schema["required"] if k not in report]
    for i, cell in enumerate(report.get("cells", [])):
        for k in schema["cell_required"]:
            if k not in cell:
                missing.append(f"cells[{i}].{k}")
        for k in schema["metrics_required"]:
            if k not in cell.get("metrics", {}):
                missing.append(f"cells[{i}].metrics.{k}")
        if cell.get("model") == "qosmgaa":
            for k in schema["cell_training_required"]:
                if k not in cell:
                    missing.append(f"cells[{i}].{k}")
    for i, agg in enumerate(report.get("aggregates", [])):
        for k in schema["aggregate_required"]:
            if k not in agg:
                missing.append(f"aggregates[{i}].{k}")
    return missing


def aggregate_cells(cells: list[dict]) -> list[dict]:
    """Mean and sample standard deviation over seeds per (model, density,
    noise_ratio) group."""
    groups: dict[tuple, list[dict]] = {}
    for cell in cells:
        groups.setdefault((cell["model"], cell["density"], cell["noise_ratio"]),
                          []).append(cell)
    out = []
    for (model, density, noise), members in sorted(groups.items()):
        maes = [c["metrics"]["mae"] for c in members]
        rmses = [c["metrics"]["rmse"] for c in members]
        out.append({
            "model": model, "density": density, "noise_ratio": noise,
            "n_seeds": len(members),
            "mae_mean": float(np.mean(maes)),
            "mae_std": float(np.std(maes, ddof=1)) if len(maes) > 1 else 0.0,
            "rmse_mean": float(np.mean(rmses)),
            "rmse_std": float(np.std(rmses, ddof=1)) if len(rmses) > 1 else 0.0,
        })
    return out


# ---------------------------------------------------------------------------
# pipeline pieces

def build_graphs(num_users: int, num_services: int, cfg: ExperimentConfig,
                 user_attrs: AttributeTable | None,
                 service_attrs: AttributeTable | None
                 ) -> tuple[HeterogeneousGraph, HeterogeneousGraph]:
    ua = user_attrs if user_attrs is not None else AttributeTable(schema=[])
    sa = service_attrs if service_attrs is not None else AttributeTable(schema=[])
    ug = build_heterogeneous_graph(num_users, ua,
                                   cfg.user_graph_schema if user_attrs else [])
    sg = build_heterogeneous_graph(num_services, sa,
                                   cfg.service_graph_schema if service_attrs else [])
    return ug, sg


def make_bundle(matrix: QoSMatrix, user_graph: HeterogeneousGraph,
                service_graph: HeterogeneousGraph, density: float, seed: int,
                training: TrainingConfig, noise_ratio: float = 0.0
                ) -> tuple[DataBundle, InteractionSet]:
    """Sample, carve validation, optionally noise the graphs and index them.
    Returns the bundle plus the full (pre-validation-split) training set,
    which the no-early-stopping baselines fit on."""
    train, holdout = sample_sparse(matrix, density, seed)
    val_seed = int(np.random.SeedSequence((seed, 1)).generate_state(1)[0])
    fit_set, val_set = split_validation(train, training.val_fraction, val_seed)
    ug, sg = user_graph, service_graph
    if noise_ratio > 0:
        noise_seeds = np.random.SeedSequence((seed, 2)).generate_state(2)
        ug = inject_edge_noise(ug, noise_ratio, int(noise_seeds[0]))
        sg = inject_edge_noise(sg, noise_ratio, int(noise_seeds[1]))
    order = training.effective_order
    bundle = DataBundle(
        fit=fit_set, val=val_set, test=holdout,
        user_graph=ug, service_graph=sg,
        user_index=NeighborhoodIndex(ug, order),
        service_index=NeighborhoodIndex(sg, order),
        metric_name=matrix.metric_name)
    return bundle, train


def fit_baseline(name: str, train: InteractionSet, num_users: int,
                 num_services: int, cfg: ExperimentConfig, seed: int):
    if name == "upcc":
        return baselines.UPCC(train, num_users, num_services, cfg.k_neighbors)
    if name == "ipcc":
        return baselines.IPCC(train, num_users, num_services, cfg.k_neighbors)
    if name == "uipcc":
        return baselines.UIPCC(train, num_users, num_services, cfg.k_neighbors,
                               cfg.uipcc_alpha)
    if name == "pmf":
        return baselines.pmf_fit(train, num_users, num_services, cfg.pmf_rank,
                                 cfg.pmf_lr, cfg.pmf_reg, cfg.pmf_epochs, seed)
    raise DomainError(f"unknown baseline {name!r}")


def _timing_pairs(test: InteractionSet, n: int, seed: int) -> list[tuple[int, int]]:
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(test), size=min(n, len(test)), replace=False)
    return [(int(test.users[i]), int(test.services[i])) for i in idx]


# ---------------------------------------------------------------------------
# the runner

def run_experiment(cfg: ExperimentConfig) -> dict:
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix = load_qos_matrix(cfg.dataset, cfg.format, cfg.metric)
    user_attrs = (load_entity_attributes(cfg.user_attributes, cfg.user_schema,
                                         matrix.num_users)
                  if cfg.user_attributes else None)
    service_attrs = (load_entity_attributes(cfg.service_attributes,
                                            cfg.service_schema,
                                            matrix.num_services)
                     if cfg.service_attributes else None)
    user_graph, service_graph = build_graphs(matrix.num_users, matrix.num_services,
                                             cfg, user_attrs, service_attrs)
    report: dict = {
        "schema_version": load_report_schema()["schema_version"],
        "config": _config_echo(cfg),
        "cells": [],
        "aggregates": [],
    }
    report_path = out_dir / "report.json"

    def flush():
        report["aggregates"] = aggregate_cells(report["cells"])
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)

    try:
        for model_name in cfg.models:
            for density in cfg.densities:
                for noise in cfg.noise_ratios:
                    for seed in cfg.seeds:
                        cell = _run_cell(cfg, matrix, user_graph, service_graph,
                                         model_name, density, noise, seed, out_dir)
                        report["cells"].append(cell)
                        flush()
    finally:
        flush()
    _write_metrics_csv(report, out_dir / "metrics.csv")
    _write_plot_series(report, out_dir)
    try:
        from . import plots
        plots.render_report_figures(report, out_dir)
    except Exception as exc:  # figures are best-effort companions to the CSVs
        (out_dir / "figures_error.txt").write_text(str(exc))
    return report


def _run_cell(cfg: ExperimentConfig, matrix: QoSMatrix,
              user_graph: HeterogeneousGraph, service_graph: HeterogeneousGraph,
              model_name: str, density: float, noise: float, seed: int,
              out_dir: Path) -> dict:
    training = _seeded_training(cfg.training, seed)
    bundle, full_train = make_bundle(matrix, user_graph, service_graph,
                                     density, seed, training, noise)
    cell: dict = {"model": model_name, "density": density,
                  "noise_ratio": noise, "seed": seed}
    t0 = time.perf_counter()
    if model_name == "qosmgaa":
        hist_path = out_dir / f"history_{model_name}_{density}_{noise}_{seed}.jsonl"
        trained, history = fit(bundle, training, hist_path)
        metrics = evaluate(trained, bundle.test)
        cell["train_history"] = hist_path.name
        cell["best_epoch"] = history.best_epoch().epoch
        cell["epochs_run"] = len(history.records)
        model = trained
    else:
        model = fit_baseline(model_name, full_train, matrix.num_users,
                             matrix.num_services, cfg, seed)
        preds = model.predict_pairs(bundle.test.users, bundle.test.services)
        metrics = mae_rmse(preds, bundle.test.values)
    cell["fit_seconds"] = time.perf_counter() - t0
    cell["metrics"] = metrics.to_dict()
    mem = estimate_memory(model)
    cell["parameter_memory_bytes"] = mem.total_bytes
    cell["memory_breakdown"] = mem.by_component
    if cfg.measure_timing:
        pairs = _timing_pairs(bundle.test, cfg.timing_pairs, seed)
        timing = measure_inference(model, pairs, cfg.timing_repetitions)
        cell["inference_seconds_per_interaction"] = timing.seconds_per_interaction
    return cell


def _seeded_training(base: TrainingConfig, seed: int) -> TrainingConfig:
    kwargs = asdict(base)
    kwargs["seed"] = seed
    return TrainingConfig(**kwargs)


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = asdict(cfg)
    echo["training"] = asdict(cfg.training)
    return echo


def _write_metrics_csv(report: dict, path: Path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "density", "noise_ratio", "seed",
                         "mae", "rmse", "count"])
        for cell in report["cells"]:
            writer.writerow([cell["model"], cell["density"], cell["noise_ratio"],
                             cell["seed"], cell["metrics"]["mae"],
                             cell["metrics"]["rmse"], cell["metrics"]["count"]])


def _write_plot_series(report: dict, out_dir: Path) -> None:
    """CSV series for plotting: x = density (or noise ratio when the grid
    varies noise), one row per (x, model)."""
    import csv

    aggs = report["aggregates"]
    noises = sorted({a["noise_ratio"] for a in aggs})
    x_field = "noise_ratio" if len(noises) > 1 else "density"
    for metric in ("mae", "rmse"):
        with open(out_dir / f"series_{metric}.csv", "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([x_field, "model", f"{metric}_mean", f"{metric}_std"])
            for a in sorted(aggs, key=lambda a: (a["model"], a[x_field])):
                writer.writerow([a[x_field], a["model"],
                                 a[f"{metric}_mean"], a[f"{metric}_std"]])
