"""Command-line experiment runner.

Options may come from a ``key = value`` config file (--config) and are
overridden by flags. Exit codes: 0 success, 2 config error, 3 data error,
4 training divergence.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import (ConflictError, DivergenceError, DomainError, ParseError,
                     QosError, ShapeError)
from .experiment import ExperimentConfig, run_experiment
from .training import TrainingConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

ABLATION_TOKENS = ("no_adversarial", "no_gumbel", "share_order_params",
                   "adv_on_fake", "rescale_fake")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _strs(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qosmgaa",
        description="Run QoS prediction experiments (graph-attention model "
                    "and CF/PMF baselines) and write JSON/CSV reports plus "
                    "figures.")
    ap.add_argument("--config", type=Path, help="key = value config file")
    ap.add_argument("--dataset", help="QoS matrix file")
    ap.add_argument("--format", choices=["wsdream_dense", "triple_csv"])
    ap.add_argument("--metric", help="metric name recorded in reports (e.g. rt, tp)")
    ap.add_argument("--density", type=_floats, metavar="RHO[,RHO...]")
    ap.add_argument("--model", type=_strs, metavar="NAME[,NAME...]",
                    help="any of qosmgaa, upcc, ipcc, uipcc, pmf")
    ap.add_argument("--order", type=int, help="attention order D")
    ap.add_argument("--heads", type=int, help="attention heads N")
    ap.add_argument("--embed-dim", type=int)
    ap.add_argument("--lambda", dest="lambda_adv", type=float,
                    help="generator loss balance")
    ap.add_argument("--tau", type=float, help="Gumbel-Softmax temperature")
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--patience", type=int)
    ap.add_argument("--batch-size", type=int)
    ap.add_argument("--lr", type=float, help="learning rate")
    ap.add_argument("--seed", type=_ints, metavar="S[,S...]")
    ap.add_argument("--noise-ratio", type=_floats, metavar="R[,R...]")
    ap.add_argument("--ablation", type=_strs, metavar="TOK[,TOK...]",
                    help=f"tokens: {', '.join(ABLATION_TOKENS)}")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--user-attrs", help="user attribute file")
    ap.add_argument("--service-attrs", help="service attribute file")
    ap.add_argument("--val-fraction", type=float)
    ap.add_argument("--device", help="torch device (default cpu)")
    ap.add_argument("--no-timing", action="store_true",
                    help="skip inference timing")
    return ap


def read_config_file(path: Path) -> dict[str, str]:
    if not path.exists():
        raise DomainError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"{path.name} line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_FILE_KEYS = {
    "dataset": str, "format": str, "metric": str, "out": str,
    "density": _floats, "model": _strs, "seed": _ints, "noise_ratio": _floats,
    "ablation": _strs, "order": int, "heads": int, "embed_dim": int,
    "lambda": float, "lambda_adv": float, "tau": float, "epochs": int,
    "patience": int, "batch_size": int, "lr": float, "learning_rate": float,
    "weight_decay": float, "val_fraction": float, "device": str,
    "user_attrs": str, "service_attrs": str,
    "user_schema": _strs, "service_schema": _strs,
    "user_graph_schema": _strs, "service_graph_schema": _strs,
    "k_neighbors": int, "uipcc_alpha": float,
    "pmf_rank": int, "pmf_lr": float, "pmf_reg": float, "pmf_epochs": int,
    "proj_dim": int, "hidden_dim": int, "disc_hidden_dim": int,
    "dropout": float, "leak": float, "init_scale": float,
}


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        raw = read_config_file(args.config)
        for key, text in raw.items():
            if key not in _FILE_KEYS:
                raise DomainError(f"unknown config key {key!r}")
            values[key] = _FILE_KEYS[key](text)
    # flags override the file
    flag_map = {
        "dataset": args.dataset, "format": args.format, "metric": args.metric,
        "density": args.density, "model": args.model, "seed": args.seed,
        "noise_ratio": args.noise_ratio, "ablation": args.ablation,
        "order": args.order, "heads": args.heads, "embed_dim": args.embed_dim,
        "lambda_adv": args.lambda_adv, "tau": args.tau, "epochs": args.epochs,
        "patience": args.patience, "batch_size": args.batch_size,
        "lr": args.lr, "val_fraction": args.val_fraction, "out": args.out,
        "user_attrs": args.user_attrs, "service_attrs": args.service_attrs,
        "device": args.device,
    }
    for key, val in flag_map.items():
        if val is not None:
            values[key] = val
    if "dataset" not in values:
        raise DomainError("--dataset is required (flag or config file)")

    tkw: dict = {}
    for src, dst in [("lambda", "lambda_adv"), ("lambda_adv", "lambda_adv"),
                     ("tau", "tau"), ("epochs", "epochs"),
                     ("patience", "patience"), ("batch_size", "batch_size"),
                     ("lr", "learning_rate"), ("learning_rate", "learning_rate"),
                     ("weight_decay", "weight_decay"), ("order", "order"),
                     ("heads", "heads"), ("embed_dim", "embed_dim"),
                     ("proj_dim", "proj_dim"), ("hidden_dim", "hidden_dim"),
                     ("disc_hidden_dim", "disc_hidden_dim"),
                     ("dropout", "dropout"), ("leak", "leak"),
                     ("init_scale", "init_scale"),
                     ("val_fraction", "val_fraction"), ("device", "device")]:
        if src in values:
            tkw[dst] = values[src]
    for token in values.get("ablation", []):
        if token == "no_adversarial":
            tkw["adversarial_on"] = False
        elif token == "no_gumbel":
            tkw["gumbel_on"] = False
        elif token == "share_order_params":
            tkw["share_order_params"] = True
        elif token == "adv_on_fake":
            tkw["adv_generator_on_fake"] = True
        elif token == "rescale_fake":
            tkw["rescale_fake"] = True
        else:
            raise DomainError(f"unknown ablation token {token!r}; "
                              f"choose from {ABLATION_TOKENS}")
    training = TrainingConfig(**tkw)

    ekw: dict = {"dataset": values["dataset"], "training": training}
    for src, dst in [("format", "format"), ("metric", "metric"),
                     ("density", "densities"), ("model", "models"),
                     ("seed", "seeds"), ("noise_ratio", "noise_ratios"),
                     ("out", "out_dir"),
                     ("user_attrs", "user_attributes"),
                     ("service_attrs", "service_attributes"),
                     ("user_schema", "user_schema"),
                     ("service_schema", "service_schema"),
                     ("user_graph_schema", "user_graph_schema"),
                     ("service_graph_schema", "service_graph_schema"),
                     ("k_neighbors", "k_neighbors"),
                     ("uipcc_alpha", "uipcc_alpha"),
                     ("pmf_rank", "pmf_rank"), ("pmf_lr", "pmf_lr"),
                     ("pmf_reg", "pmf_reg"), ("pmf_epochs", "pmf_epochs")]:
        if src in values:
            ekw[dst] = values[src]
    if args.no_timing:
        ekw["measure_timing"] = False
    cfg = ExperimentConfig(**ekw)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (DomainError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_experiment(cfg)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ParseError, ShapeError, ConflictError, FileNotFoundError,
            IsADirectoryError, IndexError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except QosError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for agg in report["aggregates"]:
        print(f"{agg['model']:8s} density={agg['density']:<6g} "
              f"noise={agg['noise_ratio']:<5g} "
              f"MAE={agg['mae_mean']:.4f}±{agg['mae_std']:.4f} "
              f"RMSE={agg['rmse_mean']:.4f}±{agg['rmse_std']:.4f} "
              f"({agg['n_seeds']} seeds)")
    print(f"report: {Path(cfg.out_dir) / 'report.json'}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
