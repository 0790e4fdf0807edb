"""Synthetic desk-scale QoS data with cluster-aligned attributes.

Users and services belong to latent clusters; QoS values come from a
low-rank interaction of cluster-tied factors plus noise, and the attribute
columns (country / autonomous system / provider) reflect the clusters, so
the heterogeneous graphs genuinely carry signal. Handy for demos, smoke
tests and ablation-direction checks when no real dataset is on disk.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import AttributeTable, QoSMatrix


def make_synthetic(num_users: int = 40, num_services: int = 60,
                   num_clusters: int = 4, rank: int = 3,
                   observed_frac: float = 0.6, noise: float = 0.05,
                   seed: int = 0
                   ) -> tuple[QoSMatrix, AttributeTable, AttributeTable]:
    rng = np.random.default_rng(seed)
    uc = rng.integers(num_clusters, size=num_users)
    sc = rng.integers(num_clusters, size=num_services)
    centers_u = rng.normal(0.8, 0.5, size=(num_clusters, rank))
    centers_s = rng.normal(0.8, 0.5, size=(num_clusters, rank))
    pu = centers_u[uc] + rng.normal(0, 0.1, size=(num_users, rank))
    qs = centers_s[sc] + rng.normal(0, 0.1, size=(num_services, rank))
    vals = np.abs(pu @ qs.T) + rng.normal(0, noise, size=(num_users, num_services))
    vals = np.clip(vals, 0.01, None)
    mask = rng.random((num_users, num_services)) < observed_frac
    if not mask.any():
        mask[0, 0] = True
    matrix = QoSMatrix(np.where(mask, vals, 0.0), mask, "synthetic")

    user_attrs = AttributeTable(schema=["country", "autonomous_system"])
    for u in range(num_users):
        user_attrs.rows[u] = {
            "country": f"C{uc[u]}",
            "autonomous_system": f"AS{uc[u] * 2 + int(rng.integers(2))}",
        }
    service_attrs = AttributeTable(schema=["country", "autonomous_system", "provider"])
    for s in range(num_services):
        service_attrs.rows[s] = {
            "country": f"C{sc[s]}",
            "autonomous_system": f"AS{sc[s] * 2 + int(rng.integers(2))}",
            "provider": f"P{sc[s]}",
        }
    return matrix, user_attrs, service_attrs


def write_triple_csv(matrix: QoSMatrix, path: str | Path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        fh.write("user,service,value\n")
        us, ss = np.nonzero(matrix.mask)
        for u, s in zip(us, ss):
            fh.write(f"{u},{s},{matrix.values[u, s]:.6f}\n")


def write_dense(matrix: QoSMatrix, path: str | Path) -> None:
    full = np.where(matrix.mask, matrix.values, -1.0)
    with open(Path(path), "w", encoding="utf-8") as fh:
        for row in full:
            fh.write(" ".join(f"{v:.6f}" for v in row) + "\n")


def write_attribute_file(table: AttributeTable, path: str | Path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        fh.write("id\t" + "\t".join(table.schema) + "\n")
        for eid in sorted(table.rows):
            fh.write(str(eid) + "\t"
                     + "\t".join(table.rows[eid][c] for c in table.schema) + "\n")


def main(argv=None) -> int:
    """Write a synthetic dataset: triple CSV plus the two attribute files."""
    import argparse

    ap = argparse.ArgumentParser(description=main.__doc__)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--users", type=int, default=40)
    ap.add_argument("--services", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    matrix, ua, sa = make_synthetic(args.users, args.services, seed=args.seed)
    write_triple_csv(matrix, args.out_dir / "matrix.csv")
    write_attribute_file(ua, args.out_dir / "users.tsv")
    write_attribute_file(sa, args.out_dir / "services.tsv")
    print(f"wrote {args.out_dir}/matrix.csv ({matrix.num_observed} observations), "
          f"users.tsv, services.tsv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
