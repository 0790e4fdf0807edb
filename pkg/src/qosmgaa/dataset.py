"""QoS matrix ingestion, density-controlled sampling and batching.

All sampling/splitting/batching here is a pure function of (input, seed);
the PRNG is numpy's PCG64 (``default_rng``) so splits reproduce across
platforms.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConflictError, DomainError, ParseError, ShapeError

log = logging.getLogger(__name__)

MISSING_SENTINEL = -1.0
UNKNOWN = "unknown"


@dataclass
class QoSMatrix:
    """Dense user x service matrix with an observation mask."""

    values: np.ndarray        # float64, shape (num_users, num_services)
    mask: np.ndarray          # bool, True = observed
    metric_name: str = "rt"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != self.mask.shape or self.values.ndim != 2:
            raise ShapeError(
                f"values shape {self.values.shape} and mask shape {self.mask.shape} must be equal 2-D"
            )
        if not np.all(np.isfinite(self.values[self.mask])):
            raise ShapeError("observed entries must be finite")

    @property
    def num_users(self) -> int:
        return self.values.shape[0]

    @property
    def num_services(self) -> int:
        return self.values.shape[1]

    @property
    def num_observed(self) -> int:
        return int(self.mask.sum())

    @property
    def density(self) -> float:
        return self.num_observed / self.mask.size


@dataclass
class InteractionSet:
    """Observed (user, service, value) triples drawn from one matrix."""

    users: np.ndarray         # int64
    services: np.ndarray      # int64
    values: np.ndarray        # float64
    source_density: float = 1.0

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=np.int64)
        self.services = np.asarray(self.services, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if not (len(self.users) == len(self.services) == len(self.values)):
            raise ShapeError("users/services/values must have equal length")

    def __len__(self) -> int:
        return len(self.users)

    def triples(self) -> list[tuple[int, int, float]]:
        return list(zip(self.users.tolist(), self.services.tolist(), self.values.tolist()))

    def subset(self, idx: np.ndarray) -> "InteractionSet":
        return InteractionSet(self.users[idx], self.services[idx], self.values[idx],
                              self.source_density)


@dataclass
class AttributeTable:
    """Per-entity named attribute values; missing cells hold ``unknown``."""

    schema: list[str]
    rows: dict[int, dict[str, str]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def value(self, entity_id: int, name: str) -> str:
        return self.rows[entity_id].get(name, UNKNOWN)


def _exact_floor(x: float) -> int:
    # floor of the intended decimal product; raw float floor would turn
    # e.g. 0.1*230 == 22.999999999999996 into 22 instead of 23
    return int(math.floor(round(x, 9)))


def load_qos_matrix(path: str | Path, format: str = "wsdream_dense",
                    metric_name: str = "rt") -> QoSMatrix:
    """Load a QoS matrix from disk.

    ``wsdream_dense``: whitespace-separated dense rows, -1 (or any negative
    value) marks a missing entry. ``triple_csv``: header line then
    ``user,service,value`` records; dimensions inferred from the indices.
    """
    path = Path(path)
    if format == "wsdream_dense":
        return _load_dense(path, metric_name)
    if format == "triple_csv":
        return _load_triples(path, metric_name)
    raise DomainError(f"unknown matrix format: {format!r}")


def _load_dense(path: Path, metric_name: str) -> QoSMatrix:
    rows: list[np.ndarray] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = np.array([float(tok) for tok in line.split()], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"{path.name} line {lineno}: {exc}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ShapeError(
                    f"{path.name} line {lineno}: expected {width} columns, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise ShapeError(f"{path.name}: no data rows")
    values = np.vstack(rows)
    mask = values >= 0
    n_negative = int((~mask & (values != MISSING_SENTINEL)).sum())
    if n_negative:
        log.warning("%s: %d negative non-sentinel values treated as missing",
                    path.name, n_negative)
    values = np.where(mask, values, 0.0)
    return QoSMatrix(values, mask, metric_name)


def _load_triples(path: Path, metric_name: str) -> QoSMatrix:
    users, services, vals = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1:  # header
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ParseError(f"{path.name} line {lineno}: expected 3 fields, got {len(parts)}")
            try:
                u, s, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise ParseError(f"{path.name} line {lineno}: {exc}") from None
            if u < 0 or s < 0:
                raise ParseError(f"{path.name} line {lineno}: negative index")
            users.append(u)
            services.append(s)
            vals.append(v)
    if not users:
        raise ShapeError(f"{path.name}: no observations")
    values = np.zeros((max(users) + 1, max(services) + 1), dtype=np.float64)
    mask = np.zeros_like(values, dtype=bool)
    values[users, services] = vals
    mask[users, services] = True
    return QoSMatrix(values, mask, metric_name)


def observed_set(matrix: QoSMatrix) -> InteractionSet:
    """All observed triples of a matrix, row-major order."""
    us, ss = np.nonzero(matrix.mask)
    return InteractionSet(us, ss, matrix.values[us, ss], source_density=matrix.density)


def sample_sparse(matrix: QoSMatrix, rho: float, seed: int
                  ) -> tuple[InteractionSet, InteractionSet]:
    """Partition the observed entries into a train set of floor(rho*|obs|)
    triples and a holdout with everything else. Values are copied verbatim;
    the same seed always yields the same split."""
    if not (0.0 < rho < 1.0):
        raise DomainError(f"rho must lie in (0,1), got {rho}")
    full = observed_set(matrix)
    n = len(full)
    if n < 1:
        raise DomainError("matrix has no observed entries")
    n_train = _exact_floor(rho * n)
    perm = np.random.default_rng(seed).permutation(n)
    train = full.subset(np.sort(perm[:n_train]))
    holdout = full.subset(np.sort(perm[n_train:]))
    train.source_density = rho * matrix.density
    holdout.source_density = (1 - rho) * matrix.density
    return train, holdout


def split_validation(train: InteractionSet, frac: float, seed: int
                     ) -> tuple[InteractionSet, InteractionSet]:
    """Carve floor(frac*|train|) triples into a validation set."""
    if not (0.0 <= frac < 1.0):
        raise DomainError(f"validation fraction must lie in [0,1), got {frac}")
    n = len(train)
    n_val = _exact_floor(frac * n)
    perm = np.random.default_rng(seed).permutation(n)
    val = train.subset(np.sort(perm[:n_val]))
    fit = train.subset(np.sort(perm[n_val:]))
    return fit, val


def batch_iter(items: InteractionSet, batch_size: int, seed: int = 0,
               shuffle: bool = True
               ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (users, services, values) batches covering every triple once.

    The final batch may be short. With shuffle=False the source order is
    preserved; otherwise the order is a seed-determined permutation.
    """
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    n = len(items)
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield items.users[idx], items.services[idx], items.values[idx]


def load_entity_attributes(path: str | Path, schema: list[str],
                           num_entities: int | None = None) -> AttributeTable:
    """Read a tab- or comma-separated attribute file.

    First column is the integer entity id; the following columns are named
    positionally by ``schema`` (surplus file columns are ignored). Empty or
    'null' cells become the explicit ``unknown`` token. A non-integer first
    field on line 1 is treated as a header and skipped.
    """
    path = Path(path)
    table = AttributeTable(schema=list(schema))
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            delim = "\t" if "\t" in line else ","
            fields = [f.strip() for f in line.split(delim)]
            try:
                eid = int(fields[0])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise ParseError(f"{path.name} line {lineno}: non-integer entity id "
                                 f"{fields[0]!r}") from None
            if eid < 0 or (num_entities is not None and eid >= num_entities):
                raise IndexError(f"{path.name} line {lineno}: entity id {eid} out of range")
            if eid in table.rows:
                raise ConflictError(f"{path.name} line {lineno}: duplicate entity id {eid}")
            row = {}
            for k, name in enumerate(schema, start=1):
                val = fields[k] if k < len(fields) else ""
                if not val or val.lower() == "null" or val.lower() == UNKNOWN:
                    val = UNKNOWN
                row[name] = val
            table.rows[eid] = row
    return table
