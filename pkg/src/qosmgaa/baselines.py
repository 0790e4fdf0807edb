"""Classical comparison methods: UPCC / IPCC / UIPCC and PMF.

Neighborhood CF uses Pearson similarity computed on co-observed entries
only, keeps positive-similarity neighbors, and falls back along
user (or service) mean -> global mean when no neighbor qualifies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import InteractionSet
from .errors import DivergenceError, DomainError


def to_dense(train: InteractionSet, num_users: int, num_services: int
             ) -> tuple[np.ndarray, np.ndarray]:
    values = np.zeros((num_users, num_services), dtype=np.float64)
    mask = np.zeros_like(values, dtype=bool)
    values[train.users, train.services] = train.values
    mask[train.users, train.services] = True
    return values, mask


def pearson(x: np.ndarray, y: np.ndarray, mask: np.ndarray | None = None
            ) -> float | None:
    """Pearson correlation over the co-observed coordinates; None when fewer
    than 2 co-observations or either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if mask is not None:
        x, y = x[mask], y[mask]
    if x.size < 2:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx <= 1e-12 or vy <= 1e-12:
        return None
    r = float(dx @ dy) / np.sqrt(vx * vy)
    return float(np.clip(r, -1.0, 1.0))


class SimilarityCache:
    """Pairwise Pearson over the rows of a masked matrix, vectorized.
    Undefined pairs (under 2 co-observations, or zero variance on the
    co-observed coordinates) hold NaN."""

    def __init__(self, values: np.ndarray, mask: np.ndarray):
        m = mask.astype(np.float64)
        xm = values * m
        n = m @ m.T
        sx = xm @ m.T
        sxx = (xm * xm) @ m.T
        sxy = xm @ xm.T
        cov = n * sxy - sx * sx.T
        varx = n * sxx - sx ** 2
        vary = varx.T
        with np.errstate(invalid="ignore", divide="ignore"):
            sim = cov / np.sqrt(varx * vary)
        bad = (n < 2) | (varx <= 1e-9) | (vary <= 1e-9)
        sim[bad] = np.nan
        self.sim = np.clip(sim, -1.0, 1.0)
        self.co_counts = n.astype(np.int64)

    def neighbors_by_similarity(self, row: int) -> tuple[np.ndarray, np.ndarray]:
        """Ids and similarities of positive-similarity neighbors of ``row``,
        strongest first, excluding the row itself."""
        sims = self.sim[row].copy()
        sims[row] = np.nan
        ids = np.where(np.nan_to_num(sims, nan=-1.0) > 0)[0]
        order = np.argsort(-sims[ids], kind="stable")
        ids = ids[order]
        return ids, sims[ids]


class _NeighborhoodCF:
    """Mean-centered weighted average over the top-k positive-similarity
    neighbors observing the target column; the engine behind UPCC (rows =
    users) and IPCC (rows = services, via transposition)."""

    def __init__(self, values: np.ndarray, mask: np.ndarray, k: int):
        if k < 1:
            raise DomainError(f"k must be >= 1, got {k}")
        self.values = values
        self.mask = mask
        self.k = k
        self.cache = SimilarityCache(values, mask)
        counts = mask.sum(axis=1)
        sums = (values * mask).sum(axis=1)
        observed = (values * mask).sum()
        total = mask.sum()
        self.global_mean = observed / total if total else 0.0
        with np.errstate(invalid="ignore"):
            self.row_means = np.where(counts > 0, sums / np.maximum(counts, 1),
                                      self.global_mean)
        self._pred: np.ndarray | None = None

    def prediction_matrix(self) -> np.ndarray:
        if self._pred is not None:
            return self._pred
        n_rows, n_cols = self.values.shape
        pred = np.tile(self.row_means[:, None], (1, n_cols))
        for i in range(n_rows):
            ids, sims = self.cache.neighbors_by_similarity(i)
            if not len(ids):
                continue
            num = np.zeros(n_cols)
            den = np.zeros(n_cols)
            cnt = np.zeros(n_cols, dtype=np.int64)
            for v, w in zip(ids, sims):
                sel = self.mask[v] & (cnt < self.k)
                if not sel.any():
                    if (cnt >= self.k).all():
                        break
                    continue
                num[sel] += w * (self.values[v, sel] - self.row_means[v])
                den[sel] += w
                cnt[sel] += 1
            use = den > 0
            pred[i, use] = self.row_means[i] + num[use] / den[use]
        self._pred = pred
        return pred

    def predict_pairs(self, rows, cols) -> np.ndarray:
        p = self.prediction_matrix()
        return p[np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)]


class UPCC:
    """User-based Pearson CF."""

    def __init__(self, train: InteractionSet, num_users: int, num_services: int,
                 k: int = 10):
        values, mask = to_dense(train, num_users, num_services)
        self._cf = _NeighborhoodCF(values, mask, k)

    def predict_pairs(self, users, services) -> np.ndarray:
        return self._cf.predict_pairs(users, services)

    def predict_single(self, user: int, service: int) -> float:
        return float(self._cf.prediction_matrix()[user, service])


class IPCC:
    """Service-based Pearson CF (UPCC on the transposed matrix)."""

    def __init__(self, train: InteractionSet, num_users: int, num_services: int,
                 k: int = 10):
        values, mask = to_dense(train, num_users, num_services)
        self._cf = _NeighborhoodCF(values.T.copy(), mask.T.copy(), k)

    def predict_pairs(self, users, services) -> np.ndarray:
        return self._cf.predict_pairs(services, users)

    def predict_single(self, user: int, service: int) -> float:
        return float(self._cf.prediction_matrix()[service, user])


class UIPCC:
    """alpha * UPCC + (1 - alpha) * IPCC."""

    def __init__(self, train: InteractionSet, num_users: int, num_services: int,
                 k: int = 10, alpha: float = 0.5):
        if not (0.0 <= alpha <= 1.0):
            raise DomainError(f"alpha must lie in [0,1], got {alpha}")
        self.alpha = alpha
        self.upcc = UPCC(train, num_users, num_services, k)
        self.ipcc = IPCC(train, num_users, num_services, k)

    def predict_pairs(self, users, services) -> np.ndarray:
        return (self.alpha * self.upcc.predict_pairs(users, services)
                + (1.0 - self.alpha) * self.ipcc.predict_pairs(users, services))

    def predict_single(self, user: int, service: int) -> float:
        return float(self.predict_pairs([user], [service])[0])


@dataclass
class PMFModel:
    user_factors: np.ndarray
    service_factors: np.ndarray
    rank: int
    reg: float

    def predict_pairs(self, users, services) -> np.ndarray:
        u = self.user_factors[np.asarray(users, dtype=np.int64)]
        s = self.service_factors[np.asarray(services, dtype=np.int64)]
        return np.einsum("ij,ij->i", u, s)

    def predict_single(self, user: int, service: int) -> float:
        return float(self.user_factors[user] @ self.service_factors[service])


def pmf_fit(train: InteractionSet, num_users: int, num_services: int,
            rank: int = 10, lr: float = 1e-2, reg: float = 0.1,
            epochs: int = 300, seed: int = 0) -> PMFModel:
    """Regularized squared-error factorization by full-batch gradient steps
    (per-row gradients normalized by each row's observation count)."""
    if rank < 1:
        raise DomainError(f"rank must be >= 1, got {rank}")
    values, mask = to_dense(train, num_users, num_services)
    m = mask.astype(np.float64)
    rng = np.random.default_rng(seed)
    p = rng.normal(0.0, 0.1, size=(num_users, rank))
    q = rng.normal(0.0, 0.1, size=(num_services, rank))
    cnt_u = np.maximum(m.sum(axis=1), 1.0)[:, None]
    cnt_s = np.maximum(m.sum(axis=0), 1.0)[:, None]
    for epoch in range(epochs):
        err = m * (values - p @ q.T)
        if not np.isfinite(err).all():
            raise DivergenceError(f"PMF diverged at epoch {epoch}")
        gp = err @ q / cnt_u - reg * p
        gq = err.T @ p / cnt_s - reg * q
        p = p + lr * gp
        q = q + lr * gq
    if not (np.isfinite(p).all() and np.isfinite(q).all()):
        raise DivergenceError("PMF produced non-finite factors")
    return PMFModel(p, q, rank, reg)


def pmf_predict(model: PMFModel, user: int, service: int) -> float:
    return model.predict_single(user, service)
