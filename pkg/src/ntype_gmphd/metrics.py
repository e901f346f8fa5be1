"""OSPA distance and cardinality bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class OspaParams:
    order_p: float = 1.0
    cutoff_c: float = 100.0

    def __post_init__(self):
        if self.order_p < 1:
            raise ValueError(f"OSPA order must be >= 1, got {self.order_p}")
        if not self.cutoff_c > 0:
            raise ValueError(f"OSPA cutoff must be > 0, got {self.cutoff_c}")


def hungarian(costs) -> tuple[np.ndarray, np.ndarray, float]:
    """Minimum-cost matching of the smaller side of ``costs`` into the larger.

    Returns ``(rows, cols, total_cost)``.
    """
    C = np.asarray(costs, dtype=float)
    if C.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if C.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int), 0.0
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(C)
    return rows, cols, float(C[rows, cols].sum())


def _as_points(X) -> np.ndarray:
    return np.asarray(X, dtype=float).reshape(-1, 2)


def ospa(X, Y, params: OspaParams = OspaParams()) -> float:
    """OSPA distance between two finite 2-D point sets."""
    X = _as_points(X)
    Y = _as_points(Y)
    if len(X) > len(Y):
        X, Y = Y, X
    m, n = len(X), len(Y)
    if n == 0:
        return 0.0
    c, p = params.cutoff_c, params.order_p
    if m == 0:
        return float(c)
    dist = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=-1)
    cost = np.minimum(dist, c) ** p
    _, _, local = hungarian(cost)
    return float(((local + c ** p * (n - m)) / n) ** (1.0 / p))


def cardinality_series(true_counts, estimated) -> list[tuple[int, float]]:
    true_counts = list(true_counts)
    estimated = list(estimated)
    if len(true_counts) != len(estimated):
        raise ValueError(
            f"series length mismatch: {len(true_counts)} truth vs {len(estimated)} estimates")
    return [(int(t), float(e)) for t, e in zip(true_counts, estimated)]
