"""1-D k-means used to turn numerical attribute values into cluster tokens."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class Quantization:
    centers: np.ndarray  # sorted ascending
    labels: np.ndarray  # index into centers, one per input value
    sse_history: list[float]  # within-cluster SSE after every assignment step


def _sse(values, centers, labels):
    return float(np.sum((values - centers[labels]) ** 2))


def _assign(values, centers):
    # ties go to the lower center index
    return np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)


def _kmeanspp(distinct, k, rng):
    centers = [distinct[rng.integers(len(distinct))]]
    for _ in range(1, k):
        d2 = np.min((distinct[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            break
        centers.append(distinct[rng.choice(len(distinct), p=d2 / total)])
    return np.asarray(centers, dtype=np.float64)


def quantize_numerical(values, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-9) -> Quantization:
    """Cluster real values with Lloyd's algorithm and k-means++ seeding.

    Seeding draws from the distinct values, so ``k`` larger than the number of
    distinct values is reduced (with a warning).  Centers are returned in
    ascending order and labels refer to that order.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("quantize_numerical needs at least one value")
    if k < 1:
        raise ValueError("k must be >= 1")
    distinct = np.unique(values)
    if k > len(distinct):
        warnings.warn(f"k={k} exceeds {len(distinct)} distinct values; using k={len(distinct)}",
                      stacklevel=2)
        k = len(distinct)

    rng = np.random.default_rng(seed)
    centers = _kmeanspp(distinct, k, rng)
    labels = _assign(values, centers)
    history = [_sse(values, centers, labels)]
    for _ in range(max_iter):
        new = centers.copy()
        for c in range(len(centers)):
            members = values[labels == c]
            if members.size:
                new[c] = members.mean()
        shift = np.max(np.abs(new - centers))
        centers = new
        labels = _assign(values, centers)
        history.append(_sse(values, centers, labels))
        if shift <= tol:
            break

    # drop clusters that ended up empty, then sort
    used = np.unique(labels)
    centers = np.sort(centers[used])
    labels = _assign(values, centers)
    return Quantization(centers, labels.astype(np.int64), history)
