"""Distance-preservation stress, rank stress and rank agreement between indices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import rankdata

from autosynth.data import IndexResult
from autosynth.normalize import NormalizedMatrix


@dataclass(frozen=True)
class StressReport:
    method: str
    stress: float
    rank_stress: float
    n_units: int


def _matrix(R) -> np.ndarray:
    return np.asarray(R.values if isinstance(R, NormalizedMatrix) else R, dtype=float)


def _index_values(index) -> np.ndarray:
    return np.asarray(index.values if isinstance(index, IndexResult) else index, dtype=float)


def _kruskal(d: np.ndarray, d_hat: np.ndarray) -> float:
    denom = float((d**2).sum())
    if denom <= 0:
        raise ValueError("all pairwise distances are zero; stress is undefined")
    return float(np.sqrt(((d - d_hat) ** 2).sum() / denom))


def stress(R, index) -> float:
    """Kruskal stress between unit distances in ``R`` and in the 1-D index.

    Each unordered pair of units is counted once.
    """
    x = _matrix(R)
    y = _index_values(index)
    if x.shape[0] != len(y):
        raise ValueError("index and matrix cover different numbers of units")
    if x.shape[0] < 2:
        raise ValueError("stress needs at least 2 units")
    return _kruskal(pdist(x), pdist(y[:, None]))


def rank_stress(R, index) -> float:
    """Stress between rank gaps of the unit row means and rank gaps of the index.

    Ties receive average ranks.
    """
    x = _matrix(R)
    y = _index_values(index)
    if x.shape[0] != len(y):
        raise ValueError("index and matrix cover different numbers of units")
    if x.shape[0] < 2:
        raise ValueError("rank stress needs at least 2 units")
    if pdist(x).max() <= 0:
        raise ValueError("all pairwise distances are zero; stress is undefined")
    r = rankdata(x.mean(axis=1))
    r_hat = rankdata(y)
    return _kruskal(pdist(r[:, None]), pdist(r_hat[:, None]))


def spearman(a, b) -> float:
    """Pearson correlation of average ranks."""
    ra, rb = rankdata(np.asarray(a, dtype=float)), rankdata(np.asarray(b, dtype=float))
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra**2).sum() * (rb**2).sum())
    if denom == 0:
        return float("nan")
    return float((ra * rb).sum() / denom)


def compare_methods(R, results, labels=None) -> tuple[list[StressReport], np.ndarray]:
    """Stress reports for each index plus their pairwise Spearman matrix.

    ``labels`` overrides the method tags used in the reports.
    """
    x = _matrix(R)
    results = list(results)
    n = x.shape[0]
    units = R.units if isinstance(R, NormalizedMatrix) else None
    for res in results:
        if len(res.values) != n:
            raise ValueError(f"{res.method.value} index covers {len(res.values)} units, expected {n}")
        if units is not None and res.units is not None and tuple(res.units) != tuple(units):
            raise ValueError(f"{res.method.value} index covers a different unit set")
    labels = [res.method.value for res in results] if labels is None else list(labels)
    reports = [
        StressReport(lab, stress(x, res), rank_stress(x, res), n)
        for lab, res in zip(labels, results)
    ]
    k = len(results)
    corr = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            corr[i, j] = corr[j, i] = spearman(results[i].values, results[j].values)
    return reports, corr
