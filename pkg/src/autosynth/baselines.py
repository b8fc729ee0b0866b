"""Comparator aggregators: arithmetic mean, AMPI and first principal component."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from autosynth.data import DatasetError, IndexResult, IndicatorDataset, Method
from autosynth.normalize import NormalizedMatrix, align_polarity, normalize, rescale


class AmpiSign(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


@dataclass(frozen=True)
class PcaModel:
    component: np.ndarray
    explained_variance_ratio: float
    center: np.ndarray


def _matrix(R) -> np.ndarray:
    return np.asarray(R.values if isinstance(R, NormalizedMatrix) else R, dtype=float)


def _units(R):
    return R.units if isinstance(R, NormalizedMatrix) else None


def mean_index(R) -> IndexResult:
    return IndexResult(Method.MEAN, _matrix(R).mean(axis=1), units=_units(R))


def ampi_index(R, sign: AmpiSign | str = AmpiSign.PLUS) -> IndexResult:
    """Adjusted Mazziotta-Pareto index, ``mean +/- sd * cv`` per unit.

    ``sd`` is the population standard deviation over the unit's indicators.
    Use ``plus`` for negative phenomena (vulnerability) and ``minus`` for
    positive ones.
    """
    sign = AmpiSign(sign)
    r = _matrix(R)
    mu = r.mean(axis=1)
    zero = np.flatnonzero(mu == 0)
    if len(zero):
        unit = _units(R)[zero[0]] if _units(R) else int(zero[0])
        raise ValueError(f"unit {unit!r} has zero mean; coefficient of variation undefined")
    sd = r.std(axis=1)
    penalty = sd * (sd / mu)
    values = mu + penalty if sign is AmpiSign.PLUS else mu - penalty
    return IndexResult(Method.AMPI, values, units=_units(R))


def first_component(r: np.ndarray) -> PcaModel:
    center = r.mean(axis=0)
    xc = r - center
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    total = float((s**2).sum())
    if total <= 0:
        raise ValueError("matrix has zero total variance")
    component = vt[0]
    # deterministic sign before alignment: largest loading positive
    if component[np.argmax(np.abs(component))] < 0:
        component = -component
    return PcaModel(component, float(s[0] ** 2 / total), center)


def pca_index(R, compass: Optional[IndexResult] = None) -> tuple[IndexResult, PcaModel]:
    """First-principal-component index rescaled to [70, 130].

    Scores come from the covariance of ``R`` (SVD of the centered matrix).
    Direction is fixed against ``compass``, which defaults to AMPI+.
    """
    r = _matrix(R)
    if r.shape[0] < 2:
        raise ValueError("need at least 2 units")
    model = first_component(r)
    scores = (r - model.center) @ model.component
    if np.ptp(scores) <= 0:
        raise ValueError("first component scores are constant")
    values = rescale(scores)
    if compass is None:
        compass = ampi_index(r)
    values, flipped = align_polarity(values, compass)
    return IndexResult(Method.PCA, values, polarity_flipped=flipped, units=_units(R)), model


def _apply(method: Method, R: NormalizedMatrix, **kwargs) -> IndexResult:
    if method is Method.MEAN:
        return mean_index(R)
    if method is Method.AMPI:
        return ampi_index(R, kwargs.get("sign", AmpiSign.PLUS))
    if method is Method.PCA:
        return pca_index(R)[0]
    from autosynth.autoencoder import TrainConfig, autosynth_index

    config = kwargs.get("config") or TrainConfig()
    compass = ampi_index(R, kwargs.get("sign", AmpiSign.PLUS))
    return autosynth_index(R, config, kwargs.get("replications", 1), compass).index


def hierarchical_index(
    dataset: IndicatorDataset, method: Method | str, **kwargs
) -> tuple[dict[str, IndexResult], IndexResult]:
    """Two-phase aggregation: within each domain, then across domain indices.

    Domain indices are rescaled to [70, 130] with observed goalposts before
    the second phase. A domain with a single indicator contributes its
    normalized column unchanged. Extra keyword arguments (``sign``,
    ``config``, ``replications``) are forwarded to the chosen aggregator.
    """
    method = Method(method)
    domains: dict[str, list[int]] = {}
    for j, meta in enumerate(dataset.indicators):
        if not meta.domain:
            raise DatasetError(f"indicator {meta.name!r} has no domain label")
        domains.setdefault(meta.domain, []).append(j)
    if len(domains) < 2:
        raise DatasetError("hierarchical aggregation needs at least 2 domains")

    full = normalize(dataset)
    per_domain: dict[str, IndexResult] = {}
    for domain, cols in domains.items():
        if len(cols) == 1:
            per_domain[domain] = IndexResult(method, full.values[:, cols[0]], units=dataset.units)
            continue
        sub = NormalizedMatrix(
            full.values[:, cols],
            full.goalposts,
            polarity_applied=full.polarity_applied,
            units=full.units,
            names=tuple(full.names[j] for j in cols),
            weights=_renorm(full.weights[cols]),
        )
        per_domain[domain] = _apply(method, sub, **kwargs)

    stacked = np.column_stack([res.values for res in per_domain.values()])
    names = tuple(per_domain)
    weights = _renorm(np.array([full.weights[cols].sum() for cols in domains.values()]))
    second = NormalizedMatrix.from_array(
        rescale(stacked), units=full.units, names=names, weights=weights
    )
    return per_domain, _apply(method, second, **kwargs)


def _renorm(w: np.ndarray) -> np.ndarray:
    total = w.sum()
    return w / total if total > 0 else np.full(len(w), 1.0 / len(w))
