"""Monte Carlo comparison of aggregators on synthetic indicator data."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from autosynth.autoencoder import AutoSynthError, TrainConfig, TrainingError, autosynth_index
from autosynth.baselines import ampi_index, mean_index, pca_index
from autosynth.data import DatasetError, IndicatorDataset, IndicatorMeta, Method
from autosynth.evaluation import rank_stress, stress
from autosynth.normalize import normalize

log = logging.getLogger(__name__)

SAMPLE_SIZES = (50, 250, 1000)
N_VARIABLES = 14
MIXED_MARGINALS = (
    "uniform", "uniform", "chi2", "poisson", "exponential", "t", "normal", "normal", "normal",
)


class DgpKind(str, enum.Enum):
    IID_NORMAL = "iid"
    CORRELATED_NORMAL = "corr"
    CORRELATED_MIXED = "mixed"


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DgpSpec:
    kind: DgpKind
    n: int = 250
    p: int = N_VARIABLES
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DgpKind(self.kind))
        if self.p < 2:
            raise ValueError("p must be at least 2")
        if self.n < 10:
            raise ValueError("n must be at least 10")


def random_correlation(p: int, rng: np.random.Generator, k: int = 3, spread: float = 0.5,
                       max_attempts: int = 100) -> np.ndarray:
    """Correlation matrix from random factor loadings plus a diagonal jitter.

    Redrawn until some off-diagonal entry is below ``-spread`` and another
    above ``spread``.
    """
    off = ~np.eye(p, dtype=bool)
    for _ in range(max_attempts):
        a = rng.standard_normal((p, k))
        cov = a @ a.T + np.diag(rng.uniform(0.05, 0.5, size=p))
        d = np.sqrt(np.diag(cov))
        corr = cov / np.outer(d, d)
        np.fill_diagonal(corr, 1.0)
        if corr[off].min() < -spread and corr[off].max() > spread:
            try:
                np.linalg.cholesky(corr)
            except np.linalg.LinAlgError:
                continue
            return corr
    raise SimulationError(f"no valid correlation matrix after {max_attempts} attempts")


def _normal_params(rng, p):
    return rng.uniform(-10, 10, size=p), rng.uniform(0.5, 5, size=p)


def _mixed_column(kind: str, u: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # Clip away exact 0/1 so inverse CDFs stay finite.
    u = np.clip(u, 1e-12, 1 - 1e-12)
    if kind == "uniform":
        a, w = rng.uniform(-10, 10), rng.uniform(1, 10)
        return stats.uniform.ppf(u, loc=a, scale=w)
    if kind == "chi2":
        return stats.chi2.ppf(u, df=rng.integers(2, 11))
    if kind == "poisson":
        return stats.poisson.ppf(u, mu=rng.uniform(1, 20))
    if kind == "exponential":
        return stats.expon.ppf(u, scale=1.0 / rng.uniform(0.2, 2))
    if kind == "t":
        return stats.t.ppf(u, df=rng.integers(3, 16))
    mu, sigma = rng.uniform(-10, 10), rng.uniform(0.5, 5)
    return stats.norm.ppf(u, loc=mu, scale=sigma)


def mixed_marginals(p: int) -> list[str]:
    return [MIXED_MARGINALS[j % len(MIXED_MARGINALS)] for j in range(p)]


def _draw(spec: DgpSpec, rng: np.random.Generator):
    n, p = spec.n, spec.p
    if spec.kind is DgpKind.IID_NORMAL:
        mu, sigma = _normal_params(rng, p)
        return mu + sigma * rng.standard_normal((n, p)), None
    corr = random_correlation(p, rng)
    z = rng.standard_normal((n, p)) @ np.linalg.cholesky(corr).T
    if spec.kind is DgpKind.CORRELATED_NORMAL:
        mu, sigma = _normal_params(rng, p)
        return mu + sigma * z, corr
    u = stats.norm.cdf(z)
    cols = [_mixed_column(kind, u[:, j], rng) for j, kind in enumerate(mixed_marginals(p))]
    return np.column_stack(cols), corr


def generate(spec: DgpSpec, return_correlation: bool = False, max_attempts: int = 100):
    """Draw one synthetic dataset; redraws if a column comes out constant."""
    rng = np.random.default_rng(spec.seed)
    units = [f"u{i:04d}" for i in range(spec.n)]
    metas = [IndicatorMeta(f"x{j + 1:02d}", input_weight=1.0 / spec.p) for j in range(spec.p)]
    for _ in range(max_attempts):
        values, corr = _draw(spec, rng)
        if (np.ptp(values, axis=0) > 0).all():
            dataset = IndicatorDataset(units, metas, values)
            return (dataset, corr) if return_correlation else dataset
    raise SimulationError(f"could not draw a non-degenerate {spec.kind.value} dataset")


@dataclass
class SimulationReport:
    replications: int
    stress: dict = field(default_factory=dict)
    rank_stress: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def cell(self, kind, n, method) -> np.ndarray:
        return np.asarray(self.stress[(DgpKind(kind).value, n, Method(method).value)])

    def rank_cell(self, kind, n, method) -> np.ndarray:
        return np.asarray(self.rank_stress[(DgpKind(kind).value, n, Method(method).value)])

    def to_json(self) -> dict:
        cells = []
        for key in sorted(self.stress):
            kind, n, method = key
            s = np.asarray(self.stress[key])
            cells.append({
                "dgp": kind,
                "n": n,
                "method": method,
                "stress": [float(v) for v in s],
                "rank_stress": [float(v) for v in self.rank_stress[key]],
                "median_stress": float(np.median(s)) if len(s) else None,
                "median_rank_stress": float(np.median(self.rank_stress[key])) if len(s) else None,
                "failures": self.failures.get((kind, n), 0),
            })
        return {"replications": self.replications, "cells": cells}

    def rows(self) -> Iterable[tuple]:
        for key in sorted(self.stress):
            kind, n, method = key
            for rep, (s, rs) in enumerate(zip(self.stress[key], self.rank_stress[key])):
                yield kind, n, method, rep, s, rs


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint64)[0] >> 1)


def _indices(R, methods, config, ensemble, n_jobs=1):
    compass = ampi_index(R)
    out = {}
    for method in methods:
        if method is Method.MEAN:
            out[method] = mean_index(R)
        elif method is Method.AMPI:
            out[method] = compass
        elif method is Method.PCA:
            out[method] = pca_index(R, compass)[0]
        else:
            out[method] = autosynth_index(R, config, ensemble, compass, n_jobs=n_jobs).index
    return out


def run_study(
    dgps: Sequence[DgpSpec],
    methods: Sequence = tuple(Method),
    replications: int = 1000,
    autosynth_config: Optional[TrainConfig] = None,
    ensemble: int = 10,
    max_failure_rate: float = 0.05,
    n_jobs: int = 1,
) -> SimulationReport:
    """Generate, normalize, index and score ``replications`` datasets per DGP.

    Replication ``r`` of a DGP draws its data from a seed derived from
    ``(spec.seed, r)`` and trains AutoSynth from ``(config.seed, spec.seed, r)``,
    so results do not depend on execution order.
    """
    methods = [Method(m) for m in methods]
    config = autosynth_config or TrainConfig()
    report = SimulationReport(replications)
    for spec in dgps:
        cell = (spec.kind.value, spec.n)
        for m in methods:
            report.stress[(*cell, m.value)] = []
            report.rank_stress[(*cell, m.value)] = []
        failed = 0
        for rep in range(replications):
            data_spec = replace(spec, seed=_seed(spec.seed, rep))
            cfg = replace(config, seed=_seed(config.seed, spec.seed, rep, 7))
            try:
                R = normalize(generate(data_spec))
                results = _indices(R, methods, cfg, ensemble, n_jobs)
                scores = {m: (stress(R, res), rank_stress(R, res)) for m, res in results.items()}
            except (AutoSynthError, TrainingError, SimulationError, DatasetError, ValueError) as exc:
                failed += 1
                log.warning("%s n=%d replication %d failed: %s", spec.kind.value, spec.n, rep, exc)
                continue
            for m, (s, rs) in scores.items():
                report.stress[(*cell, m.value)].append(s)
                report.rank_stress[(*cell, m.value)].append(rs)
        report.failures[cell] = failed
        if failed > max_failure_rate * replications:
            raise SimulationError(
                f"{failed} of {replications} replications failed for {spec.kind.value}, n={spec.n}"
            )
    return report
