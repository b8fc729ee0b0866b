"""Domain types and CSV/JSON ingestion for indicator datasets."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised when an input file or dataset violates a structural invariant."""


class Polarity(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Method(str, enum.Enum):
    MEAN = "mean"
    AMPI = "ampi"
    PCA = "pca"
    AUTOSYNTH = "autosynth"


@dataclass(frozen=True)
class IndicatorMeta:
    name: str
    domain: str = ""
    polarity: Polarity = Polarity.POSITIVE
    input_weight: float = 1.0

    def __post_init__(self):
        if not self.name:
            raise DatasetError("indicator name must be nonempty")
        if not (self.input_weight >= 0 and math.isfinite(self.input_weight)):
            raise DatasetError(f"indicator {self.name!r}: weight must be a finite value >= 0")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IndicatorDataset:
    """Units-by-indicators matrix with per-indicator metadata.

    ``values[i, j]`` is the raw value of indicator ``j`` for unit ``i``.
    Construction validates shape, finiteness, uniqueness and non-constant
    columns; the value matrix is stored read-only.
    """

    units: tuple[str, ...]
    indicators: tuple[IndicatorMeta, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(str(u) for u in self.units))
        object.__setattr__(self, "indicators", tuple(self.indicators))
        object.__setattr__(self, "values", _frozen(self.values))
        n, p = len(self.units), len(self.indicators)
        if self.values.shape != (n, p):
            raise DatasetError(f"value matrix has shape {self.values.shape}, expected ({n}, {p})")
        if n < 2 or p < 2:
            raise DatasetError(f"need at least 2 units and 2 indicators, got N={n}, p={p}")
        _check_unique(self.units, "unit")
        _check_unique(self.names, "indicator")
        bad = np.argwhere(~np.isfinite(self.values))
        if len(bad):
            i, j = bad[0]
            raise DatasetError(
                f"non-finite value at unit {self.units[i]!r}, indicator {self.names[j]!r}"
            )
        flat = self.values.max(axis=0) <= self.values.min(axis=0)
        if flat.any():
            j = int(np.flatnonzero(flat)[0])
            raise DatasetError(f"indicator {self.names[j]!r} is constant; cannot normalize")

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_indicators(self) -> int:
        return len(self.indicators)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.indicators)

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.input_weight for m in self.indicators])

    @property
    def negative_mask(self) -> np.ndarray:
        return np.array([m.polarity is Polarity.NEGATIVE for m in self.indicators])

    def subset(self, columns: Sequence[int]) -> "IndicatorDataset":
        """Dataset restricted to the given indicator columns (weights renormalized)."""
        cols = list(columns)
        sub = IndicatorDataset(
            self.units, [self.indicators[j] for j in cols], self.values[:, cols]
        )
        return validate_weights(sub)


def _check_unique(names: Sequence[str], what: str) -> None:
    seen = set()
    for name in names:
        if name in seen:
            raise DatasetError(f"duplicate {what} name {name!r}")
        seen.add(name)


def ranks_descending(values) -> np.ndarray:
    """Ranks with 1 for the largest value; ties keep unit order."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(-values, kind="stable")
    ranks = np.empty(len(values), dtype=int)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


@dataclass(frozen=True)
class IndexResult:
    method: Method
    values: np.ndarray
    ranks: np.ndarray = field(default=None)
    ensemble: Optional[np.ndarray] = None
    polarity_flipped: bool = False
    units: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        values = _frozen(self.values)
        object.__setattr__(self, "values", values)
        if self.ranks is None:
            object.__setattr__(self, "ranks", ranks_descending(values))
        if self.ensemble is not None:
            ens = _frozen(self.ensemble)
            if ens.ndim != 2 or ens.shape[0] != len(values):
                raise ValueError("ensemble must be an N x R matrix")
            object.__setattr__(self, "ensemble", ens)
        if self.units is not None:
            object.__setattr__(self, "units", tuple(self.units))


def validate_weights(dataset: IndicatorDataset) -> IndicatorDataset:
    """Rescale input weights to sum to one."""
    w = dataset.weights
    if (w < 0).any():
        raise DatasetError("input weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise DatasetError("all input weights are zero")
    if abs(total - 1.0) <= 1e-12:
        return dataset
    metas = [replace(m, input_weight=float(wj / total)) for m, wj in zip(dataset.indicators, w)]
    return replace(dataset, indicators=tuple(metas))


def _read_meta(meta_path) -> dict:
    with open(meta_path, encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{meta_path}: invalid JSON ({exc})") from exc
    if not isinstance(meta, dict):
        raise DatasetError(f"{meta_path}: expected a JSON object keyed by indicator name")
    return meta


def load_dataset(csv_path, meta_path=None, impute: Optional[str] = None) -> IndicatorDataset:
    """Read an indicator CSV plus optional JSON metadata into a validated dataset.

    Parameters
    ----------
    csv_path : path
        UTF-8 comma-separated file; header row, first column ``unit_id``.
    meta_path : path, optional
        JSON object mapping indicator name to ``{"polarity", "domain", "weight"}``.
        Indicators not listed default to positive polarity, no domain and
        uniform weight.
    impute : {None, "median"}
        Missing or non-finite cells raise unless ``"median"``, which fills
        them with the column median of the finite entries.
    """
    if impute not in (None, "median"):
        raise ValueError(f"unknown imputation strategy {impute!r}")
    csv_path = Path(csv_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{csv_path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise DatasetError(f"{csv_path}: header needs a unit column and indicator columns")
    names = header[1:]
    units, table = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetError(
                f"{csv_path}: row {lineno} has {len(row)} fields, expected {len(header)}"
            )
        units.append(row[0].strip())
        parsed = []
        for name, cell in zip(names, row[1:]):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan"):
                parsed.append(math.nan)
                continue
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DatasetError(
                    f"{csv_path}: row {lineno}, column {name!r}: cannot parse {cell!r}"
                ) from None
        table.append(parsed)
    values = np.array(table, dtype=float).reshape(len(table), len(names))

    if impute == "median":
        for j in range(values.shape[1]):
            col = values[:, j]
            bad = ~np.isfinite(col)
            if bad.any():
                if bad.all():
                    raise DatasetError(f"indicator {names[j]!r} has no finite values")
                col[bad] = np.median(col[~bad])

    meta = _read_meta(meta_path) if meta_path is not None else {}
    p = len(names)
    metas = []
    for name in names:
        entry = meta.get(name, {})
        try:
            polarity = Polarity(str(entry.get("polarity", "positive")).lower())
        except ValueError:
            raise DatasetError(f"indicator {name!r}: polarity must be positive or negative") from None
        metas.append(
            IndicatorMeta(
                name=name,
                domain=str(entry.get("domain", "") or ""),
                polarity=polarity,
                input_weight=float(entry.get("weight", 1.0 / p)),
            )
        )
    return validate_weights(IndicatorDataset(units, metas, values))


def save_dataset(dataset: IndicatorDataset, csv_path, meta_path) -> None:
    """Write a dataset as CSV + JSON metadata; values are written round-trip exact."""
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["unit_id", *dataset.names])
        for unit, row in zip(dataset.units, dataset.values):
            writer.writerow([unit, *(repr(float(v)) for v in row)])
    meta = {
        m.name: {"polarity": m.polarity.value, "domain": m.domain, "weight": m.input_weight}
        for m in dataset.indicators
    }
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
