"""Goalpost min-max rescaling to [70, 130] and polarity handling."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from autosynth.data import IndicatorDataset, IndexResult, ranks_descending

SCALE_LO = 70.0
SCALE_HI = 130.0
SCALE_SPAN = SCALE_HI - SCALE_LO
COMPLEMENT = 200.0


class GoalpostSource(str, enum.Enum):
    OBSERVED = "observed"
    SUPPLIED = "supplied"


class GoalpostWarning(UserWarning):
    """Supplied goalposts do not cover the observed data."""


@dataclass(frozen=True)
class Goalposts:
    lo: np.ndarray
    hi: np.ndarray
    source: GoalpostSource = GoalpostSource.SUPPLIED

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float).ravel()
        hi = np.array(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("goalpost lo/hi lengths differ")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("goalposts must be finite")
        bad = np.flatnonzero(hi <= lo)
        if len(bad):
            j = int(bad[0])
            raise ValueError(f"goalpost {j}: hi ({hi[j]}) must exceed lo ({lo[j]})")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "source", GoalpostSource(self.source))

    @classmethod
    def observed(cls, values) -> "Goalposts":
        values = np.asarray(values, dtype=float)
        return cls(values.min(axis=0), values.max(axis=0), GoalpostSource.OBSERVED)

    def to_json(self, names=None) -> dict:
        names = names if names is not None else [str(j) for j in range(len(self.lo))]
        return {
            "source": self.source.value,
            "goalposts": {n: {"lo": float(a), "hi": float(b)} for n, a, b in zip(names, self.lo, self.hi)},
        }

    @classmethod
    def from_json(cls, obj: dict, names) -> "Goalposts":
        table = obj.get("goalposts", obj)
        try:
            lo = [float(table[n]["lo"]) for n in names]
            hi = [float(table[n]["hi"]) for n in names]
        except KeyError as exc:
            raise ValueError(f"goalposts missing entry for indicator {exc}") from None
        return cls(lo, hi, GoalpostSource.SUPPLIED)


@dataclass(frozen=True)
class NormalizedMatrix:
    """Rescaled indicator matrix; ``values`` is N x p on the [70, 130] scale."""

    values: np.ndarray
    goalposts: Goalposts
    polarity_applied: bool = False
    units: Optional[tuple[str, ...]] = None
    names: Optional[tuple[str, ...]] = None
    weights: Optional[np.ndarray] = None
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("normalized matrix must be 2-D")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        n, p = values.shape
        if self.units is None:
            object.__setattr__(self, "units", tuple(str(i) for i in range(n)))
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"x{j}" for j in range(p)))
        if self.weights is None:
            object.__setattr__(self, "weights", np.full(p, 1.0 / p))
        if len(self.units) != n or len(self.names) != p or len(self.weights) != p:
            raise ValueError("units/names/weights do not match the matrix shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def from_array(cls, values, **kwargs) -> "NormalizedMatrix":
        """Wrap an already-rescaled matrix (goalposts recorded as observed)."""
        values = np.asarray(values, dtype=float)
        return cls(values, Goalposts.observed(_widen(values)), **kwargs)


def _widen(values: np.ndarray) -> np.ndarray:
    # Constant columns cannot carry goalposts; pad them so bookkeeping still works.
    values = np.array(values, dtype=float, copy=True)
    flat = values.max(axis=0) <= values.min(axis=0)
    if flat.any():
        values = np.vstack([values, values[:1] + np.where(flat, 1.0, 0.0)])
    return values


def rescale(x, lo=None, hi=None) -> np.ndarray:
    """Goalpost rescaling of a vector or matrix (column-wise) onto [70, 130]."""
    x = np.asarray(x, dtype=float)
    lo = x.min(axis=0) if lo is None else np.asarray(lo, dtype=float)
    hi = x.max(axis=0) if hi is None else np.asarray(hi, dtype=float)
    return (x - lo) / (hi - lo) * SCALE_SPAN + SCALE_LO


def normalize(dataset: IndicatorDataset, goalposts: Optional[Goalposts] = None) -> NormalizedMatrix:
    """Rescale every indicator to [70, 130], complementing negative-polarity columns to 200."""
    x = dataset.values
    notes = []
    if goalposts is None:
        goalposts = Goalposts.observed(x)
    else:
        if len(goalposts.lo) != dataset.n_indicators:
            raise ValueError("goalposts do not match the number of indicators")
        outside = (x.min(axis=0) < goalposts.lo) | (x.max(axis=0) > goalposts.hi)
        for j in np.flatnonzero(outside):
            msg = f"indicator {dataset.names[j]!r} has values outside the supplied goalposts"
            notes.append(msg)
            warnings.warn(msg, GoalpostWarning, stacklevel=2)
    r = rescale(x, goalposts.lo, goalposts.hi)
    neg = dataset.negative_mask
    r[:, neg] = COMPLEMENT - r[:, neg]
    return NormalizedMatrix(
        r,
        goalposts,
        polarity_applied=bool(neg.any()),
        units=dataset.units,
        names=dataset.names,
        weights=dataset.weights,
        warnings=tuple(notes),
    )


def complement(values) -> np.ndarray:
    return COMPLEMENT - np.asarray(values, dtype=float)


def align_polarity(raw_index, compass: IndexResult) -> tuple[np.ndarray, bool]:
    """Orient an index so the compass' top unit lands in its top quartile.

    The unit with the largest compass value must rank within the highest
    ``ceil(N / 4)`` positions of ``raw_index`` (boundary inclusive). Otherwise
    the index is inverted: complemented to 200 when it already lies on the
    [70, 130] scale, negated and rescaled onto it otherwise.
    """
    raw = np.asarray(raw_index, dtype=float)
    compass_values = np.asarray(compass.values, dtype=float)
    if raw.shape != compass_values.shape:
        raise ValueError(
            f"index has {raw.shape[0]} units but compass has {compass_values.shape[0]}"
        )
    n = len(raw)
    top = int(np.argmax(compass_values))
    if ranks_descending(raw)[top] <= math.ceil(n / 4):
        return raw, False
    if raw.min() >= SCALE_LO and raw.max() <= SCALE_HI:
        return complement(raw), True
    return rescale(-raw), True
