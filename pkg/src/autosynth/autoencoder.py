"""Feed-forward autoencoder with a one-unit bottleneck, trained from scratch.

The network is ``p -> h -> 1 -> h -> p`` with ReLU on the hidden layers and
on the code, and a linear output layer. Inputs are shifted and scaled by
fixed per-column constants before the first layer (and the inverse is
applied to the output), so the trainable part sees centred data while the
loss is measured on the original [70, 130] scale.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from autosynth.data import IndexResult, Method
from autosynth.normalize import NormalizedMatrix, align_polarity, rescale

RELU = "relu"
LINEAR = "linear"


class TrainingError(RuntimeError):
    """Training diverged or produced an unusable model."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch


class AutoSynthError(RuntimeError):
    """Too many ensemble replications failed."""


@dataclass
class AutoencoderModel:
    """Weights are stored input-major: layer ``l`` computes ``a @ weights[l] + biases[l]``."""

    weights: list
    biases: list
    activations: tuple = (RELU, RELU, RELU, LINEAR)
    input_center: Optional[np.ndarray] = None
    input_scale: Optional[np.ndarray] = None
    trace: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).ravel() for b in self.biases]
        if len(self.weights) != len(self.biases) or len(self.weights) != len(self.activations):
            raise ValueError("weights, biases and activations must have one entry per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {w.shape} does not match bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i} input width {w.shape[0]} does not chain")
        dims = self.layer_dims
        if dims != dims[::-1] or dims[len(dims) // 2] != 1 or len(dims) % 2 == 0:
            raise ValueError(f"layer dims {dims} must be symmetric around a width-1 code")
        p = dims[0]
        self.input_center = np.zeros(p) if self.input_center is None else np.asarray(self.input_center, float)
        self.input_scale = np.ones(p) if self.input_scale is None else np.asarray(self.input_scale, float)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def code_layer(self) -> int:
        return len(self.weights) // 2 - 1

    @classmethod
    def initialize(cls, p: int, hidden: int, rng: np.random.Generator, center=None, scale=None):
        """Glorot-uniform weights, zero biases."""
        dims = [p, hidden, 1, hidden, p]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, input_center=center, input_scale=scale)

    def copy(self) -> "AutoencoderModel":
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            trace=list(self.trace),
        )

    def parameters(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]


@dataclass(frozen=True)
class TrainConfig:
    hidden_width: Optional[int] = None
    learning_rate: float = 1e-3
    max_epochs: int = 2000
    tolerance: float = 1e-6
    seed: int = 0
    feature_weights: Optional[tuple] = None

    def __post_init__(self):
        if self.hidden_width is not None and self.hidden_width < 1:
            raise ValueError("hidden_width must be a positive integer")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be a positive integer")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.feature_weights is not None:
            w = np.asarray(self.feature_weights, dtype=float)
            if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("feature_weights must be nonnegative and sum to 1")
            object.__setattr__(self, "feature_weights", tuple(float(v) for v in w))

    def hidden_for(self, p: int) -> int:
        return self.hidden_width if self.hidden_width is not None else math.ceil(p / 2)

    def weights_for(self, R) -> np.ndarray:
        if self.feature_weights is not None:
            w = np.asarray(self.feature_weights)
        elif isinstance(R, NormalizedMatrix):
            w = np.asarray(R.weights, dtype=float)
        else:
            p = np.asarray(R).shape[1]
            w = np.full(p, 1.0 / p)
        if len(w) != _as_array(R).shape[1]:
            raise ValueError("feature_weights length does not match the number of indicators")
        return w


@dataclass(frozen=True)
class AutoSynthResult:
    index: IndexResult
    relevance: np.ndarray
    reconstruction: np.ndarray
    losses: np.ndarray
    flipped: np.ndarray
    failures: int = 0


def _as_array(R) -> np.ndarray:
    return np.asarray(R.values if isinstance(R, NormalizedMatrix) else R, dtype=float)


def _relu(z):
    return np.maximum(z, 0.0)


def _forward_cache(model: AutoencoderModel, x: np.ndarray):
    """Pre-activations and activations of every layer (scaled space)."""
    a = (x - model.input_center) / model.input_scale
    acts, pres = [a], []
    for w, b, kind in zip(model.weights, model.biases, model.activations):
        z = a @ w + b
        a = _relu(z) if kind == RELU else z
        pres.append(z)
        acts.append(a)
    return pres, acts


def forward(model: AutoencoderModel, R) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(codes, reconstruction)`` for every unit."""
    x = _as_array(R)
    if x.ndim != 2 or x.shape[1] != model.layer_dims[0]:
        raise ValueError(f"input has shape {x.shape}, model expects {model.layer_dims[0]} columns")
    _, acts = _forward_cache(model, x)
    codes = acts[model.code_layer + 1][:, 0]
    recon = acts[-1] * model.input_scale + model.input_center
    return codes, recon


def loss(model: AutoencoderModel, R, feature_weights=None) -> float:
    """Feature-weighted mean squared reconstruction error per unit."""
    x = _as_array(R)
    w = np.full(x.shape[1], 1.0 / x.shape[1]) if feature_weights is None else np.asarray(feature_weights)
    _, recon = forward(model, x)
    return float(((x - recon) ** 2 @ w).sum() / x.shape[0])


def _loss_grad_scaled(weights, biases, activations, xs, ws):
    """Loss and gradients with inputs already shifted/scaled.

    ``ws`` folds the feature weights and the squared input scale together,
    so the loss is still the one measured on the original scale.
    """
    n = xs.shape[0]
    a = xs
    pres, acts = [], [xs]
    for w, b, kind in zip(weights, biases, activations):
        z = a @ w
        z += b
        a = np.maximum(z, 0.0) if kind == RELU else z
        pres.append(z)
        acts.append(a)
    resid = a - xs
    weighted = resid * ws
    value = float(np.vdot(weighted, resid)) / n
    delta = weighted * (2.0 / n)
    grads = [None] * (2 * len(weights))
    for layer in range(len(weights) - 1, -1, -1):
        if activations[layer] == RELU:
            delta = delta * (pres[layer] > 0)
        grads[2 * layer] = acts[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer:
            delta = delta @ weights[layer].T
    return value, grads


def loss_and_gradients(model: AutoencoderModel, x: np.ndarray, w: np.ndarray):
    """Loss and its gradient for every parameter, in ``model.parameters()`` order."""
    xs = (np.asarray(x, dtype=float) - model.input_center) / model.input_scale
    ws = np.asarray(w, dtype=float) * model.input_scale**2
    return _loss_grad_scaled(model.weights, model.biases, model.activations, xs, ws)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


def train(R, config: TrainConfig) -> AutoencoderModel:
    """Full-batch Adam on the reconstruction loss.

    Returns the parameters with the lowest loss seen, so the result never
    scores worse than the initialization. Stops early when the relative
    change in loss drops below ``config.tolerance``.
    """
    x = _as_array(R)
    w = config.weights_for(R)
    n, p = x.shape
    rng = np.random.default_rng(config.seed)
    scale = x.std(axis=0)
    scale[scale <= 0] = 1.0
    model = AutoencoderModel.initialize(p, config.hidden_for(p), rng, x.mean(axis=0), scale)
    params = model.parameters()
    opt = Adam(params, lr=config.learning_rate)

    best_loss, best = math.inf, None
    previous = None
    trace = []
    xs = (x - model.input_center) / model.input_scale
    ws = w * scale**2
    for epoch in range(config.max_epochs + 1):
        value, grads = _loss_grad_scaled(model.weights, model.biases, model.activations, xs, ws)
        if not math.isfinite(value):
            raise TrainingError(f"loss became non-finite at epoch {epoch}", epoch)
        trace.append(value)
        if value < best_loss:
            best_loss = value
            best = [a.copy() for a in params]
        if previous is not None and abs(previous - value) < config.tolerance * previous:
            break
        if epoch == config.max_epochs:
            break
        previous = value
        opt.step(grads)

    for dst, src in zip(params, best):
        dst[...] = src
    model.trace = trace
    return model


def indicator_relevance(R, reconstruction) -> np.ndarray:
    """Share of the mean absolute reconstruction error carried by each indicator."""
    x = _as_array(R)
    recon = np.asarray(reconstruction, dtype=float)
    if x.shape != recon.shape:
        raise ValueError(f"reconstruction shape {recon.shape} does not match input {x.shape}")
    err = np.abs(x - recon).mean(axis=0)
    total = err.sum()
    if total < 1e-12:
        return np.full(x.shape[1], 1.0 / x.shape[1])
    return err / total


DEAD_CODE_ATTEMPTS = 25
# a run whose code is zero for at least this share of units is degenerate
MAX_DEAD_SHARE = 0.5


def _replication(x, weights, config: TrainConfig, replication: int):
    """Train one ensemble member.

    A diverging run is retried once with a perturbed seed. A dead run (code
    stuck at zero for most units, or a decoder that ignores the code) is
    retried with fresh seeds up to ``DEAD_CODE_ATTEMPTS`` times. Returns the
    failure instead of raising.
    """
    errors = 0
    last = None
    for attempt in range(DEAD_CODE_ATTEMPTS):
        if attempt == 0:
            seed = config.seed + replication
        else:
            seed = int(np.random.SeedSequence([config.seed, replication, attempt]).generate_state(1)[0])
        cfg = replace(config, seed=seed, feature_weights=tuple(weights))
        try:
            model = train(x, cfg)
        except TrainingError as exc:
            last = exc
            errors += 1
            if errors > 1:
                break
            continue
        codes, recon = forward(model, x)
        dead = (
            np.ptp(codes) <= 0
            or np.mean(codes <= 0) >= MAX_DEAD_SHARE
            or not np.ptp(recon, axis=0).any()
        )
        if dead:
            last = TrainingError("dead network: the code carries no information")
            continue
        return codes, recon, min(model.trace)
    return last


def autosynth_index(
    R,
    config: TrainConfig,
    replications: int = 500,
    compass: Optional[IndexResult] = None,
    n_jobs: int = 1,
) -> AutoSynthResult:
    """Ensemble autoencoder index: median over replications of the aligned codes.

    Replication ``r`` trains with seed ``config.seed + r``. Each replication's
    code is rescaled to [70, 130] and oriented against ``compass`` (AMPI+ by
    default). Indicator relevance comes from the replication whose training
    loss is the median of the ensemble.
    """
    if replications < 1:
        raise ValueError("replications must be a positive integer")
    x = _as_array(R)
    weights = config.weights_for(R)
    if compass is None:
        from autosynth.baselines import ampi_index

        compass = ampi_index(x)
    if len(compass.values) != x.shape[0]:
        raise ValueError("compass does not cover the same units")

    args = [(x, weights, config, r) for r in range(replications)]
    if n_jobs > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(_replication, *zip(*args)))
    else:
        outcomes = [_replication(*a) for a in args]

    ok = [o for o in outcomes if not isinstance(o, Exception)]
    failures = replications - len(ok)
    if failures > 0.1 * replications:
        last = next(o for o in reversed(outcomes) if isinstance(o, Exception))
        raise AutoSynthError(f"{failures} of {replications} replications failed; last error: {last}")

    columns, flips, losses, recons = [], [], [], []
    for codes, recon, best_loss in ok:
        aligned, flipped = align_polarity(rescale(codes), compass)
        columns.append(aligned)
        flips.append(flipped)
        losses.append(best_loss)
        recons.append(recon)
    ensemble = np.column_stack(columns)
    losses = np.array(losses)
    order = np.argsort(losses, kind="stable")
    pick = int(order[(len(order) - 1) // 2])
    flips = np.array(flips)
    units = R.units if isinstance(R, NormalizedMatrix) else None
    index = IndexResult(
        Method.AUTOSYNTH,
        np.median(ensemble, axis=1),
        ensemble=ensemble,
        polarity_flipped=bool(flips.mean() > 0.5),
        units=units,
    )
    return AutoSynthResult(
        index=index,
        relevance=indicator_relevance(x, recons[pick]),
        reconstruction=recons[pick],
        losses=losses,
        flipped=flips,
        failures=failures,
    )
