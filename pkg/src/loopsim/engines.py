"""Numerical learners used by Analyze steps, written on plain numpy.

Three model families: dense feed-forward stacks (the telemetry compressor),
ordinary least squares, and a single-layer LSTM forecaster with a direct
multi-horizon readout. Gradients are hand-derived reverse mode; the test
suite checks them against central finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SimError

MODEL_FORMAT = "loopsim-model"
MODEL_VERSION = 1

# The telemetry compressor: widths and activations of the five dense layers.
# Encoder is layers 1-3 (code width 75), decoder layers 4-5; the sigmoid
# output matches inputs normalized to [0, 1].
COMPRESSOR_WIDTHS = (111, 90, 85, 75, 90, 111)
COMPRESSOR_ACTIVATIONS = ("elu", "elu", "linear", "elu", "sigmoid")


class TrainingDivergedError(SimError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


class DegenerateFitError(SimError):
    pass


class InsufficientDataError(SimError):
    pass


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def elu(x: np.ndarray) -> np.ndarray:
    # alpha = 1: identity for x > 0, exp(x) - 1 otherwise
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_deriv(preact: np.ndarray, out: np.ndarray) -> np.ndarray:
    return np.where(preact > 0, 1.0, out + 1.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_deriv(preact: np.ndarray, out: np.ndarray) -> np.ndarray:
    return out * (1.0 - out)


_ACTIVATIONS = {
    "elu": (elu, _elu_deriv),
    "linear": (lambda x: x, lambda preact, out: np.ones_like(preact)),
    "sigmoid": (sigmoid, _sigmoid_deriv),
}


# ---------------------------------------------------------------------------
# Dense networks
# ---------------------------------------------------------------------------

@dataclass
class DenseLayer:
    weights: np.ndarray  # out x in
    bias: np.ndarray  # out
    activation: str

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


@dataclass
class DenseNet:
    """A stack of dense layers; encoder_layers marks the code boundary."""

    layers: list[DenseLayer]
    encoder_layers: int

    @property
    def input_width(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_width(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def code_width(self) -> int:
        return self.layers[self.encoder_layers - 1].weights.shape[0]

    def dims(self) -> list[tuple[int, int]]:
        return [layer.weights.shape for layer in self.layers]


def _glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def net_init(widths, activations, seed: int) -> DenseNet:
    """Dense stack with uniform fan-based init (+-sqrt(6/(fan_in+fan_out)))
    and zero biases. The code boundary sits at the narrowest inner width."""
    widths = tuple(int(w) for w in widths)
    if len(activations) != len(widths) - 1:
        raise ConfigError("need one activation per layer")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    layers = [
        DenseLayer(weights=_glorot_uniform(rng, widths[i + 1], widths[i]),
                   bias=np.zeros(widths[i + 1]),
                   activation=act)
        for i, act in enumerate(activations)
    ]
    inner = widths[1:-1]
    encoder_layers = 1 + int(np.argmin(inner))
    return DenseNet(layers=layers, encoder_layers=encoder_layers)


def ae_init(seed: int) -> DenseNet:
    """The 111 -> 90 -> 85 -> 75 -> 90 -> 111 telemetry compressor."""
    return net_init(COMPRESSOR_WIDTHS, COMPRESSOR_ACTIVATIONS, seed)


def _check_input(net: DenseNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_width:
        raise ConfigError(f"input width {x.shape[-1]} != model width {net.input_width}")
    if not np.all(np.isfinite(x)):
        raise ConfigError("non-finite input")
    return x


def _apply_layers(layers, x: np.ndarray) -> np.ndarray:
    h = x
    for layer in layers:
        act, _ = _ACTIVATIONS[layer.activation]
        h = act(h @ layer.weights.T + layer.bias)
    return h


def ae_forward(net: DenseNet, x) -> np.ndarray:
    """Full reconstruction pass; accepts one vector or a batch."""
    arr = np.asarray(x, dtype=float)
    squeeze = arr.ndim == 1
    out = _apply_layers(net.layers, _check_input(net, arr))
    return out[0] if squeeze else out


def encode(net: DenseNet, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    squeeze = arr.ndim == 1
    out = _apply_layers(net.layers[: net.encoder_layers], _check_input(net, arr))
    return out[0] if squeeze else out


def decode(net: DenseNet, code) -> np.ndarray:
    code = np.asarray(code, dtype=float)
    squeeze = code.ndim == 1
    if squeeze:
        code = code[None, :]
    if code.shape[1] != net.code_width:
        raise ConfigError(f"code width {code.shape[1]} != model code width {net.code_width}")
    out = _apply_layers(net.layers[net.encoder_layers:], code)
    return out[0] if squeeze else out


def mse_loss_and_grads(net: DenseNet, x: np.ndarray, target: np.ndarray):
    """Mean-squared-error loss over all elements and its gradients, by
    reverse-mode differentiation through every layer. Overflow is left to
    produce non-finite values (the trainers report those as divergence)."""
    with np.errstate(over="ignore", invalid="ignore"):
        acts = [x]
        preacts = []
        h = x
        for layer in net.layers:
            z = h @ layer.weights.T + layer.bias
            act, _ = _ACTIVATIONS[layer.activation]
            h = act(z)
            preacts.append(z)
            acts.append(h)
        diff = h - target
        loss = float(np.mean(diff * diff))
        grad_out = 2.0 * diff / diff.size
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)  # type: ignore
        for i in range(len(net.layers) - 1, -1, -1):
            layer = net.layers[i]
            _, deriv = _ACTIVATIONS[layer.activation]
            gz = grad_out * deriv(preacts[i], acts[i + 1])
            grads[i] = (gz.T @ acts[i], gz.sum(axis=0))
            grad_out = gz @ layer.weights
    return loss, grads


# ---------------------------------------------------------------------------
# Optimizers and the shared training config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"  # adam | sgd
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


class _Optimizer:
    """Applies sgd or adam (beta1=0.9, beta2=0.999, eps=1e-8) updates to a
    flat list of parameter arrays, in place."""

    def __init__(self, params: list[np.ndarray], config: TrainConfig):
        self.params = params
        self.lr = config.learning_rate
        self.kind = config.optimizer
        if self.kind == "adam":
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
            self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if self.kind == "sgd":
            for p, g in zip(self.params, grads):
                p -= self.lr * g
            return
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        correction = math.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * correction * m / (np.sqrt(v) + eps)


def _minibatches(n: int, batch_size: int, shuffle: bool, rng: np.random.Generator):
    order = rng.permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def ae_train(net: DenseNet, data01: np.ndarray, config: TrainConfig):
    """Train the reconstruction objective in place; returns (net, loss_history).

    loss_history has one entry per epoch: the sample-weighted mean of the
    pre-update batch losses, i.e. total squared error over the epoch divided
    by total elements.
    """
    data01 = np.asarray(data01, dtype=float)
    if data01.ndim != 2 or data01.shape[1] != net.input_width:
        raise ConfigError("training data width does not match the model")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    params: list[np.ndarray] = []
    for layer in net.layers:
        params.extend((layer.weights, layer.bias))
    opt = _Optimizer(params, config)
    history: list[float] = []
    for epoch in range(config.epochs):
        sse = 0.0
        count = 0
        for idx in _minibatches(len(data01), config.batch_size, config.shuffle, rng):
            batch = data01[idx]
            loss, grads = mse_loss_and_grads(net, batch, batch)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            flat = [g for pair in grads for g in pair]
            opt.step(flat)
            sse += loss * batch.size
            count += batch.size
        history.append(sse / count)
    return net, history


# ---------------------------------------------------------------------------
# Reconstruction-error reporting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorDistribution:
    fraction_below: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    included: int
    excluded: int  # samples with |real| < eps, reported separately
    threshold: float


def relative_error_distribution(real, recon, threshold: float,
                                eps: float = 1e-6, bins: int = 40,
                                bin_range: tuple[float, float] = (-2.0, 2.0)) -> ErrorDistribution:
    """Per-sample relative error (real - recon) / real.

    Samples with |real| < eps are excluded from the fraction and counted
    separately. fraction_below is the share of included samples with
    |error| strictly below the threshold. The histogram clips errors into
    bin_range so the tails stay visible in the edge bins.
    """
    real = np.asarray(getattr(real, "values", real), dtype=float)
    recon = np.asarray(getattr(recon, "values", recon), dtype=float)
    if real.shape != recon.shape:
        raise ConfigError(f"length mismatch: {real.shape} vs {recon.shape}")
    keep = np.abs(real) >= eps
    eta = (real[keep] - recon[keep]) / real[keep]
    included = int(keep.sum())
    fraction = float(np.mean(np.abs(eta) < threshold)) if included else 0.0
    clipped = np.clip(eta, bin_range[0], bin_range[1])
    hist, edges = np.histogram(clipped, bins=bins, range=bin_range)
    return ErrorDistribution(
        fraction_below=fraction, histogram=hist, bin_edges=edges,
        included=included, excluded=int(real.size - included), threshold=threshold,
    )


# ---------------------------------------------------------------------------
# Ordinary least squares
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearModel:
    slope: float
    intercept: float
    fit_mse: float


def linfit(x, y) -> LinearModel:
    """Closed-form OLS of y on x."""
    x = np.asarray(getattr(x, "values", x), dtype=float)
    y = np.asarray(getattr(y, "values", y), dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigError("linfit expects two 1-d series of equal length")
    if len(x) < 2:
        raise DegenerateFitError("need at least 2 points")
    xm = x.mean()
    var = float(np.mean((x - xm) ** 2))
    if var == 0.0:
        raise DegenerateFitError("x is constant")
    slope = float(np.mean((x - xm) * (y - y.mean())) / var)
    intercept = float(y.mean() - slope * xm)
    resid = y - (slope * x + intercept)
    return LinearModel(slope=slope, intercept=intercept, fit_mse=float(np.mean(resid ** 2)))


def lin_predict(model: LinearModel, x):
    x = np.asarray(x, dtype=float)
    return model.slope * x + model.intercept


# ---------------------------------------------------------------------------
# LSTM forecaster
# ---------------------------------------------------------------------------

_GATES = ("input", "forget", "output", "cell")


@dataclass
class RecurrentModel:
    """Single-layer LSTM over a scalar series with a direct multi-step
    readout: the window feeds the recurrence, the final hidden state maps
    linearly to the full horizon. Input scaling (min-max of the training
    series) is stored with the model."""

    hidden_size: int
    window: int
    horizon: int
    w: dict[str, np.ndarray]  # gate -> (hidden, 1 + hidden), acts on [x_t, h]
    b: dict[str, np.ndarray]  # gate -> (hidden,)
    w_out: np.ndarray  # (horizon, hidden)
    b_out: np.ndarray  # (horizon,)
    in_lo: float = 0.0
    in_hi: float = 1.0
    train_loss: list[float] = field(default_factory=list)

    def _params(self) -> list[np.ndarray]:
        out = []
        for g in _GATES:
            out.extend((self.w[g], self.b[g]))
        out.extend((self.w_out, self.b_out))
        return out


def rnn_init(hidden_size: int, window: int, horizon: int, seed: int) -> RecurrentModel:
    if horizon < 1 or window < 1 or hidden_size < 1:
        raise ConfigError("hidden size, window and horizon must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    w = {g: _glorot_uniform(rng, hidden_size, 1 + hidden_size) for g in _GATES}
    b = {g: np.zeros(hidden_size) for g in _GATES}
    b["forget"] = np.ones(hidden_size)  # start remembering
    return RecurrentModel(
        hidden_size=hidden_size, window=window, horizon=horizon,
        w=w, b=b,
        w_out=_glorot_uniform(rng, horizon, hidden_size),
        b_out=np.zeros(horizon),
    )


def _rnn_forward(model: RecurrentModel, x: np.ndarray):
    """x: (batch, window) normalized. Returns (y, cache) with y (batch, horizon)."""
    batch = x.shape[0]
    h = np.zeros((batch, model.hidden_size))
    c = np.zeros((batch, model.hidden_size))
    cache = []
    for t in range(x.shape[1]):
        u = np.concatenate([x[:, t:t + 1], h], axis=1)
        gi = sigmoid(u @ model.w["input"].T + model.b["input"])
        gf = sigmoid(u @ model.w["forget"].T + model.b["forget"])
        go = sigmoid(u @ model.w["output"].T + model.b["output"])
        gc = np.tanh(u @ model.w["cell"].T + model.b["cell"])
        c_prev = c
        c = gf * c_prev + gi * gc
        tc = np.tanh(c)
        h = go * tc
        cache.append((u, gi, gf, go, gc, c_prev, tc))
    y = h @ model.w_out.T + model.b_out
    return y, (cache, h)


def rnn_loss_and_grads(model: RecurrentModel, x: np.ndarray, target: np.ndarray):
    """MSE over the horizon outputs with full backpropagation through the
    unrolled window (truncation length = window length)."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _rnn_loss_and_grads(model, x, target)


def _rnn_loss_and_grads(model: RecurrentModel, x: np.ndarray, target: np.ndarray):
    y, (cache, h_last) = _rnn_forward(model, x)
    diff = y - target
    loss = float(np.mean(diff * diff))
    dy = 2.0 * diff / diff.size
    gw = {g: np.zeros_like(model.w[g]) for g in _GATES}
    gb = {g: np.zeros_like(model.b[g]) for g in _GATES}
    g_wout = dy.T @ h_last
    g_bout = dy.sum(axis=0)
    dh = dy @ model.w_out
    dc = np.zeros((x.shape[0], model.hidden_size))
    for t in range(x.shape[1] - 1, -1, -1):
        u, gi, gf, go, gc, c_prev, tc = cache[t]
        do = dh * tc
        dc = dc + dh * go * (1.0 - tc * tc)
        di = dc * gc
        dg = dc * gi
        df = dc * c_prev
        dz = {
            "input": di * gi * (1.0 - gi),
            "forget": df * gf * (1.0 - gf),
            "output": do * go * (1.0 - go),
            "cell": dg * (1.0 - gc * gc),
        }
        du = np.zeros_like(u)
        for g in _GATES:
            gw[g] += dz[g].T @ u
            gb[g] += dz[g].sum(axis=0)
            du += dz[g] @ model.w[g]
        dh = du[:, 1:]
        dc = dc * gf
    grads = []
    for g in _GATES:
        grads.extend((gw[g], gb[g]))
    grads.extend((g_wout, g_bout))
    return loss, grads


def make_windows(series: np.ndarray, window: int, horizon: int):
    """Sliding input windows and their following horizon targets."""
    series = np.asarray(series, dtype=float)
    n = len(series) - window - horizon + 1
    if n < 1:
        raise InsufficientDataError(
            f"series of {len(series)} samples is too short for window {window} + horizon {horizon}")
    x = np.stack([series[i:i + window] for i in range(n)])
    y = np.stack([series[i + window:i + window + horizon] for i in range(n)])
    return x, y


def rnn_train(series, window: int, horizon: int, config: TrainConfig,
              hidden_size: int = 16) -> RecurrentModel:
    """Fit the forecaster on a scalar series (raw units)."""
    series = np.asarray(getattr(series, "values", series), dtype=float)
    if len(series) <= window + horizon:
        raise InsufficientDataError(
            f"need more than window + horizon = {window + horizon} samples, got {len(series)}")
    model = rnn_init(hidden_size, window, horizon, config.seed)
    lo, hi = float(series.min()), float(series.max())
    model.in_lo, model.in_hi = lo, hi
    span = (hi - lo) or 1.0
    norm = (series - lo) / span
    x, y = make_windows(norm, window, horizon)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((config.seed, 1))))
    opt = _Optimizer(model._params(), config)
    for epoch in range(config.epochs):
        sse = 0.0
        count = 0
        for idx in _minibatches(len(x), config.batch_size, config.shuffle, rng):
            loss, grads = rnn_loss_and_grads(model, x[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            opt.step(grads)
            sse += loss * y[idx].size
            count += y[idx].size
        model.train_loss.append(sse / count)
    return model


def rnn_predict(model: RecurrentModel, window_values) -> np.ndarray:
    """Forecast the next horizon values from one raw input window."""
    window_values = np.asarray(getattr(window_values, "values", window_values), dtype=float)
    if window_values.ndim != 1 or len(window_values) != model.window:
        raise ConfigError(f"expected a window of {model.window} values")
    span = (model.in_hi - model.in_lo) or 1.0
    norm = (window_values - model.in_lo) / span
    y, _ = _rnn_forward(model, norm[None, :])
    return y[0] * span + model.in_lo


# ---------------------------------------------------------------------------
# Model serialization
# ---------------------------------------------------------------------------

def save_model(model, path, train_config: TrainConfig | None = None) -> None:
    """Versioned JSON container: dims, activations, row-major weights and the
    training config used."""
    cfg = None
    if train_config is not None:
        cfg = {"learning_rate": train_config.learning_rate, "epochs": train_config.epochs,
               "batch_size": train_config.batch_size, "seed": train_config.seed,
               "optimizer": train_config.optimizer, "shuffle": train_config.shuffle}
    if isinstance(model, DenseNet):
        doc = {
            "format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": "dense",
            "encoder_layers": model.encoder_layers,
            "layers": [
                {"activation": l.activation, "out": l.weights.shape[0],
                 "in": l.weights.shape[1], "weights": l.weights.tolist(),
                 "bias": l.bias.tolist()}
                for l in model.layers
            ],
            "train_config": cfg,
        }
    elif isinstance(model, RecurrentModel):
        doc = {
            "format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": "lstm",
            "hidden_size": model.hidden_size, "window": model.window,
            "horizon": model.horizon,
            "w": {g: model.w[g].tolist() for g in _GATES},
            "b": {g: model.b[g].tolist() for g in _GATES},
            "w_out": model.w_out.tolist(), "b_out": model.b_out.tolist(),
            "in_lo": model.in_lo, "in_hi": model.in_hi,
            "train_config": cfg,
        }
    elif isinstance(model, LinearModel):
        doc = {
            "format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": "linear",
            "slope": model.slope, "intercept": model.intercept, "fit_mse": model.fit_mse,
            "train_config": cfg,
        }
    else:
        raise ConfigError(f"cannot serialize model of type {type(model).__name__}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ConfigError(f"{path}: not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ConfigError(f"{path}: unsupported model version {doc.get('version')}")
    kind = doc.get("kind")
    if kind == "dense":
        layers = [
            DenseLayer(weights=np.asarray(l["weights"], dtype=float),
                       bias=np.asarray(l["bias"], dtype=float),
                       activation=l["activation"])
            for l in doc["layers"]
        ]
        return DenseNet(layers=layers, encoder_layers=int(doc["encoder_layers"]))
    if kind == "lstm":
        return RecurrentModel(
            hidden_size=int(doc["hidden_size"]), window=int(doc["window"]),
            horizon=int(doc["horizon"]),
            w={g: np.asarray(doc["w"][g], dtype=float) for g in _GATES},
            b={g: np.asarray(doc["b"][g], dtype=float) for g in _GATES},
            w_out=np.asarray(doc["w_out"], dtype=float),
            b_out=np.asarray(doc["b_out"], dtype=float),
            in_lo=float(doc["in_lo"]), in_hi=float(doc["in_hi"]),
        )
    if kind == "linear":
        return LinearModel(slope=float(doc["slope"]), intercept=float(doc["intercept"]),
                           fit_mse=float(doc["fit_mse"]))
    raise ConfigError(f"{path}: unknown model kind {kind!r}")
