"""From-scratch temporal convolutional network (numpy, manual backprop).

Layout: a stack of residual blocks, one per dilation. Each block applies
conv -> ReLU -> conv (both dilated and causal) and returns
ReLU(res(x) + G(x)), where res is the identity or a 1x1 projection when the
channel counts differ. A 1x1 linear head maps channels to one output per
position; the controller reads the last position.

All parameters live in one flat float64 vector; named views into it are used
for the forward/backward passes, which keeps checkpoints and gradient checks
trivial.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._accel import causal_conv_backward, causal_conv_forward

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TcnConfig:
    n_features: int = 4
    channels: int = 16
    kernel_size: int = 2
    dilations: tuple = (1, 2, 4, 8)
    window: int = 20
    lr: float = 1e-2
    momentum: float = 0.0
    epochs: int = 15
    batch_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.kernel_size < 2:
            raise ValueError("kernel_size must be >= 2")
        if any(d < 1 for d in self.dilations) or not self.dilations:
            raise ValueError("dilations must be positive")
        if self.n_features < 1 or self.channels < 1 or self.window < 1:
            raise ValueError("sizes must be positive")
        if self.lr <= 0 or not 0.0 <= self.momentum < 1.0:
            raise ValueError("need lr > 0 and 0 <= momentum < 1")
        if self.receptive_field < self.window:
            warnings.warn(
                f"receptive field {self.receptive_field} is shorter than the window {self.window}", stacklevel=2
            )

    @property
    def receptive_field(self) -> int:
        # two convolutions per residual block
        return 1 + 2 * (self.kernel_size - 1) * sum(self.dilations)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TcnConfig":
        return cls(**json.loads(text))


def _layout(cfg: TcnConfig):
    shapes = []
    c_in = cfg.n_features
    for i, _ in enumerate(cfg.dilations):
        c = cfg.channels
        shapes += [
            (f"b{i}.w1", (c, c_in, cfg.kernel_size)),
            (f"b{i}.b1", (c,)),
            (f"b{i}.w2", (c, c, cfg.kernel_size)),
            (f"b{i}.b2", (c,)),
        ]
        if c_in != c:
            shapes += [(f"b{i}.wp", (c, c_in, 1)), (f"b{i}.bp", (c,))]
        c_in = c
    shapes += [("head.w", (1, c_in, 1)), ("head.b", (1,))]
    return shapes


def _views(flat: np.ndarray, layout) -> dict:
    out, pos = {}, 0
    for name, shape in layout:
        n = int(np.prod(shape))
        out[name] = flat[pos : pos + n].reshape(shape)
        pos += n
    return out


@dataclass
class TcnModel:
    cfg: TcnConfig
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.layout = _layout(self.cfg)
        n = sum(int(np.prod(s)) for _, s in self.layout)
        self.theta = np.ascontiguousarray(self.theta, dtype=float)
        if self.theta.shape != (n,):
            raise ValueError(f"expected {n} parameters, got {self.theta.shape}")
        self.params = _views(self.theta, self.layout)

    @classmethod
    def init(cls, cfg: TcnConfig, rng: np.random.Generator) -> "TcnModel":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
        layout = _layout(cfg)
        theta = np.empty(sum(int(np.prod(s)) for _, s in layout))
        views = _views(theta, layout)
        shapes = dict(layout)
        for name, shape in layout:
            # a bias shares the fan-in of its weight: b1 -> w1, bp -> wp, b -> w
            prefix, leaf = name.rsplit(".", 1)
            w_shape = shapes[f"{prefix}.w{leaf[1:]}"]
            bound = 1.0 / np.sqrt(w_shape[1] * w_shape[2])
            views[name][...] = rng.uniform(-bound, bound, size=shape)
        return cls(cfg, theta)

    @classmethod
    def zeros(cls, cfg: TcnConfig) -> "TcnModel":
        return cls(cfg, np.zeros(sum(int(np.prod(s)) for _, s in _layout(cfg))))

    @property
    def n_params(self) -> int:
        return self.theta.size

    def copy(self) -> "TcnModel":
        return TcnModel(self.cfg, self.theta.copy())


def dilated_causal_conv(x, f, d: int):
    """Single-channel D(s) = sum_k f[k] x[s - d k] with zero left padding."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    if d < 1:
        raise ValueError("dilation must be >= 1")
    out = causal_conv_forward(x[None, None, :], f[None, None, :], np.zeros(1), d)
    return out[0, 0]


def _relu(x):
    return np.maximum(x, 0.0)


def residual_block(x, p: dict, prefix: str, d: int, cache: list | None = None):
    """One block on a (batch, channels, time) tensor."""
    a1 = causal_conv_forward(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"], d)
    h1 = _relu(a1)
    g = causal_conv_forward(h1, p[f"{prefix}.w2"], p[f"{prefix}.b2"], d)
    if f"{prefix}.wp" in p:
        res = causal_conv_forward(x, p[f"{prefix}.wp"], p[f"{prefix}.bp"], 1)
    else:
        res = x
    s = res + g
    out = _relu(s)
    if cache is not None:
        cache.append((x, a1, h1, s))
    return out


def forward_sequence(model: TcnModel, x, cache: list | None = None) -> np.ndarray:
    """Outputs at every position, shape (batch, time)."""
    h = np.ascontiguousarray(x, dtype=float)
    if h.ndim != 3 or h.shape[1] != model.cfg.n_features:
        raise ValueError(f"expected input (batch, {model.cfg.n_features}, time), got {h.shape}")
    p = model.params
    for i, d in enumerate(model.cfg.dilations):
        h = residual_block(h, p, f"b{i}", d, cache)
    if cache is not None:
        cache.append(h)
    return causal_conv_forward(h, p["head.w"], p["head.b"], 1)[:, 0, :]


def forward(model: TcnModel, x) -> np.ndarray:
    """Last-position estimates, one per batch element."""
    return forward_sequence(model, x)[:, -1]


def mse_loss(targets, predictions) -> float:
    t = np.asarray(targets, dtype=float)
    p = np.asarray(predictions, dtype=float)
    if t.shape != p.shape:
        raise ValueError("targets and predictions must have equal shapes")
    return float(np.mean((t - p) ** 2)) if t.size else 0.0


def loss_and_grad(model: TcnModel, x, y):
    """MSE on the last position and its gradient w.r.t. the flat parameters."""
    cache: list = []
    out = forward_sequence(model, x, cache)
    y = np.asarray(y, dtype=float)
    batch, length = out.shape
    pred = out[:, -1]
    loss = mse_loss(y, pred)
    grad = np.zeros_like(model.theta)
    gv = _views(grad, model.layout)
    p = model.params

    g_out = np.zeros((batch, 1, length))
    g_out[:, 0, -1] = 2.0 * (pred - y) / batch
    h_last = cache.pop()
    g_h, gv["head.w"][...], gv["head.b"][...] = causal_conv_backward(h_last, p["head.w"], 1, g_out)

    for i in reversed(range(len(model.cfg.dilations))):
        d = model.cfg.dilations[i]
        pre = f"b{i}"
        x_in, a1, h1, s = cache.pop()
        g_s = g_h * (s > 0)
        g_h1, gv[f"{pre}.w2"][...], gv[f"{pre}.b2"][...] = causal_conv_backward(h1, p[f"{pre}.w2"], d, g_s)
        g_a1 = g_h1 * (a1 > 0)
        g_x, gv[f"{pre}.w1"][...], gv[f"{pre}.b1"][...] = causal_conv_backward(x_in, p[f"{pre}.w1"], d, g_a1)
        if f"{pre}.wp" in p:
            g_res, gv[f"{pre}.wp"][...], gv[f"{pre}.bp"][...] = causal_conv_backward(x_in, p[f"{pre}.wp"], 1, g_s)
        else:
            g_res = g_s
        g_h = g_x + g_res
    return loss, grad


def gradient_check(
    model: TcnModel,
    x,
    y,
    n_params: int = 100,
    step: float = 1e-5,
    rng: np.random.Generator | None = None,
    grad_fn=None,
) -> float:
    """Max relative error between analytic and central-difference gradients
    over a random subset of parameters.

    ``grad_fn(model, x, y) -> (loss, grad)`` overrides the analytic gradient
    (used to inject faults in tests).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    _, g = (grad_fn or loss_and_grad)(model, x, y)
    idx = rng.choice(model.n_params, size=min(n_params, model.n_params), replace=False)
    worst = 0.0
    theta = model.theta
    for j in idx:
        old = theta[j]
        theta[j] = old + step
        lp = mse_loss(y, forward(model, x))
        theta[j] = old - step
        lm = mse_loss(y, forward(model, x))
        theta[j] = old
        num = (lp - lm) / (2.0 * step)
        err = abs(g[j] - num) / max(abs(g[j]) + abs(num), 1e-6)
        worst = max(worst, err)
    return float(worst)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, data, axis=0) -> "Standardizer":
        data = np.asarray(data, dtype=float)
        std = data.std(axis=axis)
        return cls(data.mean(axis=axis), np.where(std > 0, std, 1.0))

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean


@dataclass
class TrainResult:
    model: TcnModel
    history: list


def train(model: TcnModel, x, y, cfg: TcnConfig | None = None, rng: np.random.Generator | None = None) -> TrainResult:
    """Minibatch SGD on the last-position MSE; returns per-epoch mean loss.

    ``x`` is (samples, features, time) and ``y`` (samples,), both already
    standardized. The model is updated in place.
    """
    cfg = cfg or model.cfg
    rng = rng if rng is not None else np.random.default_rng(0)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ValueError("x and y must hold the same nonzero number of samples")
    velocity = np.zeros_like(model.theta)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        total = 0.0
        for lo in range(0, order.size, cfg.batch_size):
            sel = order[lo : lo + cfg.batch_size]
            loss, grad = loss_and_grad(model, x[sel], y[sel])
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise FloatingPointError(
                    f"non-finite loss/gradient at epoch {epoch}, batch offset {lo}: loss={loss}, "
                    f"max|theta|={np.max(np.abs(model.theta)):.3e}"
                )
            velocity *= cfg.momentum
            velocity -= cfg.lr * grad
            model.theta += velocity
            total += loss * sel.size
        history.append(total / x.shape[0])
    return TrainResult(model, history)


@dataclass
class TcnPredictor:
    """Trained model plus frozen standardization; maps a feature window (dBm
    powers) to a threshold in dBm."""

    model: TcnModel
    x_stats: Standardizer
    y_stats: Standardizer

    def standardize_windows(self, windows) -> np.ndarray:
        """(samples, W, features) raw -> (samples, features, W) standardized."""
        z = self.x_stats.apply(windows)
        return np.ascontiguousarray(np.transpose(z, (0, 2, 1)))

    def predict_threshold_dbm(self, window) -> float:
        w = self.model.cfg.window
        z = self.x_stats.apply(np.asarray(window, dtype=float).reshape(-1, self.model.cfg.n_features))[-w:]
        if z.shape[0] < w:
            # zero padding in standardized space (the training-set mean)
            z = np.vstack([np.zeros((w - z.shape[0], z.shape[1])), z])
        out = forward(self.model, z.T[None, :, :])[0]
        return float(self.y_stats.invert(out))

    def predict_batch_dbm(self, windows) -> np.ndarray:
        return self.y_stats.invert(forward(self.model, self.standardize_windows(windows)))

    def save(self, path: str | Path):
        np.savez(
            path,
            version=np.array(CHECKPOINT_VERSION),
            config=np.array(self.model.cfg.to_json()),
            theta=self.model.theta,
            x_mean=self.x_stats.mean,
            x_std=self.x_stats.std,
            y_mean=np.atleast_1d(self.y_stats.mean),
            y_std=np.atleast_1d(self.y_stats.std),
        )

    @classmethod
    def load(cls, path: str | Path) -> "TcnPredictor":
        with np.load(path, allow_pickle=False) as f:
            version = int(f["version"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            cfg = TcnConfig.from_json(str(f["config"]))
            model = TcnModel(cfg, f["theta"])
            if f["x_mean"].shape != (cfg.n_features,):
                raise ValueError("feature statistics do not match the model config")
            return cls(
                model,
                Standardizer(f["x_mean"], f["x_std"]),
                Standardizer(float(f["y_mean"][0]), float(f["y_std"][0])),
            )
