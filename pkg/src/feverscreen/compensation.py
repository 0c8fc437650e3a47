"""Distance compensation: a small feed-forward regressor trained with Adam.

Measured temperature drops with distance (atmospheric absorption), so a
two-input network maps (distance, measured temperature) to the true
temperature. Inputs and targets are standardized on the training split;
reported losses are always in degrees-C-squared.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

PLAUSIBLE_RANGE = (30.0, 45.0)


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-07
    epochs: int = 100
    batch_size: int = 1
    train_fraction: float = 0.7
    hidden: int = 16
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.batch_size != 1:
            raise ValueError("training is defined for per-sample updates (batch_size 1)")


@dataclass
class LossReport:
    epoch_mse: list[float] = field(default_factory=list)  # training-split MSE per epoch
    test_mse: float = float("nan")
    n: int = 0


class AdamState:
    """Bias-corrected first/second moment accumulators for one parameter set."""

    def __init__(self, params: list[np.ndarray], config: TrainConfig):
        self.config = config
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        cfg = self.config
        self.t += 1
        b1t = 1.0 - cfg.beta1 ** self.t
        b2t = 1.0 - cfg.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * np.square(g)
            p -= cfg.alpha * (m / b1t) / (np.sqrt(v / b2t) + cfg.epsilon)


class MLP:
    """[2, hidden, 1] network: affine -> rectifier -> affine, plus the
    standardization constants captured from its training split."""

    def __init__(self, hidden: int = 16, seed: int = 0):
        rng = np.random.default_rng(seed)

        def glorot(fan_in, fan_out):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=(fan_in, fan_out))

        self.w1 = glorot(2, hidden)
        self.b1 = np.zeros(hidden)
        self.w2 = glorot(hidden, 1)
        self.b2 = np.zeros(1)
        self.x_mean = np.zeros(2)
        self.x_std = np.ones(2)
        self.y_mean = 0.0
        self.y_std = 1.0

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def set_standardization(self, x_mean, x_std, y_mean: float, y_std: float) -> None:
        self.x_mean = np.asarray(x_mean, dtype=np.float64)
        self.x_std = np.maximum(np.asarray(x_std, dtype=np.float64), 1e-9)
        self.y_mean = float(y_mean)
        self.y_std = max(float(y_std), 1e-9)

    def standardize(self, distance, measured) -> np.ndarray:
        x = np.column_stack([np.atleast_1d(distance), np.atleast_1d(measured)])
        return (x - self.x_mean) / self.x_std

    def forward_std(self, x_std: np.ndarray) -> np.ndarray:
        """Standardized-space evaluation; x_std is (n, 2)."""
        z1 = x_std @ self.w1 + self.b1
        h = np.maximum(z1, 0.0)
        return (h @ self.w2 + self.b2)[:, 0]

    def forward(self, distance: float, measured_temp: float) -> float:
        """Predicted true temperature in degrees C."""
        y_std = self.forward_std(self.standardize(distance, measured_temp))
        return float(y_std[0] * self.y_std + self.y_mean)

    def predict(self, distance, measured) -> np.ndarray:
        y_std = self.forward_std(self.standardize(distance, measured))
        return y_std * self.y_std + self.y_mean

    def grads_std(self, x_std: np.ndarray, target_std: float) -> tuple[list[np.ndarray], float]:
        """Backpropagated gradients of the squared error for one sample.

        Returns ([dw1, db1, dw2, db2], loss) in standardized space.
        """
        x = x_std.reshape(2)
        z1 = x @ self.w1 + self.b1
        h = np.maximum(z1, 0.0)
        y = float(h @ self.w2 + self.b2)
        e = y - target_std
        loss = e * e
        dy = 2.0 * e
        dw2 = dy * h[:, None]
        db2 = np.array([dy])
        dh = dy * self.w2[:, 0]
        dz1 = np.where(z1 > 0.0, dh, 0.0)
        dw1 = np.outer(x, dz1)
        db1 = dz1
        return [dw1, db1, dw2, db2], loss

    def clone(self) -> "MLP":
        out = MLP(hidden=self.hidden)
        out.w1 = self.w1.copy()
        out.b1 = self.b1.copy()
        out.w2 = self.w2.copy()
        out.b2 = self.b2.copy()
        out.set_standardization(self.x_mean, self.x_std, self.y_mean, self.y_std)
        return out


def loss_mse(predictions, targets) -> float:
    """Mean of squared residuals; errors on empty input."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    if p.size == 0:
        raise ValueError("MSE of an empty sample is undefined")
    return float(np.mean((p - t) ** 2))


def train_adam(dataset, config: TrainConfig | None = None) -> tuple[MLP, LossReport]:
    """Train on (distance, measured, true) triples with per-sample Adam updates.

    Shuffles once with the seed, splits 70:30, standardizes on the training
    split, then runs exactly config.epochs epochs. Reported MSEs are in
    degrees-C-squared over the full training split at each epoch end.
    """
    cfg = config or TrainConfig()
    data = np.asarray(dataset, dtype=np.float64).reshape(-1, 3)
    if data.shape[0] < 10:
        raise ValueError(f"need at least 10 samples, got {data.shape[0]}")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(data.shape[0])
    data = data[order]
    n_train = int(round(cfg.train_fraction * data.shape[0]))
    n_train = min(max(n_train, 1), data.shape[0] - 1)
    train, test = data[:n_train], data[n_train:]

    mlp = MLP(hidden=cfg.hidden, seed=cfg.seed)
    x_mean = train[:, :2].mean(axis=0)
    x_std = train[:, :2].std(axis=0)
    y_mean = train[:, 2].mean()
    y_std = train[:, 2].std()
    mlp.set_standardization(x_mean, x_std, y_mean, max(y_std, 1e-9))

    x_train = (train[:, :2] - mlp.x_mean) / mlp.x_std
    y_train = (train[:, 2] - mlp.y_mean) / mlp.y_std

    adam = AdamState(mlp.params(), cfg)
    report = LossReport(n=data.shape[0])
    for _ in range(cfg.epochs):
        for idx in rng.permutation(n_train):
            grads, loss = mlp.grads_std(x_train[idx], float(y_train[idx]))
            if not math.isfinite(loss):
                raise ArithmeticError("training diverged: non-finite loss")
            adam.step(mlp.params(), grads)
        epoch_pred = mlp.forward_std(x_train) * mlp.y_std + mlp.y_mean
        report.epoch_mse.append(loss_mse(epoch_pred, train[:, 2]))

    test_pred = mlp.predict(test[:, 0], test[:, 1])
    report.test_mse = loss_mse(test_pred, test[:, 2])
    return mlp, report


def gradient_check(mlp: MLP, sample, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    distance, measured, true = sample
    x_std = mlp.standardize(distance, measured)[0]
    t_std = (true - mlp.y_mean) / mlp.y_std
    analytic, _ = mlp.grads_std(x_std, t_std)

    worst = 0.0
    for p, g in zip(mlp.params(), analytic):
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            keep = flat_p[i]
            flat_p[i] = keep + step
            _, up = mlp.grads_std(x_std, t_std)
            flat_p[i] = keep - step
            _, down = mlp.grads_std(x_std, t_std)
            flat_p[i] = keep
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(numeric) + abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(numeric - flat_g[i]) / denom)
    return worst


class CompensationModel:
    """Optional wrapper: identity pass-through until a trained net is loaded."""

    def __init__(self, mlp: MLP | None = None):
        self.mlp = mlp

    @property
    def is_identity(self) -> bool:
        return self.mlp is None

    def correct(self, raw_temp: float, distance: float | None) -> float:
        if self.mlp is None or distance is None:
            return raw_temp
        out = self.mlp.forward(distance, raw_temp)
        return float(np.clip(out, *PLAUSIBLE_RANGE))


def save_model(mlp: MLP, path: str) -> None:
    payload = {
        "layers": [2, mlp.hidden, 1],
        "x_mean": mlp.x_mean.tolist(),
        "x_std": mlp.x_std.tolist(),
        "y_mean": mlp.y_mean,
        "y_std": mlp.y_std,
        "w1": mlp.w1.tolist(),
        "b1": mlp.b1.tolist(),
        "w2": mlp.w2.tolist(),
        "b2": mlp.b2.tolist(),
    }
    with open(path, "w", encoding="ascii") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path: str) -> MLP:
    with open(path, encoding="ascii") as f:
        payload = json.load(f)
    hidden = payload["layers"][1]
    mlp = MLP(hidden=hidden)
    mlp.w1 = np.asarray(payload["w1"], dtype=np.float64).reshape(2, hidden)
    mlp.b1 = np.asarray(payload["b1"], dtype=np.float64).reshape(hidden)
    mlp.w2 = np.asarray(payload["w2"], dtype=np.float64).reshape(hidden, 1)
    mlp.b2 = np.asarray(payload["b2"], dtype=np.float64).reshape(1)
    mlp.set_standardization(payload["x_mean"], payload["x_std"],
                            payload["y_mean"], payload["y_std"])
    return mlp
