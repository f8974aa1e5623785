"""Dense feedforward regressors, written from scratch on numpy.

Two fixed architectures predict one cell's K powers plus their sum from the
2KL global UE positions:

    m1: 64/32/32/32/K/K+1
    m2: 512/256/128/128/K/K+1

with elu on every layer except the linear head. The input affine (fixed
standardization from train-split stats) and the output affine (times Pmax)
live inside the model so gradients with respect to raw inputs come out in
mW per meter and checkpoints are self-contained.

Two output paths coexist downstream: the raw forward pass (attack losses,
feasibility checks) and `predict_powers`, which clamps negatives to zero for
SINR evaluation only.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import NetworkConfig, spawn_rng
from .dataset import NormalizationStats

CHECKPOINT_VERSION = "advpower.model.v1"

ELU = "elu"
LINEAR = "linear"

# hidden widths preceding the K-wide elu layer and the K+1 linear head
ARCH_HIDDEN = {
    "m1": (64, 32, 32, 32),
    "m2": (512, 256, 128, 128),
}


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("layer width must be >= 1")
        if self.activation not in (ELU, LINEAR):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class ModelParams:
    arch: str
    cell_index: int
    layers: list[LayerSpec]
    weights: list[np.ndarray]      # (fan_in, fan_out) per layer
    biases: list[np.ndarray]       # (fan_out,) per layer
    x_mean: np.ndarray             # (2KL,) meters
    x_std: np.ndarray              # (2KL,) meters
    power_scale: float             # mW; output affine multiplier
    config_hash: str = ""

    def __post_init__(self):
        dims = [len(self.x_mean)] + [ls.width for ls in self.layers]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} dimensions do not chain")

    @property
    def input_dim(self) -> int:
        return len(self.x_mean)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].width

    def layer_parameter_counts(self) -> list[int]:
        return [W.size + b.size for W, b in zip(self.weights, self.biases)]

    @property
    def total_parameter_count(self) -> int:
        return sum(self.layer_parameter_counts())

    @property
    def trainable_parameter_count(self) -> int:
        """Conventional headline count: the elu feature stack, excluding the
        K+1-wide linear readout."""
        return sum(self.layer_parameter_counts()[:-1])

    def copy(self) -> "ModelParams":
        return replace(self, weights=[W.copy() for W in self.weights],
                       biases=[b.copy() for b in self.biases])

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for W, b in zip(self.weights, self.biases):
            h.update(W.tobytes())
            h.update(b.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 128
    max_epochs: int = 400
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.beta1, self.beta2, self.adam_eps) <= 0:
            raise ValueError("optimizer constants must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs, patience must be >= 1")


def build_arch(arch: str, config: NetworkConfig, stats: NormalizationStats,
               cell_index: int, seed: int) -> ModelParams:
    """Glorot-uniform initialized model for one cell; biases start at zero."""
    if arch not in ARCH_HIDDEN:
        raise ValueError(f"unknown architecture {arch!r}")
    if not 0 <= cell_index < config.L:
        raise ValueError(f"cell_index {cell_index} out of range")
    widths = ARCH_HIDDEN[arch] + (config.K, config.K + 1)
    layers = [LayerSpec(w, ELU) for w in widths[:-1]] + [LayerSpec(widths[-1], LINEAR)]
    rng = spawn_rng(seed, "init", arch, cell_index)
    dims = [config.input_dim] + list(widths)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(arch=arch, cell_index=cell_index, layers=layers,
                       weights=weights, biases=biases,
                       x_mean=np.asarray(stats.mean, dtype=float),
                       x_std=np.asarray(stats.std, dtype=float),
                       power_scale=float(stats.power_scale),
                       config_hash=config.config_hash())


def _elu(t: np.ndarray) -> np.ndarray:
    return np.where(t >= 0, t, np.expm1(t))


def _elu_prime(t: np.ndarray) -> np.ndarray:
    # right derivative at 0 is 1 (exp(0) on the branch below also gives 1)
    return np.where(t >= 0, 1.0, np.exp(t))


def _forward_cached(model: ModelParams, X: np.ndarray):
    """Standardized input, pre-activations, and activations per layer.
    The returned head activation is in scaled units (mW / power_scale)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite model input")
    u = (X - model.x_mean) / model.x_std
    pre, act = [], [u]
    a = u
    for ls, W, b in zip(model.layers, model.weights, model.biases):
        z = a @ W + b
        pre.append(z)
        a = _elu(z) if ls.activation == ELU else z
        act.append(a)
    return u, pre, act


def forward(model: ModelParams, X: np.ndarray) -> np.ndarray:
    """(n, K+1) raw outputs in mW (no clamping)."""
    single = np.ndim(X) == 1
    out = _forward_cached(model, X)[2][-1] * model.power_scale
    return out[0] if single else out


def predict_powers(model: ModelParams, X: np.ndarray) -> np.ndarray:
    """First K outputs, clamped below at 0 mW. SINR-evaluation path only;
    attack losses and feasibility counts use the raw forward pass."""
    out = forward(model, X)
    return np.maximum(out[..., :-1], 0.0)


def _backprop(model: ModelParams, pre, act, head_grad: np.ndarray):
    """Gradients from d(objective)/d(head pre-activation) back to every
    parameter and to the standardized input."""
    grads_W, grads_b = [None] * len(model.weights), [None] * len(model.biases)
    delta = head_grad
    for i in range(len(model.weights) - 1, -1, -1):
        grads_W[i] = act[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * _elu_prime(pre[i - 1])
        else:
            delta = delta @ model.weights[i].T
    return grads_W, grads_b, delta


def _scaled_targets(model: ModelParams, Y: np.ndarray) -> np.ndarray:
    """(n, K+1) targets in scaled units: K powers plus their sum, / Pmax."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return np.hstack([Y, Y.sum(axis=1, keepdims=True)]) / model.power_scale


def mse_loss(model: ModelParams, X: np.ndarray, Y: np.ndarray) -> float:
    """Mean squared error over all K+1 scaled outputs; Y holds K mW powers."""
    out = _forward_cached(model, X)[2][-1]
    return float(np.mean((out - _scaled_targets(model, Y)) ** 2))


def param_gradients(model: ModelParams, X: np.ndarray, Y: np.ndarray):
    """(grads_W, grads_b, loss) of the scaled MSE over a batch."""
    u, pre, act = _forward_cached(model, X)
    resid = act[-1] - _scaled_targets(model, Y)
    loss = float(np.mean(resid ** 2))
    head_grad = 2.0 * resid / resid.size
    grads_W, grads_b, _ = _backprop(model, pre, act, head_grad)
    return grads_W, grads_b, loss


def input_gradient(model: ModelParams, X: np.ndarray) -> np.ndarray:
    """Gradient of sum(first K outputs, mW) with respect to the raw input,
    in mW per meter. The K+1-th head never contributes."""
    single = np.ndim(X) == 1
    u, pre, act = _forward_cached(model, X)
    head_grad = np.zeros_like(act[-1])
    head_grad[:, :-1] = model.power_scale
    _, _, dstd = _backprop(model, pre, act, head_grad)
    g = dstd / model.x_std
    return g[0] if single else g


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_val_loss: list[float] = field(default_factory=list)

    def rows(self):
        return zip(self.epochs, self.train_loss, self.val_loss,
                   self.best_val_loss)


def train(model: ModelParams, X_train: np.ndarray, Y_train: np.ndarray,
          X_val: np.ndarray, Y_val: np.ndarray,
          tc: TrainConfig) -> tuple[ModelParams, TrainHistory]:
    """Adam on scaled MSE with validation-based early stopping.

    Stops once the val loss has not improved for `tc.patience` consecutive
    epochs and returns the best-val snapshot. Deterministic for a fixed
    tc.seed (shuffle order included).
    """
    if len(X_train) == 0 or len(X_val) == 0:
        raise ValueError("train and val splits must be nonempty")
    model = model.copy()
    rng = spawn_rng(tc.seed, "shuffle", model.arch, model.cell_index)
    m_W = [np.zeros_like(W) for W in model.weights]
    v_W = [np.zeros_like(W) for W in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    t = 0
    best = model.copy()
    best_val = np.inf
    stall = 0
    history = TrainHistory()
    for epoch in range(1, tc.max_epochs + 1):
        order = rng.permutation(len(X_train))
        epoch_loss = 0.0
        for lo in range(0, len(order), tc.batch_size):
            idx = order[lo:lo + tc.batch_size]
            gW, gb, loss = param_gradients(model, X_train[idx], Y_train[idx])
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch} (loss={loss})")
            epoch_loss += loss * len(idx)
            t += 1
            bc1 = 1.0 - tc.beta1 ** t
            bc2 = 1.0 - tc.beta2 ** t
            for i in range(len(model.weights)):
                m_W[i] = tc.beta1 * m_W[i] + (1 - tc.beta1) * gW[i]
                v_W[i] = tc.beta2 * v_W[i] + (1 - tc.beta2) * gW[i] ** 2
                m_b[i] = tc.beta1 * m_b[i] + (1 - tc.beta1) * gb[i]
                v_b[i] = tc.beta2 * v_b[i] + (1 - tc.beta2) * gb[i] ** 2
                model.weights[i] -= (tc.learning_rate * (m_W[i] / bc1)
                                     / (np.sqrt(v_W[i] / bc2) + tc.adam_eps))
                model.biases[i] -= (tc.learning_rate * (m_b[i] / bc1)
                                    / (np.sqrt(v_b[i] / bc2) + tc.adam_eps))
        val = mse_loss(model, X_val, Y_val)
        if not np.isfinite(val):
            raise RuntimeError(f"validation loss diverged at epoch {epoch}")
        if val < best_val:
            best_val = val
            best = model.copy()
            stall = 0
        else:
            stall += 1
        history.epochs.append(epoch)
        history.train_loss.append(epoch_loss / len(X_train))
        history.val_loss.append(val)
        history.best_val_loss.append(best_val)
        if stall >= tc.patience:
            break
    return best, history


def save_model(model: ModelParams, path) -> None:
    """One JSON header line, then every weight matrix and bias vector in
    layer order, row-major, one line each at 17 significant digits."""
    header = {
        "format": CHECKPOINT_VERSION,
        "arch": model.arch,
        "cell_index": model.cell_index,
        "layers": [[ls.width, ls.activation] for ls in model.layers],
        "input_dim": model.input_dim,
        "x_mean": [float(v) for v in model.x_mean],
        "x_std": [float(v) for v in model.x_std],
        "power_scale": model.power_scale,
        "config_hash": model.config_hash,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for W, b in zip(model.weights, model.biases):
            fh.write(" ".join(f"{v:.17g}" for v in W.reshape(-1)) + "\n")
            fh.write(" ".join(f"{v:.17g}" for v in b) + "\n")


def load_model(path) -> ModelParams:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint {header.get('format')!r}")
        layers = [LayerSpec(w, a) for w, a in header["layers"]]
        dims = [header["input_dim"]] + [ls.width for ls in layers]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            W = np.array([float(v) for v in fh.readline().split()])
            b = np.array([float(v) for v in fh.readline().split()])
            weights.append(W.reshape(fan_in, fan_out))
            biases.append(b)
    return ModelParams(arch=header["arch"], cell_index=header["cell_index"],
                       layers=layers, weights=weights, biases=biases,
                       x_mean=np.array(header["x_mean"]),
                       x_std=np.array(header["x_std"]),
                       power_scale=header["power_scale"],
                       config_hash=header.get("config_hash", ""))


class PowerRegressor(BaseEstimator, RegressorMixin):
    """Estimator-style wrapper around one cell's power model.

    fit(X, y) expects X as (n, 2KL) raw positions in meters and y as (n, K)
    mW powers; a validation split is carved from the tail of a seeded
    shuffle unless (X_val, y_val) are passed explicitly. predict returns
    clamped powers in mW.
    """

    def __init__(self, arch: str = "m1", cell_index: int = 0,
                 p_max: float = 500.0, learning_rate: float = 1e-3,
                 batch_size: int = 128, max_epochs: int = 400,
                 patience: int = 10, val_fraction: float = 0.1,
                 seed: int = 0):
        self.arch = arch
        self.cell_index = cell_index
        self.p_max = p_max
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.seed = seed

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_array(X, dtype=float)
        y = check_array(y, dtype=float)
        if X_val is None:
            n_val = max(1, int(round(self.val_fraction * len(X))))
            perm = spawn_rng(self.seed, "valsplit").permutation(len(X))
            X, X_val = X[perm[n_val:]], X[perm[:n_val]]
            y, y_val = y[perm[n_val:]], y[perm[:n_val]]
        else:
            X_val = check_array(X_val, dtype=float)
            y_val = check_array(y_val, dtype=float)
        stats = NormalizationStats(mean=X.mean(axis=0),
                                   std=np.maximum(X.std(axis=0), 1e-6),
                                   power_scale=self.p_max)
        K = y.shape[1]
        L = X.shape[1] // (2 * K)
        config = NetworkConfig(L=L, K=K, p_max=self.p_max)
        tc = TrainConfig(learning_rate=self.learning_rate,
                         batch_size=self.batch_size,
                         max_epochs=self.max_epochs,
                         patience=self.patience, seed=self.seed)
        init = build_arch(self.arch, config, stats, self.cell_index, self.seed)
        self.params_, self.history_ = train(init, X, y, X_val, y_val, tc)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        return predict_powers(self.params_, X)
