"""Gradient-based attacks on the position inputs of a trained power model.

All attacks maximize the feasibility-violating loss L(x) = sum of the
model's first K raw outputs (mW, never clamped) and are constrained to an
L-infinity ball of radius epsilon meters around the clean positions. The
random-sign baseline displaces every coordinate by exactly +-epsilon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import spawn_rng
from .network import ModelParams, forward, input_gradient

FGSM = "fgsm"
PGDM = "pgdm"
MIFGSM = "mifgsm"
RANDOM = "random"
ATTACK_KINDS = (FGSM, PGDM, MIFGSM, RANDOM)

EPSILON_CAP = 0.5   # meters; larger budgets leave the threat model


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    epsilon: float                 # meters, L-infinity budget
    alpha: float = 0.01            # meters, iterative step
    q: int = 40                    # clipped-iteration count
    mu: float = 0.1                # momentum decay
    iters: int = 10                # momentum-attack iterations
    beta: float | None = None      # momentum step; defaults to epsilon/iters

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not 0 <= self.epsilon < EPSILON_CAP:
            raise ValueError(f"epsilon must lie in [0, {EPSILON_CAP})")
        if self.alpha <= 0 or self.q < 1 or self.iters < 1 or self.mu < 0:
            raise ValueError("invalid iterative-attack constants")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive when given")

    @property
    def step_beta(self) -> float:
        return self.epsilon / self.iters if self.beta is None else self.beta

    @property
    def d_epsilon(self) -> float:
        """Worst-case positional displacement in meters, sqrt(2) * epsilon."""
        return float(np.sqrt(2.0) * self.epsilon)


@dataclass
class AttackReport:
    kind: str
    epsilon: float
    d_epsilon: float               # meters
    model_id: str
    n: int                         # test samples per cell
    infeasible: list[int] = field(default_factory=list)   # per cell
    rates: list[float] = field(default_factory=list)      # per cell

    @property
    def aggregate_rate(self) -> float:
        return sum(self.infeasible) / (len(self.infeasible) * self.n)

    def csv_rows(self) -> list[str]:
        """Per-cell rows plus the aggregate row, CSV-formatted."""
        rows = []
        cm = self.d_epsilon * 100.0
        for j, (cnt, rate) in enumerate(zip(self.infeasible, self.rates)):
            rows.append(f"{j},{self.kind},{self.epsilon:g},{cm:.6g},"
                        f"{self.n},{cnt},{rate:.6f}")
        rows.append(f"all,{self.kind},{self.epsilon:g},{cm:.6g},"
                    f"{len(self.infeasible) * self.n},{sum(self.infeasible)},"
                    f"{self.aggregate_rate:.6f}")
        return rows


def attack_loss(model: ModelParams, X: np.ndarray) -> np.ndarray:
    """Sum of the first K raw outputs in mW, per sample. Strictly above
    Pmax means the prediction is unrealizable."""
    out = forward(model, X)
    return out[..., :-1].sum(axis=-1)


def _sign(g: np.ndarray) -> np.ndarray:
    # np.sign already maps 0 -> 0, keeping the epsilon -> 0 limit exact
    return np.sign(g)


def fgsm(model: ModelParams, X: np.ndarray, epsilon: float) -> np.ndarray:
    """Single step of size epsilon along the gradient sign."""
    return X + epsilon * _sign(input_gradient(model, X))


def pgdm(model: ModelParams, X: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    """cfg.q clipped gradient-sign steps of size cfg.alpha from the clean
    point (no random start); every iterate stays inside the epsilon ball."""
    X = np.asarray(X, dtype=float)
    lo, hi = X - cfg.epsilon, X + cfg.epsilon
    x = X.copy()
    for _ in range(cfg.q):
        x = np.clip(x + cfg.alpha * _sign(input_gradient(model, x)), lo, hi)
        assert np.max(np.abs(x - X)) <= cfg.epsilon + 1e-12
    return x


def mifgsm(model: ModelParams, X: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    """cfg.iters momentum steps of size cfg.step_beta, accumulating the
    L1-normalized gradient with decay cfg.mu; no per-step clipping. The
    budget holds because step_beta * iters <= epsilon."""
    if cfg.step_beta * cfg.iters > cfg.epsilon + 1e-12:
        raise ValueError("beta * iters exceeds the epsilon budget")
    X = np.asarray(X, dtype=float)
    x = X.copy()
    g = np.zeros_like(x)
    for _ in range(cfg.iters):
        grad = input_gradient(model, x)
        l1 = np.abs(grad).sum(axis=-1, keepdims=True)
        g = cfg.mu * g + np.divide(grad, l1, out=np.zeros_like(grad),
                                   where=l1 > 0)
        x = x + cfg.step_beta * _sign(g)
    return x


def random_perturb(X: np.ndarray, epsilon: float, seed: int) -> np.ndarray:
    """Every coordinate displaced by exactly +-epsilon, sign taken from a
    standard normal draw (equal probability per sign)."""
    X = np.asarray(X, dtype=float)
    w = spawn_rng(seed, "random-perturb").standard_normal(X.shape)
    return X + epsilon * np.where(w >= 0, 1.0, -1.0)


def craft(model: ModelParams, X: np.ndarray, cfg: AttackConfig,
          seed: int = 0) -> np.ndarray:
    """Dispatch one attack; `seed` only affects the random baseline."""
    if cfg.kind == FGSM:
        return fgsm(model, X, cfg.epsilon)
    if cfg.kind == PGDM:
        return pgdm(model, X, cfg)
    if cfg.kind == MIFGSM:
        return mifgsm(model, X, cfg)
    return random_perturb(X, cfg.epsilon, seed)


def count_infeasible(model: ModelParams, X: np.ndarray,
                     p_max: float) -> int:
    """Samples whose raw predicted powers sum strictly above the budget."""
    return int(np.sum(attack_loss(model, X) > p_max))


def evaluate_attack(models: list[ModelParams], X_test: np.ndarray,
                    cfg: AttackConfig, p_max: float, seed: int = 0,
                    model_id: str = "") -> AttackReport:
    """Attack each cell's model on the full test matrix and count
    feasibility violations; aggregate rate normalizes by L * N2."""
    n = len(X_test)
    report = AttackReport(kind=cfg.kind, epsilon=cfg.epsilon,
                          d_epsilon=cfg.d_epsilon, model_id=model_id, n=n)
    for j, model in enumerate(models):
        x_adv = craft(model, X_test, cfg, seed=seed + j)
        cnt = count_infeasible(model, x_adv, p_max)
        report.infeasible.append(cnt)
        report.rates.append(cnt / n)
    return report
