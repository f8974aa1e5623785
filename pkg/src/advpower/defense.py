"""Defenses: output rescaling and adversarial training.

Adversarial training follows a five-step recipe: train standard models,
generate one PGDM example per training record against them (static, not
per-epoch), pair those examples with the clean optimal powers, retrain with
validation-based early stopping on an adversarially perturbed validation
split, then evaluate. Rescaling divides out the predicted sum and applies
the known feasible ground-truth sum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .attacks import PGDM, AttackConfig, pgdm
from .config import NetworkConfig
from .dataset import NormalizationStats
from .network import ModelParams, TrainConfig, TrainHistory, build_arch, train


def rescale_powers(pred: np.ndarray, truth_sum, *,
                   return_fallback: bool = False):
    """Scale predicted powers so they sum to the ground-truth sum.

    Accepts one prediction (K,) with a scalar sum or a batch (n, K) with
    (n,) sums. Negative entries are clamped to zero first so proportions
    are physical; an all-zero prediction falls back to an equal split and
    is flagged in the optional fallback mask.
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    sums = np.atleast_1d(np.asarray(truth_sum, dtype=float))
    if np.any(sums < 0):
        raise ValueError("truth sums must be nonnegative")
    clamped = np.maximum(pred, 0.0)
    total = clamped.sum(axis=1)
    fallback = total == 0.0
    safe = np.where(fallback, 1.0, total)
    out = clamped * (sums / safe)[:, None]
    if np.any(fallback):
        out[fallback] = (sums[fallback] / pred.shape[1])[:, None]
    if np.ndim(truth_sum) == 0 and out.shape[0] == 1:
        out, fallback = out[0], bool(fallback[0])
    if return_fallback:
        return out, fallback
    return out


@dataclass
class AdvDataset:
    """Per-cell adversarial inputs paired with the clean optimal powers."""

    x_adv: np.ndarray              # (L, n, 2KL) meters
    targets: np.ndarray            # (L, n, K) mW
    x_clean: np.ndarray            # (n, 2KL) meters, shared across cells
    attack: AttackConfig
    source_hashes: list[str]       # per-cell standard-model content hashes

    def __post_init__(self):
        shift = np.abs(self.x_adv - self.x_clean[None]).max()
        if shift > self.attack.epsilon + 1e-12:
            raise ValueError("adversarial record violates the epsilon ball")


def generate_adv_dataset(models_std: list[ModelParams], X: np.ndarray,
                         Y_cells: np.ndarray,
                         cfg: AttackConfig) -> AdvDataset:
    """One PGDM example per record per cell against the standard models;
    targets stay the clean optimal powers (Y_cells is (n, L, K))."""
    if cfg.kind != PGDM:
        raise ValueError("adversarial datasets are generated with the "
                         "clipped iterative attack")
    X = np.asarray(X, dtype=float)
    x_adv = np.stack([pgdm(m, X, cfg) for m in models_std])
    targets = np.transpose(np.asarray(Y_cells, dtype=float), (1, 0, 2))
    return AdvDataset(x_adv=x_adv, targets=targets, x_clean=X, attack=cfg,
                      source_hashes=[m.content_hash() for m in models_std])


def adversarial_train(adv_train: AdvDataset, adv_val: AdvDataset, arch: str,
                      config: NetworkConfig, stats: NormalizationStats,
                      tc: TrainConfig
                      ) -> tuple[list[ModelParams], list[TrainHistory]]:
    """Retrain one model per cell on its adversarial records, early-stopped
    on the adversarial validation loss. Architecture and parameter count
    are unchanged from the standard models."""
    models, histories = [], []
    for j in range(config.L):
        init = build_arch(arch, config, stats, j, tc.seed)
        model, hist = train(init, adv_train.x_adv[j], adv_train.targets[j],
                            adv_val.x_adv[j], adv_val.targets[j], tc)
        models.append(model)
        histories.append(hist)
    return models, histories


def save_adv_dataset(adv: AdvDataset, path) -> None:
    """Line-delimited records `cell,id,<2KL x_adv>,<K targets>` at full float
    precision, preceded by a JSON provenance header line."""
    prov = {
        "format": "advpower.advdataset.v1",
        "epsilon": adv.attack.epsilon,
        "alpha": adv.attack.alpha,
        "q": adv.attack.q,
        "source_hashes": adv.source_hashes,
        "cells": int(adv.x_adv.shape[0]),
        "n": int(adv.x_adv.shape[1]),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(prov, sort_keys=True) + "\n")
        for j in range(adv.x_adv.shape[0]):
            for i in range(adv.x_adv.shape[1]):
                fields = ([str(j), str(i)]
                          + [f"{v:.17g}" for v in adv.x_adv[j, i]]
                          + [f"{v:.17g}" for v in adv.targets[j, i]])
                fh.write(",".join(fields) + "\n")
