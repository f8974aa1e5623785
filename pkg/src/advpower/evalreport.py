"""Spectral-efficiency evaluation, black-box transfer harness, and report
emission (CSV tables and CDF point files for external plotting)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import (AttackConfig, AttackReport, count_infeasible, craft,
                      evaluate_attack)
from .channel import GainTable, estimate_gains, sinr
from .config import NetworkConfig
from .dataset import PowerDataset, sample_seed
from .defense import rescale_powers
from .geometry import UEDrop, drop_ues
from .network import ModelParams, predict_powers

ATTACK_CSV_HEADER = "cell,attack,epsilon,d_eps_cm,n,infeasible,rate"
TRANSFER_CSV_HEADER = ("surrogate,victim,cell,attack,epsilon,d_eps_cm,"
                       "n,infeasible,rate")
CDF_CSV_HEADER = "sum_se_bps_hz,cdf"

POWER_SOURCES = ("truth", "clean-dnn", "attacked-dnn", "attacked+rescale",
                 "advtrained+rescale")


@dataclass(frozen=True)
class SEConfig:
    tau_c: int = 200               # coherence block length (samples)
    tau_d: int = 185               # downlink data samples per block

    def __post_init__(self):
        if not 0 < self.tau_d <= self.tau_c:
            raise ValueError("require 0 < tau_d <= tau_c")


def default_se_config(config: NetworkConfig) -> SEConfig:
    """tau_c = 200 with tau_p pilots and a 190-sample data budget."""
    return SEConfig(tau_c=200, tau_d=190 - config.n_pilots)


def spectral_efficiency(gamma: np.ndarray, se_cfg: SEConfig) -> np.ndarray:
    """(tau_d / tau_c) * log2(1 + gamma), bit/s/Hz."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SINR must be nonnegative")
    return (se_cfg.tau_d / se_cfg.tau_c) * np.log2(1.0 + gamma)


@dataclass
class CdfCurve:
    values: np.ndarray             # sorted sum-SE points, bit/s/Hz
    cdf: np.ndarray                # empirical probabilities, ends at 1

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.values, q))

    def csv_lines(self) -> list[str]:
        return [f"{v:.10g},{c:.6f}" for v, c in zip(self.values, self.cdf)]


def empirical_cdf(values: np.ndarray) -> CdfCurve:
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        raise ValueError("cannot build a CDF from zero samples")
    return CdfCurve(values=values,
                    cdf=np.arange(1, values.size + 1) / values.size)


MAX_SEED_RECOVERY_ATTEMPTS = 64


def recover_sample_seed(dataset: PowerDataset, sample) -> int:
    """Generation-time seed of a stored sample, found by replaying the drop
    at successive attempt numbers until the positions match bit-exactly.
    Needed because the dataset file keeps neither the seed nor the attempt."""
    for attempt in range(MAX_SEED_RECOVERY_ATTEMPTS):
        seed = sample_seed(dataset.root_seed, sample.id, attempt)
        drop = drop_ues(dataset.config, seed)
        if np.array_equal(drop.positions, sample.positions):
            return seed
    raise ValueError(f"sample {sample.id}: no generating seed found in "
                     f"{MAX_SEED_RECOVERY_ATTEMPTS} attempts")


def recover_gain_tables(test: PowerDataset) -> list[GainTable]:
    """Per-sample gain tables recomputed exactly as the label solver saw
    them, using each sample's recovered generation seed."""
    tables = []
    for s in test.samples:
        seed = recover_sample_seed(test, s)
        drop = UEDrop(positions=s.positions, seed=seed)
        tables.append(estimate_gains(drop, test.precoder, test.config, seed))
    return tables


def build_power_sources(test: PowerDataset, models_std: list[ModelParams],
                        models_adv: list[ModelParams], cfg: AttackConfig,
                        seed: int = 0) -> dict[str, np.ndarray]:
    """(n, L, K) mW allocations per evaluation source.

    Attacked sources craft the attack per cell against the model that
    serves that cell (standard models for 'attacked-*', adversarially
    trained ones for 'advtrained+rescale'); the rescaled sources apply the
    ground-truth per-cell sums. Clamping to 0 happens in predict_powers.
    """
    X = test.positions_matrix()
    truth = test.powers_tensor()
    n, L = len(test), test.config.L
    out = {"truth": truth,
           "clean-dnn": np.empty_like(truth),
           "attacked-dnn": np.empty_like(truth),
           "attacked+rescale": np.empty_like(truth),
           "advtrained+rescale": np.empty_like(truth)}
    for j in range(L):
        sums_j = truth[:, j].sum(axis=1)
        out["clean-dnn"][:, j] = predict_powers(models_std[j], X)
        x_adv = craft(models_std[j], X, cfg, seed=seed + j)
        attacked = predict_powers(models_std[j], x_adv)
        out["attacked-dnn"][:, j] = attacked
        out["attacked+rescale"][:, j] = rescale_powers(attacked, sums_j)
        x_adv2 = craft(models_adv[j], X, cfg, seed=seed + j)
        out["advtrained+rescale"][:, j] = rescale_powers(
            predict_powers(models_adv[j], x_adv2), sums_j)
    return out


def sum_se_cdf(gains: list[GainTable], sources: dict[str, np.ndarray],
               se_cfg: SEConfig, config: NetworkConfig) -> dict[str, CdfCurve]:
    """Empirical CDF of the network sum SE (over all L*K UEs) per source."""
    curves = {}
    for name, powers in sources.items():
        if len(powers) != len(gains):
            raise ValueError(f"source {name!r} sample count mismatch")
        totals = np.array([
            spectral_efficiency(sinr(g, p, config), se_cfg).sum()
            for g, p in zip(gains, powers)])
        curves[name] = empirical_cdf(totals)
    return curves


@dataclass
class TransferReport:
    surrogate_id: str
    victim_id: str
    kind: str
    epsilon: float
    d_epsilon: float
    n: int
    infeasible: list[int] = field(default_factory=list)
    rates: list[float] = field(default_factory=list)
    whitebox: AttackReport | None = None

    @property
    def aggregate_rate(self) -> float:
        return sum(self.infeasible) / (len(self.infeasible) * self.n)

    def csv_rows(self) -> list[str]:
        rows = []
        cm = self.d_epsilon * 100.0
        pre = f"{self.surrogate_id},{self.victim_id}"
        for j, (cnt, rate) in enumerate(zip(self.infeasible, self.rates)):
            rows.append(f"{pre},{j},{self.kind},{self.epsilon:g},{cm:.6g},"
                        f"{self.n},{cnt},{rate:.6f}")
        rows.append(f"{pre},all,{self.kind},{self.epsilon:g},{cm:.6g},"
                    f"{len(self.infeasible) * self.n},{sum(self.infeasible)},"
                    f"{self.aggregate_rate:.6f}")
        return rows


def transfer_eval(surrogates: list[ModelParams], victims: list[ModelParams],
                  cfg: AttackConfig, X_test: np.ndarray, p_max: float,
                  seed: int = 0, surrogate_id: str = "surrogate",
                  victim_id: str = "victim") -> TransferReport:
    """Craft white-box examples on the surrogate of each cell, count
    feasibility violations on the victim of the same cell, and attach the
    matched white-box report on the victims for comparison."""
    if len(surrogates) != len(victims):
        raise ValueError("surrogate and victim lists differ in length")
    n = len(X_test)
    report = TransferReport(surrogate_id=surrogate_id, victim_id=victim_id,
                            kind=cfg.kind, epsilon=cfg.epsilon,
                            d_epsilon=cfg.d_epsilon, n=n)
    for j, (surr, vict) in enumerate(zip(surrogates, victims)):
        x_adv = craft(surr, X_test, cfg, seed=seed + j)
        cnt = count_infeasible(vict, x_adv, p_max)
        report.infeasible.append(cnt)
        report.rates.append(cnt / n)
    report.whitebox = evaluate_attack(victims, X_test, cfg, p_max,
                                      seed=seed, model_id=victim_id)
    return report


def emit_report(out_dir, attack_reports: list[AttackReport] = (),
                transfer_reports: list[TransferReport] = (),
                cdf_curves: dict[str, CdfCurve] | None = None,
                metadata: dict | None = None) -> list[Path]:
    """Write attacks.csv / transfers.csv / cdf_<source>.csv plus a metadata
    JSON; deterministic content and ordering. Returns written paths."""
    if not attack_reports and not transfer_reports and not cdf_curves:
        raise ValueError("nothing to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if attack_reports:
        path = out_dir / "attacks.csv"
        lines = [ATTACK_CSV_HEADER]
        for rep in attack_reports:
            lines.extend(rep.csv_rows())
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    if transfer_reports:
        path = out_dir / "transfers.csv"
        lines = [TRANSFER_CSV_HEADER]
        for rep in transfer_reports:
            lines.extend(rep.csv_rows())
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    for name, curve in (cdf_curves or {}).items():
        safe = name.replace("+", "_").replace("-", "_")
        path = out_dir / f"cdf_{safe}.csv"
        path.write_text("\n".join([CDF_CSV_HEADER] + curve.csv_lines()) + "\n")
        written.append(path)
    if metadata is not None:
        path = out_dir / "report_meta.json"
        path.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written
