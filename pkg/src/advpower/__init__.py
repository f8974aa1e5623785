"""Learned downlink power allocation in multicell massive MIMO, with
gradient-based adversarial attacks on the trained models and an
adversarial-training plus output-rescaling defense."""

from .attacks import (ATTACK_KINDS, AttackConfig, AttackReport, craft,
                      evaluate_attack)
from .channel import GainTable, estimate_gains, sinr
from .config import NetworkConfig, spawn_rng, subseed
from .dataset import (NormalizationStats, PowerDataset, generate_dataset,
                      load_dataset, normalization_stats, save_dataset, split)
from .defense import (AdvDataset, adversarial_train, generate_adv_dataset,
                      rescale_powers)
from .evalreport import (CdfCurve, SEConfig, empirical_cdf,
                         spectral_efficiency, sum_se_cdf)
from .geometry import UEDrop, drop_ues, wrapped_distance
from .network import (ModelParams, PowerRegressor, TrainConfig, build_arch,
                      forward, load_model, predict_powers, save_model, train)
from .powalloc import PowerAllocation, maxprod_bruteforce, maxprod_solve
from .runconfig import RunConfig, load_runconfig, parse_runconfig

__all__ = [
    "ATTACK_KINDS", "AdvDataset", "AttackConfig", "AttackReport", "CdfCurve",
    "GainTable", "ModelParams", "NetworkConfig", "NormalizationStats",
    "PowerAllocation", "PowerDataset", "PowerRegressor", "RunConfig",
    "SEConfig", "TrainConfig", "UEDrop", "adversarial_train", "build_arch",
    "craft", "drop_ues", "empirical_cdf", "estimate_gains",
    "evaluate_attack", "forward", "generate_adv_dataset", "generate_dataset",
    "load_dataset", "load_model", "load_runconfig", "maxprod_bruteforce",
    "maxprod_solve", "normalization_stats", "parse_runconfig",
    "predict_powers", "rescale_powers", "save_dataset", "save_model",
    "sinr", "spawn_rng", "spectral_efficiency", "split", "subseed",
    "sum_se_cdf", "train", "wrapped_distance"]
__version__ = "0.1.0"
