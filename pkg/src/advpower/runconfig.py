"""Run configuration: one JSON file drives every CLI stage.

The file mirrors the constructor surfaces of NetworkConfig, TrainConfig,
AttackConfig, and SEConfig plus dataset sizing and the root seed. Unknown
keys anywhere are rejected so typos cannot silently fall back to defaults.
Every command writes the fully resolved configuration (defaults filled in,
code-version hash attached) next to its outputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .attacks import AttackConfig
from .config import NetworkConfig
from .evalreport import SEConfig, default_se_config
from .network import TrainConfig

DATASET_KEYS = ("n_train", "n_val", "n_test", "precoder")
ATTACK_KEYS = ("alpha", "q", "mu", "iters", "beta")
TOP_LEVEL_KEYS = ("network", "train", "attack", "se", "dataset", "seed")


@dataclass(frozen=True)
class DatasetConfig:
    n_train: int = 5000
    n_val: int = 500
    n_test: int = 500
    precoder: str = "mr"

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("split sizes must be positive")
        if self.precoder not in ("mr", "mmse"):
            raise ValueError(f"unknown precoder {self.precoder!r}")

    @property
    def n_total(self) -> int:
        return self.n_train + self.n_val + self.n_test

    @property
    def fractions(self) -> tuple[float, float, float]:
        n = self.n_total
        return (self.n_train / n, self.n_val / n, self.n_test / n)


@dataclass(frozen=True)
class RunConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    se: SEConfig | None = None      # None -> default_se_config(network)
    attack_overrides: dict = field(default_factory=dict)
    seed: int = 0
    # whether the file pinned train.seed itself; when False the training
    # seed tracks the root seed, including --seed overrides
    train_seed_explicit: bool = False

    def with_root_seed(self, seed: int) -> "RunConfig":
        rc = dataclasses.replace(self, seed=seed)
        if not self.train_seed_explicit:
            rc = dataclasses.replace(
                rc, train=dataclasses.replace(rc.train, seed=seed))
        return rc

    def se_config(self) -> SEConfig:
        return self.se if self.se is not None else default_se_config(self.network)

    def attack_config(self, kind: str, epsilon: float) -> AttackConfig:
        return AttackConfig(kind=kind, epsilon=epsilon, **self.attack_overrides)

    def resolved(self) -> dict:
        """Full configuration with every default made explicit."""
        return {
            "network": self.network.to_dict(),
            "train": dataclasses.asdict(self.train),
            "dataset": dataclasses.asdict(self.dataset),
            "se": dataclasses.asdict(self.se_config()),
            "attack": dict(self.attack_overrides),
            "seed": self.seed,
        }


def _check_keys(section: dict, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _build(cls, section: dict, where: str):
    allowed = [f.name for f in dataclasses.fields(cls)]
    _check_keys(section, allowed, where)
    return cls(**section)


def parse_runconfig(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ValueError("run config must be a JSON object")
    _check_keys(raw, TOP_LEVEL_KEYS, "run config")
    attack = dict(raw.get("attack", {}))
    _check_keys(attack, ATTACK_KEYS, "attack")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ValueError("seed must be an integer")
    se = None
    if "se" in raw:
        se = _build(SEConfig, raw["se"], "se")
    train_raw = raw.get("train", {})
    train = _build(TrainConfig, train_raw, "train")
    explicit = "seed" in train_raw
    if not explicit:
        train = dataclasses.replace(train, seed=seed)
    return RunConfig(
        network=_build(NetworkConfig, raw.get("network", {}), "network"),
        train=train,
        dataset=_build(DatasetConfig, raw.get("dataset", {}), "dataset"),
        se=se,
        attack_overrides=attack,
        seed=seed,
        train_seed_explicit=explicit,
    )


def load_runconfig(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: not valid JSON ({e})") from None
    return parse_runconfig(raw)


def code_version() -> str:
    """Digest of the installed package sources; stable for identical trees."""
    root = Path(__file__).parent
    h = hashlib.sha256()
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def write_resolved(rc: RunConfig, out_dir, extra: dict | None = None) -> Path:
    """Emit the resolved config (plus provenance) into an output directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = rc.resolved()
    doc["code_version"] = code_version()
    doc.update(extra or {})
    path = out_dir / "resolved_config.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
