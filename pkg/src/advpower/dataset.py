"""Supervised dataset: UE positions -> per-cell max-product powers.

One dataset serves all L per-cell models: the input row is the full global
position vector (2KL reals) and the label block holds every cell's optimal
powers. Records are line-delimited text so files diff cleanly; positions are
written with 9 significant digits (they are quantized to that grid at drop
time) and powers with 17, so load(save(d)) round-trips bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import PRECODERS, estimate_gains
from .config import NetworkConfig, spawn_rng
from .geometry import drop_ues
from .powalloc import maxprod_solve

logger = logging.getLogger(__name__)

FORMAT_VERSION = "advpower.dataset.v1"
# lower-bound fraction of samples that may be regenerated after solver failure
MAX_REGEN_RATE = 0.01


@dataclass
class Sample:
    id: int
    positions: np.ndarray          # (L, K, 2) meters, global frame
    powers: np.ndarray             # (L, K) mW
    sum_powers: np.ndarray         # (L,) mW

    def flat_positions(self) -> np.ndarray:
        """[cell0 ue0 x, y, cell0 ue1 x, y, ...] of length 2KL."""
        return self.positions.reshape(-1)


@dataclass
class NormalizationStats:
    mean: np.ndarray               # (2KL,) meters
    std: np.ndarray                # (2KL,) meters, floored at 1e-6
    power_scale: float             # mW, equals Pmax

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.mean.tobytes())
        h.update(self.std.tobytes())
        h.update(np.float64(self.power_scale).tobytes())
        return h.hexdigest()[:16]


@dataclass
class PowerDataset:
    config: NetworkConfig
    precoder: str
    root_seed: int
    samples: list[Sample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def positions_matrix(self) -> np.ndarray:
        """(n, 2KL) input matrix."""
        return np.array([s.flat_positions() for s in self.samples])

    def powers_tensor(self) -> np.ndarray:
        """(n, L, K) label tensor."""
        return np.array([s.powers for s in self.samples])

    def cell_targets(self, cell_index: int) -> np.ndarray:
        """(n, K) power labels of one cell."""
        return np.array([s.powers[cell_index] for s in self.samples])

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.config.config_hash().encode())
        h.update(f"{self.precoder}:{self.root_seed}:{len(self)}".encode())
        for s in self.samples:
            h.update(np.int64(s.id).tobytes())
            h.update(s.positions.tobytes())
            h.update(s.powers.tobytes())
        return h.hexdigest()[:16]


def sample_seed(root_seed: int, sample_id: int, attempt: int = 0) -> int:
    """Stable per-sample integer seed; fresh value per regeneration attempt."""
    material = f"{root_seed}:{sample_id}:{attempt}".encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def generate_dataset(config: NetworkConfig, n: int, kind: str,
                     seed: int) -> PowerDataset:
    """Drop UEs, estimate gains, solve the allocation; n labeled samples.

    A sample whose solve fails (non-convergence or degenerate gains) is
    regenerated under a fresh sub-seed; more than MAX_REGEN_RATE of such
    events aborts generation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind not in PRECODERS:
        raise ValueError(f"unknown precoder {kind!r}")
    ds = PowerDataset(config=config, precoder=kind, root_seed=seed)
    regens = 0
    budget = max(1, int(MAX_REGEN_RATE * n))
    for sid in range(n):
        for attempt in range(budget + 2):
            s = sample_seed(seed, sid, attempt)
            drop = drop_ues(config, s)
            try:
                gains = estimate_gains(drop, kind, config, s)
                alloc = maxprod_solve(gains, config)
                ok = alloc.converged and np.all(np.isfinite(alloc.rho))
            except (ValueError, FloatingPointError) as exc:
                logger.warning("sample %d attempt %d failed: %s", sid, attempt, exc)
                ok = False
            if ok:
                break
            regens += 1
            if regens > budget:
                raise RuntimeError(
                    f"regeneration rate exceeded {MAX_REGEN_RATE:.0%} "
                    f"({regens} failures in {sid + 1} samples)")
        ds.samples.append(Sample(
            id=sid,
            positions=drop.positions,
            powers=alloc.rho,
            sum_powers=alloc.rho.sum(axis=1),
        ))
    return ds


def split(dataset: PowerDataset, fractions: tuple[float, float, float],
          seed: int) -> tuple[PowerDataset, PowerDataset, PowerDataset]:
    """Deterministic shuffle-split into (train, val, test).

    Counts are rounded from the fractions with the remainder assigned to
    train; a strictly positive fraction that rounds to zero samples is an
    error, as is an empty dataset.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    if any(f < 0 for f in fractions):
        raise ValueError("fractions must be nonnegative")
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    n_val = int(round(fractions[1] * n))
    n_test = int(round(fractions[2] * n))
    n_train = n - n_val - n_test
    for frac, count, name in zip(fractions, (n_train, n_val, n_test),
                                 ("train", "val", "test")):
        if frac > 0 and count == 0:
            raise ValueError(f"{name} split is empty at fraction {frac}")
    perm = spawn_rng(seed, "split").permutation(n)
    bounds = (n_train, n_train + n_val)
    parts = (perm[:bounds[0]], perm[bounds[0]:bounds[1]], perm[bounds[1]:])
    out = []
    for idx in parts:
        sub = PowerDataset(config=dataset.config, precoder=dataset.precoder,
                           root_seed=dataset.root_seed)
        sub.samples = [dataset.samples[i] for i in sorted(idx)]
        out.append(sub)
    return tuple(out)


def normalization_stats(train: PowerDataset) -> NormalizationStats:
    """Per-coordinate mean/std over the train split only (population std,
    floored at 1e-6); power scale is the budget Pmax."""
    if len(train) == 0:
        raise ValueError("train split is empty")
    X = train.positions_matrix()
    return NormalizationStats(
        mean=X.mean(axis=0),
        std=np.maximum(X.std(axis=0), 1e-6),
        power_scale=train.config.p_max,
    )


def _header_line(ds: PowerDataset) -> str:
    c = ds.config
    return (f"format={FORMAT_VERSION},config={c.config_hash()},"
            f"L={c.L},K={c.K},M={c.M},Pmax={c.p_max:g}")


def save_dataset(ds: PowerDataset, path) -> None:
    """Header line, then one comma-separated record per sample:
    id, 2KL positions (%.9g), L*K powers (%.17g), L sums (%.17g).
    A sidecar JSON (path + '.meta.json') carries the full config."""
    lines = [_header_line(ds)]
    for s in ds.samples:
        fields = ([str(s.id)]
                  + [f"{v:.9g}" for v in s.flat_positions()]
                  + [f"{v:.17g}" for v in s.powers.reshape(-1)]
                  + [f"{v:.17g}" for v in s.sum_powers])
        lines.append(",".join(fields))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {
        "format": FORMAT_VERSION,
        "config": ds.config.to_dict(),
        "config_hash": ds.config.config_hash(),
        "precoder": ds.precoder,
        "root_seed": ds.root_seed,
        "n": len(ds),
    }
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> PowerDataset:
    with open(str(path) + ".meta.json") as fh:
        meta = json.load(fh)
    if meta.get("format") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format {meta.get('format')!r}")
    config = NetworkConfig(**meta["config"])
    with open(path) as fh:
        header = fh.readline().strip()
        if header != _header_line(PowerDataset(config, meta["precoder"],
                                               meta["root_seed"])):
            raise ValueError("dataset header does not match sidecar metadata")
        ds = PowerDataset(config=config, precoder=meta["precoder"],
                          root_seed=meta["root_seed"])
        L, K = config.L, config.K
        for line in fh:
            vals = line.strip().split(",")
            if len(vals) != 1 + 2 * K * L + L * K + L:
                raise ValueError("malformed dataset record")
            pos = np.array([float(v) for v in vals[1:1 + 2 * K * L]])
            pows = np.array([float(v) for v in vals[1 + 2 * K * L:
                                                    1 + 2 * K * L + L * K]])
            sums = np.array([float(v) for v in vals[1 + 2 * K * L + L * K:]])
            ds.samples.append(Sample(
                id=int(vals[0]),
                positions=pos.reshape(L, K, 2),
                powers=pows.reshape(L, K),
                sum_powers=sums,
            ))
    if len(ds) != meta["n"]:
        raise ValueError("dataset record count does not match sidecar metadata")
    return ds
