"""Cell layout, UE drops, and wrap-around (torus) distance computations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig, spawn_rng


def _round9(x: np.ndarray) -> np.ndarray:
    """Snap coordinates to 9 significant digits (the dataset file precision).

    Doing this at drop time makes every downstream quantity an exact
    function of what the record file stores, so save/load round-trips are
    lossless.
    """
    return np.array([[float(f"{v:.9g}") for v in row] for row in np.atleast_2d(x)])


@dataclass(frozen=True)
class UEDrop:
    """One snapshot of UE positions.

    positions: (L, K, 2) meters in the global frame, positions[l, k] is UE k
    of cell l. Each UE lies inside its home cell and at least
    `min_bs_distance` (wrapped) from its home BS.
    """

    positions: np.ndarray
    seed: int

    def flatten(self) -> np.ndarray:
        """Model input ordering: [cell0 ue0 x, y, cell0 ue1 x, y, ...]."""
        return self.positions.reshape(-1)


def wrapped_distance(p: np.ndarray, q: np.ndarray, config: NetworkConfig) -> float:
    """Minimal-image distance between p and q on the global torus."""
    side = config.global_side
    d = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
    d = np.minimum(d, side - d)
    return float(np.sqrt(np.sum(d * d, axis=-1)))


def drop_ues(config: NetworkConfig, seed: int) -> UEDrop:
    """Drop K UEs uniformly in each cell, outside the BS exclusion disc.

    Rejection sampling per UE; deterministic for a fixed (config, seed).
    """
    rng = spawn_rng(seed, "ue-drop")
    bs = config.bs_positions()
    positions = np.empty((config.L, config.K, 2))
    for l in range(config.L):
        origin = config.cell_origin(l)
        for k in range(config.K):
            while True:
                cand = origin + rng.uniform(0.0, config.cell_side, size=2)
                cand = _round9(cand)[0]
                inside = np.all(cand >= origin) and np.all(cand < origin + config.cell_side)
                if inside and wrapped_distance(cand, bs[l], config) >= config.min_bs_distance:
                    positions[l, k] = cand
                    break
    return UEDrop(positions=positions, seed=seed)


def local_coordinates(drop: UEDrop, bs_index: int, config: NetworkConfig) -> np.ndarray:
    """UE position vectors in the frame of BS `bs_index`, minimal image.

    Returns (L, K, 2); the norm of each vector equals the wrapped distance
    between the UE and that BS.
    """
    if not 0 <= bs_index < config.L:
        raise ValueError(f"bs_index {bs_index} out of range for L={config.L}")
    side = config.global_side
    delta = drop.positions - config.bs_positions()[bs_index]
    # shift each component into (-side/2, side/2]
    delta = delta - side * np.round(delta / side)
    return delta


def bs_ue_distances(drop: UEDrop, config: NetworkConfig) -> np.ndarray:
    """(L_bs, L_cell, K) wrapped distances from every BS to every UE."""
    out = np.empty((config.L, config.L, config.K))
    for j in range(config.L):
        local = local_coordinates(drop, j, config)
        out[j] = np.sqrt(np.sum(local * local, axis=-1))
    return out
