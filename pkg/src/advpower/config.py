"""Network-level constants and seed bookkeeping shared by every pipeline stage."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, asdict

import numpy as np


@dataclass(frozen=True)
class NetworkConfig:
    """Physical and system constants of the multicell downlink.

    All powers are linear milliwatts; distances are meters. The layout is a
    square grid of `sqrt(L)` x `sqrt(L)` cells with one BS at each cell
    center and wrap-around distances on the resulting torus.
    """

    L: int = 4                      # cells (must be a perfect square)
    K: int = 5                      # single-antenna UEs per cell
    M: int = 32                     # BS antennas
    p_max: float = 500.0            # per-cell downlink power budget (mW)
    noise_var: float = 10 ** (-94 / 10)  # sigma^2, linear mW (-94 dBm)
    cell_side: float = 250.0        # meters
    min_bs_distance: float = 35.0   # UE exclusion radius around the BS (m)
    pathloss_ref_db: float = 35.3   # loss at 1 m (dB)
    pathloss_exponent: float = 3.76
    pilot_power: float = 100.0      # uplink pilot power (mW)
    mc_realizations: int = 100      # Monte-Carlo channel draws per snapshot
    bandwidth: float = 20e6         # Hz, metadata only

    def __post_init__(self):
        g = math.isqrt(self.L)
        if g * g != self.L or g < 1:
            raise ValueError(f"L={self.L} is not a perfect square")
        if self.K < 1 or self.M < 1:
            raise ValueError("K and M must be >= 1")
        if self.p_max <= 0 or self.noise_var <= 0:
            raise ValueError("p_max and noise_var must be positive")
        if not 0 < self.min_bs_distance < self.cell_side / 2:
            raise ValueError("min_bs_distance must lie in (0, cell_side/2)")

    @property
    def grid_side(self) -> int:
        """Number of cells along one edge of the square grid."""
        return math.isqrt(self.L)

    @property
    def global_side(self) -> float:
        """Side length of the wrap-around torus (m)."""
        return self.grid_side * self.cell_side

    @property
    def n_pilots(self) -> int:
        # full pilot reuse: UE k of every cell shares pilot k
        return self.K

    @property
    def input_dim(self) -> int:
        """Flattened UE-position vector length, 2*K*L."""
        return 2 * self.K * self.L

    def bs_positions(self) -> np.ndarray:
        """(L, 2) BS coordinates, one per cell center, row-major over the grid."""
        g = self.grid_side
        pos = np.empty((self.L, 2))
        for l in range(self.L):
            row, col = divmod(l, g)
            pos[l] = ((col + 0.5) * self.cell_side, (row + 0.5) * self.cell_side)
        return pos

    def cell_origin(self, l: int) -> np.ndarray:
        """Lower-left corner of cell l in the global frame."""
        row, col = divmod(l, self.grid_side)
        return np.array([col * self.cell_side, row * self.cell_side])

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """Stable digest of all constants, used for artifact provenance."""
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _label_entropy(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(label).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def subseed(root_seed: int, *labels) -> np.random.SeedSequence:
    """Derive an independent, reproducible seed from a root seed and labels.

    Labels may be strings (stage names) or integers (sample ids); the same
    (root_seed, labels) always yields the same stream regardless of how many
    other streams were drawn, which keeps parallel generation
    schedule-independent.
    """
    return np.random.SeedSequence([root_seed & 0xFFFFFFFFFFFFFFFF]
                                  + [_label_entropy(lb) for lb in labels])


def spawn_rng(root_seed: int, *labels) -> np.random.Generator:
    """Generator seeded by `subseed(root_seed, *labels)`."""
    return np.random.Generator(np.random.PCG64(subseed(root_seed, *labels)))
