"""Channel statistics, realizations, MMSE estimation, precoding, and the
Monte-Carlo estimation of average channel / interference gains.

Index conventions (everything linear, dimensionless unless noted):
    beta[j, l, k]    large-scale gain between BS j and UE k of cell l
    H[r, j, l, k, :] channel draw r between BS j and UE k of cell l (M,)
    a[j, k]          average channel gain of UE k in cell j
    b[l, i, j, k]    interference gain: BS l's transmission to its UE i,
                     received by UE k of cell j; the (l,i)==(j,k) entry is
                     the beamforming-uncertainty variance term
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig, spawn_rng
from .geometry import UEDrop, bs_ue_distances

MR = "mr"
MMSE = "mmse"
PRECODERS = (MR, MMSE)


@dataclass(frozen=True)
class ChannelStats:
    """Large-scale statistics. Under the (default) uncorrelated model the
    spatial correlation matrix of each link is beta * I_M."""

    beta: np.ndarray           # (L_bs, L_cell, K), linear gains > 0
    corr_model: str = "uncorrelated"

    def __post_init__(self):
        if self.corr_model != "uncorrelated":
            raise NotImplementedError(f"correlation model {self.corr_model!r}")
        if np.any(self.beta <= 0):
            raise ValueError("large-scale gains must be strictly positive")


@dataclass(frozen=True)
class GainTable:
    """Monte-Carlo estimates of the beamformed signal and leakage gains for
    one UE drop and one precoder."""

    a: np.ndarray              # (L, K)
    b: np.ndarray              # (L, K, L, K) indexed [l, i, j, k]
    precoder: str
    n_realizations: int
    seed: int


def pathloss(d, config: NetworkConfig):
    """Linear power gain of the distance-based pathloss model.

    gain = 10 ** ((-PL0_dB - 10 * exp * log10(d / 1 m)) / 10); strictly
    decreasing in d. Distances below the BS exclusion radius are rejected
    since the model diverges as d -> 0.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < config.min_bs_distance):
        raise ValueError(f"distance below min_bs_distance={config.min_bs_distance} m")
    loss_db = config.pathloss_ref_db + 10.0 * config.pathloss_exponent * np.log10(d)
    return 10.0 ** (-loss_db / 10.0)


def channel_stats(drop: UEDrop, config: NetworkConfig) -> ChannelStats:
    """Large-scale gains of every BS-UE link via wrapped distances."""
    return ChannelStats(beta=pathloss(bs_ue_distances(drop, config), config))


def realize_channels(stats: ChannelStats, config: NetworkConfig,
                     rng: np.random.Generator, n_realizations: int) -> np.ndarray:
    """Draw i.i.d. circularly-symmetric Gaussian channels.

    Returns (n_realizations, L, L, K, M) complex128 with per-entry variance
    beta[j, l, k] (real and imaginary parts each carry half).
    """
    shape = (n_realizations, config.L, config.L, config.K, config.M)
    scale = np.sqrt(stats.beta / 2.0)[None, :, :, :, None]
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * (re + 1j * im)


def mmse_estimate(H: np.ndarray, stats: ChannelStats, config: NetworkConfig,
                  rng: np.random.Generator) -> np.ndarray:
    """Pilot-contaminated MMSE channel estimates at every BS.

    UE k of every cell transmits pilot k (tau_p = K, full reuse). The
    effective observation for pilot k at BS j is sum_l H[j, l, k] plus
    noise of per-antenna variance sigma^2 / (tau_p * pilot_power); the MMSE
    estimate scales it by beta[j,l,k] / (sum_l' beta[j,l',k] + that noise
    variance). Same-pilot estimates at one BS are therefore collinear.
    """
    n_real = H.shape[0]
    noise_var = config.noise_var / (config.n_pilots * config.pilot_power)
    noise = np.sqrt(noise_var / 2.0) * (
        rng.standard_normal((n_real, config.L, config.K, config.M))
        + 1j * rng.standard_normal((n_real, config.L, config.K, config.M)))
    # y[r, j, k, :]: contaminated observation of pilot k at BS j
    y = H.sum(axis=2) + noise
    denom = stats.beta.sum(axis=1) + noise_var          # (L_bs, K)
    coeff = stats.beta / denom[:, None, :]              # (L_bs, L_cell, K)
    return coeff[None, :, :, :, None] * y[:, :, None, :, :]


def precode(estimates: np.ndarray, kind: str, config: NetworkConfig) -> np.ndarray:
    """Unit-norm downlink precoders from each BS's own-cell estimates.

    MR points along the estimate; the multicell-MMSE variant applies the
    regularized inverse of the sum of estimate outer products over all L*K
    estimated directions at that BS (regularizer K * sigma^2 / Pmax).
    Returns (n_real, L, K, M).
    """
    if kind not in PRECODERS:
        raise ValueError(f"unknown precoder {kind!r}")
    n_real = estimates.shape[0]
    own = estimates[:, np.arange(config.L), np.arange(config.L)]  # (r, L, K, M)
    if kind == MR:
        w = own
    else:
        xi = config.K * config.noise_var / config.p_max
        flat = estimates.reshape(n_real, config.L, config.L * config.K, config.M)
        gram = np.einsum("rjvm,rjvn->rjmn", flat, flat.conj())
        gram += xi * np.eye(config.M)
        w = np.linalg.solve(gram, own.transpose(0, 1, 3, 2)).transpose(0, 1, 3, 2)
    norms = np.linalg.norm(w, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise FloatingPointError("degenerate zero-norm channel estimate")
    return w / norms


def estimate_gains(drop: UEDrop, kind: str, config: NetworkConfig, seed: int) -> GainTable:
    """Monte-Carlo estimate of the average channel gain a and the
    interference gains b over `config.mc_realizations` channel draws.

    a[j,k]     = |mean_r w_jk^H h^j_jk|^2
    b[l,i,j,k] = mean_r |w_li^H h^l_jk|^2                  for (l,i) != (j,k)
                 mean_r |w^H h|^2 - |mean_r w^H h|^2       on the diagonal
    """
    if config.mc_realizations < 2:
        raise ValueError("mc_realizations must be >= 2")
    stats = channel_stats(drop, config)
    rng = spawn_rng(seed, "channel")
    H = realize_channels(stats, config, rng, config.mc_realizations)
    Hhat = mmse_estimate(H, stats, config, rng)
    W = precode(Hhat, kind, config)

    # z[r, l, i, j, k] = w_li^H h^l_jk
    z = np.einsum("rlim,rljkm->rlijk", W.conj(), H)
    second = np.mean(np.abs(z) ** 2, axis=0)            # (L, K, L, K)
    lidx = np.arange(config.L)
    diag = np.arange(config.K)
    # advanced indexing pulls the matched (l, ..., l) axis to the front
    own_mean = z[:, lidx, :, lidx].mean(axis=1)         # (L, K_i, K_k)
    a = np.abs(own_mean[:, diag, diag]) ** 2            # (L, K)

    b = second.copy()
    b[lidx[:, None], diag[None, :], lidx[:, None], diag[None, :]] -= a
    return GainTable(a=a, b=b, precoder=kind,
                     n_realizations=config.mc_realizations, seed=seed)


def sinr(gains: GainTable, powers: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """Downlink SINR of every UE for the given power allocation (mW).

    gamma[j,k] = powers[j,k] * a[j,k] / (sum_li powers[l,i] * b[l,i,j,k] + sigma^2)
    """
    powers = np.asarray(powers, dtype=float)
    if np.any(powers < 0):
        raise ValueError("powers must be nonnegative")
    denom = np.einsum("li,lijk->jk", powers, gains.b) + config.noise_var
    return powers * gains.a / denom
