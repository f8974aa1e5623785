"""Max-product downlink power allocation under per-cell sum power budgets.

The problem maximized is

    f(rho) = sum_jk log gamma_jk(rho)
    s.t.    sum_k rho[j, k] <= Pmax for every cell j,  rho >= 0

which is concave in the variables x = log rho (the standard geometric
programming transform), where the per-cell constraint log sum_k e^{x_jk}
<= log Pmax is convex; any KKT point is therefore the global optimum. The
iteration itself runs in the rho domain, where the per-cell waterline
bisection is the exact Euclidean projection onto {rho >= 0, sum <= Pmax}:
projected gradient ascent with Barzilai-Borwein steps and Armijo
backtracking. Convergence is declared on the KKT stationarity residual of
the projected gradient; the KKT set is the same in both domains, so a
stationary point here is the global optimum of the concave transformed
problem.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .channel import GainTable, sinr
from .config import NetworkConfig

MAX_ITERS = 10_000
GRAD_TOL = 1e-7
ARMIJO_C = 1e-4
BB_STEP_RANGE = (1e-12, 1e12)


@dataclass(frozen=True)
class PowerAllocation:
    rho: np.ndarray          # (L, K) mW
    objective: float         # nats, sum of log-SINRs
    iterations: int
    converged: bool


def log_product_objective(gains: GainTable, rho: np.ndarray,
                          config: NetworkConfig) -> float:
    """sum_jk log gamma_jk; -inf whenever any SINR is zero."""
    gamma = sinr(gains, rho, config)
    if np.any(gamma <= 0):
        return -np.inf
    return float(np.sum(np.log(gamma)))


def _objective_gradient(gains: GainTable, rho: np.ndarray,
                        config: NetworkConfig) -> np.ndarray:
    """d/d rho of sum log gamma. gamma_jk = rho_jk a_jk / D_jk with
    D_jk = sum_li rho_li b_lijk + sigma^2, so the gradient is
    1/rho - sum_jk b[., ., j, k] / D_jk."""
    denom = np.einsum("li,lijk->jk", rho, gains.b) + config.noise_var
    return 1.0 / rho - np.einsum("lijk,jk->li", gains.b, 1.0 / denom)


def project_cell_budget(v: np.ndarray, p_max: float,
                        floor: float = 0.0) -> np.ndarray:
    """Euclidean projection of each row of v onto {x >= floor, sum x <= Pmax}.

    Waterline bisection per row; the returned waterline is taken from the
    feasible side of the bracket so sum <= Pmax holds exactly (never above),
    with the bracket shrunk below 1e-10 * Pmax.
    """
    v = np.asarray(v, dtype=float)
    out = np.maximum(v, floor)
    tol = 1e-10 * p_max
    for row in out:
        if row.sum() <= p_max:
            continue
        lo, hi = 0.0, float(row.max() - floor)   # lo infeasible, hi feasible
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if np.maximum(row - mid, floor).sum() > p_max:
                lo = mid
            else:
                hi = mid
        row[:] = np.maximum(row - hi, floor)
    return out


def _kkt_residual(grad: np.ndarray, rho: np.ndarray, p_max: float) -> float:
    """Stationarity residual of the projected gradient (1/mW).

    Cells below the budget need a vanishing gradient; cells at the budget
    need a constant gradient (parallel to the constraint normal, the
    all-ones vector) with a nonnegative multiplier. Evaluated at the
    iterate directly, so the waterline's bisection tolerance does not
    leak into the convergence test.
    """
    total = 0.0
    for row_g, row_r in zip(grad, rho):
        if row_r.sum() < p_max * (1.0 - 1e-9):
            r = row_g
        else:
            lam = max(0.0, float(row_g.mean()))
            r = row_g - lam
        total += float(r @ r)
    return np.sqrt(total)


def maxprod_solve(gains: GainTable, config: NetworkConfig,
                  max_iters: int = MAX_ITERS, tol: float = GRAD_TOL) -> PowerAllocation:
    """Solve the max-product allocation for one gain table.

    Declared converged when the KKT residual of the projected gradient
    drops below `tol` (1/mW); concavity of the log-domain transform makes
    any such point the global optimum up to that residual. Non-convergence
    within the iteration cap returns the last iterate, flagged.
    """
    if np.any(gains.a <= 0):
        raise ValueError("nonpositive average channel gain; cannot allocate")
    # strictly positive floor keeps the log objective finite at the
    # boundary; inactive at any stationary point
    floor = 1e-12 * config.p_max
    rho = np.full((config.L, config.K), config.p_max / config.K)
    f = log_product_objective(gains, rho, config)
    grad = _objective_gradient(gains, rho, config)
    step = 0.1 * (config.p_max / config.K) / max(np.max(np.abs(grad)), 1e-30)
    converged = False
    iters = 0
    for iters in range(1, max_iters + 1):
        if _kkt_residual(grad, rho, config.p_max) < tol:
            converged = True
            break
        # Armijo backtracking on the projected ascent step; the projection
        # property makes <grad, delta> >= 0, so ascent is monotone. The
        # absolute slack keeps micro-steps acceptable once the predicted
        # improvement drops toward the float64 resolution of f itself.
        slack = 1e-12 * (1.0 + abs(f))
        stalled = False
        while True:
            cand = project_cell_budget(rho + step * grad, config.p_max, floor)
            delta = cand - rho
            f_cand = log_product_objective(gains, cand, config)
            if f_cand >= f + ARMIJO_C * float(np.sum(grad * delta)) - slack:
                break
            step *= 0.5
            if step < 1e-18:
                stalled = True
                break
        if stalled:
            break
        grad_new = _objective_gradient(gains, cand, config)
        # BB1 step from the accepted move (concavity makes s.y negative)
        sy = np.sum(delta * (grad_new - grad))
        ss = np.sum(delta * delta)
        if sy != 0 and ss > 0:
            step = float(np.clip(abs(ss / sy), *BB_STEP_RANGE))
        rho, f, grad = cand, f_cand, grad_new
    return PowerAllocation(rho=rho, objective=f, iterations=iters,
                           converged=converged)


def maxprod_bruteforce(gains: GainTable, config: NetworkConfig,
                       grid_points: int = 100) -> PowerAllocation:
    """Exhaustive grid search oracle for tiny problems (L * K <= 6).

    Each UE power ranges over {i * Pmax / grid_points : i = 1..grid_points};
    per-cell combinations violating the sum budget are dropped before the
    cross-cell product.
    """
    L, K = config.L, config.K
    if L * K > 6:
        raise ValueError("brute force restricted to L * K <= 6")
    levels = config.p_max * np.arange(1, grid_points + 1) / grid_points
    cell_combos = np.array([c for c in itertools.product(levels, repeat=K)
                            if sum(c) <= config.p_max + 1e-9])
    best_obj, best_rho = -np.inf, None
    # evaluate cross-cell candidates in chunks to bound memory
    chunk = 200_000
    combo_iter = itertools.product(range(len(cell_combos)), repeat=L)
    while True:
        idx = np.array(list(itertools.islice(combo_iter, chunk)), dtype=int)
        if idx.size == 0:
            break
        rho = cell_combos[idx]                       # (n, L, K)
        denom = np.einsum("nli,lijk->njk", rho, gains.b) + config.noise_var
        obj = np.sum(np.log(rho * gains.a / denom), axis=(1, 2))
        j = int(np.argmax(obj))
        if obj[j] > best_obj:
            best_obj, best_rho = float(obj[j]), rho[j]
    return PowerAllocation(rho=best_rho, objective=best_obj,
                           iterations=0, converged=True)
