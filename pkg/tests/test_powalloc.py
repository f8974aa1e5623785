"""Solver checks: exact projection against an independent closed-form
oracle, trivial allocations with known optima, and agreement with the
exhaustive grid search on small instances."""

import numpy as np
import pytest

from advpower.channel import GainTable, estimate_gains
from advpower.config import NetworkConfig
from advpower.geometry import drop_ues
from advpower.powalloc import (log_product_objective, maxprod_bruteforce,
                               maxprod_solve, project_cell_budget)


def _euclidean_projection_oracle(v, p_max):
    """Sort-based projection onto {x >= 0, sum x <= p_max}."""
    v = np.asarray(v, dtype=float)
    u = np.maximum(v, 0.0)
    if u.sum() <= p_max:
        return u
    w = np.sort(v)[::-1]
    css = np.cumsum(w)
    m = np.arange(1, len(v) + 1)
    m_star = int(np.nonzero(w - (css - p_max) / m > 0)[0].max()) + 1
    lam = (css[m_star - 1] - p_max) / m_star
    return np.maximum(v - lam, 0.0)


def _small_instances(n, L, K, grid_seed):
    cfg = NetworkConfig(L=L, K=K, M=8, mc_realizations=40)
    out = []
    for i in range(n):
        drop = drop_ues(cfg, seed=grid_seed + i)
        out.append((cfg, estimate_gains(drop, "mr", cfg, seed=grid_seed + i)))
    return out


def test_projection_matches_closed_form_oracle():
    rng = np.random.default_rng(0)
    p_max = 500.0
    for _ in range(200):
        v = rng.uniform(-200.0, 400.0, size=(1, 5))
        got = project_cell_budget(v, p_max)[0]
        want = _euclidean_projection_oracle(v[0], p_max)
        assert np.allclose(got, want, rtol=0, atol=1e-6)
        assert got.sum() <= p_max


def test_projection_leaves_feasible_rows_untouched():
    v = np.array([[10.0, 20.0, 30.0]])
    assert np.array_equal(project_cell_budget(v, 500.0), v)


def test_projection_clamps_negatives():
    v = np.array([[-5.0, 3.0]])
    assert np.array_equal(project_cell_budget(v, 500.0), [[0.0, 3.0]])


def test_projection_hits_budget_from_above():
    v = np.array([[400.0, 300.0, 200.0]])
    out = project_cell_budget(v, 500.0)[0]
    assert out.sum() <= 500.0
    assert out.sum() >= 500.0 - 1e-7
    # active coordinates share one waterline
    lam = v[0] - out
    active = out > 0
    assert np.ptp(lam[active]) <= 1e-9


def test_single_ue_gets_full_power():
    # SINR is increasing in power when the cell has one UE
    cfg = NetworkConfig(L=1, K=1, M=4)
    gains = GainTable(a=np.array([[2.0]]), b=np.array([[[[0.01]]]]),
                      precoder="mr", n_realizations=2, seed=0)
    sol = maxprod_solve(gains, cfg)
    assert sol.converged
    assert np.array_equal(sol.rho, [[cfg.p_max]])


def test_interference_free_cell_splits_equally():
    # with b = 0 the objective reduces to sum log rho, whose optimum under
    # the budget is the equal split regardless of a
    cfg = NetworkConfig(L=1, K=2, M=4)
    gains = GainTable(a=np.array([[3.0, 7.0]]), b=np.zeros((1, 2, 1, 2)),
                      precoder="mr", n_realizations=2, seed=0)
    sol = maxprod_solve(gains, cfg)
    assert sol.converged
    assert np.array_equal(sol.rho, [[250.0, 250.0]])


@pytest.mark.parametrize("L,K,grid", [(1, 2, 100), (4, 1, 40)])
def test_solver_agrees_with_bruteforce(L, K, grid):
    for cfg, gains in _small_instances(2, L, K, grid_seed=20 + L):
        sol = maxprod_solve(gains, cfg)
        bf = maxprod_bruteforce(gains, cfg, grid_points=grid)
        assert sol.converged
        assert abs(sol.objective - bf.objective) <= 0.005 * abs(bf.objective)
        # grid points are feasible, so the solver must not lose to them
        assert sol.objective >= bf.objective - 1e-9


def test_solver_feasibility_and_baseline_dominance():
    for cfg, gains in _small_instances(4, 1, 3, grid_seed=40):
        sol = maxprod_solve(gains, cfg)
        assert np.all(sol.rho >= 0)
        assert np.all(sol.rho.sum(axis=1) <= cfg.p_max + 1e-9)
        equal = np.full((cfg.L, cfg.K), cfg.p_max / cfg.K)
        assert sol.objective >= log_product_objective(gains, equal, cfg) - 1e-9


def test_solver_flags_non_convergence():
    cfg, gains = _small_instances(1, 1, 2, grid_seed=60)[0]
    sol = maxprod_solve(gains, cfg, max_iters=1)
    assert not sol.converged
    assert sol.iterations == 1


def test_solver_rejects_nonpositive_gain():
    cfg = NetworkConfig(L=1, K=1, M=2)
    gains = GainTable(a=np.array([[0.0]]), b=np.zeros((1, 1, 1, 1)),
                      precoder="mr", n_realizations=2, seed=0)
    with pytest.raises(ValueError):
        maxprod_solve(gains, cfg)


def test_bruteforce_refuses_large_problems():
    cfg = NetworkConfig(L=4, K=2, M=2)
    gains = GainTable(a=np.ones((4, 2)), b=np.zeros((4, 2, 4, 2)),
                      precoder="mr", n_realizations=2, seed=0)
    with pytest.raises(ValueError):
        maxprod_bruteforce(gains, cfg)
