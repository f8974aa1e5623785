"""Evaluation pipeline checks: spectral efficiency, CDF machinery, report
CSV formats, seed recovery, and the end-to-end sum-SE path on a small
network."""

import dataclasses

import numpy as np
import pytest

from advpower.attacks import AttackConfig
from advpower.config import NetworkConfig
from advpower.evalreport import (ATTACK_CSV_HEADER, CDF_CSV_HEADER,
                                 POWER_SOURCES, TRANSFER_CSV_HEADER,
                                 AttackReport, SEConfig, TransferReport,
                                 build_power_sources, default_se_config,
                                 emit_report, empirical_cdf,
                                 recover_gain_tables, recover_sample_seed,
                                 spectral_efficiency, sum_se_cdf,
                                 transfer_eval)
from advpower.network import predict_powers


def test_se_prefactor_times_log():
    cfg = SEConfig(tau_c=200, tau_d=185)
    assert spectral_efficiency(np.array(1.0), cfg) == 0.925
    assert spectral_efficiency(np.array(0.0), cfg) == 0.0
    assert spectral_efficiency(np.array(3.0), cfg) == pytest.approx(1.85)


def test_se_rejects_negative_sinr():
    with pytest.raises(ValueError):
        spectral_efficiency(np.array([-0.1]), SEConfig())


def test_se_config_validation():
    with pytest.raises(ValueError):
        SEConfig(tau_c=200, tau_d=0)
    with pytest.raises(ValueError):
        SEConfig(tau_c=200, tau_d=201)


def test_default_se_config_subtracts_pilots(tiny_config):
    cfg = default_se_config(tiny_config)
    assert cfg.tau_c == 200
    assert cfg.tau_d == 190 - tiny_config.K
    assert default_se_config(NetworkConfig()).tau_d == 185


def test_empirical_cdf_shape_and_quantile():
    rng = np.random.default_rng(3)
    vals = rng.normal(size=257)
    curve = empirical_cdf(vals)
    assert np.array_equal(curve.values, np.sort(vals))
    assert curve.cdf[0] == pytest.approx(1 / 257)
    assert curve.cdf[-1] == 1.0
    assert np.all(np.diff(curve.cdf) > 0)
    assert curve.quantile(0.5) == np.quantile(vals, 0.5)
    assert curve.quantile(0.0) == vals.min()


def test_empirical_cdf_rejects_empty():
    with pytest.raises(ValueError):
        empirical_cdf(np.array([]))


def test_csv_headers_are_frozen():
    assert ATTACK_CSV_HEADER == "cell,attack,epsilon,d_eps_cm,n,infeasible,rate"
    assert TRANSFER_CSV_HEADER == ("surrogate,victim,cell,attack,epsilon,"
                                   "d_eps_cm,n,infeasible,rate")
    assert CDF_CSV_HEADER == "sum_se_bps_hz,cdf"


def test_attack_report_rows_by_hand():
    rep = AttackReport(kind="fgsm", epsilon=0.1,
                       d_epsilon=np.sqrt(2.0) * 0.1, model_id="m1-mr-std",
                       n=4, infeasible=[1, 1, 1, 1],
                       rates=[0.25, 0.25, 0.25, 0.25])
    rows = rep.csv_rows()
    assert rows[0] == "0,fgsm,0.1,14.1421,4,1,0.250000"
    assert rows[-1] == "all,fgsm,0.1,14.1421,16,4,0.250000"
    assert len(rows) == 5
    assert rep.aggregate_rate == 0.25


def test_transfer_report_rows_by_hand():
    rep = TransferReport(surrogate_id="m1-mr-std", victim_id="m2-mr-std",
                         kind="pgdm", epsilon=0.2,
                         d_epsilon=np.sqrt(2.0) * 0.2, n=10,
                         infeasible=[3], rates=[0.3])
    rows = rep.csv_rows()
    assert rows[0] == "m1-mr-std,m2-mr-std,0,pgdm,0.2,28.2843,10,3,0.300000"
    assert rows[1] == "m1-mr-std,m2-mr-std,all,pgdm,0.2,28.2843,10,3,0.300000"


def test_recover_sample_seed_roundtrip(tiny_dataset):
    # replaying the recovered seed must land on the stored positions
    from advpower.geometry import drop_ues
    for s in tiny_dataset.samples[:5]:
        seed = recover_sample_seed(tiny_dataset, s)
        drop = drop_ues(tiny_dataset.config, seed)
        assert np.array_equal(drop.positions, s.positions)


def test_recover_sample_seed_rejects_foreign_positions(tiny_dataset):
    s = tiny_dataset.samples[0]
    fake = dataclasses.replace(s, positions=s.positions + 1.0)
    with pytest.raises(ValueError, match="no generating seed"):
        recover_sample_seed(tiny_dataset, fake)


def test_recover_gain_tables_matches_network(tiny_splits, tiny_config):
    test = tiny_splits[2]
    tables = recover_gain_tables(test)
    assert len(tables) == len(test)
    L, K = tiny_config.L, tiny_config.K
    for t in tables:
        assert t.a.shape == (L, K)
        assert t.b.shape == (L, K, L, K)
        assert np.all(t.a > 0)
        assert np.all(t.b >= 0)
        assert t.precoder == test.precoder
        assert t.n_realizations == tiny_config.mc_realizations
    again = recover_gain_tables(test)
    assert all(np.array_equal(x.a, y.a) and np.array_equal(x.b, y.b)
               for x, y in zip(tables, again))


def test_build_power_sources_contract(tiny_splits, tiny_model):
    test = tiny_splits[2]
    cfg = AttackConfig(kind="pgdm", epsilon=0.1)
    sources = build_power_sources(test, [tiny_model], [tiny_model], cfg,
                                  seed=5)
    assert tuple(sources) == POWER_SOURCES
    truth = test.powers_tensor()
    assert np.array_equal(sources["truth"], truth)
    assert np.array_equal(sources["clean-dnn"][:, 0],
                          predict_powers(tiny_model, test.positions_matrix()))
    for name in ("attacked+rescale", "advtrained+rescale"):
        got = sources[name].sum(axis=2)
        want = truth.sum(axis=2)
        assert np.allclose(got, want, rtol=1e-9)
        assert np.all(sources[name] >= 0)
    assert np.all(sources["attacked-dnn"] >= 0)


def test_sum_se_cdf_end_to_end(tiny_splits, tiny_model, tiny_config):
    test = tiny_splits[2]
    gains = recover_gain_tables(test)
    cfg = AttackConfig(kind="pgdm", epsilon=0.1)
    sources = build_power_sources(test, [tiny_model], [tiny_model], cfg)
    curves = sum_se_cdf(gains, sources, default_se_config(tiny_config),
                        tiny_config)
    assert set(curves) == set(POWER_SOURCES)
    for curve in curves.values():
        assert curve.values.shape == (len(test),)
        assert np.all(np.isfinite(curve.values))
        assert np.all(curve.values > 0)
    # the label powers maximize the SINR product, not the sum SE, but on
    # this small network they should still beat a clipped raw prediction
    assert curves["truth"].quantile(0.5) > 0.0


def test_sum_se_cdf_rejects_count_mismatch(tiny_splits, tiny_model,
                                           tiny_config):
    test = tiny_splits[2]
    gains = recover_gain_tables(test)
    bad = {"truth": test.powers_tensor()[:-1]}
    with pytest.raises(ValueError, match="mismatch"):
        sum_se_cdf(gains, bad, default_se_config(tiny_config), tiny_config)


def test_self_transfer_equals_whitebox(tiny_splits, tiny_model, tiny_config):
    test = tiny_splits[2]
    cfg = AttackConfig(kind="pgdm", epsilon=0.2)
    rep = transfer_eval([tiny_model], [tiny_model], cfg,
                        test.positions_matrix(), tiny_config.p_max, seed=9,
                        surrogate_id="a", victim_id="a")
    assert rep.whitebox is not None
    assert rep.infeasible == rep.whitebox.infeasible
    assert rep.rates == rep.whitebox.rates


def test_emit_report_writes_expected_files(tmp_path):
    rep = AttackReport(kind="fgsm", epsilon=0.1, d_epsilon=0.1414,
                       model_id="m", n=2, infeasible=[1], rates=[0.5])
    curve = empirical_cdf(np.array([1.0, 2.0, 3.0]))
    paths = emit_report(tmp_path, attack_reports=[rep],
                        cdf_curves={"attacked+rescale": curve},
                        metadata={"k": 1})
    names = sorted(p.name for p in paths)
    assert names == ["attacks.csv", "cdf_attacked_rescale.csv",
                     "report_meta.json"]
    attacks = (tmp_path / "attacks.csv").read_text().splitlines()
    assert attacks[0] == ATTACK_CSV_HEADER
    cdf = (tmp_path / "cdf_attacked_rescale.csv").read_text().splitlines()
    assert cdf[0] == CDF_CSV_HEADER
    assert cdf[1] == "1,0.333333"


def test_emit_report_requires_content(tmp_path):
    with pytest.raises(ValueError, match="nothing to report"):
        emit_report(tmp_path, metadata={"only": "meta"})
