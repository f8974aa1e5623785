"""Dataset lifecycle: deterministic generation, lossless file round-trips,
split bookkeeping, and normalization statistics."""

import hashlib
import json

import numpy as np
import pytest

from advpower.dataset import (generate_dataset, load_dataset,
                              normalization_stats, sample_seed, save_dataset,
                              split)


def test_sample_seed_is_sha256_prefix():
    # first 8 bytes of sha256("root:id:attempt"), big-endian
    want = int.from_bytes(hashlib.sha256(b"11:3:0").digest()[:8], "big")
    assert sample_seed(11, 3) == want
    assert sample_seed(11, 3, attempt=1) != want


def test_generation_is_deterministic(tiny_config):
    a = generate_dataset(tiny_config, 5, "mr", seed=2)
    b = generate_dataset(tiny_config, 5, "mr", seed=2)
    c = generate_dataset(tiny_config, 5, "mr", seed=3)
    assert a.content_hash() == b.content_hash()
    assert a.content_hash() != c.content_hash()


def test_generated_labels_are_feasible(tiny_dataset):
    cfg = tiny_dataset.config
    for s in tiny_dataset.samples:
        assert np.all(s.powers >= 0)
        assert np.all(s.powers.sum(axis=1) <= cfg.p_max + 1e-9)
        assert np.allclose(s.sum_powers, s.powers.sum(axis=1), atol=1e-12)
        assert np.all(s.positions >= 0)
        assert np.all(s.positions <= cfg.global_side)


def test_sample_ids_are_sequential(tiny_dataset):
    assert [s.id for s in tiny_dataset.samples] == list(range(len(tiny_dataset)))


def test_matrix_views_preserve_ordering(tiny_dataset):
    X = tiny_dataset.positions_matrix()
    P = tiny_dataset.powers_tensor()
    cfg = tiny_dataset.config
    assert X.shape == (len(tiny_dataset), cfg.input_dim)
    assert P.shape == (len(tiny_dataset), cfg.L, cfg.K)
    s0 = tiny_dataset.samples[0]
    assert np.array_equal(X[0], s0.positions.reshape(-1))
    assert np.array_equal(tiny_dataset.cell_targets(0)[0], s0.powers[0])


def test_save_load_round_trip(tiny_dataset, tmp_path):
    path = tmp_path / "ds.csv"
    save_dataset(tiny_dataset, path)
    back = load_dataset(path)
    assert back.content_hash() == tiny_dataset.content_hash()
    assert back.precoder == tiny_dataset.precoder
    assert back.root_seed == tiny_dataset.root_seed
    assert back.config == tiny_dataset.config
    for a, b in zip(tiny_dataset.samples, back.samples):
        assert a.id == b.id
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.powers, b.powers)
        assert np.array_equal(a.sum_powers, b.sum_powers)


def test_saved_bytes_are_reproducible(tiny_dataset, tmp_path):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    save_dataset(tiny_dataset, p1)
    save_dataset(tiny_dataset, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert (tmp_path / "a.csv.meta.json").read_text() \
        == (tmp_path / "b.csv.meta.json").read_text()


def test_load_rejects_header_tamper(tiny_dataset, tmp_path):
    path = tmp_path / "ds.csv"
    save_dataset(tiny_dataset, path)
    lines = path.read_text().splitlines()
    lines[0] = lines[0].replace("K=2", "K=3")
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError):
        load_dataset(path)


def test_load_rejects_truncated_record(tiny_dataset, tmp_path):
    path = tmp_path / "ds.csv"
    save_dataset(tiny_dataset, path)
    lines = path.read_text().splitlines()
    lines[1] = ",".join(lines[1].split(",")[:-2])
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError):
        load_dataset(path)


def test_load_rejects_wrong_format_version(tiny_dataset, tmp_path):
    path = tmp_path / "ds.csv"
    save_dataset(tiny_dataset, path)
    meta_path = tmp_path / "ds.csv.meta.json"
    meta = json.loads(meta_path.read_text())
    meta["format"] = "advpower.dataset.v999"
    meta_path.write_text(json.dumps(meta))
    with pytest.raises(ValueError):
        load_dataset(path)


def test_split_counts_and_disjointness(tiny_dataset):
    tr, va, te = split(tiny_dataset, (2 / 3, 1 / 6, 1 / 6), seed=5)
    assert (len(tr), len(va), len(te)) == (40, 10, 10)
    ids = [frozenset(s.id for s in part.samples) for part in (tr, va, te)]
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
    assert ids[0] | ids[1] | ids[2] == set(range(60))
    for part in (tr, va, te):
        got = [s.id for s in part.samples]
        assert got == sorted(got)


def test_split_is_deterministic(tiny_dataset):
    a = split(tiny_dataset, (0.5, 0.25, 0.25), seed=9)
    b = split(tiny_dataset, (0.5, 0.25, 0.25), seed=9)
    c = split(tiny_dataset, (0.5, 0.25, 0.25), seed=10)
    assert [s.id for s in a[2].samples] == [s.id for s in b[2].samples]
    assert [s.id for s in a[2].samples] != [s.id for s in c[2].samples]


def test_split_validates_fractions(tiny_dataset):
    with pytest.raises(ValueError):
        split(tiny_dataset, (0.5, 0.2, 0.2), seed=0)
    with pytest.raises(ValueError):
        split(tiny_dataset, (1.0, 0.001, -0.001), seed=0)
    with pytest.raises(ValueError):
        # positive fraction that rounds to zero samples
        split(tiny_dataset, (0.999, 0.0005, 0.0005), seed=0)


def test_normalization_stats_from_train_only(tiny_splits):
    tr = tiny_splits[0]
    stats = normalization_stats(tr)
    X = tr.positions_matrix()
    assert np.allclose(stats.mean, X.mean(axis=0), atol=0)
    assert np.allclose(stats.std, X.std(axis=0), atol=0)
    assert stats.power_scale == tr.config.p_max


def test_normalization_std_floor(tiny_splits):
    tr = tiny_splits[0]
    stats = normalization_stats(tr)
    # constant column would otherwise divide by zero downstream
    assert np.all(stats.std >= 1e-6)


def test_content_hash_tracks_payload(tiny_dataset):
    h = tiny_dataset.content_hash()
    tiny_dataset.samples[0].powers[0, 0] += 1e-9
    try:
        assert tiny_dataset.content_hash() != h
    finally:
        tiny_dataset.samples[0].powers[0, 0] -= 1e-9
    assert tiny_dataset.content_hash() == h
