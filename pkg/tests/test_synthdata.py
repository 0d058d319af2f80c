import numpy as np
import pytest

from compass.synthdata import (
    DatasetSpec,
    generate,
    make_spec,
    nearest_centroid_accuracy,
    read_dataset,
    read_split,
    write_dataset,
    write_split,
)


def test_high_snr_nearest_centroid_is_near_perfect():
    spec = make_spec([1e9, 1e9, 1e9], n_classes=4, latent_dim=8, test_per_class=50, seed=1)
    ds = generate(spec)
    assert len(ds.test) == 200
    for m in range(3):
        assert nearest_centroid_accuracy(ds.train, ds.test, m) >= 0.99


def test_same_seed_is_byte_identical():
    spec = DatasetSpec(seed=7)
    a, b = generate(spec), generate(spec)
    for name in ("train", "val", "test"):
        sa, sb = getattr(a, name), getattr(b, name)
        assert all(xa.tobytes() == xb.tobytes() for xa, xb in zip(sa.x, sb.x))
        assert sa.y.tobytes() == sb.y.tobytes()


def test_weak_modality_is_weaker():
    ds = generate(make_spec([0.1, 10.0, 10.0], n_classes=6, seed=2))
    assert nearest_centroid_accuracy(ds.train, ds.test, 0) < nearest_centroid_accuracy(ds.train, ds.test, 1)


def test_label_balance_and_shapes():
    spec = DatasetSpec(n_classes=5, train_per_class=7, val_per_class=3, test_per_class=4, raw_dims=(3, 5, 2))
    ds = generate(spec)
    for name, k in (("train", 7), ("val", 3), ("test", 4)):
        split = getattr(ds, name)
        assert np.bincount(split.y, minlength=5).tolist() == [k] * 5
        assert [x.shape for x in split.x] == [(5 * k, 3), (5 * k, 5), (5 * k, 2)]


def test_splits_are_distinct():
    ds = generate(DatasetSpec(seed=3))
    assert not np.intersect1d(ds.train.x[0][:, 0], ds.test.x[0][:, 0]).size


def test_monotone_in_snr():
    ladder = []
    for snr in (0.1, 0.4, 2.0):
        ds = generate(make_spec([snr, 1.0, 1.0], n_classes=6, test_per_class=100, seed=4))
        ladder.append(nearest_centroid_accuracy(ds.train, ds.test, 0))
    assert ladder == sorted(ladder)


@pytest.mark.parametrize(
    "kwargs",
    [dict(n_modalities=1, raw_dims=(3,), snr=(1.0,)), dict(snr=(1.0, 0.0, 1.0)), dict(raw_dims=(3, 3)), dict(latent_dim=0)],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        DatasetSpec(**kwargs)


def test_cache_roundtrip(tmp_path):
    spec = DatasetSpec(raw_dims=(4, 2, 3), train_per_class=3, val_per_class=2, test_per_class=2, n_classes=3)
    ds = generate(spec)
    write_dataset(ds, tmp_path)
    back = read_dataset(spec, tmp_path)
    for name in ("train", "val", "test"):
        a, b = getattr(ds, name), getattr(back, name)
        np.testing.assert_array_equal(a.y, b.y)
        for xa, xb in zip(a.x, b.x):
            np.testing.assert_array_equal(xa.astype(np.float32), xb)


def test_cache_header_layout(tmp_path):
    ds = generate(DatasetSpec(raw_dims=(2, 3, 1), n_classes=2, train_per_class=1, val_per_class=0, test_per_class=0))
    path = tmp_path / "s.bin"
    write_split(ds.train, path)
    blob = path.read_bytes()
    assert np.frombuffer(blob[:20], "<u4").tolist() == [3, 2, 2, 3, 1]
    assert len(blob) == 20 + 2 * (6 * 4 + 2)
    assert read_split(path).n_classes == 2
