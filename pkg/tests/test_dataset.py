import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from apricot.dataset import (ClassTooSmallError, Dataset, Normalizer, Sample, Split, fit_normalizer,
                             one_hot, read_features_csv, split, write_features_csv)

LABELS_245 = np.repeat(np.arange(5), 49)


def test_split_rounding_for_49_per_class():
    sp = split(LABELS_245, seed=0)
    assert (len(sp.train), len(sp.test), len(sp.verify)) == (175, 35, 35)
    for c in range(5):
        per = [np.sum(LABELS_245[np.array(p)] == c) for p in (sp.train, sp.test, sp.verify)]
        assert per == [35, 7, 7]


@given(sizes=st.lists(st.integers(3, 40), min_size=1, max_size=6), seed=st.integers(0, 2**31))
def test_split_is_a_stratified_partition(sizes, seed):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    sp = split(labels, (0.7, 0.15, 0.15), seed)
    allidx = sorted(sp.train + sp.test + sp.verify)
    assert allidx == list(range(labels.size))
    for c, n in enumerate(sizes):
        assert np.sum(labels[np.array(sp.test, dtype=int)] == c) == round(n * 0.15)
        assert np.sum(labels[np.array(sp.verify, dtype=int)] == c) == round(n * 0.15)


def test_split_all_train_and_determinism():
    sp = split(LABELS_245, (1.0, 0.0, 0.0), seed=3)
    assert len(sp.train) == 245 and not sp.test and not sp.verify
    assert split(LABELS_245, seed=9) == split(LABELS_245, seed=9)
    assert split(LABELS_245, seed=9) != split(LABELS_245, seed=10)


def test_split_errors():
    with pytest.raises(ClassTooSmallError):
        split([0, 0, 1, 1, 1], seed=0)
    with pytest.raises(ValueError):
        split(LABELS_245, (0.5, 0.2, 0.2))


def test_split_json_round_trip():
    sp = split(LABELS_245, seed=1)
    assert Split.from_json(sp.to_json()) == sp
    assert json.loads(sp.to_json())["seed"] == 1


def test_normalizer_examples():
    norm = fit_normalizer(np.array([[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]]))
    assert norm.apply(np.array([[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]]))[:, 0].tolist() == [0, 0.5, 1]
    # constant column is dropped everywhere downstream
    assert norm.dropped.tolist() == [False, True]
    assert norm.apply(np.array([[8.0, 5.0]])).tolist() == [[1.5]]


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), min_size=2, max_size=20))
def test_normalizer_maps_train_into_unit_box(rows):
    X = np.array(rows)
    norm = fit_normalizer(X)
    Z = norm.apply(X)
    assert Z.shape[1] == int(norm.keep.sum())
    if Z.size:
        assert Z.min() >= -1e-12 and Z.max() <= 1 + 1e-12
    back = Normalizer.from_dict(json.loads(json.dumps(norm.to_dict())))
    assert np.array_equal(back.apply(X), Z)


def test_one_hot():
    assert one_hot([0, 2], 3).tolist() == [[1, 0, 0], [0, 0, 1]]


def test_sample_validation():
    with pytest.raises(ValueError):
        Sample("a", "Peach", (1,) * 7)
    with pytest.raises(ValueError):
        Sample("a", "Nasiri", (1,) * 6)
    with pytest.raises(ValueError):
        Sample("a", "Nasiri", (1, 1, 1, 1, 1, 1, -2))


def test_csv_round_trip(tmp_path):
    s = [Sample(f"x{i}", v, tuple(float(i + k + 1) for k in range(7)))
         for i, v in enumerate(["Ordubad", "Nasiri", "Shahrod"])]
    d = Dataset.from_samples(s)
    write_features_csv(tmp_path / "f.csv", d)
    back = read_features_csv(tmp_path / "f.csv")
    assert back.ids == d.ids and back.labels.tolist() == d.labels.tolist()
    assert np.allclose(back.X, d.X)
    assert back.samples() == s
    write_features_csv(tmp_path / "g.csv", d, include_mass=False)
    with pytest.raises(ValueError):
        read_features_csv(tmp_path / "g.csv")
    assert read_features_csv(tmp_path / "g.csv", require_mass=False).X.shape == (3, 7)
