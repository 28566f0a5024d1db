import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from apricot import massmodel
from apricot.massmodel import (LinearModel, SingularFitError, all_masks, evaluate, fit_least_squares,
                               predict_mass, subset_search)

PUBLISHED_WEIGHTS = (-52.6035, -0.0080, 0.0006, 0.0142, 0.4752, 0.4619, 1.0814)
ORDUBAD_MEANS = (46.64, 44.68, 41.22, 1878.12, 1738.26, 1741.67)


def _features(rng, n=120):
    L = rng.normal(45, 5, n)
    W = rng.normal(42, 5, n)
    T = rng.normal(39, 4, n)
    return np.column_stack([L, W, T, 0.8 * L * W + rng.normal(0, 20, n),
                            0.8 * L * T + rng.normal(0, 20, n), 0.8 * W * T + rng.normal(0, 20, n)])


def test_exact_linear_recovery(rng):
    F = rng.normal(size=(30, 6))
    y = 2 + 3 * F[:, 0]
    m = fit_least_squares(F, y, (True,) + (False,) * 5)
    assert m.intercept == pytest.approx(2, abs=1e-9)
    assert m.weights[0] == pytest.approx(3, abs=1e-9)
    assert m.weights[1:] == (0.0,) * 5


def test_constant_target(rng):
    F = rng.normal(size=(20, 6))
    m = fit_least_squares(F, np.full(20, 7.5), (True, False, True, False, False, True))
    assert m.intercept == pytest.approx(7.5, abs=1e-9)
    assert np.allclose(m.weights, 0, atol=1e-9)


def test_fit_matches_lstsq_oracle(rng):
    F = _features(rng)
    y = rng.normal(size=len(F))
    for mask in [(1, 0, 1, 0, 1, 0), (1,) * 6, (0, 0, 0, 1, 1, 1)]:
        mask = tuple(map(bool, mask))
        A = np.column_stack([np.ones(len(F)), F[:, np.array(mask)]])
        ref = np.linalg.lstsq(A, y, rcond=None)[0]
        m = fit_least_squares(F, y, mask)
        assert m.intercept == pytest.approx(ref[0], rel=1e-7, abs=1e-9)
        assert np.allclose(np.array(m.weights)[np.array(mask)], ref[1:], rtol=1e-7, atol=1e-10)


def test_published_weights_recovered_from_synthetic_refit(rng):
    F = _features(rng, 400)
    w0, w = PUBLISHED_WEIGHTS[0], np.array(PUBLISHED_WEIGHTS[1:])
    sigma = 2.0
    y = w0 + F @ w + rng.normal(0, sigma, len(F))
    m = fit_least_squares(F, y, (True,) * 6)
    A = np.column_stack([np.ones(len(F)), F])
    resid = y - A @ np.r_[m.intercept, m.weights]
    s2 = resid @ resid / (len(F) - 7)
    se = np.sqrt(np.diag(s2 * np.linalg.inv(A.T @ A)))
    got = np.r_[m.intercept, m.weights]
    assert np.all(np.abs(got - np.array(PUBLISHED_WEIGHTS)) <= 3 * se)


def test_published_weights_on_ordubad_means():
    # hand arithmetic: the area terms alone give 0.4752*1878.12 + 0.4619*1738.26 + 1.0814*1741.67
    m = LinearModel(PUBLISHED_WEIGHTS[0], PUBLISHED_WEIGHTS[1:], (True,) * 6)
    by_hand = (-52.6035 - 0.0080 * 46.64 + 0.0006 * 44.68 + 0.0142 * 41.22
               + 0.4752 * 1878.12 + 0.4619 * 1738.26 + 1.0814 * 1741.67)
    assert predict_mass(m, ORDUBAD_MEANS) == pytest.approx(by_hand, rel=1e-12)
    assert by_hand == pytest.approx(3526.46, abs=0.01)


def test_predict_identity_and_zero():
    m = LinearModel(0.0, (0, 0, 1.0, 0, 0, 0), (False, False, True, False, False, False))
    assert predict_mass(m, (9, 9, 4.5, 9, 9, 9)) == 4.5
    m2 = LinearModel(3.0, (1.0,) * 6, (True,) * 6)
    assert predict_mass(m2, (0,) * 6) == 3.0


def test_linear_model_validation():
    with pytest.raises(ValueError):
        LinearModel(0, (1.0, 0), (False, False))
    with pytest.raises(ValueError):
        LinearModel(0, (1.0, 2.0), (True, False))


def test_metrics_examples():
    m = LinearModel(0.0, (1.0, 0, 0, 0, 0, 0), (True,) + (False,) * 5)
    F = np.column_stack([np.arange(1.0, 11.0), np.ones((10, 5))])
    r = evaluate(m, F, F[:, 0])
    assert (r.r_squared, r.mean_error, r.rmse) == (pytest.approx(1), 0, 0)
    r = evaluate(m, F, F[:, 0] - 1)
    assert r.mean_error == pytest.approx(1) and r.std_error == pytest.approx(0, abs=1e-12)
    assert r.rmse == pytest.approx(1) and r.r_squared == pytest.approx(1)
    with pytest.raises(massmodel.UndefinedCorrelationError):
        massmodel.r_squared([1, 2, 3], [4, 4, 4])


def test_all_masks_exhaustive():
    masks = list(all_masks(6))
    assert len(masks) == len(set(masks)) == 63
    assert not any(not any(m) for m in masks)


def test_search_finds_area_only_target(rng):
    F = _features(rng, 200)
    y = 1.0 + 0.02 * F[:, 3] + 0.03 * F[:, 4] + 0.01 * F[:, 5] + rng.normal(0, 0.05, 200)
    res = subset_search(F[:150], y[:150], F[150:], y[150:])
    assert len(res.table) == 63
    assert {"PA1", "PA2", "PA3"} <= set(res.best.features)


def test_search_survives_duplicate_column(rng):
    F = _features(rng, 80)
    F[:, 1] = F[:, 0]
    y = 0.5 * F[:, 0] + rng.normal(0, 0.1, 80)
    res = subset_search(F[:60], y[:60], F[60:], y[60:])
    failed = [r for r in res.table if r["status"] == "failed"]
    assert failed and all("L" in r["features"] and "W" in r["features"] for r in failed)
    assert len(res.table) == 63


def test_underdetermined_fit_raises(rng):
    with pytest.raises(SingularFitError):
        fit_least_squares(rng.normal(size=(3, 6)), rng.normal(size=3), (True,) * 6)


@given(seed=st.integers(0, 10_000))
def test_nested_subsets_never_fit_worse(seed):
    rng = np.random.default_rng(seed)
    F = _features(rng, 60)
    y = rng.normal(size=60) + 0.01 * F[:, 3]
    masks = list(all_masks(6))
    small = masks[rng.integers(len(masks))]
    extra = rng.integers(0, 2, 6).astype(bool)
    big = tuple(a or b for a, b in zip(small, extra))
    r_small = evaluate(fit_least_squares(F, y, small), F, y).rmse
    r_big = evaluate(fit_least_squares(F, y, big), F, y).rmse
    assert r_big <= r_small * (1 + 1e-9) + 1e-12


def test_save_load(tmp_path):
    m = LinearModel(1.5, (0.0, 2.0, 0, 0, 0, 0), (False, True, False, False, False, False))
    massmodel.save_model(tmp_path / "m.json", m, {"verify": {"rmse": 1.0}})
    assert massmodel.load_model(tmp_path / "m.json") == m
