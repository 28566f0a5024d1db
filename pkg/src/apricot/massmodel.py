"""Linear mass model and exhaustive subset selection over the six shape features."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

MASS_INPUTS = ("L", "W", "T", "PA1", "PA2", "PA3")


class SingularFitError(np.linalg.LinAlgError):
    pass


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    weights: tuple[float, ...]
    active_mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.active_mask):
            raise ValueError("weights and mask differ in length")
        if not any(self.active_mask):
            raise ValueError("at least one feature must be active")
        if any(w != 0.0 for w, a in zip(self.weights, self.active_mask) if not a):
            raise ValueError("inactive features must have zero weight")

    @property
    def features(self) -> list[str]:
        return [n for n, a in zip(MASS_INPUTS, self.active_mask) if a]

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "weights": list(self.weights),
                "active_mask": list(self.active_mask), "features": self.features}

    @classmethod
    def from_dict(cls, d) -> "LinearModel":
        return cls(float(d["intercept"]), tuple(map(float, d["weights"])),
                   tuple(map(bool, d["active_mask"])))


@dataclass(frozen=True)
class RegressionMetrics:
    r_squared: float
    mean_error: float
    std_error: float
    rmse: float

    def to_dict(self) -> dict:
        return {"r_squared": self.r_squared, "mean_error": self.mean_error,
                "std_error": self.std_error, "rmse": self.rmse}


def fit_least_squares(F, masses, active_mask) -> LinearModel:
    """Least-squares intercept + active weights via a Householder QR solve."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    y = np.asarray(masses, dtype=float)
    mask = np.asarray(active_mask, dtype=bool)
    cols = np.flatnonzero(mask)
    if cols.size == 0:
        raise ValueError("empty feature subset")
    A = np.column_stack([np.ones(len(y)), F[:, cols]])
    if A.shape[0] < A.shape[1]:
        raise SingularFitError(f"{A.shape[0]} rows cannot determine {A.shape[1]} coefficients")
    # column scaling keeps the rank test meaningful for mm vs mm^2 columns
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    Q, R = np.linalg.qr(A / scale)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * diag.max():
        raise SingularFitError(f"design matrix for {mask.astype(int).tolist()} is rank deficient")
    coef = np.linalg.solve(R, Q.T @ y) / scale
    w = np.zeros(mask.size)
    w[cols] = coef[1:]
    return LinearModel(float(coef[0]), tuple(float(v) for v in w), tuple(bool(m) for m in mask))


def predict_mass(model: LinearModel, F) -> np.ndarray | float:
    F = np.asarray(F, dtype=float)
    out = model.intercept + F @ np.asarray(model.weights)
    return float(out) if out.ndim == 0 else out


def r_squared(pred, actual) -> float:
    """Squared Pearson correlation."""
    pred, actual = np.asarray(pred, float), np.asarray(actual, float)
    if np.ptp(actual) == 0:
        raise UndefinedCorrelationError("actual values have zero variance")
    if np.ptp(pred) == 0:
        return 0.0
    r = np.corrcoef(pred, actual)[0, 1]
    return float(r * r)


def evaluate(model: LinearModel, F, masses) -> RegressionMetrics:
    masses = np.asarray(masses, dtype=float)
    if masses.size < 2:
        raise ValueError("need at least two samples")
    pred = predict_mass(model, F)
    e = pred - masses
    return RegressionMetrics(
        r_squared=r_squared(pred, masses),
        mean_error=float(e.mean()),
        std_error=float(e.std(ddof=1)),
        rmse=float(np.sqrt(np.mean(e * e))),
    )


def all_masks(n_features: int = 6):
    """Every non-empty subset as a boolean tuple, smallest subsets first."""
    for k in range(1, n_features + 1):
        for combo in itertools.combinations(range(n_features), k):
            yield tuple(i in combo for i in range(n_features))


@dataclass
class SearchResult:
    best: LinearModel
    best_metrics: RegressionMetrics
    table: list[dict]


def subset_search(F_train, m_train, F_verify, m_verify) -> SearchResult:
    """Fit all 63 subsets on train and keep the one with the lowest verify RMSE.

    Ties on RMSE fall to the smaller error std, then to fewer features.
    Subsets whose fit is singular are kept in the table with status "failed".
    """
    F_train = np.asarray(F_train, dtype=float)[:, :6]
    F_verify = np.asarray(F_verify, dtype=float)[:, :6]
    table, candidates = [], []
    for mask in all_masks(6):
        row = {"features": "+".join(n for n, a in zip(MASS_INPUTS, mask) if a),
               "n_features": sum(mask)}
        try:
            model = fit_least_squares(F_train, m_train, mask)
        except SingularFitError:
            row.update(status="failed")
            table.append(row)
            continue
        tr = evaluate(model, F_train, m_train)
        ve = evaluate(model, F_verify, m_verify)
        row.update(status="ok", train_rmse=tr.rmse, train_r2=tr.r_squared,
                   verify_rmse=ve.rmse, verify_std=ve.std_error,
                   verify_mean_error=ve.mean_error, verify_r2=ve.r_squared)
        table.append(row)
        candidates.append(((ve.rmse, ve.std_error, sum(mask)), model, ve))
    if not candidates:
        raise SingularFitError("every subset failed to fit")
    _, best, metrics = min(candidates, key=lambda c: c[0])
    return SearchResult(best, metrics, table)


def save_model(path, model: LinearModel, metrics: dict | None = None) -> None:
    payload = {"model": model.to_dict()}
    if metrics:
        payload["metrics"] = metrics
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_model(path) -> LinearModel:
    with open(path) as fh:
        return LinearModel.from_dict(json.load(fh)["model"])
