"""MLP trained by Levenberg-Marquardt, RBF network with least-squares output
weights, argmax decoding and confusion-matrix evaluation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class TrainRecord:
    rmse: list[float] = field(default_factory=list)
    verify_rmse: list[float] = field(default_factory=list)
    stop_reason: str | None = None
    notes: list[str] = field(default_factory=list)


# -- MLP ----------------------------------------------------------------------

@dataclass
class MlpConfig:
    hidden: int = 5
    max_epochs: int = 20
    min_error: float = 1e-5
    lambda_init: float = 1e-3
    lambda_factor: float = 10.0
    max_damping_increases: int = 10
    init_range: float = 0.5


@dataclass
class MlpModel:
    W1: np.ndarray  # (hidden, d)
    b1: np.ndarray
    W2: np.ndarray  # (outputs, hidden)
    b2: np.ndarray

    @property
    def shapes(self):
        return (self.W1.shape, self.b1.shape, self.W2.shape, self.b2.shape)

    def params(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def with_params(self, theta) -> "MlpModel":
        parts, pos = [], 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            parts.append(np.asarray(theta[pos:pos + size], dtype=float).reshape(shape))
            pos += size
        return MlpModel(*parts)

    def hidden(self, X) -> np.ndarray:
        return np.tanh(np.atleast_2d(X) @ self.W1.T + self.b1)

    def scores(self, X) -> np.ndarray:
        return self.hidden(X) @ self.W2.T + self.b2

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("W1", "b1", "W2", "b2")}

    @classmethod
    def from_dict(cls, d) -> "MlpModel":
        return cls(*(np.array(d[k], dtype=float) for k in ("W1", "b1", "W2", "b2")))


def init_mlp(n_inputs: int, n_outputs: int, cfg: MlpConfig, seed: int) -> MlpModel:
    rng = np.random.default_rng(seed)
    r = cfg.init_range
    return MlpModel(
        rng.uniform(-r, r, (cfg.hidden, n_inputs)),
        rng.uniform(-r, r, cfg.hidden),
        rng.uniform(-r, r, (n_outputs, cfg.hidden)),
        rng.uniform(-r, r, n_outputs),
    )


def mlp_residuals(model: MlpModel, X, T) -> np.ndarray:
    """Flattened (prediction - target), sample-major."""
    return (model.scores(X) - np.asarray(T, dtype=float).reshape(len(X), -1)).ravel()


def mlp_jacobian(model: MlpModel, X) -> np.ndarray:
    """d residual / d params, shape (n * outputs, n_params)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    H = model.hidden(X)  # (n, h)
    h = H.shape[1]
    o = model.W2.shape[0]
    dH = 1.0 - H * H
    # back[n, o, j] = W2[o, j] * (1 - H[n, j]^2)
    back = model.W2[None, :, :] * dH[:, None, :]
    J_W1 = (back[:, :, :, None] * X[:, None, None, :]).reshape(n, o, h * d)
    J_b1 = back
    J_W2 = np.zeros((n, o, o, h))
    idx = np.arange(o)
    J_W2[:, idx, idx, :] = H[:, None, :]
    J_b2 = np.broadcast_to(np.eye(o), (n, o, o))
    J = np.concatenate([J_W1, J_b1, J_W2.reshape(n, o, o * h), J_b2], axis=2)
    return J.reshape(n * o, -1)


def lm_step(J: np.ndarray, r: np.ndarray, lam: float) -> np.ndarray:
    """Solve (J^T J + lam I) delta = -J^T r."""
    A = J.T @ J
    A[np.diag_indices_from(A)] += lam
    return np.linalg.solve(A, -(J.T @ r))


def _rmse(r: np.ndarray) -> float:
    return float(np.sqrt(np.mean(r * r))) if r.size else 0.0


def train_mlp(X, T, cfg: MlpConfig | None = None, seed: int = 0, X_verify=None, T_verify=None,
              model: MlpModel | None = None):
    """Full-batch Levenberg-Marquardt training.

    A step is accepted only if it lowers training RMSE (damping / factor);
    otherwise damping is raised (x factor) and the step retried. Returns
    (model, TrainRecord); with verify data the lowest-verify-error epoch wins.
    """
    cfg = cfg or MlpConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    T = np.asarray(T, dtype=float).reshape(len(X), -1)
    if model is None:
        model = init_mlp(X.shape[1], T.shape[1], cfg, seed)
    record = TrainRecord()
    track = X_verify is not None and len(X_verify) > 0
    best, best_v = model, math.inf
    if track:
        best_v = _rmse(mlp_residuals(model, X_verify, T_verify))
    theta = model.params()
    r = mlp_residuals(model, X, T)
    err = _rmse(r)
    lam = cfg.lambda_init
    for epoch in range(cfg.max_epochs):
        if err < cfg.min_error:
            record.stop_reason = "min_error"
            break
        J = mlp_jacobian(model, X)
        accepted = False
        for _ in range(cfg.max_damping_increases + 1):
            delta = lm_step(J, r, lam)
            cand = model.with_params(theta + delta)
            r_new = mlp_residuals(cand, X, T)
            err_new = _rmse(r_new)
            if not math.isfinite(err_new):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch} (lambda={lam:g})")
            if err_new < err:
                accepted = True
                break
            lam *= cfg.lambda_factor
        if not accepted:
            record.stop_reason = "lm_stall"
            break
        model, theta, r, err = cand, theta + delta, r_new, err_new
        lam /= cfg.lambda_factor
        record.rmse.append(err)
        if track:
            v = _rmse(mlp_residuals(model, X_verify, T_verify))
            record.verify_rmse.append(v)
            if v < best_v:
                best, best_v = model, v
    else:
        if cfg.max_epochs > 0:
            record.stop_reason = "max_epochs"
    if record.stop_reason is None and err < cfg.min_error:
        record.stop_reason = "min_error"
    return (best if track else model), record


# -- RBF ----------------------------------------------------------------------

@dataclass
class RbfConfig:
    sigma: float = 80.0
    radius: float = 0.2  # canonical 0.5 underfits with sigma=80 on normalized inputs
    squash: float = 1.25
    accept: float = 0.5
    reject: float = 0.15
    ridge: float = 1e-8
    max_epochs: int = 30  # upper bound; the closed-form solve needs one pass
    min_error: float = 1e-5


@dataclass
class RbfModel:
    centers: np.ndarray  # (m, d)
    sigma: float
    weights: np.ndarray  # (m + 1, outputs), last row is the bias
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def activations(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d2 = np.sum((X[:, None, :] - self.centers[None]) ** 2, axis=2)
        H = np.exp(-d2 / (2.0 * self.sigma ** 2))
        return np.column_stack([H, np.ones(len(X))])

    def scores(self, X) -> np.ndarray:
        return self.activations(X) @ self.weights

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "sigma": self.sigma,
                "weights": self.weights.tolist(), "notes": self.notes}

    @classmethod
    def from_dict(cls, d) -> "RbfModel":
        return cls(np.array(d["centers"]), float(d["sigma"]), np.array(d["weights"]),
                   list(d.get("notes", [])))


def train_rbf(X, T, cfg: RbfConfig | None = None, centers=None) -> RbfModel:
    """Centres by subtractive clustering, output weights by linear least squares.

    Clustering runs on the data rescaled to [0, 1] per column and the centres
    are mapped back, so raw-unit inputs work as well as normalized ones.
    """
    from .anfis import subtractive_cluster

    cfg = cfg or RbfConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    T = np.asarray(T, dtype=float).reshape(len(X), -1)
    notes = []
    if centers is None:
        lo, span = X.min(axis=0), np.ptp(X, axis=0)
        span = np.where(span > 0, span, 1.0)
        unit = subtractive_cluster((X - lo) / span, cfg.radius, cfg.squash, cfg.accept, cfg.reject)
        centers = unit * span + lo
    diameter = float(np.linalg.norm(np.ptp(X, axis=0)))
    if diameter > 0 and cfg.sigma > 10.0 * diameter:
        msg = f"sigma={cfg.sigma:g} exceeds 10x the data diameter ({diameter:.3g}); activations are near 1"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    model = RbfModel(centers, cfg.sigma, np.zeros((len(np.atleast_2d(centers)) + 1, T.shape[1])), notes)
    Phi = model.activations(X)
    if np.linalg.matrix_rank(Phi) < Phi.shape[1]:
        A = Phi.T @ Phi + cfg.ridge * np.eye(Phi.shape[1])
        model.weights = np.linalg.solve(A, Phi.T @ T)
        notes.append(f"singular hidden activations; ridge {cfg.ridge:g} used")
    else:
        model.weights, *_ = np.linalg.lstsq(Phi, T, rcond=None)
    return model


# -- decoding and evaluation --------------------------------------------------

def classify(scores) -> np.ndarray | int:
    """Argmax over class scores; ties go to the lowest class index."""
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        return int(np.argmax(s))
    return np.argmax(s, axis=1)


@dataclass
class EvaluationReport:
    confusion: np.ndarray  # rows = true class, cols = predicted
    recall: np.ndarray  # nan where a class has no test samples
    accuracy: float

    @property
    def mean_recall(self) -> float:
        return float(np.nanmean(self.recall))

    def to_dict(self) -> dict:
        return {"confusion": self.confusion.tolist(),
                "recall": [None if math.isnan(r) else float(r) for r in self.recall],
                "accuracy": self.accuracy}


def evaluate_classifier(y_true, y_pred, n_classes: int = 5) -> EvaluationReport:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    C = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(C, (y_true, y_pred), 1)
    rows = C.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(rows > 0, np.diag(C) / np.maximum(rows, 1), np.nan)
    total = C.sum()
    return EvaluationReport(C, recall, float(np.trace(C) / total) if total else float("nan"))
