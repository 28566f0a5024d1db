"""First-order Sugeno ANFIS with Gaussian memberships.

Rule bases come from grid partitioning, subtractive clustering or fuzzy
c-means. Training alternates a global least-squares solve for the linear
consequents with a gradient step on membership centres and widths.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .classifiers import TrainRecord

SIGMA_MIN = 1e-4


class RuleExplosionError(ValueError):
    pass


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class GaussMf:
    center: float
    sigma: float

    def __call__(self, x):
        return np.exp(-((np.asarray(x) - self.center) ** 2) / (2.0 * self.sigma ** 2))


@dataclass(frozen=True)
class Rule:
    antecedent: tuple[GaussMf, ...]
    consequent: tuple[float, ...]  # p0, p1..pd


@dataclass
class FisModel:
    """Rules stored as arrays: centers/sigmas (R, d), consequents (R, d + 1)."""
    centers: np.ndarray
    sigmas: np.ndarray
    consequents: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.sigmas = np.atleast_2d(np.asarray(self.sigmas, dtype=float))
        R, d = self.centers.shape
        if R < 1:
            raise ValueError("a fuzzy system needs at least one rule")
        if self.sigmas.shape != (R, d):
            raise ValueError("sigmas must match centers in shape")
        if np.any(self.sigmas <= 0):
            raise ValueError("membership widths must be positive")
        if self.consequents is None:
            self.consequents = np.zeros((R, d + 1))
        self.consequents = np.asarray(self.consequents, dtype=float).reshape(R, d + 1)

    @property
    def n_rules(self) -> int:
        return self.centers.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.centers.shape[1]

    @property
    def rules(self) -> list[Rule]:
        return [Rule(tuple(GaussMf(float(c), float(s)) for c, s in zip(cr, sr)),
                     tuple(map(float, p)))
                for cr, sr, p in zip(self.centers, self.sigmas, self.consequents)]

    def copy(self) -> "FisModel":
        return FisModel(self.centers.copy(), self.sigmas.copy(), self.consequents.copy(),
                        dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "n_inputs": self.n_inputs,
            "rules": [{"antecedent": [{"center": m.center, "sigma": m.sigma} for m in r.antecedent],
                       "consequent": list(r.consequent)} for r in self.rules],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d) -> "FisModel":
        rules = d["rules"]
        centers = [[m["center"] for m in r["antecedent"]] for r in rules]
        sigmas = [[m["sigma"] for m in r["antecedent"]] for r in rules]
        cons = [r["consequent"] for r in rules]
        return cls(np.array(centers), np.array(sigmas), np.array(cons), dict(d.get("meta", {})))


@dataclass
class FcmResult:
    centers: np.ndarray
    U: np.ndarray
    objective: list[float]


# -- forward pass -------------------------------------------------------------

def _log_firing(model: FisModel, X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - model.centers[None, :, :]
    return -0.5 * np.sum((diff / model.sigmas[None]) ** 2, axis=2)


def fis_forward(model: FisModel, X):
    """Evaluate the fuzzy system on a batch.

    Returns (outputs, normalized firings, raw firings). Normalization is done
    in the log domain relative to the strongest rule, so inputs far from every
    rule still yield normalized firings that sum to one.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} inputs, got {X.shape[1]}")
    logw = _log_firing(model, X)
    w = np.exp(logw)
    shifted = np.exp(logw - logw.max(axis=1, keepdims=True))
    wbar = shifted / shifted.sum(axis=1, keepdims=True)
    f = model.consequents[:, 0][None, :] + X @ model.consequents[:, 1:].T
    return np.sum(wbar * f, axis=1), wbar, w


def _design(wbar: np.ndarray, X: np.ndarray) -> np.ndarray:
    # row n: [wbar_r * 1, wbar_r * x_1, ..., wbar_r * x_d] for each rule r
    Xt = np.column_stack([np.ones(X.shape[0]), X])
    return (wbar[:, :, None] * Xt[:, None, :]).reshape(X.shape[0], -1)


def rmse(model: FisModel, X, y) -> float:
    out, _, _ = fis_forward(model, X)
    return float(np.sqrt(np.mean((out - np.asarray(y)) ** 2)))


# -- rule generation ----------------------------------------------------------

def grid_partition(ranges, mfs_per_input: int = 2, max_rules: int = 512) -> FisModel:
    """Cartesian-product rule base over evenly spaced Gaussian MFs per input."""
    ranges = np.atleast_2d(np.asarray(ranges, dtype=float))
    d = ranges.shape[0]
    n_rules = mfs_per_input ** d
    if n_rules > max_rules:
        raise RuleExplosionError(f"{mfs_per_input}^{d} = {n_rules} rules exceeds cap {max_rules}")
    per_input_c, per_input_s = [], []
    for lo, hi in ranges:
        width = hi - lo if hi > lo else 1.0
        per_input_c.append(np.linspace(lo, hi, mfs_per_input) if mfs_per_input > 1
                           else np.array([(lo + hi) / 2.0]))
        per_input_s.append(width / (2.0 * (mfs_per_input - 1)) if mfs_per_input > 1 else width / 2.0)
    combos = list(itertools.product(range(mfs_per_input), repeat=d))
    centers = np.array([[per_input_c[i][j] for i, j in enumerate(c)] for c in combos])
    sigmas = np.tile(np.array(per_input_s), (len(combos), 1))
    return FisModel(centers, sigmas, None, {"method": "grid", "mfs_per_input": mfs_per_input})


def subtractive_cluster(data, radius: float = 0.5, squash: float = 1.25,
                        accept: float = 0.5, reject: float = 0.15) -> np.ndarray:
    """Density-based cluster centres by iterative potential subtraction."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("cannot cluster empty data")
    alpha = 4.0 / radius ** 2
    beta = 4.0 / (squash * radius) ** 2
    d2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=2)
    potential = np.exp(-alpha * d2).sum(axis=1)
    first = potential.max()
    centers: list[int] = []
    while True:
        k = int(np.argmax(potential))
        pk = potential[k]
        if pk <= 0:
            break
        if not centers:
            take = True
        elif pk > accept * first:
            take = True
        elif pk < reject * first:
            break
        else:
            dmin = math.sqrt(min(d2[k, c] for c in centers))
            take = dmin / radius + pk / first >= 1.0
        if not take:
            potential[k] = 0.0
            continue
        centers.append(k)
        potential = potential - pk * np.exp(-beta * d2[k])
        potential[k] = 0.0
        if len(centers) >= X.shape[0]:
            break
    return X[centers].copy()


def _fcm_memberships(X, V, m):
    d2 = np.sum((X[:, None, :] - V[None, :, :]) ** 2, axis=2)
    U = np.empty_like(d2)
    zero = d2 <= 1e-300
    crisp = zero.any(axis=1)
    if np.any(~crisp):
        dd = d2[~crisp]
        # u_ik = 1 / sum_j (d_ik / d_ij)^(2/(m-1)), written with squared distances
        ratio = (dd[:, :, None] / dd[:, None, :]) ** (1.0 / (m - 1.0))
        U[~crisp] = 1.0 / ratio.sum(axis=2)
    if np.any(crisp):
        z = zero[crisp].astype(float)
        U[crisp] = z / z.sum(axis=1, keepdims=True)
    return U, d2


def fcm(data, c: int, m: float = 2.0, tol: float = 1e-5, max_iter: int = 100,
        seed: int = 0) -> FcmResult:
    """Fuzzy c-means by alternating centre and membership updates."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    n = X.shape[0]
    if c < 1 or c > n:
        raise ValueError(f"need 1 <= c <= n, got c={c}, n={n}")
    if m <= 1:
        raise ValueError("fuzzifier must exceed 1")
    rng = np.random.default_rng(seed)
    U = rng.dirichlet(np.ones(c), size=n) if c > 1 else np.ones((n, 1))
    trace = []
    for _ in range(max_iter):
        um = U ** m
        V = (um.T @ X) / um.sum(axis=0)[:, None]
        d2 = np.sum((X[:, None, :] - V[None, :, :]) ** 2, axis=2)
        trace.append(float(np.sum(um * d2)))
        U_new, _ = _fcm_memberships(X, V, m)
        delta = np.abs(U_new - U).max()
        U = U_new
        if delta < tol:
            break
    um = U ** m
    V = (um.T @ X) / um.sum(axis=0)[:, None]
    if c == 1:
        V = X.mean(axis=0, keepdims=True)
    d2 = np.sum((X[:, None, :] - V[None, :, :]) ** 2, axis=2)
    trace.append(float(np.sum(um * d2)))
    return FcmResult(V, U, trace)


def fis_from_clusters(clusters, data, radius: float = 0.5, m: float = 2.0) -> FisModel:
    """One rule per cluster centre.

    With an array of centres (subtractive clustering) every MF width is
    radius * range_i / sqrt(8). With an FcmResult the width is the
    membership-weighted spread of the cluster, floored at 1e-3 * range_i.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    span = np.ptp(X, axis=0)
    span = np.where(span > 0, span, 1.0)
    if isinstance(clusters, FcmResult):
        V = np.asarray(clusters.centers, dtype=float)
        um = clusters.U ** m
        d2 = (X[:, None, :] - V[None, :, :]) ** 2
        var = np.einsum("nk,nkd->kd", um, d2) / um.sum(axis=0)[:, None]
        sigmas = np.maximum(np.sqrt(var), 1e-3 * span[None, :])
        method = "fcm"
    else:
        V = np.atleast_2d(np.asarray(clusters, dtype=float))
        sigmas = np.tile(radius * span / math.sqrt(8.0), (V.shape[0], 1))
        method = "subtractive"
    return FisModel(V, sigmas, None, {"method": method})


# -- training -----------------------------------------------------------------

def solve_consequents(model: FisModel, X, y, underdetermined_rcond: float = 1e-3) -> FisModel:
    """Least-squares consequents with premises held fixed.

    When there are at least as many consequent parameters as samples the
    system interpolates the data; there the SVD solve drops singular values
    below ``underdetermined_rcond`` times the largest one.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _, wbar, _ = fis_forward(model, X)
    A = _design(wbar, X)
    rcond = underdetermined_rcond if A.shape[1] >= A.shape[0] else None
    p, *_ = np.linalg.lstsq(A, np.asarray(y, dtype=float), rcond=rcond)
    out = model.copy()
    out.consequents = p.reshape(model.n_rules, model.n_inputs + 1)
    return out


def rmse_gradients(model: FisModel, X, y):
    """Gradient of training RMSE w.r.t. (centers, sigmas, consequents)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    out, wbar, _ = fis_forward(model, X)
    e = out - y
    err = math.sqrt(float(np.mean(e * e)))
    if err == 0.0:
        z = np.zeros_like
        return z(model.centers), z(model.sigmas), z(model.consequents)
    g = e / (X.shape[0] * err)  # dRMSE/dy_n
    f = model.consequents[:, 0][None, :] + X @ model.consequents[:, 1:].T
    coef = g[:, None] * (f - out[:, None]) * wbar  # (n, R)
    diff = X[:, None, :] - model.centers[None]  # (n, R, d)
    s = model.sigmas[None]
    grad_c = np.einsum("nr,nrd->rd", coef, diff / s ** 2)
    grad_s = np.einsum("nr,nrd->rd", coef, diff ** 2 / s ** 3)
    Xt = np.column_stack([np.ones(X.shape[0]), X])
    grad_p = np.einsum("n,nr,nj->rj", g, wbar, Xt)
    return grad_c, grad_s, grad_p


def train_hybrid(model: FisModel, X, y, X_verify=None, y_verify=None, epochs: int = 20,
                 min_error: float = 1e-5, lr: float = 0.01, mode: str = "hybrid",
                 underdetermined_rcond: float = 1e-3):
    """Train a FIS; returns (model, TrainRecord).

    ``mode="hybrid"``: each epoch solves the consequents by least squares and
    then takes one gradient step on MF centres and widths.
    ``mode="backprop"``: both parameter groups follow the gradient.
    With verify data, the snapshot with the lowest verify RMSE is returned.
    """
    if mode not in ("hybrid", "backprop"):
        raise ValueError(f"unknown mode {mode!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    cur = model.copy()
    record = TrainRecord()
    track = X_verify is not None and len(X_verify) > 0
    best, best_v = None, math.inf

    def snapshot(m):
        nonlocal best, best_v
        if track:
            v = rmse(m, X_verify, y_verify)
            record.verify_rmse.append(v)
            if v < best_v:
                best, best_v = m.copy(), v

    for epoch in range(epochs):
        if mode == "hybrid":
            cur = solve_consequents(cur, X, y, underdetermined_rcond)
        err = rmse(cur, X, y)
        if not math.isfinite(err):
            raise TrainingDivergedError(f"non-finite training error at epoch {epoch}")
        record.rmse.append(err)
        snapshot(cur)
        if err < min_error:
            record.stop_reason = "min_error"
            break
        gc, gs, gp = rmse_gradients(cur, X, y)
        if not (np.all(np.isfinite(gc)) and np.all(np.isfinite(gs)) and np.all(np.isfinite(gp))):
            raise TrainingDivergedError(f"non-finite gradient at epoch {epoch}")
        cur.centers = cur.centers - lr * gc
        cur.sigmas = np.maximum(cur.sigmas - lr * gs, SIGMA_MIN)
        if mode == "backprop":
            cur.consequents = cur.consequents - lr * gp
    else:
        record.stop_reason = "max_epochs"
        if epochs > 0 and mode == "hybrid":
            cur = solve_consequents(cur, X, y, underdetermined_rcond)
            snapshot(cur)
    cur.meta = {**cur.meta, "epochs": len(record.rmse), "mode": mode}
    if track and best is not None:
        best.meta = dict(cur.meta)
        return best, record
    return cur, record


# -- one-vs-all classifier ----------------------------------------------------

@dataclass
class AnfisClassifier:
    models: list[FisModel]
    method: str

    def scores(self, X) -> np.ndarray:
        return np.column_stack([fis_forward(m, X)[0] for m in self.models])

    def to_dict(self) -> dict:
        return {"method": self.method, "models": [m.to_dict() for m in self.models]}

    @classmethod
    def from_dict(cls, d) -> "AnfisClassifier":
        return cls([FisModel.from_dict(m) for m in d["models"]], d["method"])


@dataclass
class AnfisConfig:
    epochs: int = 20
    min_error: float = 1e-5
    lr: float = 0.01
    mode: str = "hybrid"
    mfs_per_input: int = 2
    max_rules: int = 512
    radius: float = 0.5
    squash: float = 1.25
    accept: float = 0.5
    reject: float = 0.15
    fcm_clusters: int = 5
    fuzzifier: float = 2.0
    underdetermined_rcond: float = 1e-3


def initial_fis(X, method: str, cfg: AnfisConfig, seed: int = 0) -> FisModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if method == "grid":
        ranges = np.column_stack([X.min(axis=0), X.max(axis=0)])
        return grid_partition(ranges, cfg.mfs_per_input, cfg.max_rules)
    if method == "subtractive":
        centers = subtractive_cluster(X, cfg.radius, cfg.squash, cfg.accept, cfg.reject)
        return fis_from_clusters(centers, X, radius=cfg.radius)
    if method == "fcm":
        res = fcm(X, min(cfg.fcm_clusters, X.shape[0]), m=cfg.fuzzifier, seed=seed)
        return fis_from_clusters(res, X, m=cfg.fuzzifier)
    raise ValueError(f"unknown rule-generation method {method!r}")


def anfis_classify_ensemble(X, labels, X_verify=None, labels_verify=None, method: str = "fcm",
                            seed: int = 0, n_classes: int = 5, cfg: AnfisConfig | None = None):
    """One FIS per class, each fit to its one-hot target column.

    Returns (AnfisClassifier, list of TrainRecord). The rule base is built once
    from the training inputs and shared by all class models.
    """
    cfg = cfg or AnfisConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels, dtype=int)
    base = initial_fis(X, method, cfg, seed)
    models, records = [], []
    for k in range(n_classes):
        yk = (labels == k).astype(float)
        yv = None if labels_verify is None else (np.asarray(labels_verify) == k).astype(float)
        fis, rec = train_hybrid(base, X, yk, X_verify, yv, epochs=cfg.epochs,
                                min_error=cfg.min_error, lr=cfg.lr, mode=cfg.mode,
                                underdetermined_rcond=cfg.underdetermined_rcond)
        fis.meta.update(method=method, seed=seed, target_class=k)
        models.append(fis)
        records.append(rec)
    return AnfisClassifier(models, method), records
