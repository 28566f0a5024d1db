"""Samples, stratified splits and min-max input scaling."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEATURE_NAMES = ("L", "W", "T", "PA1", "PA2", "PA3", "mass")
VARIETIES = ("Ordubad", "Shahrod", "Maragheh", "Oromieh", "Nasiri")


class ClassTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    id: str
    variety: str
    features: tuple[float, ...]

    def __post_init__(self):
        if self.variety not in VARIETIES:
            raise ValueError(f"unknown variety {self.variety!r}")
        if len(self.features) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(self.features)}")
        if not all(np.isfinite(x) and x > 0 for x in self.features):
            raise ValueError(f"sample {self.id}: features must be finite and positive")


@dataclass
class Dataset:
    """Column-oriented view: ``X`` is (n, 7) in FEATURE_NAMES order."""
    ids: list[str]
    labels: np.ndarray  # int class index into VARIETIES
    X: np.ndarray

    @classmethod
    def from_samples(cls, samples: list[Sample]) -> "Dataset":
        return cls(
            ids=[s.id for s in samples],
            labels=np.array([VARIETIES.index(s.variety) for s in samples], dtype=int),
            X=np.array([s.features for s in samples], dtype=float).reshape(-1, len(FEATURE_NAMES)),
        )

    def __len__(self):
        return len(self.ids)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset([self.ids[i] for i in idx], self.labels[idx], self.X[idx])

    def with_mass(self, mass) -> "Dataset":
        X = self.X.copy()
        X[:, 6] = mass
        return Dataset(list(self.ids), self.labels.copy(), X)

    def samples(self) -> list[Sample]:
        return [Sample(i, VARIETIES[c], tuple(map(float, x)))
                for i, c, x in zip(self.ids, self.labels, self.X)]


@dataclass(frozen=True)
class Split:
    train: list[int]
    test: list[int]
    verify: list[int]
    seed: int | None = None

    def __post_init__(self):
        sets = [set(self.train), set(self.test), set(self.verify)]
        if sum(map(len, sets)) != len(sets[0] | sets[1] | sets[2]):
            raise ValueError("split partitions overlap")

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "train": self.train, "test": self.test,
                           "verify": self.verify}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Split":
        d = json.loads(text)
        return cls(d["train"], d["test"], d["verify"], d.get("seed"))


def split(labels, ratios=(0.70, 0.15, 0.15), seed: int = 0) -> Split:
    """Stratified split by class.

    Per class of size n: test = round(n * r_test), verify = round(n * r_verify),
    train takes the remainder. Shuffling inside each class is driven by ``seed``.
    """
    labels = np.asarray(labels)
    if abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be non-negative and sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    train, test, verify = [], [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 3:
            raise ClassTooSmallError(f"class {c} has {idx.size} samples; need >= 3")
        idx = rng.permutation(idx)
        n_test = int(round(idx.size * ratios[1]))
        n_verify = int(round(idx.size * ratios[2]))
        n_train = idx.size - n_test - n_verify
        train += idx[:n_train].tolist()
        test += idx[n_train:n_train + n_test].tolist()
        verify += idx[n_train + n_test:].tolist()
    return Split(sorted(train), sorted(test), sorted(verify), seed)


@dataclass
class Normalizer:
    minimum: np.ndarray
    maximum: np.ndarray
    keep: np.ndarray = field(default=None)  # bool mask of retained features

    def __post_init__(self):
        self.minimum = np.asarray(self.minimum, dtype=float)
        self.maximum = np.asarray(self.maximum, dtype=float)
        if np.any(self.maximum < self.minimum):
            raise ValueError("normalizer max < min")
        if self.keep is None:
            self.keep = self.maximum - self.minimum > 0
        self.keep = np.asarray(self.keep, dtype=bool)

    @property
    def dropped(self) -> np.ndarray:
        return ~self.keep

    def apply(self, X) -> np.ndarray:
        """Scale retained columns; out-of-range values are not clipped."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = self.minimum[self.keep], self.maximum[self.keep]
        return (X[:, self.keep] - lo) / (hi - lo)

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist(),
                "keep": self.keep.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Normalizer":
        return cls(np.array(d["min"]), np.array(d["max"]), np.array(d["keep"], dtype=bool))


def fit_normalizer(X_train) -> Normalizer:
    X = np.atleast_2d(np.asarray(X_train, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("need at least one training sample")
    return Normalizer(X.min(axis=0), X.max(axis=0))


def one_hot(labels, n_classes: int = len(VARIETIES)) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


# -- CSV I/O ------------------------------------------------------------------

def read_features_csv(path, require_mass: bool = True, mass_column: str = "mass") -> Dataset:
    """Features CSV with columns id, variety, L, W, T, PA1, PA2, PA3 [, mass].

    Without a mass column the last feature is filled with 1.0.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    has_mass = mass_column in rows[0]
    if require_mass and not has_mass:
        raise ValueError(f"{path}: no {mass_column!r} column")
    X = np.array([[float(r[k]) for k in FEATURE_NAMES[:6]] + [float(r[mass_column]) if has_mass else 1.0]
                  for r in rows])
    labels = np.array([VARIETIES.index(r["variety"]) for r in rows], dtype=int)
    return Dataset([r["id"] for r in rows], labels, X)


def write_features_csv(path, data: Dataset, include_mass: bool = True) -> None:
    cols = FEATURE_NAMES if include_mass else FEATURE_NAMES[:6]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("id", "variety") + cols)
        for i, c, x in zip(data.ids, data.labels, data.X):
            w.writerow([i, VARIETIES[c]] + [f"{v:.6f}" for v in x[:len(cols)]])
