"""End-to-end experiment: synthesize, measure, fit mass, classify, report."""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import anfis, classifiers, imaging, massmodel, synthgen
from .dataset import (FEATURE_NAMES, VARIETIES, Dataset, Normalizer, Split, fit_normalizer,
                      one_hot, split)

log = logging.getLogger(__name__)

MODEL_NAMES = ("mlp", "rbf", "anfis-grid", "anfis-sub", "anfis-fcm")
MODEL_LABELS = {
    "mlp": "MLP",
    "rbf": "RBF",
    "anfis-grid": "ANFIS (Grid Partitioning)",
    "anfis-sub": "ANFIS (Subtractive Class)",
    "anfis-fcm": "ANFIS (C-means)",
}
# reference accuracies (%) per variety and mean, as published
PUBLISHED_ACCURACY = {
    "mlp": (77.1, 85.5, 82.7, 84.0, 82.6, 83.6),
    "rbf": (77.3, 81.8, 79.8, 79.6, 79.8, 80.6),
    "anfis-grid": (85.1, 88.2, 86.9, 85.3, 86.6, 87.5),
    "anfis-sub": (85.9, 88.6, 84.7, 81.1, 84.9, 84.1),
    "anfis-fcm": (80.6, 87.2, 85.1, 84.5, 85.0, 87.7),
}
_ANFIS_METHOD = {"anfis-grid": "grid", "anfis-sub": "subtractive", "anfis-fcm": "fcm"}
CALIBRATION_TARGET_MM = 30.0


class StageError(RuntimeError):
    """Failure tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class ExperimentConfig:
    varieties: str = "published"
    spread_scale: float = 1.0
    per_variety: int = 49
    mass_noise: float = 0.02
    render: synthgen.RenderConfig = field(default_factory=synthgen.RenderConfig)
    ratios: tuple = (0.70, 0.15, 0.15)
    repeats: int = 10
    seed: int = 2020
    models: tuple = MODEL_NAMES
    write_images: bool = False
    mlp: classifiers.MlpConfig = field(default_factory=classifiers.MlpConfig)
    rbf: classifiers.RbfConfig = field(default_factory=classifiers.RbfConfig)
    anfis: anfis.AnfisConfig = field(default_factory=anfis.AnfisConfig)

    def __post_init__(self):
        self.ratios = tuple(float(r) for r in self.ratios)
        self.models = tuple(self.models)
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {self.ratios}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.models:
            raise ValueError("model roster is empty")
        unknown = set(self.models) - set(MODEL_NAMES)
        if unknown:
            raise ValueError(f"unknown models: {sorted(unknown)}")

    def variety_params(self) -> list[synthgen.VarietyParams]:
        if self.varieties != "published":
            raise ValueError(f"unknown variety source {self.varieties!r}")
        return [v.scaled_spread(self.spread_scale) for v in synthgen.default_varieties()]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratios"] = list(self.ratios)
        d["models"] = list(self.models)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        nested = {"render": synthgen.RenderConfig, "mlp": classifiers.MlpConfig,
                  "rbf": classifiers.RbfConfig, "anfis": anfis.AnfisConfig}
        kwargs = {}
        known = {f.name for f in fields(cls)}
        for key, value in d.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            if key in nested:
                value = nested[key](**value)
            kwargs[key] = value
        return cls(**kwargs)


def load_config(path) -> ExperimentConfig:
    import tomli

    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    flat = dict(raw.pop("run", {}))
    flat.update(raw)
    return ExperimentConfig.from_dict(flat)


def repeat_seed(master: int, repeat: int) -> int:
    return int(np.random.SeedSequence([master, repeat]).generate_state(1)[0])


# -- imaging stage ------------------------------------------------------------

def calibration_scale(render: synthgen.RenderConfig) -> imaging.CalibrationScale:
    """Image a disc of known diameter and derive the rig's mm-per-pixel constant."""
    r = CALIBRATION_TARGET_MM / 2.0
    img = synthgen.render_silhouette(r, r, 2.0, render.noise_free)
    m = imaging.measure_view(imaging.segment(img), imaging.CalibrationScale(1.0, 1.0))
    return imaging.calibrate((CALIBRATION_TARGET_MM, CALIBRATION_TARGET_MM), (m.extent_h, m.extent_v))


def build_dataset(cfg: ExperimentConfig, out_dir: Path | None = None):
    """Generate fruits, render and measure them.

    Returns (Dataset with measured features + actual mass, list of (id, fruit)).
    """
    population = synthgen.generate_population(cfg.variety_params(), cfg.per_variety, cfg.seed,
                                              cfg.mass_noise)
    scale = calibration_scale(cfg.render)
    img_dir = None
    if out_dir is not None and cfg.write_images:
        img_dir = out_dir / "images"
        img_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for fid, fruit in population:
        views = synthgen.render_views(fruit, cfg.render)
        if img_dir is not None:
            for k, v in enumerate(views, 1):
                imaging.write_pgm(img_dir / f"{fid}_v{k}.pgm", v)
        rows.append(imaging.extract_features(views, scale) + (fruit.mass,))
    data = Dataset([fid for fid, _ in population],
                   np.array([VARIETIES.index(f.variety) for _, f in population]),
                   np.array(rows, dtype=float))
    return data, population


# -- models -------------------------------------------------------------------

def fit_classifier(name: str, Z, y, Zv, yv, cfg: ExperimentConfig, seed: int):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if name == "mlp":
            model, _ = classifiers.train_mlp(Z, one_hot(y), cfg.mlp, seed, Zv, one_hot(yv))
            return model
        if name == "rbf":
            return classifiers.train_rbf(Z, one_hot(y), cfg.rbf)
        model, _ = anfis.anfis_classify_ensemble(Z, y, Zv, yv, _ANFIS_METHOD[name], seed,
                                                 len(VARIETIES), cfg.anfis)
        return model


def model_payload(name: str, model, normalizer: Normalizer,
                  mass_model: massmodel.LinearModel | None = None, meta: dict | None = None) -> dict:
    return {"kind": name, "model": model.to_dict(), "normalizer": normalizer.to_dict(),
            "mass_model": None if mass_model is None else mass_model.to_dict(),
            "meta": meta or {}}


def model_from_payload(payload: dict):
    kind = payload["kind"]
    if kind == "mlp":
        model = classifiers.MlpModel.from_dict(payload["model"])
    elif kind == "rbf":
        model = classifiers.RbfModel.from_dict(payload["model"])
    elif kind in _ANFIS_METHOD:
        model = anfis.AnfisClassifier.from_dict(payload["model"])
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    mass = payload.get("mass_model")
    return (kind, model, Normalizer.from_dict(payload["normalizer"]),
            None if mass is None else massmodel.LinearModel.from_dict(mass))


# -- one repeat ---------------------------------------------------------------

def run_repeat(data: Dataset, sp: Split, cfg: ExperimentConfig, seed: int) -> dict:
    """Mass fit, mass replacement, normalization and every roster model for one split.

    Actual masses are read only from the train and verify partitions.
    """
    tr, te, ve = (np.asarray(p, dtype=int) for p in (sp.train, sp.test, sp.verify))
    try:
        search = massmodel.subset_search(data.X[tr, :6], data.X[tr, 6], data.X[ve, :6], data.X[ve, 6])
    except Exception as exc:  # noqa: BLE001
        raise StageError("fit-mass", str(exc)) from exc
    est = massmodel.predict_mass(search.best, data.X[:, :6])
    work = data.with_mass(est)
    norm = fit_normalizer(work.X[tr])
    Z = norm.apply(work.X)
    y = data.labels
    out = {"seed": seed, "split": {"train": sp.train, "test": sp.test, "verify": sp.verify},
           "mass_model": search.best.to_dict(), "mass_verify": search.best_metrics.to_dict(),
           "mass_table": search.table, "models": {}, "fitted": {}, "notes": {}}
    for name in cfg.models:
        try:
            model = fit_classifier(name, Z[tr], y[tr], Z[ve], y[ve], cfg, seed)
        except Exception as exc:  # noqa: BLE001
            raise StageError(f"train:{name}", str(exc)) from exc
        pred = classifiers.classify(model.scores(Z[te]))
        rep = classifiers.evaluate_classifier(y[te], pred, len(VARIETIES))
        out["models"][name] = rep.to_dict()
        if getattr(model, "notes", None):
            out["notes"][name] = list(model.notes)
        out["fitted"][name] = model_payload(name, model, norm, search.best, {"seed": seed})
    return out


# -- aggregation and reporting ------------------------------------------------

def aggregate(repeats: list[dict], roster) -> dict:
    """Average per-variety recall over completed repeats; mean column is the
    mean of the averaged per-variety recalls."""
    table = {}
    for name in roster:
        recalls = np.array([[np.nan if r is None else r for r in rep["models"][name]["recall"]]
                            for rep in repeats if name in rep.get("models", {})], dtype=float)
        if recalls.size == 0:
            continue
        per_variety = np.nanmean(recalls, axis=0) * 100.0
        accuracy = np.mean([rep["models"][name]["accuracy"] for rep in repeats
                            if name in rep.get("models", {})]) * 100.0
        table[name] = {
            "per_variety": [_r(v) for v in per_variety],
            "mean": _r(float(np.nanmean(per_variety))),
            "overall_accuracy": _r(float(accuracy)),
        }
    return table


def _r(v: float, nd: int = 6) -> float | None:
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else round(float(v), nd)


def render_accuracy_table(table: dict) -> str:
    head = ["", *[f"{v} (%)" for v in VARIETIES], "Mean (%)"]
    lines = ["\t".join(head)]
    for name, row in table.items():
        cells = [f"{v:.1f}" if v is not None else "n/a" for v in row["per_variety"]]
        lines.append("\t".join([MODEL_LABELS[name], *cells, f"{row['mean']:.1f}"]))
    return "\n".join(lines)


def render_text_report(report: dict) -> str:
    lines = ["Variety classification, averaged over repeats", "",
             render_accuracy_table(report["accuracy"]), "",
             "Published reference (same layout)", "",
             render_accuracy_table({k: {"per_variety": list(v[:5]), "mean": v[5]}
                            for k, v in PUBLISHED_ACCURACY.items() if k in report["accuracy"]}), ""]
    order = sorted(report["accuracy"], key=lambda k: -report["accuracy"][k]["mean"])
    lines.append("Ranking on synthetic data: " + " > ".join(MODEL_LABELS[k] for k in order))
    lines.append("Published ranking: ANFIS (C-means) > ANFIS (Grid) > ANFIS (Subtractive) > MLP > RBF")
    m = report["mass"]
    lines += ["", f"Mass model (repeat 0): {'+'.join(m['features'])}; verify R^2 = {m['verify']['r_squared']:.4f}, "
              f"RMSE = {m['verify']['rmse']:.3f} g, error std = {m['verify']['std_error']:.3f} g"]
    if m["features"] != ["L", "W"]:
        lines.append("Note: the selected subset differs from the published length+width mass model.")
    if report["incomplete"]:
        lines.append(f"Incomplete repeats: {report['incomplete']}")
    for note in report.get("notes", []):
        lines.append(f"Note: {note}")
    return "\n".join(lines) + "\n"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def write_manifest(path: Path, population) -> None:
    _write_csv(path, ["id", "variety", "L_mm", "W_mm", "T_mm", "mass_g", "seed"],
               [[fid, f.variety, _fmt(f.L), _fmt(f.W), _fmt(f.T), _fmt(f.mass), f.seed]
                for fid, f in population])


def write_features(path: Path, data: Dataset, mass_header: str = "mass") -> None:
    _write_csv(path, ["id", "variety", *FEATURE_NAMES[:6], mass_header],
               [[i, VARIETIES[c], *(_fmt(float(v)) for v in x)]
                for i, c, x in zip(data.ids, data.labels, data.X)])


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run every repeat, write artifacts under ``out_dir`` and return the report dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.info("building dataset: %d varieties x %d", len(VARIETIES), cfg.per_variety)
    try:
        data, population = build_dataset(cfg, out)
    except Exception as exc:  # noqa: BLE001
        raise StageError("synth/extract", str(exc)) from exc
    write_manifest(out / "manifest.csv", population)
    write_features(out / "features.csv", data, "mass_actual")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))

    repeats, incomplete, seeds = [], [], []
    for r in range(cfg.repeats):
        seed = repeat_seed(cfg.seed, r)
        seeds.append(seed)
        sp = split(data.labels, cfg.ratios, seed)
        rdir = out / f"repeat_{r:02d}"
        rdir.mkdir(exist_ok=True)
        (rdir / "split.json").write_text(sp.to_json())
        try:
            res = run_repeat(data, sp, cfg, seed)
        except StageError as exc:
            log.error("repeat %d failed: %s", r, exc)
            incomplete.append({"repeat": r, "seed": seed, "error": str(exc)})
            continue
        massmodel.save_model(rdir / "mass_model.json", massmodel.LinearModel.from_dict(res["mass_model"]),
                             res["mass_verify"])
        _write_mass_table(rdir / "mass_search.csv", res["mass_table"])
        for name, payload in res.pop("fitted").items():
            (rdir / f"model_{name}.json").write_text(json.dumps(payload, sort_keys=True))
        res.pop("mass_table")
        res["repeat"] = r
        repeats.append(res)
        log.info("repeat %d: %s", r, {k: round(v["accuracy"], 3) for k, v in res["models"].items()})

    if not repeats:
        raise StageError("run", "every repeat failed")
    first = repeats[0]
    notes = [f"{MODEL_LABELS[name]} (repeat {first['repeat']}): {n}"
             for name, ns in first["notes"].items() for n in ns]
    report = {
        "config": cfg.to_dict(),
        "seeds": seeds,
        "accuracy": aggregate(repeats, cfg.models),
        "published_accuracy": {k: list(v) for k, v in PUBLISHED_ACCURACY.items()},
        "repeats": repeats,
        "incomplete": incomplete,
        "mass": {"features": first["mass_model"]["features"], "verify": first["mass_verify"]},
        "notes": notes,
    }
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    (out / "report.txt").write_text(render_text_report(report))
    _write_csv(out / "accuracy.csv", ["model", *VARIETIES, "mean"],
               [[MODEL_LABELS[k], *(_fmt(v) for v in row["per_variety"]), _fmt(row["mean"])]
                for k, row in report["accuracy"].items()])
    return report


def _write_mass_table(path: Path, table: list[dict]) -> None:
    cols = ["features", "n_features", "status", "train_rmse", "train_r2", "verify_rmse",
            "verify_std", "verify_mean_error", "verify_r2"]
    _write_csv(path, cols, [[_fmt(row.get(c, "")) for c in cols] for row in table])


# -- plot data ----------------------------------------------------------------

def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def histogram_rows(values, bins: int = 20):
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins)
    return [[_fmt(float(edges[i])), _fmt(float(edges[i + 1])), int(counts[i])] for i in range(bins)]


def emit_plots(run_dir, bins: int = 20) -> dict:
    """Write scatter/histogram CSVs for mass and dimension agreement."""
    run = Path(run_dir)
    needed = [run / "features.csv", run / "manifest.csv", run / "repeat_00" / "mass_model.json"]
    missing = [str(p) for p in needed if not p.exists()]
    if missing:
        raise StageError("emit-plots", f"missing run artifacts: {missing}")
    feats = _read_csv(needed[0])
    truth = {r["id"]: r for r in _read_csv(needed[1])}
    model = massmodel.load_model(needed[2])
    F = np.array([[float(r[k]) for k in FEATURE_NAMES[:6]] for r in feats])
    actual = np.array([float(r["mass_actual"]) for r in feats])
    pred = massmodel.predict_mass(model, F)
    resid = pred - actual
    _write_csv(run / "mass_scatter.csv", ["id", "actual_g", "predicted_g"],
               [[r["id"], _fmt(float(a)), _fmt(float(p))] for r, a, p in zip(feats, actual, pred)])
    _write_csv(run / "mass_error_histogram.csv", ["bin_lo", "bin_hi", "count"], histogram_rows(resid, bins))
    from .stats import agreement
    summary = {"mass_r2": agreement(pred, actual), "residual_mean": float(resid.mean()),
               "residual_std": float(resid.std(ddof=1)), "n": int(resid.size), "dimensions": {}}
    for dim, col in (("L", "L_mm"), ("W", "W_mm"), ("T", "T_mm")):
        est = np.array([float(r[dim]) for r in feats])
        act = np.array([float(truth[r["id"]][col]) for r in feats])
        _write_csv(run / f"{dim}_scatter.csv", ["id", "actual_mm", "estimated_mm"],
                   [[r["id"], _fmt(float(a)), _fmt(float(e))] for r, a, e in zip(feats, act, est)])
        summary["dimensions"][dim] = agreement(est, act)
    (run / "plots_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
