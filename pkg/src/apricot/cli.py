"""Command-line entry point: ``apricot <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment, imaging, massmodel, stats, synthgen
from .classifiers import classify, evaluate_classifier
from .dataset import FEATURE_NAMES, VARIETIES, Dataset, Split, fit_normalizer, read_features_csv, split
from .experiment import StageError

log = logging.getLogger("apricot")


def _config(args) -> experiment.ExperimentConfig:
    cfg = experiment.load_config(args.config) if getattr(args, "config", None) else experiment.ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "repeats", None) is not None:
        overrides["repeats"] = args.repeats
    if getattr(args, "models", None):
        overrides["models"] = tuple(m.strip() for m in args.models.split(",") if m.strip())
    if getattr(args, "per_variety", None) is not None:
        overrides["per_variety"] = args.per_variety
    if getattr(args, "spread_scale", None) is not None:
        overrides["spread_scale"] = args.spread_scale
    if getattr(args, "write_images", False):
        overrides["write_images"] = True
    return replace(cfg, **overrides) if overrides else cfg


def _load_split(args, labels) -> Split:
    if args.split:
        return Split.from_json(Path(args.split).read_text())
    return split(labels, seed=args.seed if args.seed is not None else 0)


# -- subcommands --------------------------------------------------------------

def cmd_synth(args) -> None:
    cfg = _config(args)
    out = Path(args.out_dir)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    population = synthgen.generate_population(cfg.variety_params(), cfg.per_variety, cfg.seed,
                                              cfg.mass_noise)
    experiment.write_manifest(out / "manifest.csv", population)
    r = experiment.CALIBRATION_TARGET_MM / 2.0
    imaging.write_pgm(out / "calibration.pgm",
                      synthgen.render_silhouette(r, r, 2.0, cfg.render.noise_free))
    (out / "calibration.json").write_text(json.dumps(
        {"known_mm": [experiment.CALIBRATION_TARGET_MM] * 2, "image": "calibration.pgm"}, indent=2))
    if not args.no_images:
        for fid, fruit in population:
            for k, view in enumerate(synthgen.render_views(fruit, cfg.render), 1):
                imaging.write_pgm(img_dir / f"{fid}_v{k}.pgm", view)
    log.info("wrote %d fruits to %s", len(population), out)


def cmd_extract(args) -> None:
    img_dir = Path(args.images)
    if args.mm_per_pixel:
        scale = imaging.CalibrationScale.from_mm_per_pixel(args.mm_per_pixel)
    else:
        calib_json = Path(args.calibration or img_dir.parent / "calibration.json")
        meta = json.loads(calib_json.read_text())
        target = imaging.read_pgm(calib_json.parent / meta["image"])
        m = imaging.measure_view(imaging.segment(target), imaging.CalibrationScale(1.0, 1.0))
        scale = imaging.calibrate(tuple(meta["known_mm"]), (m.extent_h, m.extent_v))
    with open(args.manifest, newline="") as fh:
        manifest = list(csv.DictReader(fh))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "variety", *FEATURE_NAMES[:6]])
        for row in manifest:
            views = [imaging.read_pgm(img_dir / f"{row['id']}_v{k}.pgm") for k in (1, 2, 3)]
            feats = imaging.extract_features(views, scale)
            w.writerow([row["id"], row["variety"], *(f"{v:.6f}" for v in feats)])
    log.info("mm_per_pixel = %.6f; features for %d fruits -> %s", scale.mm_per_pixel, len(manifest), args.out)


def _features_with_actual_mass(features_path, manifest_path) -> Dataset:
    data = read_features_csv(features_path, require_mass=False)
    with open(manifest_path, newline="") as fh:
        mass = {r["id"]: float(r["mass_g"]) for r in csv.DictReader(fh)}
    return data.with_mass([mass[i] for i in data.ids])


def cmd_fit_mass(args) -> None:
    data = _features_with_actual_mass(args.features, args.manifest)
    sp = _load_split(args, data.labels)
    tr, ve = np.asarray(sp.train), np.asarray(sp.verify)
    res = massmodel.subset_search(data.X[tr, :6], data.X[tr, 6], data.X[ve, :6], data.X[ve, 6])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    full = massmodel.evaluate(res.best, data.X[:, :6], data.X[:, 6])
    massmodel.save_model(out / "mass_model.json", res.best,
                         {"verify": res.best_metrics.to_dict(), "all_samples": full.to_dict()})
    experiment._write_mass_table(out / "mass_search.csv", res.table)
    (out / "split.json").write_text(sp.to_json())
    print(f"best subset: {'+'.join(res.best.features)}  verify RMSE {res.best_metrics.rmse:.3f} g  "
          f"R^2 {res.best_metrics.r_squared:.4f}")


def cmd_predict_mass(args) -> None:
    model = massmodel.load_model(args.model)
    data = read_features_csv(args.features, require_mass=False)
    est = massmodel.predict_mass(model, data.X[:, :6])
    experiment.write_features(Path(args.out), data.with_mass(est), "mass")


def cmd_train(args) -> None:
    cfg = _config(args)
    data = read_features_csv(args.features)
    sp = _load_split(args, data.labels)
    tr, ve = np.asarray(sp.train), np.asarray(sp.verify)
    norm = fit_normalizer(data.X[tr])
    Z = norm.apply(data.X)
    seed = args.seed if args.seed is not None else 0
    model = experiment.fit_classifier(args.model, Z[tr], data.labels[tr], Z[ve], data.labels[ve], cfg, seed)
    payload = experiment.model_payload(args.model, model, norm, meta={"seed": seed, "split": json.loads(sp.to_json())})
    Path(args.out).write_text(json.dumps(payload, sort_keys=True))
    log.info("trained %s -> %s", args.model, args.out)


def cmd_evaluate(args) -> None:
    payload = json.loads(Path(args.model).read_text())
    kind, model, norm, _ = experiment.model_from_payload(payload)
    data = read_features_csv(args.features)
    if args.split:
        idx = np.asarray(Split.from_json(Path(args.split).read_text()).test)
    elif "split" in payload.get("meta", {}):
        idx = np.asarray(payload["meta"]["split"]["test"])
    else:
        idx = np.arange(len(data))
    pred = classify(model.scores(norm.apply(data.X[idx])))
    rep = evaluate_classifier(data.labels[idx], pred, len(VARIETIES))
    result = {"model": kind, **rep.to_dict(), "mean_recall": rep.mean_recall}
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)


def cmd_run(args) -> None:
    cfg = _config(args)
    report = experiment.run_experiment(cfg, args.out_dir)
    print(experiment.render_text_report(report), end="")


def cmd_stats(args) -> None:
    data = _features_with_actual_mass(args.features, args.manifest)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = {"dimensions_by_variety.csv": ("L", "W", "T"), "areas_by_variety.csv": ("PA1", "PA2", "PA3"),
              "mass_by_variety.csv": ("mass",)}
    for fname, feats in tables.items():
        rows = []
        for feat in feats:
            col = FEATURE_NAMES.index(feat)
            groups = {v: data.X[data.labels == k, col] for k, v in enumerate(VARIETIES)
                      if np.sum(data.labels == k) >= 2}
            F, p = stats.anova_oneway(list(groups.values()))
            for s in stats.summarize(groups, args.alpha):
                rows.append([feat, s.label, s.n, f"{s.mean:.2f}", f"{s.std:.2f}", s.letters,
                             f"{F:.4f}", f"{p:.3e}"])
        with open(out / fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["feature", "variety", "n", "mean", "std", "letters", "anova_F", "anova_p"])
            w.writerows(rows)
    with open(args.manifest, newline="") as fh:
        truth = {r["id"]: r for r in csv.DictReader(fh)}
    with open(out / "dimension_pairs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "dimension", "estimated_mm", "actual_mm"])
        for dim in ("L", "W", "T"):
            col = FEATURE_NAMES.index(dim)
            for i, x in zip(data.ids, data.X):
                w.writerow([i, dim, f"{x[col]:.6f}", truth[i][f"{dim}_mm"]])
    for dim in ("L", "W", "T"):
        col = FEATURE_NAMES.index(dim)
        r2 = stats.agreement(data.X[:, col], [float(truth[i][f"{dim}_mm"]) for i in data.ids])
        print(f"{dim}: R^2 estimated vs actual = {r2:.4f}")


def cmd_emit_plots(args) -> None:
    summary = experiment.emit_plots(args.run_dir, bins=args.bins)
    print(json.dumps(summary, indent=2, sort_keys=True))


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apricot", description="Synthetic apricot grading pipeline")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="TOML config file")
        if seed:
            sp.add_argument("--seed", type=int)

    s = sub.add_parser("synth", help="generate fruits and three-view PGM images")
    common(s)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--per-variety", type=int)
    s.add_argument("--spread-scale", type=float)
    s.add_argument("--no-images", action="store_true", help="write the manifest only")
    s.set_defaults(func=cmd_synth, stage="synth")

    s = sub.add_parser("extract", help="measure features from PGM views")
    s.add_argument("--manifest", required=True)
    s.add_argument("--images", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--calibration", help="calibration.json (defaults to the synth output)")
    s.add_argument("--mm-per-pixel", type=float, help="skip the calibration target")
    s.set_defaults(func=cmd_extract, stage="extract")

    s = sub.add_parser("fit-mass", help="exhaustive linear mass-model search")
    common(s)
    s.add_argument("--features", required=True)
    s.add_argument("--manifest", required=True, help="synth manifest with actual masses")
    s.add_argument("--split", help="split JSON (default: stratified split from --seed)")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_fit_mass, stage="fit-mass")

    s = sub.add_parser("predict-mass", help="append model-estimated mass to a features CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict_mass, stage="predict-mass")

    s = sub.add_parser("train", help="train one classifier")
    common(s)
    s.add_argument("--features", required=True, help="features CSV with a mass column")
    s.add_argument("--model", required=True, choices=experiment.MODEL_NAMES)
    s.add_argument("--split")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train, stage="train")

    s = sub.add_parser("evaluate", help="evaluate a trained classifier")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--split")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate, stage="evaluate")

    s = sub.add_parser("run", help="end-to-end experiment")
    common(s)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--repeats", type=int)
    s.add_argument("--models", help=f"comma-separated subset of {','.join(experiment.MODEL_NAMES)}")
    s.add_argument("--per-variety", type=int)
    s.add_argument("--spread-scale", type=float)
    s.add_argument("--write-images", action="store_true")
    s.set_defaults(func=cmd_run, stage="run")

    s = sub.add_parser("stats", help="descriptive tables with significance letters")
    s.add_argument("--features", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--alpha", type=float, default=0.01)
    s.set_defaults(func=cmd_stats, stage="stats")

    s = sub.add_parser("emit-plots", help="scatter and histogram CSVs from a run directory")
    s.add_argument("--run-dir", required=True)
    s.add_argument("--bins", type=int, default=20)
    s.set_defaults(func=cmd_emit_plots, stage="emit-plots")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"error: [{args.stage}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
