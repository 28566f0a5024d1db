"""Run the default and the well-separated experiment and print both tables
next to the published one."""
import argparse
import time
from pathlib import Path

from apricot import experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--seed", type=int, default=2020)
    ap.add_argument("--repeats", type=int, default=10)
    args = ap.parse_args()
    for name, spread in (("default", 1.0), ("separated", 0.25)):
        cfg = experiment.ExperimentConfig(seed=args.seed, repeats=args.repeats, spread_scale=spread)
        t0 = time.perf_counter()
        rep = experiment.run_experiment(cfg, Path(args.out_dir) / name)
        print(f"== {name} (spread x{spread}, {time.perf_counter() - t0:.0f} s)")
        print(experiment.render_text_report(rep))


if __name__ == "__main__":
    main()
