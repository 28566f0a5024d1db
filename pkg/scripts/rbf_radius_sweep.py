"""Mean RBF accuracy for several clustering radii, on default and separated
data, over a few master seeds. Used to pick the RBF radius default."""
import argparse
import warnings

import numpy as np

from apricot import experiment
from apricot.classifiers import RbfConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--radii", type=float, nargs="+", default=[0.5, 0.3, 0.25, 0.2, 0.15, 0.1])
    ap.add_argument("--seeds", type=int, nargs="+", default=[2020, 1, 7, 11])
    ap.add_argument("--out-dir", default="runs/rbf_sweep")
    args = ap.parse_args()
    warnings.simplefilter("ignore", RuntimeWarning)
    print("spread  radius  " + "  ".join(f"seed {s:>5d}" for s in args.seeds) + "     min")
    for spread in (1.0, 0.25):
        for r in args.radii:
            accs = []
            for s in args.seeds:
                cfg = experiment.ExperimentConfig(seed=s, spread_scale=spread, models=("rbf",),
                                                  rbf=RbfConfig(radius=r))
                rep = experiment.run_experiment(cfg, f"{args.out_dir}/{spread}_{r}_{s}")
                accs.append(rep["accuracy"]["rbf"]["mean"])
            print(f"{spread:6.2f}  {r:6.2f}  " + "  ".join(f"{a:10.1f}" for a in accs) + f"  {np.min(accs):6.1f}")


if __name__ == "__main__":
    main()
