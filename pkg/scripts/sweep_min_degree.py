"""Degree-gate sweep on sparsified Cora: accuracy and entropy per min_degree.

    python3 scripts/sweep_min_degree.py [--thresholds 3,4,5,7] [--seeds 0,1,2,3,4]
"""

import argparse
from dataclasses import replace

from tratopo.experiment import ExperimentConfig, load_dataset, run_experiment
from tratopo.inference import InferenceConfig
from tratopo.linkpred import LinkPredConfig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--thresholds", default="3,4,5,7")
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--drop-rate", type=float, default=0.7)
    args = ap.parse_args(argv)

    seeds = tuple(int(s) for s in args.seeds.split(","))
    base = ExperimentConfig(scenario="sparse", drop_rate=args.drop_rate, seeds=seeds, variants=("combine",))
    ds = load_dataset(base)
    print("min_degree,acc_mean,acc_std,ent_mean,ent_std")
    for m in (int(t) for t in args.thresholds.split(",")):
        cfg = replace(base, inference=InferenceConfig(linkpred=LinkPredConfig(min_degree=m)))
        row = run_experiment(cfg, ds).summary("combine")
        print(f"{m},{row['acc_mean']:.4f},{row['acc_std']:.4f},{row['ent_mean']:.4f},{row['ent_std']:.4f}")


if __name__ == "__main__":
    main()
