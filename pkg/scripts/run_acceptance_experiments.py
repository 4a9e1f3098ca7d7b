"""Run the shipped experiment configs and print the headline comparisons.

    python3 scripts/run_acceptance_experiments.py [--out results] [--workers N]
"""

import argparse
from pathlib import Path

import numpy as np

from continuum.harness.compare import compare, load_summaries
from continuum.harness.experiment import load_config, run_experiment

EXPERIMENTS = Path(__file__).resolve().parent.parent / "experiments"
CONFIGS = ["smart-city", "tightening", "stationary", "coordination", "coordination-off"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=CONFIGS)
    args = ap.parse_args()

    out = Path(args.out)
    for name in args.only or CONFIGS:
        cfg = load_config(EXPERIMENTS / f"{name}.cfg")
        summary = run_experiment(cfg, workers=args.workers, output_dir=out / name)
        print(f"== {name}")
        for arm, body in summary["arms"].items():
            print(f"  {arm:<14} fulfillment {body['fulfillment_mean']:.4f} +/- {body['fulfillment_sd']:.4f}  recovery {body['recovery']}")

    if (out / "smart-city").exists():
        print(compare(load_summaries([out / "smart-city"]), reference="random").to_text())
    if (out / "coordination").exists() and (out / "coordination-off").exists():
        on = {s.seed: s.fulfillment_rate for s in load_summaries([out / "coordination"])}
        off = {s.seed: s.fulfillment_rate for s in load_summaries([out / "coordination-off"])}
        print(f"coordination gain: {np.mean([on[s] - off[s] for s in on]):+.4f}")


if __name__ == "__main__":
    main()
