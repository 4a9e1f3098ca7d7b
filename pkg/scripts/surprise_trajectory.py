"""Surprise of an AIF agent per step on the stationary scenario.

Writes ``t,seed,surprise`` rows to stdout (or --csv) and prints the mean
over consecutive blocks of --block steps to stderr.
"""

import argparse
import csv
import sys

import numpy as np

from continuum.harness.baselines import make_agent
from continuum.harness.metrics import mean_surprise
from continuum.sim import compile_agent_specs, run_episode
from continuum.sim.scenario import load_builtin


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="stationary")
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--horizon", type=int, default=None)
    ap.add_argument("--block", type=int, default=100)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()

    sc = load_builtin(args.scenario)
    if args.horizon:
        sc = sc.with_overrides(horizon=args.horizon)
    fh = open(args.csv, "w", newline="") if args.csv else sys.stdout
    writer = csv.writer(fh)
    writer.writerow(["t", "seed", "surprise"])
    for seed in args.seeds:
        specs = compile_agent_specs(sc)
        agents = {aid: make_agent("aif", specs[aid], dict(sc.agents[aid].config)) for aid in specs}
        values = mean_surprise(run_episode(sc, agents, seed=seed))
        for t, v in enumerate(values):
            writer.writerow([t, seed, "" if v is None else f"{v:.6f}"])
        clean = np.array([np.nan if v is None else v for v in values])
        blocks = [np.nanmean(clean[i : i + args.block]) for i in range(0, len(clean), args.block)]
        print(f"seed {seed}: " + " ".join(f"{b:.3f}" for b in blocks), file=sys.stderr)
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
