"""Ablations on the desk scene: no dilation/erosion, and a single scale at equal wall-clock."""
import argparse

import numpy as np

from lidarpp.experiments import run_single_equal_time, run_variant

ap = argparse.ArgumentParser()
ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
args = ap.parse_args()

rows = {"full": [], "no_dilation": [], "single": []}
for seed in args.seeds:
    full = run_variant(seed)
    runs = {"full": full, "no_dilation": run_variant(seed, "no_dilation"),
            "single": run_single_equal_time(seed, full)}
    for name, r in runs.items():
        rows[name].append(r["f_true"])
        print(f"seed {seed} {name:12s} F_true={r['f_true']:.3f} F_false={r['f_false']} "
              f"NMSE_B={r['nmse_b']:.3f} {r['seconds']:.1f}s"
              + (f" ({r['iterations']} iterations)" if name == "single" else ""), flush=True)
for name, v in rows.items():
    print(f"{name:12s} mean F_true = {np.mean(v):.3f}")
