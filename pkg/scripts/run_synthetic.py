"""Desk-scale two-surface reconstruction: detection, background error and acceptance rates."""
import argparse

from lidarpp.experiments import run_variant

ap = argparse.ArgumentParser()
ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
args = ap.parse_args()

for seed in args.seeds:
    r = run_variant(seed)
    print(f"seed {seed}: F_true(attack) {r['f_true']:.3f}, F_false {r['f_false']} of "
          f"{r['n_truth']} true points, NMSE_B {r['nmse_b']:.3f}, {r['seconds']:.1f}s")
    for s, sc in enumerate(r["result"].scales):
        acc = sc.run.acceptance
        rates = " ".join(f"{m}={a / p:.2f}" for m, (a, p) in acc.items() if p)
        print(f"  scale {s} (window {sc.window}, n_b {sc.hyper.n_b}): {len(sc.run.map_config)} points, "
              f"{sc.run.n_iter} iterations, {sc.seconds:.1f}s; {rates}")
