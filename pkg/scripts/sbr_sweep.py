"""F_true(attack) of the multiscale sampler over a grid of SBR and photons per pixel."""
import argparse

import numpy as np

from lidarpp.cli import MultiscaleReconstructor
from lidarpp.config import RunConfig
from lidarpp.metrics import sbr_sweep
from lidarpp.scenes import skewed_irf, two_surface_scene

ap = argparse.ArgumentParser()
ap.add_argument("--size", type=int, default=18, help="rows and columns of the scene")
ap.add_argument("--bins", type=int, default=900)
ap.add_argument("--sbr", type=float, nargs="+", default=[0.25, 1.0, 4.0])
ap.add_argument("--photons", type=float, nargs="+", default=[1.0, 4.0, 16.0])
ap.add_argument("--seeds", type=int, default=1)
ap.add_argument("--jobs", type=int, default=1)
args = ap.parse_args()

scene = two_surface_scene(args.size, args.size, args.bins)
irf = skewed_irf(20, 80)
table = sbr_sweep(scene, irf, args.sbr, args.photons, range(args.seeds), irf.attack,
                  MultiscaleReconstructor(RunConfig()), args.jobs)
print("SBR \\ photons " + "".join(f"{p:>8g}" for p in args.photons))
for s, row in zip(args.sbr, table):
    print(f"{s:>13g} " + "".join(f"{v:8.3f}" for v in row))
print(f"mean over grid: {np.mean(table):.3f}")
