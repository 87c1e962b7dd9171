"""Desk-scale synthetic experiment (33x33x1500, two surfaces) and its ablations."""
import time

from .config import MoveTable, SamplerOptions, ScaleSchedule
from .data import generate_cube
from .metrics import detection_curves, nmse_background
from .multires import run_multiscale
from .scenes import skewed_irf, two_surface_scene


def desk_problem(seed):
    scene = two_surface_scene()
    irf = skewed_irf(20, 80)
    return scene, irf, generate_cube(scene, irf, seed=seed)


def score(result, scene, irf):
    cfg = result.config
    est = ([p.x for p in cfg], [p.y for p in cfg], [p.t for p in cfg])
    curve = detection_curves(est, scene, [irf.attack])
    return {"f_true": float(curve.f_true[0]), "f_false": int(curve.f_false[0]),
            "n_truth": scene.n_points, "nmse_b": nmse_background(result.background, scene.background)}


def run_variant(seed, variant="full", seconds=None):
    """Run one configuration of the desk experiment.

    ``full``: two scales with every move. ``no_dilation``: same without
    dilation and erosion. ``single``: window 1 only, with as many iterations
    as fit into ``seconds`` at the fine-scale cost per iteration.
    """
    scene, irf, cube = desk_problem(seed)
    moves = MoveTable()
    schedule = ScaleSchedule()
    iterations = None
    if variant == "no_dilation":
        moves = moves.without("dilation", "erosion")
    elif variant == "single":
        schedule = ScaleSchedule(windows=(1,))
        iterations = {0: int(seconds)}
    elif variant != "full":
        raise ValueError(variant)
    t0 = time.perf_counter()
    res = run_multiscale(cube, irf, schedule, moves, SamplerOptions(), seed=seed,
                         iterations=iterations)
    out = score(res, scene, irf)
    out["seconds"] = time.perf_counter() - t0
    out["result"] = res
    return out


def equal_time_iterations(full_result) -> int:
    """First guess at the fine-scale iterations costing as much as the multiscale run."""
    fine = full_result.scales[-1]
    per_iter = fine.seconds / fine.run.n_iter
    total = sum(s.seconds for s in full_result.scales)
    return int(round(total / per_iter, -3))


def run_single_equal_time(seed, full):
    """Single-scale run lasting at least as long as ``full`` (one recalibration at most)."""
    target = full["seconds"]
    n = equal_time_iterations(full["result"])
    r = run_variant(seed, "single", n)
    if r["seconds"] < 0.95 * target:
        n = int(round(n * target / r["seconds"], -3))
        r = run_variant(seed, "single", n)
    r["iterations"] = n
    return r
