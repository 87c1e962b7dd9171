"""Command-line front end: generate, reconstruct, evaluate, sweep, baseline.

Outputs go to ``--out`` or, when omitted, to ``$LIDARPP_OUT`` (default
``lidarpp_out``). Every command stages its files in a scratch directory next
to the output and moves them in only on success, so a failed run leaves no
partial outputs. Failures print one ``error: <Type>: <message>`` line on
stderr and exit with status 1.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import io as lio
from .config import RunConfig, ScaleSchedule, dump_run_config, load_run_config
from .data import GroundTruthScene, generate_cube, log_matched_filter
from .metrics import detection_curves, nmse_background, nmse_target, sbr_sweep
from .multires import run_multiscale
from .scenes import plates_scene, rescale_scene, skewed_irf, two_surface_scene

OUT_ENV = "LIDARPP_OUT"
SCENES = {"two_surface": two_surface_scene, "plates": plates_scene}


def _fmt(x) -> str:
    return format(float(x), ".17g")


# --- scene construction -----------------------------------------------------
def build_scene(opts: dict) -> tuple[GroundTruthScene, object]:
    """Scene and IRF from a ``[scene]`` section.

    Keys: ``name`` (two_surface or plates), any keyword of the scene function,
    ``attack``/``decay`` of the IRF, and optionally ``sbr`` together with
    ``photons_per_pixel`` to rescale the photon budget.
    """
    opts = dict(opts)
    name = str(opts.pop("name", "two_surface"))
    if name not in SCENES:
        raise ValueError(f"unknown scene {name!r}; choose from {sorted(SCENES)}")
    irf = skewed_irf(int(opts.pop("attack", 20)), int(opts.pop("decay", 80)))
    sbr = opts.pop("sbr", None)
    ppp = opts.pop("photons_per_pixel", None)
    scene = SCENES[name](**opts)
    if (sbr is None) != (ppp is None):
        raise ValueError("sbr and photons_per_pixel must be given together")
    if sbr is not None:
        scene = rescale_scene(scene, float(sbr), float(ppp))
    return scene, irf


def resolved_scene(opts: dict) -> dict:
    """``opts`` with every scene-function default filled in."""
    import inspect
    name = str(opts.get("name", "two_surface"))
    out = {"name": name, "attack": 20, "decay": 80}
    if name in SCENES:
        for p in inspect.signature(SCENES[name]).parameters.values():
            out[p.name] = p.default
    out.update(opts)
    return out


def write_truth(scene: GroundTruthScene, folder: Path) -> None:
    lio.write_points_csv(scene.rows, scene.cols, scene.depths, scene.intensities,
                         scene.surfaces, folder / "truth_points.csv")
    lio.write_grid(scene.background, folder / "truth_background.csv")


def read_truth(folder: Path) -> GroundTruthScene:
    cube = lio.read_cube(folder / "cube.txt")
    r, c, t, inten, s = lio.read_points_csv(folder / "truth_points.csv")
    b = lio.read_grid(folder / "truth_background.csv")
    return GroundTruthScene(cube.n_rows, cube.n_cols, cube.n_bins, r, c, t, inten, b, s,
                            cube.bin_width, cube.pixel_pitch)


# --- reconstruction outputs ---------------------------------------------------
def hyper_sections(result) -> dict:
    out = {}
    for s, sc in enumerate(result.scales):
        sec = {"window": sc.window, "n_iter": sc.run.n_iter, "burn_in": sc.run.burn_in}
        sec.update(dataclasses.asdict(sc.hyper))
        out[f"scale{s}"] = sec
    return out


def write_diagnostics(result, folder: Path) -> None:
    with (folder / "diagnostics.csv").open("w") as fh:
        fh.write("scale,window,move,accepted,proposed,rate\n")
        for s, sc in enumerate(result.scales):
            for move, (a, p) in sc.run.acceptance.items():
                rate = a / p if p else float("nan")
                fh.write(f"{s},{sc.window},{move},{a},{p},{_fmt(rate)}\n")
    with (folder / "trace.csv").open("w") as fh:
        fh.write("scale,iteration,objective,n_points\n")
        for s, sc in enumerate(result.scales):
            for it, val, n in sc.run.trace:
                fh.write(f"{s},{it},{_fmt(val)},{n}\n")


def write_k_return(k_ret: np.ndarray, folder: Path, name: str = "k_return.csv") -> None:
    nr, nc, K = k_ret.shape
    with (folder / name).open("w") as fh:
        fh.write("i,j," + ",".join(f"p{k}" for k in range(K)) + "\n")
        for i in range(nr):
            for j in range(nc):
                fh.write(f"{i + 1},{j + 1}," + ",".join(_fmt(v) for v in k_ret[i, j]) + "\n")


def export_cloud(cfg, path: Path, fmt: str, cube, log_shift: float = 0.0) -> None:
    lio.write_point_cloud(cfg, path, fmt, intensity_scale=float(np.exp(log_shift)),
                          bin_width=cube.bin_width, pixel_pitch=cube.pixel_pitch)


# --- commands -------------------------------------------------------------------
def cmd_generate(args, cfg: RunConfig, out: Path) -> None:
    scene, irf = build_scene(cfg.scene)
    cube = generate_cube(scene, irf, seed=cfg.seed)
    lio.write_cube(cube, out / "cube.txt")
    lio.write_irf(irf, out / "irf.txt")
    write_truth(scene, out)
    cfg.scene = resolved_scene(cfg.scene)
    (out / "config.ini").write_text(dump_run_config(cfg, {"command": {"name": "generate"}}))
    print(f"generated {cube.n_rows}x{cube.n_cols}x{cube.n_bins} cube, "
          f"{cube.total_photons()} photons, {scene.n_points} true points")


def cmd_reconstruct(args, cfg: RunConfig, out: Path) -> None:
    cube = lio.read_cube(args.cube)
    irf = lio.read_irf(args.irf)
    n_iter = cfg.sampler.n_iter
    if n_iter is not None and n_iter <= 0:
        raise ValueError("the iteration budget is zero; no samples would be drawn")
    K = len(cfg.schedule.windows)
    overrides = {s: dict(cfg.fine if s == K - 1 else cfg.coarse) for s in range(K)}
    result = run_multiscale(cube, irf, cfg.schedule, cfg.moves, cfg.sampler, seed=cfg.seed,
                            overrides=overrides)
    fmt = "ply" if args.export_ply else "csv"
    export_cloud(result.config, out / f"points.{fmt}", fmt, cube)
    if args.export_ply:
        export_cloud(result.config, out / "points.csv", "csv", cube)
    lio.write_grid(result.background, out / "background.csv")
    k_ret = result.scales[-1].run.k_return
    if k_ret is not None:
        write_k_return(k_ret, out)
    if args.export_diagnostics:
        write_diagnostics(result, out)
        for s, sc in enumerate(result.scales):
            export_cloud(sc.run.map_config, out / f"scale{s}_w{sc.window}_points.csv", "csv",
                         sc.cube, sc.to_input_units)
            lio.write_grid(sc.run.background, out / f"scale{s}_w{sc.window}_background.csv")
    extra = {"command": {"name": "reconstruct", "cube": str(Path(args.cube).resolve()),
                         "irf": str(Path(args.irf).resolve())}}
    extra.update(hyper_sections(result))
    (out / "config.ini").write_text(dump_run_config(cfg, extra))
    for s, sc in enumerate(result.scales):
        acc = sc.run.acceptance
        rates = " ".join(f"{m}={a / p:.3f}" for m, (a, p) in acc.items() if p)
        print(f"scale {s} (window {sc.window}): {len(sc.run.map_config)} points, "
              f"{sc.run.n_iter} iterations, {sc.seconds:.1f}s; acceptance {rates}")
    print(f"final estimate: {len(result.config)} points")


def cmd_evaluate(args, cfg: RunConfig, out: Path) -> None:
    truth = read_truth(Path(args.truth))
    est = lio.read_points_csv(Path(args.estimate) / "points.csv")
    taus = np.arange(0, int(args.tau_max) + 1)
    curve = detection_curves(est, truth, taus)
    with (out / "detection.csv").open("w") as fh:
        fh.write("tau,f_true,f_false\n")
        for tau, ft, ff in zip(curve.taus, curve.f_true, curve.f_false):
            fh.write(f"{int(tau)},{_fmt(ft)},{int(ff)}\n")
    rows = [("n_truth", curve.n_truth), ("n_estimate", curve.n_est)]
    bpath = Path(args.estimate) / "background.csv"
    if bpath.exists():
        rows.append(("nmse_background", nmse_background(lio.read_grid(bpath), truth.background)))
    if args.gate is not None:
        r, c, t, inten, _ = est
        rows.append(("nmse_target", nmse_target((r, c, t), truth, tuple(args.gate), inten)))
    with (out / "metrics.csv").open("w") as fh:
        fh.write("metric,value\n")
        for k, v in rows:
            fh.write(f"{k},{_fmt(v) if isinstance(v, float) else v}\n")
    extra = {"command": {"name": "evaluate", "truth": str(Path(args.truth).resolve()),
                         "estimate": str(Path(args.estimate).resolve()), "tau_max": args.tau_max,
                         "gate": "" if args.gate is None else " ".join(map(str, args.gate))}}
    (out / "config.ini").write_text(dump_run_config(cfg, extra))
    i = min(int(args.tau), curve.taus.size - 1)
    print(f"F_true({i}) = {curve.f_true[i]:.3f}, F_false({i}) = {int(curve.f_false[i])}")
    for k, v in rows[2:]:
        print(f"{k} = {v:.4f}")


@dataclasses.dataclass
class MultiscaleReconstructor:
    """Picklable ``reconstruct(cube, irf, seed)`` callable for the sweep."""

    cfg: RunConfig

    def __call__(self, cube, irf, seed):
        K = len(self.cfg.schedule.windows)
        overrides = {s: dict(self.cfg.fine if s == K - 1 else self.cfg.coarse) for s in range(K)}
        return run_multiscale(cube, irf, self.cfg.schedule, self.cfg.moves, self.cfg.sampler,
                              seed=seed, overrides=overrides).config


def cmd_sweep(args, cfg: RunConfig, out: Path) -> None:
    scene, irf = build_scene(cfg.scene)
    sbrs = [float(x) for x in args.sbr]
    lams = [float(x) for x in args.photons]
    seeds = [cfg.seed + s for s in range(args.n_seeds)]
    tau = float(irf.attack if args.tau is None else args.tau)
    table = sbr_sweep(scene, irf, sbrs, lams, seeds, tau, MultiscaleReconstructor(cfg), cfg.jobs)
    with (out / "sweep.csv").open("w") as fh:
        fh.write("sbr," + ",".join(_fmt(x) for x in lams) + "\n")
        for s, row in zip(sbrs, table):
            fh.write(_fmt(s) + "," + ",".join(_fmt(v) for v in row) + "\n")
    cfg.scene = resolved_scene(cfg.scene)
    extra = {"command": {"name": "sweep", "sbr": " ".join(map(str, sbrs)),
                         "photons": " ".join(map(str, lams)), "n_seeds": args.n_seeds, "tau": tau}}
    (out / "config.ini").write_text(dump_run_config(cfg, extra))
    print(f"sweep over {len(sbrs)} SBR x {len(lams)} photon levels written")


def cmd_baseline(args, cfg: RunConfig, out: Path) -> None:
    cube = lio.read_cube(args.cube)
    irf = lio.read_irf(args.irf)
    res = log_matched_filter(cube, irf)
    keep = ~res.empty & (res.intensity > 0)
    ii, jj = np.nonzero(keep)
    lio.write_points_csv(ii, jj, res.depth[keep], res.intensity[keep], np.zeros(ii.size),
                         out / "points.csv")
    lio.write_grid(res.background, out / "background.csv")
    extra = {"command": {"name": "baseline", "cube": str(Path(args.cube).resolve()),
                         "irf": str(Path(args.irf).resolve())}}
    (out / "config.ini").write_text(dump_run_config(cfg, extra))
    print(f"log-matched filter: {ii.size} points")


COMMANDS = {"generate": cmd_generate, "reconstruct": cmd_reconstruct, "evaluate": cmd_evaluate,
            "sweep": cmd_sweep, "baseline": cmd_baseline}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [run], [schedule], [moves], [sampler], "
                                         "[coarse], [fine] and [scene] sections")
    common.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    common.add_argument("--iters", type=int, help="iterations per scale (overrides the default "
                                                  "of 25 per input pixel)")
    common.add_argument("--scales", type=int, help="number of scales, windows 3^(K-1) .. 1")
    common.add_argument("--jobs", type=int, help="worker processes for the sweep")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./lidarpp_out)")
    common.add_argument("--export-ply", action="store_true", help="also write points.ply")
    common.add_argument("--export-diagnostics", action="store_true",
                        help="write acceptance, trace and per-scale intermediate estimates")
    ap = argparse.ArgumentParser(prog="lidarpp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="simulate a synthetic cube")
    p = sub.add_parser("reconstruct", parents=[common], help="run the multiscale sampler")
    p.add_argument("cube")
    p.add_argument("irf")
    p = sub.add_parser("evaluate", parents=[common], help="score an estimate against the truth")
    p.add_argument("estimate", help="directory written by reconstruct or baseline")
    p.add_argument("truth", help="directory written by generate")
    p.add_argument("--tau-max", type=int, default=60, help="largest depth tolerance in bins")
    p.add_argument("--tau", type=int, default=20, help="tolerance reported on stdout")
    p.add_argument("--gate", type=float, nargs=2, metavar=("LO", "HI"),
                   help="depth gate (bins, 0-based) for the intensity-image NMSE")
    p = sub.add_parser("sweep", parents=[common], help="F_true over SBR and photon levels")
    p.add_argument("--sbr", nargs="+", default=["0.5", "1", "4"])
    p.add_argument("--photons", nargs="+", default=["1", "4", "16"])
    p.add_argument("--n-seeds", type=int, default=1)
    p.add_argument("--tau", type=float, help="depth tolerance, default the IRF attack")
    p = sub.add_parser("baseline", parents=[common], help="log-matched filter estimate")
    p.add_argument("cube")
    p.add_argument("irf")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        if args.jobs < 1:
            raise ValueError("--jobs must be >= 1")
        cfg.jobs = args.jobs
    if args.scales is not None:
        cfg.schedule = ScaleSchedule.with_scales(args.scales,
                                                 threshold_sigma=cfg.schedule.threshold_sigma,
                                                 use_threshold=cfg.schedule.use_threshold)
    if args.iters is not None:
        cfg.sampler.n_iter = args.iters
        cfg.sampler.__post_init__()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out or os.environ.get(OUT_ENV) or "lidarpp_out")
    staging = None
    created = not out.exists()
    try:
        cfg = resolve_config(args)
        out.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
        COMMANDS[args.command](args, cfg, staging)
        for f in sorted(staging.iterdir()):
            os.replace(f, out / f.name)
    except Exception as exc:   # report every failure as one machine-readable line
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if staging is not None:
            shutil.rmtree(staging, ignore_errors=True)
        if created and out.exists() and not any(out.iterdir()):
            out.rmdir()
        return 1
    finally:
        if staging is not None:
            shutil.rmtree(staging, ignore_errors=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
