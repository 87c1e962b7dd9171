"""Synthetic scenes used by the tests, the scripts and the ``generate`` command."""
from __future__ import annotations

import numpy as np

from .data import GroundTruthScene, ImpulseResponse


def skewed_irf(attack: int = 20, decay: int = 80, floor: float = 1e-4) -> ImpulseResponse:
    """Unit-sum response with a Gaussian rise and an exponential tail.

    Both ends sit at ``floor`` times the peak, so the trimmed support spans
    exactly attack + decay + 1 bins.
    """
    left = np.arange(-attack, 1, dtype=float)
    right = np.arange(1, decay + 1, dtype=float)
    s = attack / np.sqrt(2 * np.log(1 / floor)) if attack > 0 else 1.0
    h_left = np.exp(-0.5 * (left / s) ** 2) if attack > 0 else np.ones(1)
    h_right = np.exp(np.log(floor) * right / decay)
    h = np.concatenate((h_left, h_right))
    return ImpulseResponse(h / h.sum())


def _set_photon_budget(intensities, background, n_pix, signal_per_pixel, background_per_pixel, T):
    r = np.asarray(intensities, dtype=float)
    r = r * (signal_per_pixel * n_pix / r.sum())
    b = np.asarray(background, dtype=float)
    b = b * (background_per_pixel * n_pix / (b.sum() * T))
    return r, b


def two_surface_scene(n_rows: int = 33, n_cols: int = 33, n_bins: int = 1500,
                      signal_per_pixel: float = 4.0, background_per_pixel: float = 7.0,
                      bin_width: float = 0.3, pixel_pitch: float = 1.2) -> GroundTruthScene:
    """A tilted back wall over every pixel plus a smaller tilted plate in front.

    Pixels covered by the plate have two returns. The background follows a
    linear ramp across columns (0.4x to 1.6x the mean). The IRF is assumed to
    have unit sum, so an intensity r yields r expected signal photons.
    """
    ii, jj = np.meshgrid(np.arange(n_rows), np.arange(n_cols), indexing="ij")
    sr, sc = n_rows / 33.0, n_cols / 33.0
    back_t = n_bins * 0.6 + 1.5 * ii / sr + 1.0 * jj / sc
    back_r = 2.8 + 1.0 * ii / max(n_rows - 1, 1)
    plate = (ii >= round(8 * sr)) & (ii <= round(22 * sr)) & (jj >= round(10 * sc)) & (jj <= round(24 * sc))
    plate_t = n_bins / 3.0 + 2.0 * jj / sc - 1.0 * ii / sr
    rows = np.concatenate((ii.ravel(), ii[plate]))
    cols = np.concatenate((jj.ravel(), jj[plate]))
    depths = np.concatenate((back_t.ravel(), plate_t[plate]))
    inten = np.concatenate((back_r.ravel(), np.full(plate.sum(), 3.3)))
    surf = np.concatenate((np.zeros(ii.size, dtype=int), np.ones(plate.sum(), dtype=int)))
    ramp = 0.4 + 1.2 * jj / max(n_cols - 1, 1)
    r, b = _set_photon_budget(inten, ramp, n_rows * n_cols, signal_per_pixel,
                              background_per_pixel, n_bins)
    return GroundTruthScene(n_rows, n_cols, n_bins, rows, cols, depths, r, b, surf,
                            bin_width, pixel_pitch,
                            meta={"name": "two_surface", "front_gate": (0.0, n_bins / 2.0)})


def plates_scene(n_rows: int = 99, n_cols: int = 99, n_bins: int = 4500,
                 signal_per_pixel: float = 4.0, background_per_pixel: float = 7.0,
                 bin_width: float = 1.2, pixel_pitch: float = 8.5) -> GroundTruthScene:
    """Three tilted plates of different sizes plus a paraboloid, linear background ramp."""
    ii, jj = np.meshgrid(np.arange(n_rows), np.arange(n_cols), indexing="ij")
    u, v = ii / (n_rows - 1), jj / (n_cols - 1)
    rows, cols, depths, inten, surf = [], [], [], [], []

    def add(mask, t, r, label):
        rows.append(ii[mask]); cols.append(jj[mask])
        depths.append(t[mask]); inten.append(np.broadcast_to(r, ii.shape)[mask])
        surf.append(np.full(mask.sum(), label))

    # large back plate covering everything
    add(np.ones_like(ii, dtype=bool), 3600 + 300 * u - 150 * v, 3.0 + 1.0 * v, 0)
    # medium plate, middle depth
    add((u > 0.15) & (u < 0.65) & (v > 0.1) & (v < 0.55), 2500 + 400 * v + 200 * u, 3.5, 1)
    # small front plate
    add((u > 0.55) & (u < 0.85) & (v > 0.45) & (v < 0.8), 1300 - 300 * u + 100 * v, 2.5, 2)
    # paraboloid cap
    d2 = (u - 0.3) ** 2 + (v - 0.75) ** 2
    add(d2 < 0.15 ** 2, 1800 + 20000 * d2, 3.0 + 0 * u, 3)
    ramp = 0.4 + 1.2 * v
    r, b = _set_photon_budget(np.concatenate(inten), ramp, n_rows * n_cols, signal_per_pixel,
                              background_per_pixel, n_bins)
    return GroundTruthScene(n_rows, n_cols, n_bins, np.concatenate(rows), np.concatenate(cols),
                            np.concatenate(depths), r, b, np.concatenate(surf), bin_width,
                            pixel_pitch, meta={"name": "plates", "front_gate": (1000.0, 1400.0)})


def rescale_scene(scene: GroundTruthScene, sbr: float, photons_per_pixel: float) -> GroundTruthScene:
    """Copy of ``scene`` with the given signal-to-background ratio and mean photons per pixel.

    ``sbr = inf`` removes the background entirely.
    """
    n_pix = scene.n_rows * scene.n_cols
    if np.isinf(sbr):
        sig, bg = photons_per_pixel, 0.0
    else:
        sig = photons_per_pixel * sbr / (1.0 + sbr)
        bg = photons_per_pixel - sig
    r = scene.intensities * (sig * n_pix / scene.intensities.sum()) if sig > 0 else scene.intensities * 0
    bsum = scene.background.sum()
    b = scene.background * (bg * n_pix / (bsum * scene.n_bins)) if bsum > 0 else scene.background.copy()
    keep = r > 0
    return GroundTruthScene(scene.n_rows, scene.n_cols, scene.n_bins, scene.rows[keep],
                            scene.cols[keep], scene.depths[keep], r[keep], b,
                            scene.surfaces[keep], scene.bin_width, scene.pixel_pitch,
                            meta=dict(scene.meta))
