"""Reusable curve ensembles for the statistical verification tests.

A chordal ensemble holds N Brownian-driven Loewner curves traced on a
uniform output grid (enough for box-occupation statistics).  A refined
ensemble adds, per curve, full-resolution trace segments near a region of
interest, produced by a three-stage window refinement:

    coarse pass (every m_coarse steps)  -> detect steps near the region,
    medium pass inside those windows    -> tighten the windows,
    fine pass (every step) inside them  -> points for content estimation.

Each stage's detection buffer is r plus 3.5 driver-scale standard
deviations of the inter-output displacement, and windows are padded by
one coarse gap, so misses are excursions beyond 3.5 sigma that return
within one gap; their expected contribution is negligible against the
statistical error of the consuming tests.

Chunks of `batch` curves use RNG substreams (seed, chunk index); chunk
size is configuration, not scheduling, so results do not depend on the
worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import drivers, loewner
from .loewner import Rect
from .seeds import substream


@dataclass
class CurveEnsemble:
    """Chordal curves on a uniform output grid."""

    kappa: float
    dt: float                 # driver grid step
    out_every: int
    horizon: float
    seed: int
    points: np.ndarray        # (N, K) complex, K output times j*dt_out
    lam_out: np.ndarray       # (N, K) driver values at the output times

    @property
    def dt_out(self) -> float:
        return self.dt * self.out_every

    @property
    def n_curves(self) -> int:
        return self.points.shape[0]

    @property
    def times_out(self) -> np.ndarray:
        return np.arange(self.points.shape[1]) * self.dt_out

    def occupation(self, region: Sequence[Rect]) -> np.ndarray:
        """Per-curve capacity-time occupation of the region up to the
        horizon (dt_out-weighted sample counts)."""
        rects = loewner.validate_region(region)
        mask = loewner.region_mask(self.points, rects)
        return mask.sum(axis=1) * self.dt_out

    def marked_samples(self, region: Sequence[Rect], rng: np.random.Generator):
        """Occupation-measure marked points: per curve with positive
        occupation, a time drawn uniformly from its in-region output
        samples, the curve point there, and the occupation weight."""
        rects = loewner.validate_region(region)
        mask = loewner.region_mask(self.points, rects)
        weights, times, marks, lam_marks = [], [], [], []
        for b in range(self.points.shape[0]):
            idx = np.flatnonzero(mask[b])
            if idx.size == 0:
                continue
            j = idx[rng.integers(idx.size)]
            weights.append(idx.size * self.dt_out)
            times.append(j * self.dt_out)
            marks.append(self.points[b, j])
            lam_marks.append(self.lam_out[b, j])
        return (np.array(times), np.array(marks, dtype=complex),
                np.array(lam_marks), np.array(weights))


def build_curve_ensemble(kappa: float, n_curves: int, dt: float, horizon: float,
                         out_every: int, seed: int, batch: int = 128,
                         threads: int = 1) -> CurveEnsemble:
    n = int(round(horizon / dt))
    out_steps = np.arange(0, n, out_every)
    chunks = [(j, min(batch, n_curves - j * batch))
              for j in range((n_curves + batch - 1) // batch)]

    def run(arg):
        j, b = arg
        lam = drivers.brownian_batch(kappa, b, dt, horizon, substream(seed, j))
        pts = loewner.trace_curve_points(lam, dt, out_steps, threads=1)
        return pts, lam[:, out_steps]

    if threads <= 1:
        results = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, chunks))
    points = np.vstack([r[0] for r in results])
    lam_out = np.vstack([r[1] for r in results])
    return CurveEnsemble(kappa=kappa, dt=dt, out_every=out_every,
                         horizon=horizon, seed=seed, points=points,
                         lam_out=lam_out)


# -- refined ensembles ---------------------------------------------------------


@dataclass
class RefinedCurve:
    """Full-resolution trace segments of one curve near the region."""

    steps: np.ndarray    # driver step indices (ascending, possibly gapped)
    points: np.ndarray   # gamma at those steps
    lam: np.ndarray      # driver values at those steps


@dataclass
class RefinedEnsemble:
    kappa: float
    dt: float
    horizon: float
    seed: int
    region: tuple[Rect, ...]
    r: float
    curves: list[RefinedCurve]

    @property
    def n_curves(self) -> int:
        return len(self.curves)

    def fine_polyline(self, c: RefinedCurve) -> np.ndarray:
        """Points with NaN separators at step gaps, so distance queries
        never bridge disjoint trace segments."""
        steps, pts = c.steps, c.points
        if steps.size == 0:
            return np.zeros(0, dtype=complex)
        gaps = np.flatnonzero(np.diff(steps) > 1)
        out = np.insert(pts.astype(complex), gaps + 1, np.nan + 0j)
        return out

    def fine_steps_with_breaks(self, c: RefinedCurve) -> np.ndarray:
        steps = c.steps
        gaps = np.flatnonzero(np.diff(steps) > 1)
        return np.insert(steps.astype(float), gaps + 1, -1.0)


def _steps_near(points: np.ndarray, steps: np.ndarray, rects: Sequence[Rect],
                buffer: float, pad_steps: int, n_total: int) -> np.ndarray:
    """Window mask over [0, n_total): steps whose traced point lies within
    `buffer` of the region, padded by pad_steps on both sides."""
    x0, x1, y0, y1 = loewner.region_bbox(rects)
    zone = [(x0 - buffer, x1 + buffer, max(y0 - buffer, 0.0), y1 + buffer)]
    hit = loewner.region_mask(points, zone)
    mask = np.zeros(n_total, dtype=bool)
    for s in steps[hit]:
        lo = max(0, int(s) - pad_steps)
        hi = min(n_total, int(s) + pad_steps + 1)
        mask[lo:hi] = True
    return mask


def _refine_curve(lam: np.ndarray, dt: float, rects, r: float,
                  coarse_steps: np.ndarray, coarse_pts: np.ndarray,
                  m_coarse: int, m_med: int, kappa: float) -> RefinedCurve:
    n = lam.size
    disp = lambda m: 3.5 * math.sqrt(kappa * m * dt)
    buf_fine = r + disp(m_med)
    buf_med = buf_fine + disp(m_coarse)

    med_mask = _steps_near(coarse_pts, coarse_steps, rects, buf_med,
                           m_coarse, n)
    med_steps = np.flatnonzero(med_mask)[::m_med]
    if med_steps.size == 0:
        return RefinedCurve(np.zeros(0, dtype=np.int64),
                            np.zeros(0, dtype=complex), np.zeros(0))
    med_pts = loewner.trace_curve_points(lam, dt, med_steps)
    fine_mask = _steps_near(med_pts, med_steps, rects, buf_fine, m_med, n)
    fine_steps = np.flatnonzero(fine_mask)
    if fine_steps.size == 0:
        return RefinedCurve(np.zeros(0, dtype=np.int64),
                            np.zeros(0, dtype=complex), np.zeros(0))
    fine_pts = loewner.trace_curve_points(lam, dt, fine_steps)
    return RefinedCurve(fine_steps, fine_pts, lam[fine_steps])


def _refined_chunk(args) -> list[RefinedCurve]:
    (kappa, b, dt, horizon, seed, j, rects, r, coarse_steps,
     m_coarse, m_med) = args
    lam = drivers.brownian_batch(kappa, b, dt, horizon, substream(seed, j))
    coarse = loewner.trace_curve_points(lam, dt, coarse_steps)
    return [_refine_curve(lam[i], dt, rects, r, coarse_steps, coarse[i],
                          m_coarse, m_med, kappa)
            for i in range(b)]


def build_refined_ensemble(kappa: float, n_curves: int, dt: float,
                           horizon: float, region: Sequence[Rect], r: float,
                           seed: int, stages: tuple[int, int] = (80, 8),
                           batch: int = 64, threads: int = 1) -> RefinedEnsemble:
    """The refinement passes are dominated by many small array operations,
    so worker parallelism uses processes (threads would serialize on the
    interpreter lock); chunk contents are worker-count independent."""
    rects = loewner.validate_region(region)
    m_coarse, m_med = stages
    n = int(round(horizon / dt))
    coarse_steps = np.arange(0, n, m_coarse)
    jobs = [(kappa, min(batch, n_curves - j * batch), dt, horizon, seed, j,
             rects, r, coarse_steps, m_coarse, m_med)
            for j in range((n_curves + batch - 1) // batch)]

    if threads <= 1:
        parts = [_refined_chunk(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(_refined_chunk, jobs))
    curves = [c for part in parts for c in part]
    return RefinedEnsemble(kappa=kappa, dt=dt, horizon=horizon, seed=seed,
                           region=tuple(rects), r=r, curves=curves)
