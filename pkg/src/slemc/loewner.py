"""Chordal Loewner machinery on uniform grids.

The driving function is treated as constant over each grid step, so every
elementary update is the closed-form vertical-slit map

    g(z) = lam_k + sqrt((z - lam_k)^2 + 4*dt)            (forward)
    f(w) = lam_k + sqrt((w - lam_k)^2 - 4*dt)            (inverse)

with the square-root branch fixed in the closed upper half-plane.  Point
flow is therefore exact for piecewise-constant drivers; curve tracing
composes the inverse maps right-to-left (O(k) per output point).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .pathspace import SampledPath

Rect = tuple[float, float, float, float]  # x_min, x_max, y_min, y_max


def sqrt_upper(u: np.ndarray) -> np.ndarray:
    """Square root with branch cut on [0, inf) and image in the closed
    upper half-plane (principal root negated where Im < 0)."""
    s = np.sqrt(u)
    if np.isscalar(s) or s.ndim == 0:
        return -s if s.imag < 0 else s
    np.negative(s, where=s.imag < 0, out=s)
    return s


# -- forward point flow ------------------------------------------------------


@dataclass(frozen=True)
class LoewnerFlowState:
    """Snapshot of the tracked-point flow at capacity time t."""

    t: float
    g: np.ndarray            # g_t(z) per point (frozen at death)
    gprime: np.ndarray       # g_t'(z) per point
    alive: np.ndarray        # bool
    swallow_time: np.ndarray  # nan while alive
    lam: float               # driver value at (or just before) t


def _flow_batch(lams: np.ndarray, dt: float, points: np.ndarray,
                record_steps: Sequence[int], swallow_eps: float,
                boundary: bool) -> list[dict]:
    """Flow the same tracked points under a batch of drivers.

    lams: (B, n) driver samples; points: (P,) initial positions.
    Returns one dict per record step with arrays of shape (B, P):
    w (= g_t(z)), gprime, alive, tsw, plus t and lam (B,).
    """
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    B, n = lams.shape
    pts = np.asarray(points)
    P = pts.size
    record_steps = sorted(set(int(k) for k in record_steps))
    if record_steps and record_steps[-1] > n:
        raise ValueError("record step beyond driver extent")

    if boundary:
        w = np.broadcast_to(pts.astype(float), (B, P)).copy()
        gp = np.ones((B, P))
        side0 = np.sign(w - lams[:, 0][:, None])
    else:
        if np.any(pts.imag <= 0):
            raise ValueError("interior points must have positive imaginary part")
        w = np.broadcast_to(pts.astype(complex), (B, P)).copy()
        gp = np.ones((B, P), dtype=complex)
    alive = np.ones((B, P), dtype=bool)
    tsw = np.full((B, P), np.nan)
    eps2 = swallow_eps * swallow_eps
    c = 4.0 * dt

    out = []
    rec = set(record_steps)

    def snapshot(k):
        out.append({
            "t": k * dt,
            "w": w.copy(), "gprime": gp.copy(),
            "alive": alive.copy(), "tsw": tsw.copy(),
            "lam": lams[:, min(k, n - 1)].copy(),
        })

    for k in range(n + 1):
        if k in rec:
            snapshot(k)
        if k == n:
            break
        lk = lams[:, k][:, None]
        z = w - lk
        if boundary:
            az2 = z * z
            # a driver jump across the point swallows it between grid
            # times; the sign flip is the witness
            newly = alive & ((az2 < eps2) | (z * side0 < 0))
        else:
            az2 = z.real * z.real + z.imag * z.imag
            newly = alive & (az2 < eps2)
        if newly.any():
            tsw[newly] = k * dt
            alive &= ~newly
        u = z * z + c
        if boundary:
            s = np.sign(z) * np.sqrt(u)
        else:
            s = sqrt_upper(u)
        wn = lk + s
        s_safe = np.where(s == 0, 1.0, s)
        gpn = gp * (z / s_safe)
        w = np.where(alive, wn, w)
        gp = np.where(alive, gpn, gp)
    return out


def flow_interior(lams, dt, points, record_steps, swallow_eps=1e-3):
    return _flow_batch(lams, dt, points, record_steps, swallow_eps, boundary=False)


def flow_boundary(lams, dt, points, record_steps, swallow_eps=1e-3):
    return _flow_batch(lams, dt, points, record_steps, swallow_eps, boundary=True)


def evolve_points(driver: SampledPath, points, record_every: int = 1,
                  swallow_eps: float = 1e-3, boundary: bool = False) -> list[LoewnerFlowState]:
    """Flow tracked points under a single driver, recording every
    record_every steps (state at t=0 and the final state always included)."""
    pts = np.atleast_1d(np.asarray(points))
    lam0 = driver.values[0]
    if boundary:
        if np.any(pts == lam0):
            raise ValueError("boundary point coincides with the driver start")
    else:
        if np.any(pts.imag <= 0):
            raise ValueError("points must lie in the open upper half-plane")
    n = driver.n
    steps = list(range(0, n + 1, max(1, record_every)))
    if steps[-1] != n:
        steps.append(n)
    raw = _flow_batch(driver.values[None, :], driver.dt, pts, steps, swallow_eps, boundary)
    return [
        LoewnerFlowState(t=r["t"], g=r["w"][0], gprime=r["gprime"][0],
                         alive=r["alive"][0], swallow_time=r["tsw"][0], lam=r["lam"][0])
        for r in raw
    ]


# -- curve tracing -----------------------------------------------------------


@dataclass(frozen=True)
class TracedCurve:
    """A Loewner curve sampled at uniform capacity times k*dt."""

    dt: float
    points: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.points.size) * self.dt


def _backward_block(lams, dt, out_steps, wx, wy, j_hi, j_lo, starts):
    """Apply inverse slit maps for steps j in [j_lo, j_hi) in descending
    order to the active suffix of (wx, wy).  In-place on wx/wy."""
    c = 4.0 * dt
    for j in range(j_hi - 1, j_lo - 1, -1):
        i0 = starts[j]
        if i0 >= out_steps.size:
            continue
        X = wx[:, i0:]
        Y = wy[:, i0:]
        lj = lams[:, j][:, None]
        zx = X - lj
        ux = zx * zx - Y * Y - c
        uy = 2.0 * zx * Y
        rr = np.sqrt(ux * ux + uy * uy)
        sx = np.sqrt(np.maximum(0.5 * (rr + ux), 0.0))
        sy = np.sqrt(np.maximum(0.5 * (rr - ux), 0.0))
        sgn = np.where(uy != 0.0, np.sign(uy), np.sign(zx))
        np.multiply(sx, sgn, out=sx)
        np.add(sx, lj, out=X)
        wy[:, i0:] = sy


def trace_curve_points(lams: np.ndarray, dt: float, out_steps: np.ndarray,
                       threads: int = 1) -> np.ndarray:
    """Curve points gamma(s*dt) for each step index s in out_steps.

    lams: (B, n) or (n,) driver samples; out_steps ascending ints in
    [0, n-1].  Returns complex array (B, K) (or (K,) for a 1-d driver).
    """
    single = np.asarray(lams).ndim == 1
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    B, n = lams.shape
    out_steps = np.asarray(sorted(set(int(s) for s in out_steps)), dtype=np.int64)
    if out_steps.size == 0:
        raise ValueError("no output steps")
    if out_steps[0] < 0 or out_steps[-1] > n - 1:
        raise ValueError("output steps outside driver extent")
    K = out_steps.size
    s_max = int(out_steps[-1])
    # starts[j] = first output column still active while undoing step j
    starts = np.searchsorted(out_steps, np.arange(s_max + 1), side="right")

    def run(b0, b1):
        wx = lams[b0:b1, out_steps].copy()
        wy = np.zeros_like(wx)
        _backward_block(lams[b0:b1], dt, out_steps, wx, wy, s_max, 0, starts)
        return wx + 1j * wy

    if threads <= 1 or B == 1:
        res = run(0, B)
    else:
        bounds = np.linspace(0, B, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda ab: run(*ab), zip(bounds[:-1], bounds[1:])))
        res = np.vstack(parts)
    return res[0] if single else res


def trace_curve(driver: SampledPath, out_every: int = 1, threads: int = 1) -> TracedCurve:
    """Trace the Loewner curve of a driver on the grid k*(out_every*dt)."""
    n = driver.n
    steps = np.arange(0, n, max(1, out_every))
    pts = trace_curve_points(driver.values, driver.dt, steps, threads=threads)
    return TracedCurve(dt=driver.dt * max(1, out_every), points=pts)


# -- regions -----------------------------------------------------------------


def validate_region(rects: Sequence[Rect]) -> list[Rect]:
    rects = [tuple(float(v) for v in r) for r in rects]
    if not rects:
        raise ValueError("empty region list")
    for x0, x1, y0, y1 in rects:
        if not (x1 > x0 and y1 > y0 and y0 >= 0):
            raise ValueError(f"bad rectangle ({x0},{x1},{y0},{y1})")
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            a, b = rects[i], rects[j]
            if a[0] < b[1] and b[0] < a[1] and a[2] < b[3] and b[2] < a[3]:
                raise ValueError("region rectangles overlap")
    return rects


def region_mask(points: np.ndarray, rects: Sequence[Rect]) -> np.ndarray:
    pts = np.asarray(points)
    x, y = pts.real, pts.imag
    mask = np.zeros(pts.shape, dtype=bool)
    for x0, x1, y0, y1 in rects:
        mask |= (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    return mask


def region_area(rects: Sequence[Rect]) -> float:
    return float(sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in rects))


def region_bbox(rects: Sequence[Rect]) -> Rect:
    return (min(r[0] for r in rects), max(r[1] for r in rects),
            min(r[2] for r in rects), max(r[3] for r in rects))


def occupation_time(curve: TracedCurve, region: Sequence[Rect], upto: float) -> float:
    """dt-weighted count of curve samples inside the region up to `upto`
    (the capacity-time Lebesgue measure of the visit set, without any
    normalizing constant)."""
    rects = validate_region(region)
    k_max = int(np.floor(upto / curve.dt + 1e-9))
    pts = curve.points[: k_max + 1]
    return float(np.count_nonzero(region_mask(pts, rects)) * curve.dt)


# -- r-neighborhood rasterization -------------------------------------------


@dataclass(frozen=True)
class NeighborhoodCells:
    """Cells of a lattice over a region covered by the r-neighborhood of a
    sampled curve, with each covered cell assigned to the nearest curve
    sample.  Each rectangle is tiled exactly (its own cell size <= the
    requested pitch), so saturation recovers the region area."""

    pitch: float
    centers: np.ndarray        # complex, covered cells only
    cell_areas: np.ndarray     # area of each covered cell
    nearest_sample: np.ndarray  # index into the original curve samples

    @property
    def area(self) -> float:
        return float(self.cell_areas.sum())


def _densify(points: np.ndarray, spacing: float, bbox: Rect, r: float):
    """Subdivide the polyline so consecutive vertices are <= spacing apart,
    dropping segments that cannot come within r of the bbox.  Non-finite
    entries are polyline breaks: segments across them are never formed.
    Returns the densified vertices and, per vertex, the index of the
    original sample opening its segment."""
    pts = np.asarray(points, dtype=complex)
    if pts.size == 0:
        return pts, np.zeros(0, dtype=np.int64)
    finite = np.isfinite(pts)
    if pts.size == 1 or not np.any(finite[:-1] & finite[1:]):
        sel = np.flatnonzero(finite)
        return pts[sel], sel.astype(np.int64)
    x0, x1, y0, y1 = bbox
    with np.errstate(invalid="ignore"):
        dx = np.maximum(np.maximum(x0 - pts.real, pts.real - x1), 0.0)
        dy = np.maximum(np.maximum(y0 - pts.imag, pts.imag - y1), 0.0)
        dist_box = np.hypot(dx, dy)
        seg_len = np.abs(np.diff(pts))
        keep = (finite[:-1] & finite[1:]
                & (np.minimum(dist_box[:-1], dist_box[1:]) <= r + seg_len))
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        return np.zeros(0, dtype=complex), np.zeros(0, dtype=np.int64)
    verts = []
    origin = []
    for i in idx:
        a, b = pts[i], pts[i + 1]
        m = max(1, int(math.ceil(abs(b - a) / spacing)))
        sub = a + (b - a) * (np.arange(m) / m)
        verts.append(sub)
        origin.append(np.full(m, i, dtype=np.int64))
    # close every kept run with its right endpoint
    run_ends = idx[np.append(np.diff(idx) != 1, True)]
    verts.append(pts[run_ends + 1])
    origin.append((run_ends + 1).astype(np.int64))
    return np.concatenate(verts), np.concatenate(origin)


def neighborhood_cells(points: np.ndarray, region: Sequence[Rect], r: float,
                       pitch: Optional[float] = None,
                       max_cells: int = 40_000_000) -> NeighborhoodCells:
    """Rasterize {z in region : dist(z, curve) < r} on a pitch-lattice."""
    rects = validate_region(region)
    if not (r > 0):
        raise ValueError("radius must be positive")
    pitch = r / 4.0 if pitch is None else float(pitch)
    if pitch > r / 4.0 + 1e-12:
        raise ValueError("lattice pitch must be <= r/4")
    centers, areas = [], []
    total = 0
    for x0, x1, y0, y1 in rects:
        nx = max(1, int(math.ceil((x1 - x0) / pitch)))
        ny = max(1, int(math.ceil((y1 - y0) / pitch)))
        total += nx * ny
        if total > max_cells:
            raise ValueError("grid memory cap exceeded")
        hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
        xs = x0 + (np.arange(nx) + 0.5) * hx
        ys = y0 + (np.arange(ny) + 0.5) * hy
        cx, cy = np.meshgrid(xs, ys, indexing="ij")
        centers.append((cx + 1j * cy).ravel())
        areas.append(np.full(nx * ny, hx * hy))
    centers = np.concatenate(centers)
    areas = np.concatenate(areas)

    bx0, bx1, by0, by1 = region_bbox(rects)
    verts, origin = _densify(np.asarray(points), min(pitch, r / 4.0),
                             (bx0 - r, bx1 + r, by0 - r, by1 + r), r)
    if verts.size == 0:
        return NeighborhoodCells(pitch, np.zeros(0, dtype=complex),
                                 np.zeros(0), np.zeros(0, dtype=np.int64))
    tree = cKDTree(np.column_stack([verts.real, verts.imag]))
    dist, vidx = tree.query(np.column_stack([centers.real, centers.imag]),
                            k=1, distance_upper_bound=r)
    covered = dist < r
    return NeighborhoodCells(pitch, centers[covered], areas[covered],
                             origin[vidx[covered]])


def neighborhood_area(curve, region: Sequence[Rect], r: float,
                      pitch: Optional[float] = None) -> float:
    """Area of {z in region : dist(z, curve) < r}, on a lattice of pitch
    <= r/4 (the curve polyline is subdivided to the same scale)."""
    points = curve.points if isinstance(curve, TracedCurve) else np.asarray(curve)
    return neighborhood_cells(points, region, r, pitch=pitch).area
