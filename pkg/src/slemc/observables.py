"""Closed-form observables and their Monte Carlo estimators.

Green's-function shapes are returned without their unknown multiplicative
constants; everything downstream is formulated constant-free (ratios) or
estimates the constant explicitly with a confidence interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import drivers, loewner
from .loewner import Rect
from .seeds import substream


def hausdorff_dim(kappa: float) -> float:
    return 1.0 + kappa / 8.0


@dataclass(frozen=True)
class GreenSpec:
    """Which Green's-function shape is meant, plus its derived exponents.

    kind: "interior" (general force point), "sle" (the interior-point
    density shape, rho pinned at kappa - 8), "capacity" (rho pinned at
    -8), or "boundary".  All evaluations are shape functions: the unknown
    multiplicative constants exist only as Monte Carlo estimates
    (EstimateReport), never as fields with values.
    """

    kappa: float
    kind: str = "interior"
    rho: Optional[float] = None

    def __post_init__(self):
        if not (self.kappa > 0):
            raise ValueError("kappa must be positive")
        if self.kind not in ("interior", "sle", "capacity", "boundary"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "sle" and not (0 < self.kappa < 8):
            raise ValueError("interior-point density shape needs kappa in (0, 8)")
        if self.kind in ("interior", "boundary") and self.rho is None:
            raise ValueError(f"kind {self.kind!r} needs rho")

    @property
    def effective_rho(self) -> float:
        if self.kind == "sle":
            return self.kappa - 8.0
        if self.kind == "capacity":
            return -8.0
        return self.rho

    @property
    def interior_dim(self) -> float:
        """Curve dimension 1 + kappa/8."""
        return hausdorff_dim(self.kappa)

    @property
    def boundary_dim(self) -> float:
        """Dimension 2 - 8/kappa of the curve's real-line intersection."""
        return 2.0 - 8.0 / self.kappa

    def evaluate(self, z) -> np.ndarray:
        if self.kind == "interior":
            return green_interior(self.kappa, self.rho, z)
        if self.kind == "sle":
            return green_sle_shape(self.kappa, z)
        if self.kind == "capacity":
            return green_capacity_shape(self.kappa, z)
        return green_boundary(self.kappa, self.rho, z)


# -- closed forms -------------------------------------------------------------


def green_interior(kappa: float, rho: float, z) -> np.ndarray:
    """|z|^(rho/kappa) * (Im z)^(rho^2/(8 kappa)) for z in the open upper
    half-plane."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise ValueError("z must lie in the open upper half-plane")
    out = np.abs(z) ** (rho / kappa) * z.imag ** (rho * rho / (8.0 * kappa))
    return out if out.shape else float(out)


def green_sle_shape(kappa: float, z) -> np.ndarray:
    """|z|^(d-2) * sin(arg z)^(kappa/8 + 8/kappa - 2), d = 1 + kappa/8;
    the interior-point density shape, valid for kappa in (0, 8).

    Coincides identically with green_interior(kappa, kappa - 8, z)."""
    if not (0 < kappa < 8):
        raise ValueError("kappa must lie in (0, 8)")
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise ValueError("z must lie in the open upper half-plane")
    d = hausdorff_dim(kappa)
    r = np.abs(z)
    out = r ** (d - 2.0) * (z.imag / r) ** (kappa / 8.0 + 8.0 / kappa - 2.0)
    return out if out.shape else float(out)


def green_capacity_shape(kappa: float, z) -> np.ndarray:
    """(Im z / |z|)^(8/kappa) on the closed upper half-plane minus 0; the
    capacity-time density shape (zero on the real line)."""
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    if np.any(r == 0):
        raise ValueError("z = 0 not allowed")
    if np.any(z.imag < 0):
        raise ValueError("z must lie in the closed upper half-plane")
    out = (z.imag / r) ** (8.0 / kappa)
    return out if out.shape else float(out)


def green_boundary(kappa: float, rho: float, x) -> np.ndarray:
    """|x|^(rho/kappa) on the real line minus 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise ValueError("x = 0 not allowed")
    out = np.abs(x) ** (rho / kappa)
    return out if out.shape else float(out)


def m_interior(kappa: float, rho: float, z, d) -> np.ndarray:
    """Force-point observable |Z|^(rho/k) Y^(rho^2/8k) D^((rho/k)(1-k/4+rho/8))
    from the flow data Z = g_t(z0) - lam_t, D = |g_t'(z0)|."""
    z = np.asarray(z, dtype=complex)
    d = np.asarray(d, dtype=float)
    e_d = (rho / kappa) * (1.0 - kappa / 4.0 + rho / 8.0)
    out = np.abs(z) ** (rho / kappa) * z.imag ** (rho * rho / (8.0 * kappa)) * d ** e_d
    return out if out.shape else float(out)


def m_boundary(kappa: float, rho: float, z, d) -> np.ndarray:
    """Boundary observable |Z|^(rho/k) D^((rho/k)(1-k/4+rho/4)) from the
    real flow data Z = g_t(x0) - lam_t, D = g_t'(x0)."""
    z = np.asarray(z, dtype=float)
    d = np.asarray(d, dtype=float)
    e_d = (rho / kappa) * (1.0 - kappa / 4.0 + rho / 4.0)
    out = np.abs(z) ** (rho / kappa) * d ** e_d
    return out if out.shape else float(out)


def martingale_M_interior(track: drivers.ForcePointTrack, kappa: float,
                          rho: float) -> np.ndarray:
    """Per-step observable along a force-point track; zero after swallowing."""
    z, d = track.z, track.d
    ok = np.isfinite(d) & np.isfinite(z.real if np.iscomplexobj(z) else z)
    out = np.zeros(z.shape)
    out[ok] = m_interior(kappa, rho, z[ok], d[ok])
    return out


def martingale_M_boundary(track: drivers.ForcePointTrack, kappa: float,
                          rho: float) -> np.ndarray:
    z, d = track.z, track.d
    ok = np.isfinite(d) & np.isfinite(z)
    out = np.zeros(z.shape)
    out[ok] = m_boundary(kappa, rho, z[ok], d[ok])
    return out


# -- quadrature ---------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint-rule lattice over a rectangle-union region in the upper
    half-plane; every node is strictly interior."""

    region: tuple[Rect, ...]
    pitch: float
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, region: Sequence[Rect], pitch: float) -> "QuadratureGrid":
        rects = loewner.validate_region(region)
        if not (pitch > 0):
            raise ValueError("pitch must be positive")
        nodes, weights = [], []
        for x0, x1, y0, y1 in rects:
            nx = max(1, int(round((x1 - x0) / pitch)))
            ny = max(1, int(round((y1 - y0) / pitch)))
            hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
            xs = x0 + (np.arange(nx) + 0.5) * hx
            ys = y0 + (np.arange(ny) + 0.5) * hy
            gx, gy = np.meshgrid(xs, ys, indexing="ij")
            nodes.append((gx + 1j * gy).ravel())
            weights.append(np.full(nx * ny, hx * hy))
        nodes = np.concatenate(nodes)
        weights = np.concatenate(weights)
        keep = nodes.imag > 0
        return cls(tuple(rects), pitch, nodes[keep], weights[keep])

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values * self.weights))


def quad_green(kind: str, kappa: float, rho: Optional[float],
               region: Sequence[Rect], pitch: float) -> float:
    """Midpoint quadrature of a Green's-function shape over a region."""
    grid = QuadratureGrid.build(region, pitch)
    if kind == "interior":
        vals = green_interior(kappa, rho, grid.nodes)
    elif kind == "sle":
        vals = green_sle_shape(kappa, grid.nodes)
    elif kind == "capacity":
        vals = green_capacity_shape(kappa, grid.nodes)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return grid.integrate(np.asarray(vals))


def quad_green_refined(kind, kappa, rho, region, pitch, flag_rel=0.05):
    """Quadrature with a coarse-grid cross-check; flags disagreement."""
    fine = quad_green(kind, kappa, rho, region, pitch)
    coarse = quad_green(kind, kappa, rho, region, 2 * pitch)
    flagged = abs(fine - coarse) > flag_rel * abs(fine)
    return fine, flagged


def _m_alive(kappa: float, rho: float, z: np.ndarray, d: np.ndarray,
             alive: np.ndarray) -> np.ndarray:
    """m_interior where alive, zero elsewhere (dead flow data may sit on
    the real line, so the formula is only applied to live entries)."""
    z_safe = np.where(alive, z, 1j)
    return np.where(alive, m_interior(kappa, rho, z_safe, d), 0.0)


def psi_U(flow: Sequence[loewner.LoewnerFlowState], grid: QuadratureGrid,
          kappa: float, rho: float) -> np.ndarray:
    """Midpoint quadrature of the force-point observable over the grid
    nodes tracked through the flow, one value per recorded time."""
    out = np.empty(len(flow))
    for i, st in enumerate(flow):
        m = _m_alive(kappa, rho, st.g - st.lam, np.abs(st.gprime), st.alive)
        out[i] = grid.integrate(m)
    return out


def psi_series(lams: np.ndarray, dt: float, grid: QuadratureGrid, kappa: float,
               rho: float, record_steps: Sequence[int],
               swallow_eps: float = 1e-3) -> np.ndarray:
    """Psi_t(U) for a batch of drivers at the recorded steps.

    Returns (len(record_steps), B).  Quadrature nodes are flowed with the
    slit-map scheme; dead nodes contribute zero.
    """
    recs = loewner.flow_interior(lams, dt, grid.nodes, record_steps, swallow_eps)
    B = np.atleast_2d(lams).shape[0]
    out = np.empty((len(recs), B))
    for i, r in enumerate(recs):
        m = _m_alive(kappa, rho, r["w"] - r["lam"][:, None], np.abs(r["gprime"]),
                     r["alive"])
        out[i] = m @ grid.weights
    return out


# -- estimate reports ---------------------------------------------------------


@dataclass
class EstimateReport:
    """Monte Carlo estimate with provenance.  JSON schema:
    {name, kappa, rho, value, stderr, ci95: [lo, hi], n, seed, flags}."""

    name: str
    kappa: float
    rho: Optional[float]
    value: float
    stderr: float
    n: int
    seed: int
    flags: list[str] = field(default_factory=list)

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.value - 1.96 * self.stderr, self.value + 1.96 * self.stderr)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kappa": self.kappa,
            "rho": self.rho,
            "value": self.value,
            "stderr": self.stderr,
            "ci95": list(self.ci95),
            "n": self.n,
            "seed": self.seed,
            "flags": self.flags,
        }


# -- capacity Green's function estimator --------------------------------------


def capacity_green_mc(kappa: float, z: complex, t: float, n: int,
                      rng: np.random.Generator, sampler: str = "radial",
                      dt: float = 1e-3, s_max: float = 10.0,
                      swallow_eps: float = 1e-3, seed: int = -1,
                      horizon_factor: float = 1.5) -> EstimateReport:
    """Estimate the capacity-time Green's function (up to its unknown
    constant) at (z, t): shape(z) * P[swallowing time <= t] over n
    force-point driver runs with rho = -8.

    sampler "radial" uses the radial-coordinate diffusion; "sde" the
    direct driver integrator (unresolved fraction above 1% fails the run).
    """
    z = complex(z)
    if not (z.imag > 0 and t > 0):
        raise ValueError("need z in the upper half-plane and t > 0")
    shape = green_capacity_shape(kappa, z)
    flags = []
    if sampler == "radial":
        res = drivers.radial_swallow_times(kappa, -8.0, z, n, rng,
                                           ds=dt, s_max=s_max)
        hits = int(np.count_nonzero(res["T"] <= t))
        if res["flagged"].any():
            flags.append(f"trunc_flagged={int(res['flagged'].sum())}")
    elif sampler == "sde":
        res = drivers.sle_batch(kappa, -8.0, np.full(n, z), dt,
                                horizon_factor * t, swallow_eps * abs(z), rng,
                                keep_driver=False, boundary=False)
        n_unres = int(res["unresolved"].sum())
        if n_unres > 0.01 * n:
            raise drivers.SimulationError(
                f"unresolved fraction {n_unres / n:.3f} exceeds 1%")
        ok = ~res["unresolved"]
        hits = int(np.count_nonzero(res["swallowed"][ok] & (res["T"][ok] <= t)))
        n = int(ok.sum())
        if n_unres:
            flags.append(f"unresolved={n_unres}")
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    p = hits / n
    se = math.sqrt(p * (1.0 - p) / n)
    return EstimateReport(
        name="capacity_green", kappa=kappa, rho=-8.0,
        value=shape * p, stderr=shape * se, n=n, seed=seed, flags=flags,
    )


# -- C_{kappa,1} --------------------------------------------------------------


@dataclass
class CK1Result:
    route_a: EstimateReport
    route_b: EstimateReport
    ratio: float
    ratio_stderr: float

    def to_dict(self) -> dict:
        return {
            "route_a": self.route_a.to_dict(),
            "route_b": self.route_b.to_dict(),
            "ratio_a_over_b": self.ratio,
            "ratio_stderr": self.ratio_stderr,
        }


def c_kappa1_lattice(kappa: float, t: float, rng: np.random.Generator,
                     x_max: float = 6.0, y_max: Optional[float] = None,
                     pitch: float = 0.25, n_per_node: int = 400,
                     ds: float = 1e-3, s_max: float = 8.0, seed: int = -1
                     ) -> EstimateReport:
    """Lattice estimate of int G_t(z) dA(z) / t, where G_t(z) =
    shape(z) * P_z[T_z <= t]; equals the capacity-parametrization constant
    for every t.

    Uses left-right symmetry (x >= 0 nodes doubled).  Points with
    Im z > 2 sqrt(t) cannot be swallowed by t and contribute exactly 0,
    so the lattice stops there.  The outermost x-column acts as a guard:
    a nonzero guard estimate flags the report.
    """
    y_max = 2.0 * math.sqrt(t) if y_max is None else y_max
    nx = int(round(x_max / pitch))
    ny = int(round(y_max / pitch))
    xs = (np.arange(nx) + 0.5) * pitch
    ys = (np.arange(ny) + 0.5) * pitch
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    nodes = (gx + 1j * gy).ravel()
    cell = pitch * pitch

    starts = np.repeat(nodes, n_per_node)
    res = drivers.radial_swallow_times(kappa, -8.0, starts, starts.size, rng,
                                       ds=ds, s_max=s_max)
    hits = (res["T"] <= t).reshape(nodes.size, n_per_node)
    p = hits.mean(axis=1)
    # factor 2: each x > 0 node stands for its mirror at -x as well
    w = 2.0 * cell * green_capacity_shape(kappa, nodes)
    total = float(np.sum(w * p))
    var = float(np.sum(w * w * p * (1.0 - p) / n_per_node))
    guard = float(np.sum((w * p)[nodes.real > x_max - pitch]))
    flags = []
    if guard > 0:
        flags.append(f"guard_column_mass={guard:.3e}")
    if res["flagged"].any():
        flags.append(f"trunc_flagged={int(res['flagged'].sum())}")
    value, stderr = total / t, math.sqrt(var) / t
    if 2 * 1.96 * stderr > 0.25 * value:
        flags.append("undersampled_ci")
    return EstimateReport(
        name="c_kappa1_lattice", kappa=kappa, rho=-8.0,
        value=value, stderr=stderr,
        n=nodes.size * n_per_node, seed=seed, flags=flags,
    )


def estimate_c_kappa1(kappa: float, seed: int,
                      region: Sequence[Rect] = ((-1.0, 1.0, 0.25, 1.25),),
                      n_curves: int = 1000, dt: float = 1e-3,
                      horizon: float = 16.0, out_every: int = 16,
                      t_lattice: float = 1.0, x_max: float = 6.0,
                      lattice_pitch: float = 0.25, n_per_node: int = 400,
                      ensemble=None, threads: int = 1) -> "CK1Result":
    """Two independent estimates of the capacity-parametrization constant.

    Route A inverts the occupation identity on a bounded region using a
    chordal curve ensemble; route B integrates the lattice swallow-time
    estimate of the t=1 capacity Green's function over the half-plane.
    """
    from . import ensembles
    from .seeds import substream

    if ensemble is None:
        ensemble = ensembles.build_curve_ensemble(
            kappa, n_curves, dt, horizon, out_every, seed, threads=threads)
    occ = ensemble.occupation(region)
    route_a = c_kappa1_occupation(kappa, occ, region, seed=seed)
    route_b = c_kappa1_lattice(kappa, t_lattice, substream(seed, 9001),
                               x_max=x_max, pitch=lattice_pitch,
                               n_per_node=n_per_node, seed=seed)
    ratio, ratio_se = _ratio_independent(route_a, route_b)
    return CK1Result(route_a=route_a, route_b=route_b,
                     ratio=ratio, ratio_stderr=ratio_se)


def _ratio_independent(a: "EstimateReport", b: "EstimateReport"):
    r = a.value / b.value
    se = abs(r) * math.hypot(a.stderr / a.value, b.stderr / b.value)
    return r, se


def c_kappa1_occupation(kappa: float, occupations: np.ndarray,
                        region: Sequence[Rect], pitch: float = 0.01,
                        seed: int = -1) -> EstimateReport:
    """Occupation-identity estimate: C = int_U shape dA / E[occupation(U)],
    from per-curve capacity-time occupations of U."""
    occ = np.asarray(occupations, dtype=float)
    n = occ.size
    mean = float(occ.mean())
    se_occ = float(occ.std(ddof=1) / math.sqrt(n))
    integral, flagged = quad_green_refined("capacity", kappa, None, region, pitch)
    value = integral / mean
    stderr = value * se_occ / mean
    flags = ["quadrature_unconverged"] if flagged else []
    if 2 * 1.96 * stderr > 0.25 * value:
        flags.append("undersampled_ci")
    return EstimateReport(
        name="c_kappa1_occupation", kappa=kappa, rho=-8.0,
        value=value, stderr=stderr, n=n, seed=seed, flags=flags,
    )


# -- Minkowski content ---------------------------------------------------------


def minkowski_content(curve, region: Sequence[Rect], kappa: float, r: float,
                      pitch: Optional[float] = None) -> float:
    """Fixed-scale content estimate r^(d-2) * area(r-neighborhood in the
    region), d = 1 + kappa/8.  No r -> 0 extrapolation is attempted; use
    matched r when comparing contents."""
    if not (0 < kappa < 8):
        raise ValueError("kappa must lie in (0, 8)")
    if not (r > 0):
        raise ValueError("r must be positive")
    d = hausdorff_dim(kappa)
    area = loewner.neighborhood_area(curve, region, r, pitch=pitch)
    return r ** (d - 2.0) * area
