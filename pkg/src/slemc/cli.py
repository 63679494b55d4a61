"""Config-driven command line front end.

Subcommands: simulate, trace, estimate, verify, archive-info.  A run is
reproducible from its emitted metadata (config echo + seed); outputs are
written atomically (write to a temp file, then rename).

Config files are flat key=value lines (# comments allowed); command-line
flags override file values.  Complex numbers are written "a+bi", regions
as semicolon-separated x0,x1,y0,y1 quadruples.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields as dc_fields
from typing import Optional, Sequence

import numpy as np

from . import archive, drivers, loewner, observables, verify
from .seeds import substream


# -- value formats -------------------------------------------------------------


def format_complex(z: complex) -> str:
    z = complex(z)
    if z.imag == 0:
        return repr(z.real)
    sign = "+" if z.imag >= 0 else "-"
    return f"{z.real!r}{sign}{abs(z.imag)!r}i"


def parse_complex(s: str) -> complex:
    s = s.strip().replace(" ", "")
    if s.endswith("i"):
        s = s[:-1] + "j"
        try:
            return complex(s)
        except ValueError:
            pass
        # bare "bi" form such as "1i" / "-0.5i"
        try:
            return complex(0.0, float(s[:-1] or "1"))
        except ValueError as exc:
            raise ValueError(f"bad complex literal {s!r}") from exc
    return complex(float(s))


def format_regions(rects: Sequence[loewner.Rect]) -> str:
    return ";".join(",".join(repr(float(v)) for v in r) for r in rects)


def parse_regions(s: str) -> list[loewner.Rect]:
    rects = []
    for part in s.split(";"):
        part = part.strip()
        if not part:
            continue
        vals = [float(v) for v in part.split(",")]
        if len(vals) != 4:
            raise ValueError(f"region needs 4 numbers, got {part!r}")
        rects.append(tuple(vals))
    return rects


def format_floats(xs: Sequence[float]) -> str:
    return ",".join(repr(float(x)) for x in xs)


def parse_floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


# -- run configuration ----------------------------------------------------------


_FIELD_CODECS = {
    "force_point": (format_complex, parse_complex),
    "z": (format_complex, parse_complex),
    "region": (format_regions, parse_regions),
    "region2": (format_regions, parse_regions),
    "b_list": (format_floats, parse_floats),
    "t_list": (format_floats, parse_floats),
    "tests": (lambda v: ",".join(v), lambda s: [x for x in s.split(",") if x]),
}


@dataclass
class RunConfig:
    """Flat, serializable configuration for one CLI run."""

    subcommand: str = "simulate"
    kind: str = "brownian"          # brownian | sle-rho | extended | radial
    kappa: float = 2.0
    rho: Optional[float] = None
    force_point: Optional[complex] = None
    dt: float = 1e-3
    horizon: float = 4.0
    swallow_eps: float = 1e-3
    n: int = 10
    seed: int = 0
    out: str = "out"
    threads: int = 1
    quick: bool = False
    # estimator / verify parameters
    estimator: str = "c-kappa1"     # c-kappa1 | capacity-green | psi0
    z: Optional[complex] = None
    t: float = 1.0
    r: float = 0.02
    pitch: float = 0.01
    region: list = field(default_factory=lambda: [(-1.0, 1.0, 0.25, 1.25)])
    region2: list = field(default_factory=list)
    b_list: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    t_list: list = field(default_factory=list)
    tests: list = field(default_factory=lambda: ["all"])
    out_every: int = 1

    def emit(self) -> str:
        lines = []
        for f in sorted(dc_fields(self), key=lambda f: f.name):
            v = getattr(self, f.name)
            if v is None:
                continue
            codec = _FIELD_CODECS.get(f.name)
            if codec:
                if isinstance(v, list) and not v:
                    continue
                lines.append(f"{f.name}={codec[0](v)}")
            elif isinstance(v, bool):
                lines.append(f"{f.name}={'true' if v else 'false'}")
            else:
                lines.append(f"{f.name}={v!r}" if isinstance(v, float)
                             else f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        known = {f.name: f for f in dc_fields(cls)}
        kwargs = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line {raw!r}")
            key, val = (x.strip() for x in line.split("=", 1))
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _parse_field(key, val, known[key])
        return cls(**kwargs)

    def echo_dict(self) -> dict:
        doc = {}
        for f in dc_fields(self):
            v = getattr(self, f.name)
            codec = _FIELD_CODECS.get(f.name)
            if codec and v is not None:
                doc[f.name] = codec[0](v)
            else:
                doc[f.name] = v
        return doc


def _parse_field(key: str, val: str, f) -> object:
    codec = _FIELD_CODECS.get(key)
    if codec:
        return codec[1](val)
    typ = {"subcommand": str, "kind": str, "out": str, "estimator": str}.get(key)
    if typ is str:
        return val
    if key in ("n", "seed", "threads", "out_every"):
        return int(val)
    if key == "quick":
        return val.lower() in ("1", "true", "yes")
    return float(val)


# -- output helpers -------------------------------------------------------------


def atomic_write(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, doc: dict) -> None:
    atomic_write(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())


# -- subcommands ----------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    rng_for = lambda i: substream(cfg.seed, i)
    dcfg = drivers.DriverConfig(kappa=cfg.kappa, dt=cfg.dt, horizon=cfg.horizon,
                                rho=cfg.rho, force_point=cfg.force_point,
                                swallow_eps=cfg.swallow_eps, seed=cfg.seed)
    paths = []
    counts = {"swallowed": 0, "at_horizon": 0, "unresolved": 0}
    junctions = []
    times = []
    if cfg.kind == "extended":
        dcfg.require_extendable()
    for i in range(cfg.n):
        rng = rng_for(i)
        if cfg.kind == "brownian":
            paths.append(drivers.simulate_brownian_driver(dcfg, rng))
            counts["at_horizon"] += 1
        elif cfg.kind == "sle-rho":
            sim = (drivers.simulate_sle_rho_interior if dcfg.interior
                   else drivers.simulate_sle_rho_boundary)
            try:
                p, track = sim(dcfg, rng)
            except drivers.SimulationError:
                counts["unresolved"] += 1
                continue
            counts["swallowed" if track.swallowed else "at_horizon"] += 1
            paths.append(p)
        elif cfg.kind == "extended":
            try:
                p, junction = drivers.simulate_extended(dcfg, rng)
            except drivers.SimulationError:
                counts["unresolved"] += 1
                continue
            counts["swallowed"] += 1
            junctions.append(junction)
            paths.append(p)
        elif cfg.kind == "radial":
            s = drivers.simulate_radial_diffusion(dcfg, rng)
            paths.append(archive.SampledPath(s.s_step, s.v, lifetime=math.inf))
            times.append(s.swallow_time)
            counts["swallowed"] += 1
        else:
            raise ValueError(f"unknown simulate kind {cfg.kind!r}")
    os.makedirs(cfg.out, exist_ok=True)
    tmp = os.path.join(cfg.out, "paths.slep")
    import io
    buf = io.BytesIO()
    archive.write_paths(buf, paths)
    atomic_write(tmp, buf.getvalue())
    meta = {"config": cfg.echo_dict(), "counts": counts,
            "n_paths_written": len(paths)}
    if junctions:
        meta["junction_times"] = junctions
    write_json(os.path.join(cfg.out, "metadata.json"), meta)
    if times:
        body = "swallow_time\n" + "".join(f"{float(t)!r}\n" for t in times)
        atomic_write(os.path.join(cfg.out, "swallow_times.csv"), body.encode())
    print(f"wrote {len(paths)} paths to {tmp}")
    return 0


def cmd_trace(cfg: RunConfig, archive_path: str) -> int:
    paths = archive.load_paths(archive_path)
    os.makedirs(cfg.out, exist_ok=True)
    if not paths:
        print("warning: empty archive, nothing to trace", file=sys.stderr)
        return 0
    for i, p in enumerate(paths):
        if p.is_complex:
            print(f"warning: path {i} is complex-valued, skipped", file=sys.stderr)
            continue
        curve = loewner.trace_curve(p, out_every=max(1, cfg.out_every),
                                    threads=cfg.threads)
        bad = np.flatnonzero(~np.isfinite(curve.points))
        if bad.size:
            print(f"warning: path {i}: inverse-map composition failed at "
                  f"{bad.size} of {curve.points.size} points "
                  f"(first at t={bad[0] * curve.dt:g})", file=sys.stderr)
        lines = ["t,re,im"]
        for t, z in zip(curve.times, curve.points):
            lines.append(f"{float(t)!r},{float(z.real)!r},{float(z.imag)!r}")
        atomic_write(os.path.join(cfg.out, f"curve_{i:04d}.csv"),
                     ("\n".join(lines) + "\n").encode())
    print(f"traced {len(paths)} paths into {cfg.out}")
    return 0


def cmd_estimate(cfg: RunConfig) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.estimator == "capacity-green":
        if cfg.z is None:
            raise ValueError("capacity-green needs z")
        rep = observables.capacity_green_mc(cfg.kappa, cfg.z, cfg.t, cfg.n,
                                            substream(cfg.seed, 0),
                                            seed=cfg.seed)
        doc = rep.to_dict()
    elif cfg.estimator == "c-kappa1":
        n_curves = max(cfg.n, 10)
        quick_profile = {"n_per_node": 60, "horizon": 8.0, "out_every": 20,
                         "lattice_pitch": 0.5, "x_max": 4.0}
        res = observables.estimate_c_kappa1(
            cfg.kappa, cfg.seed, region=cfg.region, n_curves=n_curves,
            threads=cfg.threads, **(quick_profile if cfg.quick else {}))
        doc = res.to_dict()
    elif cfg.estimator == "psi0":
        val, flagged = observables.quad_green_refined(
            "interior", cfg.kappa, cfg.rho if cfg.rho is not None else -8.0,
            cfg.region, cfg.pitch)
        doc = {"name": "psi0", "kappa": cfg.kappa, "rho": cfg.rho,
               "value": val, "stderr": 0.0, "ci95": [val, val], "n": 0,
               "seed": cfg.seed,
               "flags": ["quadrature_unconverged"] if flagged else []}
    else:
        raise ValueError(f"unknown estimator {cfg.estimator!r}")
    doc["config"] = cfg.echo_dict()
    write_json(os.path.join(cfg.out, "estimate.json"), doc)
    print(json.dumps({k: doc[k] for k in doc if k != "config"}, sort_keys=True))
    return 0


def cmd_verify(cfg: RunConfig, overrides: Optional[dict] = None) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    names = cfg.tests if cfg.tests else ["all"]
    reports = verify.run_suite(names=names, quick=cfg.quick,
                               threads=cfg.threads, overrides=overrides,
                               progress=lambda s: print(s, flush=True))
    body = "".join(rep.to_json() + "\n" for rep in reports)
    atomic_write(os.path.join(cfg.out, "reports.jsonl"), body.encode())
    n_fail = sum(1 for rep in reports if not rep.passed)
    print(f"{len(reports) - n_fail}/{len(reports)} tests passed")
    return 1 if n_fail else 0


def cmd_archive_info(path: str) -> int:
    print(json.dumps(archive.archive_info(path), indent=2, sort_keys=True))
    return 0


# -- argument parsing ------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.add_argument("--quick", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slemc",
                                 description="Loewner-evolution Monte Carlo toolkit")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    p_sim = sub.add_parser("simulate", help="sample driving processes")
    p_sim.add_argument("--kind", choices=["brownian", "sle-rho", "extended", "radial"])
    p_sim.add_argument("--kappa", type=float)
    p_sim.add_argument("--rho", type=float)
    p_sim.add_argument("--force-point", dest="force_point")
    p_sim.add_argument("--dt", type=float)
    p_sim.add_argument("--horizon", type=float)
    p_sim.add_argument("--swallow-eps", dest="swallow_eps", type=float)
    p_sim.add_argument("--n", type=int)
    _add_common(p_sim)

    p_tr = sub.add_parser("trace", help="trace curves from a driver archive")
    p_tr.add_argument("archive")
    p_tr.add_argument("--out-every", dest="out_every", type=int)
    _add_common(p_tr)

    p_est = sub.add_parser("estimate", help="run an estimator")
    p_est.add_argument("--name", dest="estimator",
                       choices=["c-kappa1", "capacity-green", "psi0"])
    p_est.add_argument("--kappa", type=float)
    p_est.add_argument("--rho", type=float)
    p_est.add_argument("--z")
    p_est.add_argument("--t", type=float)
    p_est.add_argument("--n", type=int)
    p_est.add_argument("--region")
    p_est.add_argument("--pitch", type=float)
    _add_common(p_est)

    p_ver = sub.add_parser("verify", help="run verification tests")
    p_ver.add_argument("--tests", help="comma list or 'all'")
    p_ver.add_argument("--kappa", type=float, help="override the test's kappa")
    p_ver.add_argument("--rho", type=float, help="override the test's rho")
    p_ver.add_argument("--n", type=int, help="override the sample count")
    _add_common(p_ver)

    p_ai = sub.add_parser("archive-info", help="summarize a path archive")
    p_ai.add_argument("archive")
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = RunConfig.parse(fh.read())
    else:
        cfg = RunConfig()
    cfg.subcommand = args.subcommand
    for key in ("kind", "kappa", "rho", "dt", "horizon", "swallow_eps", "n",
                "seed", "out", "threads", "estimator", "t", "pitch",
                "out_every"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "quick", None):
        cfg.quick = True
    if getattr(args, "force_point", None) is not None:
        cfg.force_point = parse_complex(args.force_point)
    if getattr(args, "z", None) is not None:
        cfg.z = parse_complex(args.z)
    if getattr(args, "region", None) is not None:
        cfg.region = parse_regions(args.region)
    if getattr(args, "tests", None) is not None:
        cfg.tests = [x for x in args.tests.split(",") if x]
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.subcommand == "archive-info":
        return cmd_archive_info(args.archive)
    cfg = config_from_args(args)
    if cfg.subcommand == "simulate":
        return cmd_simulate(cfg)
    if cfg.subcommand == "trace":
        return cmd_trace(cfg, args.archive)
    if cfg.subcommand == "estimate":
        return cmd_estimate(cfg)
    if cfg.subcommand == "verify":
        overrides = {k: getattr(args, k) for k in ("kappa", "rho", "n")
                     if getattr(args, k, None) is not None}
        return cmd_verify(cfg, overrides=overrides)
    raise ValueError(f"unknown subcommand {cfg.subcommand!r}")


if __name__ == "__main__":
    sys.exit(main())
