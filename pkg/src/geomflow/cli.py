"""Experiment driver: single runs with diagnostics and the EOC harness.

Configs are declarative INI files; every experiment in the test suite ships
as a config that reproduces one table or figure. Subcommands: ``run``,
``eoc``, ``validate``.
"""

import argparse
import configparser
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateElementError, GeomflowError
from .geometry import export_polyline, export_vtk_polydata, interpolate_shape
from .metrics import l2_projected_distance, linf_error_exact
from .refmesh import build_polygon, build_triangulation, refine_uniform
from .schemes import SchemeConfig, evolve
from .shapes import make_shape

CSV_HEADER = ("step,time,energy,energy_norm,enclosed,enclosed_rel_loss,"
              "mesh_quality,picard_iters")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DEGENERACY = 3

_CURVE_SHAPES = ("circle", "ellipse", "flower")
_SURFACE_SHAPES = ("sphere", "ellipsoid", "torus")

_KNOWN_KEYS = {
    "geometry": {"shape", "segments", "refinements", "target_elements",
                 "target_vertices", "path", "r", "a", "b", "c", "big_r"},
    "scheme": {"flow", "variant", "degree", "tau", "quad_order",
               "picard_tol", "picard_max_iter"},
    "run": {"final_time", "n_steps", "snapshots", "seed"},
    "eoc": {"levels"},
}

_DEFAULTS = {
    "geometry": {"shape": "circle", "segments": "32", "refinements": "2",
                 "target_elements": "", "target_vertices": "", "path": "",
                 "r": "", "a": "", "b": "", "c": "", "big_r": ""},
    "scheme": {"flow": "mcf", "variant": "bgn_quadrature", "degree": "2",
               "tau": "1e-3", "quad_order": "", "picard_tol": "1e-12",
               "picard_max_iter": "100"},
    "run": {"final_time": "", "n_steps": "", "snapshots": "10", "seed": "0"},
    "eoc": {"levels": "2"},
}


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description."""

    shape_name: str
    shape_params: dict
    segments: int
    refinements: int
    target: tuple
    path: str
    scheme: SchemeConfig
    n_steps: int
    final_time: float  # n_steps * tau after adjustment
    tau_adjusted: bool
    snapshots: int
    seed: int
    levels: int
    raw: dict = field(default_factory=dict)

    def make_shape(self):
        return make_shape(self.shape_name, **self.shape_params)

    def build_reference(self, level=0):
        """Flat reference grid at refinement level ``level`` above the base."""
        if self.shape_name == "from_file":
            from .refmesh import read_off

            grid = read_off(self.path)
            for _ in range(level):
                grid = refine_uniform(grid, project=False)
            return grid
        shape = self.make_shape()
        if self.shape_name in _CURVE_SHAPES:
            return build_polygon(shape, self.segments * 2 ** level)
        if self.shape_name == "sphere":
            return build_triangulation(shape, refinements=self.refinements + level)
        grid = build_triangulation(shape, target=self.target)
        for _ in range(level):
            grid = refine_uniform(grid)
        return grid

    def build_grid(self, level=0, degree=None):
        ref = self.build_reference(level)
        return interpolate_shape(ref, degree or self.scheme.degree)

    def echo(self):
        """Human-readable, fully resolved key=value dump."""
        lines = []
        for section, values in self.raw.items():
            lines.append(f"[{section}]")
            for key, val in values.items():
                lines.append(f"{key} = {val}")
            lines.append("")
        return "\n".join(lines).rstrip() + "\n"


def _get_float(cfg, section, key, problems, default=None):
    raw = cfg[section][key].strip()
    if raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        problems.append(f"[{section}] {key}: not a number: {raw!r}")
        return default


def _get_int(cfg, section, key, problems, default=None):
    raw = cfg[section][key].strip()
    if raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        problems.append(f"[{section}] {key}: not an integer: {raw!r}")
        return default


def load_config(path):
    """Parse and validate a config file; raises ConfigError listing every
    problem found."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError([f"cannot read config file {path!r}"])

    problems = []
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            problems.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                problems.append(f"unknown key {key!r} in section [{section}]")

    # materialize defaults
    cfg = {s: dict(d) for s, d in _DEFAULTS.items()}
    for section in parser.sections():
        if section in cfg:
            for key, val in parser[section].items():
                if key in cfg[section]:
                    cfg[section][key] = val

    shape_name = cfg["geometry"]["shape"].strip().lower()
    known_shapes = _CURVE_SHAPES + _SURFACE_SHAPES + ("from_file",)
    if shape_name not in known_shapes:
        problems.append(f"[geometry] shape: unknown shape {shape_name!r} "
                        f"(choose from {known_shapes})")
    shape_params = {}
    for key, attr in (("r", "r"), ("a", "a"), ("b", "b"), ("c", "c"),
                      ("big_r", "R")):
        val = _get_float(cfg, "geometry", key, problems)
        if val is not None:
            shape_params[attr] = val
    segments = _get_int(cfg, "geometry", "segments", problems, 32)
    refinements = _get_int(cfg, "geometry", "refinements", problems, 2)
    te = _get_int(cfg, "geometry", "target_elements", problems)
    tv = _get_int(cfg, "geometry", "target_vertices", problems)
    target = (te, tv) if te is not None else None
    path = cfg["geometry"]["path"].strip()
    if shape_name == "from_file" and not path:
        problems.append("[geometry] path: required when shape = from_file")
    if shape_name in _CURVE_SHAPES and segments is not None and segments < 3:
        problems.append(f"[geometry] segments: must be >= 3, got {segments}")

    degree = _get_int(cfg, "scheme", "degree", problems, 2)
    tau = _get_float(cfg, "scheme", "tau", problems, 1e-3)
    quad_order = _get_int(cfg, "scheme", "quad_order", problems)
    picard_tol = _get_float(cfg, "scheme", "picard_tol", problems, 1e-12)
    picard_max_iter = _get_int(cfg, "scheme", "picard_max_iter", problems, 100)
    scheme = None
    try:
        scheme = SchemeConfig(
            flow=cfg["scheme"]["flow"],
            variant=cfg["scheme"]["variant"],
            degree=degree or 2,
            tau=tau or 1e-3,
            quad_order=quad_order,
            picard_tol=picard_tol or 1e-12,
            picard_max_iter=picard_max_iter or 100,
        )
        dim = 1 if shape_name in _CURVE_SHAPES else 2
        scheme.rule(dim)  # SP exactness requirement
    except ConfigError as exc:
        problems.extend(f"[scheme] {p}" for p in exc.problems)

    final_time = _get_float(cfg, "run", "final_time", problems)
    n_steps = _get_int(cfg, "run", "n_steps", problems)
    tau_adjusted = False
    if final_time is None and n_steps is None:
        problems.append("[run] exactly one of final_time / n_steps is required")
    elif final_time is not None and n_steps is not None:
        problems.append("[run] final_time and n_steps are mutually exclusive")
    elif scheme is not None:
        if final_time is not None:
            if final_time <= 0:
                problems.append(f"[run] final_time: must be positive, got {final_time}")
                n_steps = 0
            else:
                # integer step count; adjust tau downward if T/tau is fractional
                n_steps = max(1, math.ceil(final_time / scheme.tau - 1e-9))
                new_tau = final_time / n_steps
                if abs(new_tau - scheme.tau) > 1e-14 * scheme.tau:
                    tau_adjusted = True
                scheme = SchemeConfig(
                    flow=scheme.flow, variant=scheme.variant,
                    degree=scheme.degree, tau=new_tau,
                    quad_order=scheme.quad_order,
                    picard_tol=scheme.picard_tol,
                    picard_max_iter=scheme.picard_max_iter,
                )
        elif n_steps < 0:
            problems.append(f"[run] n_steps: must be >= 0, got {n_steps}")

    snapshots = _get_int(cfg, "run", "snapshots", problems, 10)
    seed = _get_int(cfg, "run", "seed", problems, 0)
    levels = _get_int(cfg, "eoc", "levels", problems, 2)
    if levels is not None and levels < 1:
        problems.append(f"[eoc] levels: must be >= 1, got {levels}")

    if problems:
        raise ConfigError(problems)

    # resolved echo
    cfg["scheme"]["tau"] = f"{scheme.tau:.17g}"
    cfg["scheme"]["quad_order"] = str(scheme.effective_order(
        1 if shape_name in _CURVE_SHAPES else 2))
    cfg["run"]["n_steps"] = str(n_steps)
    cfg["run"]["final_time"] = f"{n_steps * scheme.tau:.17g}"
    return ExperimentConfig(
        shape_name=shape_name, shape_params=shape_params, segments=segments,
        refinements=refinements, target=target, path=path, scheme=scheme,
        n_steps=n_steps, final_time=n_steps * scheme.tau,
        tau_adjusted=tau_adjusted, snapshots=snapshots, seed=seed,
        levels=levels, raw=cfg,
    )


def _fmt(x):
    return f"{x:.17g}"


def write_csv(records, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER.split(","))
        for r in records:
            writer.writerow([
                r.step, _fmt(r.time), _fmt(r.energy), _fmt(r.energy_norm),
                _fmt(r.enclosed), _fmt(r.enclosed_rel_loss),
                _fmt(r.mesh_quality), r.picard_iters,
            ])


def _snapshot_steps(n_steps, snapshots):
    if snapshots <= 0 or n_steps == 0:
        return set()
    k = min(snapshots, n_steps)
    return {round(i * n_steps / k) for i in range(1, k + 1)} | {0}


def run_single(config, output_dir=None, quiet=False):
    """Evolve one grid; write diagnostics.csv and snapshots."""
    grid = config.build_grid()
    snap_at = _snapshot_steps(config.n_steps, config.snapshots)

    def snapshot(record, g):
        if output_dir is None or record.step not in snap_at:
            return
        if g.dim == 1:
            export_polyline(g, os.path.join(output_dir,
                                            f"snapshot_{record.step:06d}.txt"))
        else:
            export_vtk_polydata(g, os.path.join(output_dir,
                                                f"snapshot_{record.step:06d}.vtk"))

    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
    final, records = evolve(grid, config.scheme, config.n_steps,
                            observers=(snapshot,))
    if output_dir is not None:
        write_csv(records, os.path.join(output_dir, "diagnostics.csv"))
    if not quiet:
        last = records[-1]
        print(f"completed {last.step} steps to t={last.time:.6g}: "
              f"energy {last.energy:.10g}, enclosed {last.enclosed:.10g}, "
              f"mesh quality {last.mesh_quality:.4g}")
    return final, records


def _worker_count(n_jobs):
    raw = os.environ.get("GEOMFLOW_THREADS", "1")
    try:
        cap = max(1, int(raw))
    except ValueError:
        cap = 1
    return min(cap, n_jobs)


def _run_level(config, level):
    ell = config.scheme.degree
    factor = 2 ** (level * (ell + 1))
    tau = config.scheme.tau / factor
    scheme = SchemeConfig(
        flow=config.scheme.flow, variant=config.scheme.variant, degree=ell,
        tau=tau, quad_order=config.scheme.quad_order,
        picard_tol=config.scheme.picard_tol,
        picard_max_iter=config.scheme.picard_max_iter,
    )
    grid = config.build_grid(level)
    h = grid.reference.h
    final, _ = evolve(grid, scheme, config.n_steps * factor)
    return h, tau, final


def run_eoc(config, output_dir=None, quiet=False):
    """Refinement study; returns rows of (level, h, tau, error, order).

    MCF on circles/spheres measures the L-infinity error against the exact
    shrinking solution; SD measures the projected L2 distance between
    consecutive levels, so one extra (finer) run serves as reference.
    """
    flow = config.scheme.flow
    T = config.final_time
    if flow == "mcf":
        if config.shape_name not in ("circle", "sphere"):
            raise ConfigError(["MCF EOC needs an exact solution: shape must be "
                               "circle or sphere"])
        r0 = config.shape_params.get("r", 1.0)
        rate = 2.0 if config.shape_name == "circle" else 4.0
        r_sq = r0 * r0 - rate * T
        if r_sq <= 0:
            raise ConfigError([f"final time {T} is past the extinction time "
                               f"{r0 * r0 / rate}"])
        exact_radius = math.sqrt(r_sq)
        n_runs = config.levels
    else:
        exact_radius = None
        n_runs = config.levels + 1

    workers = _worker_count(n_runs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda l: _run_level(config, l), range(n_runs)))
    else:
        runs = [_run_level(config, l) for l in range(n_runs)]

    rows = []
    errors = []
    for level in range(config.levels):
        h, tau, final = runs[level]
        if exact_radius is not None:
            err = linf_error_exact(final, exact_radius)
        else:
            err = l2_projected_distance(final, runs[level + 1][2])
        errors.append(err)
        if level == 0:
            order = "n/a"
        else:
            prev = errors[level - 1]
            order = (f"{math.log2(prev / err):.2f}"
                     if err > 0 and prev > 0 else "n/a")
        rows.append({"level": level, "h": h, "tau": tau, "error": err,
                     "order": order})

    if not quiet:
        print(f"{'level':>5} {'h':>12} {'tau':>12} {'error':>12} {'order':>6}")
        for row in rows:
            print(f"{row['level']:>5} {row['h']:>12.4e} {row['tau']:>12.4e} "
                  f"{row['error']:>12.4e} {row['order']:>6}")
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, "eoc.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["level", "h", "tau", "error", "order"])
            for row in rows:
                writer.writerow([row["level"], _fmt(row["h"]), _fmt(row["tau"]),
                                 _fmt(row["error"]), row["order"]])
    return rows


def validate_config(path):
    """Load, validate and echo the fully resolved config."""
    config = load_config(path)
    return config.echo()


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="geomflow",
        description="isoparametric finite elements for curvature-driven flows",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (("run", "evolve one grid and write diagnostics"),
                       ("eoc", "refinement study with convergence orders"),
                       ("validate", "check a config file and echo defaults")):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--output", default=None, help="output directory")
        p.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        if args.command == "validate":
            echo = validate_config(args.config)
            if not args.quiet:
                print(echo, end="")
            return EXIT_OK
        config = load_config(args.config)
        if args.command == "run":
            run_single(config, args.output, args.quiet)
        else:
            run_eoc(config, args.output, args.quiet)
        return EXIT_OK
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateElementError as exc:
        print(f"degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERACY
    except GeomflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
