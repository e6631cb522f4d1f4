"""``volball`` command-line interface.

Exit codes: 0 success, 1 usage / I/O / parse error, 2 solver or location
error. Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import errors
from .mesh import TetMesh, generate_mesh, read_arrays, read_mesh, write_mesh
from .metrics import (
    evaluate,
    write_distortion_csv,
    write_histogram_csv,
    write_summary_csv,
)
from .registration import deformation_measure, register, write_frames
from .solver import SolverConfig, normalized_mesh, parameterize

EXIT_OK, EXIT_IO, EXIT_SOLVER = 0, 1, 2

_IO_ERRORS = (OSError, errors.MalformedFile, errors.DegenerateTet, errors.NonManifoldBoundary,
              errors.DisconnectedBoundary)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_IO)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config(path) -> dict:
    """Parse ``key = value`` lines (``#`` comments) into SolverConfig fields."""
    types = {f.name: f.type for f in dataclasses.fields(SolverConfig)}
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        value = value.strip("\"'")
        if key not in types:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        conv = {"int": int, "float": float, "bool": _bool, "str": str}[types[key]]
        try:
            out[key] = conv(value)
        except ValueError as exc:
            raise UsageError(f"{path}:{n}: {exc}") from None
    return out


def _solver_config(args) -> SolverConfig:
    opts = read_config(args.config) if args.config else {}
    flags = {"cg_max_iters": args.iters, "tol_epsilon": args.tol,
             "vsem_warm_steps": args.warm_steps}
    opts.update({k: v for k, v in flags.items() if v is not None})
    if args.no_ast:
        opts["ast_enabled"] = False
    if args.wolfe:
        opts["safeguard"] = "strong_wolfe"
    try:
        return SolverConfig(**opts)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _require(path) -> Path:
    p = Path(path)
    if p.suffix in (".node", ".ele"):
        for q in (p.with_suffix(".node"), p.with_suffix(".ele")):
            if not q.is_file():
                raise FileNotFoundError(f"no such file: {q}")
    elif not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _outdir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _read_map(path, mesh: TetMesh) -> np.ndarray:
    verts, _ = read_arrays(_require(path))
    if len(verts) != mesh.n_vertices:
        raise errors.MalformedFile(
            f"{path}: map has {len(verts)} vertices, mesh has {mesh.n_vertices}")
    return verts


# ---------------------------------------------------------------------------
# subcommands


def cmd_param(args) -> int:
    cfg = _solver_config(args)
    mesh = read_mesh(_require(args.mesh))
    out = _outdir(args.output)
    f, _, report = parameterize(mesh, cfg)
    work = normalized_mesh(mesh, cfg)
    write_mesh(out / "map.mesh", f, work.tets)
    write_mesh(out / "normalized.mesh", work)
    (out / "report.csv").write_text(report.to_csv())
    last = report.records[-1]
    print(f"termination={report.termination} iterations={report.iterations} "
          f"E_I={last.energy!r} foldings={last.foldings}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    mesh = read_mesh(_require(args.mesh))
    f = _read_map(args.map, mesh)
    out = _outdir(args.output)
    s = evaluate(mesh, f)
    write_distortion_csv(out / "distortion.csv", s.values)
    write_summary_csv(out / "summary.csv", s)
    write_histogram_csv(out / "histogram.csv", s.values)
    print(",".join(s.row()))
    print(",".join(repr(v) if isinstance(v, float) else str(v) for v in s.row().values()))
    return EXIT_OK


def _registration(args):
    mesh0 = read_mesh(_require(args.mesh0))
    f0 = _read_map(args.map0, mesh0)
    mesh1 = read_mesh(_require(args.mesh1))
    f1 = _read_map(args.map1, mesh1)
    source = target = None
    if args.source_mesh:
        source = read_mesh(_require(args.source_mesh))
        if source.n_vertices != mesh0.n_vertices:
            raise errors.MalformedFile(f"{args.source_mesh}: vertex count differs from {args.mesh0}")
    if args.target_mesh:
        t = read_mesh(_require(args.target_mesh))
        if t.n_vertices != mesh1.n_vertices:
            raise errors.MalformedFile(f"{args.target_mesh}: vertex count differs from {args.mesh1}")
        target = t.vertices
    return register(mesh0, f0, mesh1, f1, source=source, target_vertices=target)


def cmd_register(args) -> int:
    reg = _registration(args)
    out = _outdir(args.output)
    (out / "registration.csv").write_text(reg.to_csv())
    disp = np.linalg.norm(reg.source.vertices - reg.phi, axis=1)
    print(f"d_phi={deformation_measure(reg)!r} d_phi_rigid={deformation_measure(reg, align=True)!r} "
          f"max_displacement={float(disp.max())!r}")
    return EXIT_OK


def _times(text: str) -> list:
    try:
        ts = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --t list {text!r}") from None
    if not ts or any(not 0.0 <= t <= 1.0 for t in ts):
        raise UsageError("--t values must lie in [0, 1]")
    return ts


def cmd_morph(args) -> int:
    times = _times(args.t)
    reg = _registration(args)
    for p in write_frames(_outdir(args.output), reg, times):
        print(p)
    return EXIT_OK


def cmd_generate(args) -> int:
    axes = tuple(float(s) for s in args.axes.split(",")) if args.axes else (1.0, 1.0, 1.0)
    if len(axes) != 3:
        raise UsageError("--axes needs three comma-separated values")
    mesh = generate_mesh(args.kind, args.resolution, axes=axes, seed=args.seed)
    path = Path(args.output)
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    write_mesh(path, mesh)
    print(f"{path}: {mesh.n_vertices} vertices, {mesh.n_tets} tets")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="volball", description="Volume-preserving ball parameterization of tet meshes.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/OpenMP worker threads (results are deterministic at 1)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("param", help="parameterize a mesh onto the unit ball")
    s.add_argument("mesh", help="input .mesh or .node/.ele")
    s.add_argument("-o", "--output", default="out", help="output directory (default: out)")
    s.add_argument("--iters", type=int, help="CG iteration cap (default 500)")
    s.add_argument("--tol", type=float, help="stop when the energy decrease is at most this")
    s.add_argument("--warm-steps", type=int, help="fixed-point warm start rounds (default 15)")
    s.add_argument("--no-ast", action="store_true", help="skip pose normalization")
    s.add_argument("--wolfe", action="store_true", help="strong Wolfe line search")
    s.add_argument("--config", help="key = value file of solver settings; flags override")
    s.set_defaults(func=cmd_param)

    s = sub.add_parser("metrics", help="volume distortion of a map")
    s.add_argument("mesh")
    s.add_argument("map", help="map file (mesh with image coordinates)")
    s.add_argument("-o", "--output", default="out")
    s.set_defaults(func=cmd_metrics)

    for name, func, helptext in (("register", cmd_register, "register two parameterized meshes"),
                                 ("morph", cmd_morph, "write linear homotopy frames")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("mesh0")
        s.add_argument("map0")
        s.add_argument("mesh1")
        s.add_argument("map1")
        s.add_argument("--source-mesh", help="source coordinates to report (same connectivity as mesh0)")
        s.add_argument("--target-mesh", help="target coordinates to interpolate (same connectivity as mesh1)")
        s.add_argument("-o", "--output", default="out")
        if name == "morph":
            s.add_argument("--t", default="0,0.333333333333333,0.666666666666667,1",
                           help="comma-separated times in [0, 1]")
        s.set_defaults(func=func)

    s = sub.add_parser("generate", help="write a synthetic test mesh")
    s.add_argument("kind", choices=["ball", "cube", "ellipsoid", "blob"])
    s.add_argument("resolution", type=int)
    s.add_argument("-o", "--output", required=True, help="output .mesh path")
    s.add_argument("--axes", help="ellipsoid semi-axes a,b,c")
    s.add_argument("--seed", type=int, default=0, help="blob seed")
    s.set_defaults(func=cmd_generate)
    return p


def _limits(threads):
    if threads is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("volball: error: --threads must be positive", file=sys.stderr)
        return EXIT_IO
    try:
        with _limits(args.threads):
            return args.func(args)
    except (UsageError, *_IO_ERRORS) as exc:
        print(f"volball: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except errors.LocationFailure as exc:
        ids = ",".join(map(str, exc.vertices[:50]))
        print(f"volball: error: {exc} (source vertices: {ids})", file=sys.stderr)
        return EXIT_SOLVER
    except (errors.VolballError, np.linalg.LinAlgError) as exc:
        print(f"volball: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
