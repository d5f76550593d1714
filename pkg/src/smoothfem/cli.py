"""Experiment driver.

Commands:

  projection-errors   projection (discretization) error tables
  convergence         method convergence study (CSV + SVG log-log plots)
  equivalence-check   SSE Gauss-route vs projection-route stiffness gap
  verify              rigid-body / isotropy / patch checks for all methods
  mesh                export and import of the plain-text mesh format

Configuration is a plain-text ``key = value`` file plus command-line
overrides; outputs are deterministic (byte-identical CSV for identical
configs).  Failures exit nonzero with a single ``error[<code>]:`` line.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import analysis, assembly, smoothing
from .assembly import (AssemblyError, SolverError, assemble_stiffness,
                       block_problem, build_dofmap, patch_problem)
from .elements import dmatrix
from .mesh import (MeshError, MeshIOError, TRI_PATTERNS, distort_mesh,
                   generate_regular_quad, generate_regular_tri, read_mesh,
                   transform_mesh, with_boundary_tag, write_mesh)

__all__ = ["main", "ExperimentConfig", "load_config", "CliError"]


class CliError(Exception):
    """Command failure with a machine-parseable code."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


@dataclass
class ExperimentConfig:
    """Experiment configuration with validated fields."""

    problem: str = "block"
    domain: tuple = (0.0, 0.0, 2.0, 1.0)
    E: float = 1.0e3
    nu: float = 0.2
    mode: str = "plane_stress"
    pattern: str = "union_jack"
    n: tuple = (2, 4, 8, 16)
    distortion: float = 0.25
    seed: int = 1
    methods: tuple = ("fem_t3", "esfem", "nsfem", "sse",
                      "fem_plq4", "fem_blq4", "csfem")
    reference_n: int = 64
    probe: tuple = None
    out: str = "."
    tolerance: float = 1.0e-10
    mesh_files: tuple = ()
    parallel: bool = False

    def validate(self):
        if self.problem not in ("block", "patch"):
            raise CliError("config", f"problem must be block or patch, got {self.problem!r}")
        if len(self.domain) != 4 or not (self.domain[2] > self.domain[0]
                                         and self.domain[3] > self.domain[1]):
            raise CliError("config", f"domain must be x0 y0 x1 y1 with x1>x0, y1>y0, got {self.domain}")
        if self.pattern not in TRI_PATTERNS:
            raise CliError("config", f"pattern must be one of {TRI_PATTERNS}, got {self.pattern!r}")
        if len(self.n) == 0 or any(v < 1 for v in self.n):
            raise CliError("config", f"n must list positive mesh sizes, got {self.n}")
        if list(self.n) != sorted(set(self.n)):
            raise CliError("config", f"n must be strictly increasing, got {self.n}")
        if self.reference_n <= max(self.n):
            raise CliError("config", f"reference_n ({self.reference_n}) must exceed max(n) ({max(self.n)})")
        bad = [m for m in self.methods if m not in assembly.METHODS]
        if bad:
            raise CliError("config", f"unknown methods {bad}; known: {assembly.METHODS}")
        if not 0.0 <= self.distortion < 0.5:
            raise CliError("config", f"distortion must lie in [0, 0.5), got {self.distortion}")
        if self.mode not in ("plane_stress", "plane_strain"):
            raise CliError("config", f"mode must be plane_stress or plane_strain, got {self.mode!r}")
        return self

    def make_problem(self):
        if self.problem == "patch":
            problem = patch_problem(dmatrix(self.E, self.nu, self.mode))
            problem.domain = self.domain
            return problem
        probe = self.probe if self.probe is not None else (self.domain[0], self.domain[3])
        return block_problem(domain=self.domain, E=self.E, nu=self.nu,
                             mode=self.mode, probe=np.asarray(probe, dtype=float))


_LIST_KEYS = {"n": int, "mesh_files": str, "methods": str, "domain": float, "probe": float}
_SCALAR_KEYS = {"problem": str, "E": float, "nu": float, "mode": str, "pattern": str,
                "distortion": float, "seed": int, "reference_n": int, "out": str,
                "tolerance": float, "parallel": lambda v: v.lower() in ("1", "true", "yes")}


def load_config(path):
    """Parse a ``key = value`` config file ('#' starts a comment)."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise CliError("config", f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError("config", f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _LIST_KEYS:
            conv = _LIST_KEYS[key]
            try:
                values[key] = tuple(conv(v) for v in value.replace(",", " ").split())
            except ValueError as exc:
                raise CliError("config", f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
        elif key in _SCALAR_KEYS:
            try:
                values[key] = _SCALAR_KEYS[key](value)
            except ValueError as exc:
                raise CliError("config", f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
        else:
            raise CliError("config", f"{path}:{lineno}: unknown key {key!r}")
    return ExperimentConfig(**values).validate()


def _apply_overrides(config, args):
    updates = {}
    if args.out is not None:
        updates["out"] = args.out
    if getattr(args, "method", None):
        updates["methods"] = tuple(args.method.replace(",", " ").split())
    if getattr(args, "n", None):
        updates["n"] = tuple(int(v) for v in args.n.replace(",", " ").split())
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "pattern", None):
        updates["pattern"] = args.pattern
    if getattr(args, "parallel", False):
        updates["parallel"] = True
    return replace(config, **updates).validate()


def _fmt(x):
    """Shortest round-trip decimal representation."""
    return repr(float(x))


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) if not isinstance(c, float) else _fmt(c)
                              for c in row))
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    return path


def _thread_count():
    env = os.environ.get("SMOOTHFEM_THREADS", "")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError("config", f"SMOOTHFEM_THREADS must be an integer, got {env!r}")
    return min(8, os.cpu_count() or 1)


def _tri_mesh(config, n, distorted=False):
    m = generate_regular_tri(n, config.pattern, config.domain)
    if distorted:
        m = distort_mesh(m, config.distortion, config.seed)
    if config.problem == "patch":
        m = with_boundary_tag(m, "D")
    return m


def _quad_mesh(config, n, distorted=False):
    m = generate_regular_quad(n, config.domain)
    if distorted:
        m = distort_mesh(m, config.distortion, config.seed)
    if config.problem == "patch":
        m = with_boundary_tag(m, "D")
    return m


# ---------------------------------------------------------------------------
# projection-errors

def cmd_projection_errors(config):
    problem = config.make_problem()
    ref = analysis.solve_reference(problem, config.reference_n)
    rows = []
    for kind in ("tri", "quad"):
        for regularity in ("regular", "distorted"):
            if regularity == "distorted" and config.distortion == 0.0:
                continue
            for n in config.n:
                mesh = (_tri_mesh if kind == "tri" else _quad_mesh)(
                    config, n, distorted=(regularity == "distorted"))
                vals = [analysis.projection_error(ref, space, mesh)
                        for space in analysis.PROJECTION_SPACES]
                n_or_ne = mesh.n_elements if (kind == "tri" and regularity == "distorted") else n
                rows.append([kind, regularity, n_or_ne] + vals)
    # escape hatch: externally produced meshes (e.g. distorted meshes from
    # other tools) join the table as imported rows
    for mesh_path in config.mesh_files:
        mesh = read_mesh(mesh_path)
        if mesh.kind not in ("t3", "q4"):
            raise CliError("config", f"{mesh_path}: projection tables need t3/q4 meshes")
        domain_area = ((config.domain[2] - config.domain[0])
                       * (config.domain[3] - config.domain[1]))
        if abs(mesh.domain_area - domain_area) > 1e-9 * domain_area:
            raise CliError("config",
                           f"{mesh_path}: mesh covers area {mesh.domain_area}, "
                           f"configured domain has {domain_area}")
        vals = [analysis.projection_error(ref, space, mesh)
                for space in analysis.PROJECTION_SPACES]
        rows.append([mesh.kind, "imported", mesh.n_elements] + vals)
    path = _write_csv(os.path.join(config.out, "projection_errors.csv"),
                      ["mesh", "regularity", "n_or_ne",
                       "elementwise", "edge_based", "interior"], rows)
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# convergence

_KIND_METHODS = {"t3": ("fem_t3", "esfem", "nsfem", "sse"),
                 "q4": ("fem_plq4", "fem_blq4", "esfem", "csfem", "sse")}


def _convergence_jobs(config):
    jobs = []
    for kind in ("t3", "q4"):
        for method in _KIND_METHODS[kind]:
            if method not in config.methods:
                continue
            for n in config.n:
                jobs.append((kind, method, n))
    return jobs


def cmd_convergence(config):
    # a single mesh size is allowed; such runs simply emit no slope
    problem = config.make_problem()
    ref = analysis.solve_reference(problem, config.reference_n)
    jobs = _convergence_jobs(config)

    def run(job):
        kind, method, n = job
        mesh = (_tri_mesh if kind == "t3" else _quad_mesh)(config, n)
        rep = analysis.run_method(mesh, problem, method, ref, n)
        projected = None
        if method == "sse":
            # the piecewise-constant twice-projected representative of the
            # same solution, reported alongside the native interpolant
            u = assembly.solve_method(mesh, problem, "sse")
            projected = analysis.energy_error(mesh, problem.material, "sse",
                                              u, ref, sse_route="projection")[1]
        return rep, projected

    if config.parallel:
        with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
            reports = list(pool.map(run, jobs))
    else:
        reports = [run(job) for job in jobs]

    rows = []
    series = {}
    history = {}
    for (kind, method, n), (rep, projected) in zip(jobs, reports):
        entries = [(method, rep.relative_error)]
        if projected is not None:
            entries.append(("sse_projected", projected))
        for name, value in entries:
            key = (kind, name)
            history.setdefault(key, []).append((rep.h, value))
            slope = ""
            if len(history[key]) >= 2:
                slope = _fmt(analysis.convergence_slope(history[key]))
            rows.append([name, kind, n, rep.h, value,
                         rep.probe_error, rep.dofs, slope])
            series.setdefault(kind, {}).setdefault(name, []).append((rep.h, value))
    path = _write_csv(os.path.join(config.out, "convergence.csv"),
                      ["method", "mesh", "n", "h", "relative_error",
                       "probe_error", "dofs", "slope"], rows)
    print(f"wrote {path}")
    for kind, methods in series.items():
        svg = _loglog_svg(methods, title=f"relative strain-energy error ({kind})")
        spath = os.path.join(config.out, f"convergence_{kind}.svg")
        with open(spath, "w", encoding="ascii") as f:
            f.write(svg)
        print(f"wrote {spath}")
    return 0


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _loglog_svg(series, title, width=560, height=420):
    """Self-contained log-log SVG with decade gridlines and a slope-1 guide."""
    pts = [p for vals in series.values() for p in vals]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    lx0, lx1 = np.floor(np.log10(min(xs))), np.ceil(np.log10(max(xs)))
    ly0, ly1 = np.floor(np.log10(min(ys))), np.ceil(np.log10(max(ys)))
    if lx1 == lx0:
        lx1 += 1
    if ly1 == ly0:
        ly1 += 1
    m = {"l": 70, "r": 160, "t": 40, "b": 50}
    pw, ph = width - m["l"] - m["r"], height - m["t"] - m["b"]

    def sx(v):
        return m["l"] + (np.log10(v) - lx0) / (lx1 - lx0) * pw

    def sy(v):
        return m["t"] + (ly1 - np.log10(v)) / (ly1 - ly0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" style="background:#ffffff;font-family:sans-serif">']
    out.append(f'<text x="{m["l"]}" y="24" style="font-size:14px">{title}</text>')
    for d in range(int(lx0), int(lx1) + 1):
        x = sx(10.0 ** d)
        out.append(f'<line x1="{x:.1f}" y1="{m["t"]}" x2="{x:.1f}" y2="{m["t"] + ph}" '
                   'style="stroke:#cccccc;stroke-width:1"/>')
        out.append(f'<text x="{x:.1f}" y="{m["t"] + ph + 18}" '
                   f'style="font-size:11px" text-anchor="middle">1e{d}</text>')
    for d in range(int(ly0), int(ly1) + 1):
        y = sy(10.0 ** d)
        out.append(f'<line x1="{m["l"]}" y1="{y:.1f}" x2="{m["l"] + pw}" y2="{y:.1f}" '
                   'style="stroke:#cccccc;stroke-width:1"/>')
        out.append(f'<text x="{m["l"] - 8}" y="{y + 4:.1f}" '
                   f'style="font-size:11px" text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{m["l"] + pw / 2:.1f}" y="{height - 10}" '
               'style="font-size:12px" text-anchor="middle">h</text>')
    # slope-1 guide through the geometric center of the data
    cx = 10.0 ** (0.5 * (lx0 + lx1))
    cy = 10.0 ** (0.5 * (ly0 + ly1))
    g0, g1 = 10.0 ** lx0, 10.0 ** lx1
    out.append(f'<line x1="{sx(g0):.1f}" y1="{sy(cy * g0 / cx):.1f}" '
               f'x2="{sx(g1):.1f}" y2="{sy(cy * g1 / cx):.1f}" '
               'style="stroke:#888888;stroke-width:1;stroke-dasharray:6 4"/>')
    for i, (name, vals) in enumerate(sorted(series.items())):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        path = " ".join(f'{sx(h):.1f},{sy(e):.1f}' for h, e in sorted(vals))
        out.append(f'<polyline points="{path}" '
                   f'style="fill:none;stroke:{color};stroke-width:2"/>')
        for h, e in vals:
            out.append(f'<circle cx="{sx(h):.1f}" cy="{sy(e):.1f}" r="3" '
                       f'style="fill:{color}"/>')
        ly = m["t"] + 16 * i + 10
        out.append(f'<line x1="{m["l"] + pw + 10}" y1="{ly}" x2="{m["l"] + pw + 30}" '
                   f'y2="{ly}" style="stroke:{color};stroke-width:2"/>')
        out.append(f'<text x="{m["l"] + pw + 35}" y="{ly + 4}" '
                   f'style="font-size:11px">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# equivalence-check

def _frobenius_gap(mesh, material):
    kg = assemble_stiffness(mesh, material, "sse", sse_route="gauss").K
    kp = assemble_stiffness(mesh, material, "sse", sse_route="projection").K
    diff = (kg - kp)
    denom = np.sqrt((kp.multiply(kp)).sum())
    return float(np.sqrt((diff.multiply(diff)).sum()) / denom)


def cmd_equivalence_check(config):
    material = dmatrix(config.E, config.nu, config.mode)
    cases = []
    for n in config.n:
        cases.append((f"tri_regular_{config.pattern}", n, _tri_mesh(config, n), True))
        if config.distortion > 0.0:
            cases.append(("tri_distorted", n, _tri_mesh(config, n, True), True))
    for n in config.n:
        cases.append(("quad_regular", n, _quad_mesh(config, n), True))
        sheared = transform_mesh(generate_regular_quad(n, config.domain),
                                 [[1.0, 0.35], [0.0, 1.0]])
        cases.append(("quad_parallelogram", n, sheared, True))
        if config.distortion > 0.0:
            cases.append(("quad_distorted", n, _quad_mesh(config, n, True), False))
    rows, failed = [], []
    for name, n, mesh, required in cases:
        gap = _frobenius_gap(mesh, material)
        if required:
            status = "pass" if gap <= config.tolerance else "fail"
            if status == "fail":
                failed.append((name, n, gap))
        else:
            status = "reported"
        rows.append([name, n, gap, config.tolerance, status])
        print(f"{name} n={n}: gap = {_fmt(gap)} [{status}]")
    path = _write_csv(os.path.join(config.out, "equivalence.csv"),
                      ["mesh", "n", "frobenius_gap", "tolerance", "status"], rows)
    print(f"wrote {path}")
    if failed:
        raise CliError("equivalence",
                       f"stiffness routes disagree on {failed[0][0]} n={failed[0][1]} "
                       f"(gap {failed[0][2]:.3e} > {config.tolerance})")
    return 0


# ---------------------------------------------------------------------------
# verify

def _verify_meshes(config, kind):
    n = max(2, min(config.n))
    if kind == "t3":
        return _tri_mesh(config, n)
    return _quad_mesh(config, n)


def _rigid_body_check(mesh, material, method):
    K = assemble_stiffness(mesh, material, method).K
    v = mesh.vertices
    modes = np.zeros((3, 2 * mesh.n_vertices))
    modes[0, 0::2] = 1.0
    modes[1, 1::2] = 1.0
    modes[2, 0::2] = -v[:, 1]
    modes[2, 1::2] = v[:, 0]
    scale = float(np.abs(K).max())
    worst = max(float(np.abs(K @ r).max()) / (scale * max(np.abs(r).max(), 1.0))
                for r in modes)
    eigvals = np.linalg.eigvalsh(K.toarray())
    dim_ok = eigvals[2] / scale < 1e-10 and eigvals[3] / scale > 1e-8
    return worst < 1e-10 and dim_ok, worst


def _rotate_elements(mesh):
    conn = mesh.elements.copy()
    if mesh.kind == "t3":
        conn = conn[:, [1, 2, 0]]
    elif mesh.kind == "q4":
        conn = conn[:, [1, 2, 3, 0]]
    else:
        conn = conn[:, [1, 2, 3, 0, 5, 6, 7, 4, 8]]
    from .mesh import Mesh
    return Mesh(mesh.kind, mesh.vertices, conn, mesh.boundary_edges,
                mesh.boundary_tags)


def _isotropy_check(mesh, material, method):
    k1 = assemble_stiffness(mesh, material, method).K
    k2 = assemble_stiffness(_rotate_elements(mesh), material, method).K
    e1 = np.linalg.eigvalsh(k1.toarray())
    e2 = np.linalg.eigvalsh(k2.toarray())
    scale = max(float(np.abs(e1).max()), 1e-300)
    gap = float(np.abs(e1 - e2).max()) / scale
    return gap < 1e-9, gap


def _patch_check(mesh, material, method):
    problem = patch_problem(material)
    clamped = with_boundary_tag(mesh, "D")
    u = assembly.solve_method(clamped, problem, method)
    exact = problem.exact_strain
    strain = assembly.method_strain(clamped, material, method, u)
    if strain is None:  # pointwise bilinear strain at the 2x2 Gauss points
        from .elements import q4_shape, quadrature
        rule = quadrature("quad2x2")
        worst = 0.0
        for ei in range(clamped.n_elements):
            coords = clamped.element_corners(ei)
            ue = u[smoothing.element_dofs(clamped, ei)]
            _, dN = q4_shape(rule.points)
            for p in range(len(rule.points)):
                B, _ = assembly._pointwise_b(coords, dN[p])
                worst = max(worst, float(np.abs(B @ ue - exact).max()))
    elif isinstance(strain, list):
        worst = max(float(np.abs(f.gauss_values - exact).max()) for f in strain)
    else:
        worst = float(np.abs(strain.cell_values() - exact).max())
    rel = worst / float(np.abs(exact).max())
    return rel < 1e-9, rel


def cmd_verify(config):
    material = dmatrix(config.E, config.nu, config.mode)
    rows, failures = [], []
    for kind in ("t3", "q4"):
        mesh = _verify_meshes(config, kind)
        for method in _KIND_METHODS[kind]:
            if method not in config.methods:
                continue
            for test, check in (("rigid_body", _rigid_body_check),
                                ("isotropy", _isotropy_check),
                                ("patch", _patch_check)):
                ok, measure = check(mesh, material, method)
                status = "pass" if ok else "fail"
                rows.append([method, kind, test, status, float(measure)])
                print(f"{method} {kind} {test}: {status} ({measure:.3e})")
                if not ok:
                    failures.append(f"{method} on {kind}: {test} violated ({measure:.3e})")
    path = _write_csv(os.path.join(config.out, "verify.csv"),
                      ["method", "mesh", "test", "status", "measure"], rows)
    print(f"wrote {path}")
    if failures:
        raise CliError("verify", "; ".join(failures))
    return 0


# ---------------------------------------------------------------------------
# mesh export / import

def cmd_mesh_export(config, args):
    if args.kind == "tri":
        mesh = generate_regular_tri(args.size, config.pattern, config.domain)
    elif args.kind == "quad":
        mesh = generate_regular_quad(args.size, config.domain)
    else:
        from .mesh import generate_regular_q9
        mesh = generate_regular_q9(args.size, config.domain)
    if args.distortion > 0.0:
        mesh = distort_mesh(mesh, args.distortion, config.seed)
    write_mesh(mesh, args.file)
    print(f"wrote {args.file} ({mesh.kind}, {mesh.n_vertices} vertices, "
          f"{mesh.n_elements} elements)")
    return 0


def cmd_mesh_import(args):
    mesh = read_mesh(args.file)
    dofmap = build_dofmap(mesh)
    print(f"{args.file}: valid {mesh.kind} mesh, {mesh.n_vertices} vertices, "
          f"{mesh.n_elements} elements, {len(mesh.boundary_edges)} boundary edges, "
          f"{dofmap.n_free} free dofs, area {_fmt(mesh.domain_area)}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def _build_parser():
    parser = argparse.ArgumentParser(prog="smoothfem", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--method", default=None, help="comma-separated method list")
        p.add_argument("--n", default=None, help="comma-separated mesh sizes")
        p.add_argument("--seed", type=int, default=None, help="distortion seed")
        p.add_argument("--pattern", default=None, choices=TRI_PATTERNS,
                       help="triangulation pattern")

    for name in ("projection-errors", "convergence", "equivalence-check", "verify"):
        p = sub.add_parser(name)
        common(p)
        if name == "convergence":
            p.add_argument("--parallel", action="store_true",
                           help="run (method, n) cells concurrently")

    pm = sub.add_parser("mesh")
    msub = pm.add_subparsers(dest="mesh_command", required=True)
    pe = msub.add_parser("export")
    pe.add_argument("--kind", required=True, choices=("tri", "quad", "q9"))
    pe.add_argument("--size", type=int, required=True, metavar="N")
    pe.add_argument("--distortion", type=float, default=0.0)
    pe.add_argument("--out", dest="file", required=True, metavar="FILE")
    pe.add_argument("--config", default=None)
    pe.add_argument("--seed", type=int, default=None)
    pe.add_argument("--pattern", default=None, choices=TRI_PATTERNS)
    pi = msub.add_parser("import")
    pi.add_argument("file", metavar="FILE")
    return parser


def _run(args):
    if args.command == "mesh" and args.mesh_command == "import":
        return cmd_mesh_import(args)
    config = load_config(args.config) if args.config else ExperimentConfig().validate()
    if args.command == "mesh":
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        if args.pattern:
            config = replace(config, pattern=args.pattern)
        return cmd_mesh_export(config, args)
    config = _apply_overrides(config, args)
    command = {
        "projection-errors": cmd_projection_errors,
        "convergence": cmd_convergence,
        "equivalence-check": cmd_equivalence_check,
        "verify": cmd_verify,
    }[args.command]
    return command(config)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _run(args)
    except CliError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2 if exc.code == "config" else 1
    except (MeshIOError,) as exc:
        print(f"error[mesh_io]: {exc}", file=sys.stderr)
        return 1
    except (MeshError,) as exc:
        print(f"error[mesh]: {exc}", file=sys.stderr)
        return 1
    except AssemblyError as exc:
        print(f"error[assembly]: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"error[solver]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
