"""Jump-coefficient benchmark harness: iteration tables and spectrum dumps.

The benchmark lives on the square (-1, 1)^2 holding two unit-coefficient
square islands (-0.5, 0)^2 and (0, 0.5)^2 that touch at the origin inside
a background of coefficient eps; the source is f = 1, with u = 0 on the
x = -1 side, u = 1 on the x = +1 side, and homogeneous Neumann conditions
on the rest of the boundary.

For each eps in the sweep the mesh is grown adaptively (driven by a direct
solve, so every method sees the same meshes), each requested method solves
on each mesh of the trajectory, and meshes below the dense limit also get
the full spectrum of the preconditioned operator together with its
condition numbers.  Everything is written to CSV plus a JSON run manifest;
the CSV outputs are byte-reproducible for a fixed config.

Run ``localmg --help`` (or ``python -m localmg.experiments --help``) for
the command-line front end.
"""

import argparse
import csv
import dataclasses
import json
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

import localmg
from localmg import adapt, fem, hierarchy, precond, solver, spectral
from localmg import mesh as mesh_mod

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "ResultTable",
    "count_floating_subdomains",
    "emit_spectrum",
    "emit_table",
    "jump_problem",
    "main",
    "parse_config",
    "run_experiment",
]

METHODS = ("CG", "TPSBPXCG", "TPSMG", "TPSMGCG")

TABLE_COLUMNS = ("epsilon", "dof", "method", "iterations", "kappa",
                 "kappa_m", "m_detected", "error")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one benchmark run.

    ``epsilon`` is the sweep of background coefficients; ``methods`` the
    solvers to time on every mesh.  ``grid`` is the number of squares per
    side of the initial criss-cross mesh (the island interfaces are
    resolved exactly whenever ``grid`` is a multiple of 4).  Meshes with
    at most ``dense_limit`` unknowns get a full spectrum; ``seed`` is
    recorded in the manifest so stochastic extensions stay reproducible.
    """

    domain: str = "jump-squares"
    boundary: str = "left-right"
    epsilon: tuple = (1e-4, 1e-2, 1e2, 1e4)
    f: float = 1.0
    methods: tuple = METHODS
    theta: float = 0.5
    max_dof: int = 2000
    tol: float = 1e-10
    dense_limit: int = 1000
    maxit: int = 50000
    grid: int = 8
    seed: int = 0
    out_dir: str = "results"

    def __post_init__(self):
        if self.domain not in ("jump-squares",):
            raise ValueError(f"unknown domain preset {self.domain!r}")
        if self.boundary not in ("left-right",):
            raise ValueError(f"unknown boundary preset {self.boundary!r}")
        eps = tuple(float(e) for e in self.epsilon)
        if not eps or any(e <= 0.0 for e in eps):
            raise ValueError("epsilon values must be positive")
        methods = tuple(str(m).upper() for m in self.methods)
        unknown = [m for m in methods if m not in METHODS]
        if not methods or unknown:
            raise ValueError(f"methods must be a non-empty subset of "
                             f"{METHODS}, got {unknown or methods}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        for name in ("max_dof", "maxit", "grid"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if int(self.dense_limit) < 0:
            raise ValueError("dense_limit must be non-negative")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "out_dir", str(self.out_dir))


@dataclass(frozen=True)
class ResultRow:
    """One (mesh, method) cell of the benchmark table.

    ``kappa``/``kappa_m``/``m_detected`` are None when the mesh exceeded
    the dense limit; ``error`` is None for completed cells.
    """

    epsilon: float
    dof: int
    method: str
    iterations: int
    kappa: float = None
    kappa_m: float = None
    m_detected: int = None
    wall_time: float = 0.0
    error: str = None


def _row_key(row):
    return (row.dof, row.method, row.epsilon)


@dataclass(frozen=True)
class ResultTable:
    """Rows of a benchmark run, kept sorted by dof, then method."""

    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows",
                           tuple(sorted(self.rows, key=_row_key)))

    def __len__(self):
        return len(self.rows)

    def for_epsilon(self, eps):
        return ResultTable(rows=tuple(r for r in self.rows
                                      if r.epsilon == eps))


def jump_problem(grid=8):
    """Initial mesh and Dirichlet data of the benchmark problem.

    Returns ``(mesh0, g_D)`` where ``g_D(x, y)`` is 0 on the left side and
    1 on the right side.  The coefficient is supplied separately: labels 1
    and 2 are the islands, label 3 the background.
    """

    def subdomain(cx, cy):
        labels = np.full(cx.shape, 3, dtype=int)
        labels[(cx > -0.5) & (cx < 0.0) & (cy > -0.5) & (cy < 0.0)] = 1
        labels[(cx > 0.0) & (cx < 0.5) & (cy > 0.0) & (cy < 0.5)] = 2
        return labels

    def dirichlet(x, y):
        return np.abs(np.abs(x) - 1.0) < 1e-12

    def g_D(x, y):
        return np.where(x > 0.0, 1.0, 0.0)

    mesh0 = mesh_mod.crisscross_grid(grid, grid, xlim=(-1.0, 1.0),
                                     ylim=(-1.0, 1.0), subdomain=subdomain,
                                     dirichlet=dirichlet)
    return mesh0, g_D


def count_floating_subdomains(mesh):
    """Number of subdomain labels whose elements touch no Dirichlet
    vertex (2 for the benchmark geometry)."""
    touches = mesh.vkind[mesh.tri] == mesh_mod.DIRICHLET
    element_touches = touches.any(axis=1)
    m = 0
    for label in np.unique(mesh.subdom):
        if not element_touches[mesh.subdom == label].any():
            m += 1
    return m


# spectrum family per method: TPSMG(CG) rows share the multiplicative
# operator, TPSBPXCG the additive one, plain CG the unpreconditioned matrix
_FAMILY = {"TPSMG": "vcycle", "TPSMGCG": "vcycle", "TPSBPXCG": "bpx",
           "CG": "plain"}


def _solve_method(method, A, b, B_ops, tol, maxit):
    if method == "CG":
        return solver.cg(A, b, tol=tol, maxit=maxit)
    if method == "TPSMG":
        return solver.stationary_iterate(A, b, B=B_ops["vcycle"], tol=tol,
                                         maxit=maxit)
    if method == "TPSMGCG":
        return solver.pcg(A, b, B=B_ops["vcycle"], tol=tol, maxit=maxit)
    if method == "TPSBPXCG":
        return solver.pcg(A, b, B=B_ops["bpx"], tol=tol, maxit=maxit)
    raise ValueError(f"unknown method {method!r}")


def _eps_tag(eps):
    return f"{eps:g}"


def _run_epsilon(config, mesh0, g_D, eps, m0, out_dir, artifacts):
    coeff = fem.CoefficientField({1: 1.0, 2: 1.0, 3: eps})
    records = adapt.adaptive_solve(mesh0, coeff, config.f, g_D=g_D,
                                   max_dof=config.max_dof,
                                   theta=config.theta, method="direct")
    tag = _eps_tag(eps)
    rows = []
    history_rows = []
    for rec in records:
        mesh = rec.mesh
        dofs = fem.dof_map(mesh, g_D)
        A = fem.assemble_stiffness(mesh, coeff, dofs)
        b = fem.assemble_load(mesh, config.f, 0.0, dofs.lift(), coeff, dofs)

        B_ops, build_error = {}, None
        if any(m != "CG" for m in config.methods):
            try:
                seq, grouping = hierarchy.decompose(mesh, mesh0)
                pspec = precond.build_spaces(seq, grouping, dofs, A)
                B_ops = {"vcycle": lambda r: precond.vcycle_apply(pspec, r),
                         "bpx": lambda r: precond.bpx_apply(pspec, r)}
            except Exception as exc:  # error is recorded on affected rows
                build_error = f"hierarchy/preconditioner setup: {exc}"

        spectra = {}
        if dofs.n <= config.dense_limit:
            for family in sorted({_FAMILY[m] for m in config.methods}):
                try:
                    if family == "plain":
                        B_ex = np.eye(dofs.n)
                    elif build_error is not None:
                        continue
                    else:
                        B_ex = precond.assemble_explicit(
                            pspec, family, dense_limit=config.dense_limit)
                    report = spectral.dense_spectrum(A, B_ex)
                except Exception as exc:
                    spectra[family] = f"spectrum: {exc}"
                    continue
                spectra[family] = report
                name = f"spectrum_eps{tag}_dof{dofs.n}_{family}.csv"
                emit_spectrum(report, out_dir / name)
                artifacts.append(name)

        for method in config.methods:
            kappa = kappa_m = m_detected = None
            error = build_error if method != "CG" else None
            iterations, wall = 0, 0.0
            if error is None:
                try:
                    _, srep = _solve_method(method, A, b, B_ops,
                                            config.tol, config.maxit)
                    iterations, wall = srep.iterations, srep.wall_time
                    history_rows += [(dofs.n, method, k, ratio, rnorm)
                                     for k, (ratio, rnorm)
                                     in enumerate(srep.history, start=1)]
                    if not srep.converged:
                        error = f"no convergence in {iterations} iterations"
                except Exception as exc:
                    error = f"solve: {exc}"
            got = spectra.get(_FAMILY[method])
            if isinstance(got, spectral.SpectrumReport):
                m_detected = got.m_candidates
                m_eff = min(m0, len(got.eigenvalues) - 1)
                kappa, kappa_m = spectral.condition_numbers(got, m_eff)
            elif isinstance(got, str) and error is None:
                error = got
            rows.append(ResultRow(epsilon=eps, dof=dofs.n, method=method,
                                  iterations=iterations, kappa=kappa,
                                  kappa_m=kappa_m, m_detected=m_detected,
                                  wall_time=wall, error=error))

    table = ResultTable(rows=tuple(rows))
    emit_table(table, out_dir / f"table_eps{tag}.csv")
    artifacts.append(f"table_eps{tag}.csv")
    _emit_history(history_rows, out_dir / f"history_eps{tag}.csv")
    artifacts.append(f"history_eps{tag}.csv")
    return rows


def run_experiment(config):
    """Run the configured sweep, write all artifacts, return the table."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mesh0, g_D = jump_problem(config.grid)
    n0 = fem.dof_map(mesh0, g_D).n
    if config.max_dof < n0:
        raise ValueError(f"max_dof = {config.max_dof} is below the "
                         f"{n0} unknowns of the initial mesh")
    m0 = count_floating_subdomains(mesh0)

    rows, artifacts, timings = [], [], {}
    t_start = time.perf_counter()
    for eps in config.epsilon:
        t0 = time.perf_counter()
        rows += _run_epsilon(config, mesh0, g_D, eps, m0, out_dir, artifacts)
        timings[f"eps={_eps_tag(eps)}"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_start

    table = ResultTable(rows=tuple(rows))
    emit_table(table, out_dir / "table.csv")
    artifacts.append("table.csv")

    manifest = {
        "config": dataclasses.asdict(config),
        "floating_subdomains": m0,
        "rows": len(table),
        "errors": sum(1 for r in table.rows if r.error is not None),
        "artifacts": sorted(artifacts),
        "timings": timings,
        "versions": {
            "localmg": localmg.__version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return table


def _fmt_cell(value, kind):
    if value is None:
        return ""
    if kind == "float":
        return repr(float(value))
    if kind == "sci":
        return f"{float(value):.3e}"
    if kind == "int":
        return str(int(value))
    return str(value)


_COLUMN_KIND = {"epsilon": "float", "dof": "int", "method": "str",
                "iterations": "int", "kappa": "sci", "kappa_m": "sci",
                "m_detected": "int", "error": "str"}


def emit_table(table, path):
    """Write a result table as CSV.

    Formats are fixed (iterations as integers, condition numbers in
    scientific notation with 4 significant digits) so identical runs
    produce identical bytes.  Wall times are deliberately left out for the
    same reason; they live in the run manifest.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for row in table.rows:
            writer.writerow([_fmt_cell(getattr(row, col), _COLUMN_KIND[col])
                             for col in TABLE_COLUMNS])


def emit_spectrum(report, path):
    """Write the eigenvalues of a spectrum report as indexed CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "eigenvalue"])
        for i, ev in enumerate(report.eigenvalues):
            writer.writerow([i, repr(float(ev))])


def _emit_history(history_rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dof", "method", "k", "increment_ratio",
                         "residual_norm"])
        for dof, method, k, ratio, rnorm in history_rows:
            writer.writerow([dof, method, k, repr(float(ratio)),
                             repr(float(rnorm))])


_LIST_FIELDS = {"epsilon", "methods"}
_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def parse_config(path):
    """Read a ``key = value`` config file into an :class:`ExperimentConfig`.

    Blank lines and ``#`` comments are ignored; list-valued fields
    (``epsilon``, ``methods``) take comma-separated values.  Unknown keys
    raise ValueError.
    """
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, "
                                 f"got {raw.strip()!r}")
            key, _, text = line.partition("=")
            key, text = key.strip(), text.strip()
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _parse_value(key, text)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return ExperimentConfig(**values)


def _parse_value(key, text):
    if key in _LIST_FIELDS:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if key == "epsilon":
            return tuple(float(p) for p in parts)
        return tuple(parts)
    kind = _FIELD_TYPES[key]
    if kind is int or kind == "int":
        return int(text)
    if kind is float or kind == "float":
        return float(text)
    return text


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="localmg",
        description="Benchmark multilevel preconditioners on the "
                    "jump-coefficient test problem.")
    parser.add_argument("--config", metavar="FILE",
                        help="key = value config file; flags override it")
    parser.add_argument("--method", metavar="LIST",
                        help="comma-separated subset of "
                             + ",".join(METHODS))
    parser.add_argument("--eps", metavar="LIST",
                        help="comma-separated background coefficients "
                             "(default 1e-4,1e-2,1e2,1e4)")
    parser.add_argument("--max-dof", type=int, metavar="N",
                        help="stop refining once the dof count exceeds N")
    parser.add_argument("--theta", type=float, metavar="T",
                        help="bulk marking fraction in (0, 1]")
    parser.add_argument("--tol", type=float, metavar="TOL",
                        help="relative energy-increment tolerance")
    parser.add_argument("--out-dir", metavar="DIR",
                        help="artifact directory (default: results)")
    parser.add_argument("--dense-limit", type=int, metavar="N",
                        help="largest dof count that still gets a dense "
                             "spectrum")
    parser.add_argument("--seed", type=int, metavar="S",
                        help="seed recorded in the manifest")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    overrides = {}
    if args.method is not None:
        overrides["methods"] = tuple(p.strip() for p in
                                     args.method.split(",") if p.strip())
    if args.eps is not None:
        overrides["epsilon"] = tuple(float(p) for p in
                                     args.eps.split(",") if p.strip())
    for flag, field in (("max_dof", "max_dof"), ("theta", "theta"),
                        ("tol", "tol"), ("out_dir", "out_dir"),
                        ("dense_limit", "dense_limit"), ("seed", "seed")):
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    try:
        if args.config is not None:
            config = dataclasses.replace(parse_config(args.config),
                                         **overrides)
        else:
            config = ExperimentConfig(**overrides)
        table = run_experiment(config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    failed = [r for r in table.rows if r.error is not None]
    for row in failed:
        print(f"error: eps={row.epsilon:g} dof={row.dof} {row.method}: "
              f"{row.error}", file=sys.stderr)
    print(f"{len(table)} rows ({len(failed)} with errors) -> "
          f"{config.out_dir}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
