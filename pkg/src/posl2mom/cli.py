"""Batch front-end: run solver jobs from key=value configs, write CSV artifacts.

Verbs:
  run      one solver job (moments | dvm | closure-study)
  compare  error metrics between two finished run directories
  sweep    Cartesian product over listed parameter values, one subdir each

Configuration is flat ``key=value`` text (``#`` comments allowed) with dotted
namespaces, e.g. ``solver.M=10``; command-line ``key=value`` arguments override
file entries.  The environment variable ``POSL2MOM_OUTDIR`` overrides
``output.dir``.  All numbers are written with their shortest round-trip
decimal representation, so identical configurations give byte-identical files.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys

import numpy as np

from .basis import build_basis, macro_from_conserved, moments
from .cases import error_highest_moment, error_macro, make_case
from .closure import L2Closure, solve_dg
from .dvm import refine_reference, run_dvm
from .errors import ConfigurationError
from .quadrature import velocity_grid
from .scheme import BoundaryData, EvolveConfig, cfl_dt, evolve, initialize_field

_CASE_FIELD_TYPES = {
    "t_end": float, "kn": float, "order": int, "n": int, "nx": int,
    "x_lo": float, "x_hi": float,
}


def _fmt(x) -> str:
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def parse_config(path: str | None, overrides: list[str]) -> dict[str, str]:
    cfg: dict[str, str] = {}
    lines = []
    if path:
        with open(path) as fh:
            lines.extend(fh.readlines())
    lines.extend(overrides)
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        cfg[key.strip()] = val.strip()
    return cfg


def _get(cfg, key, cast, default=None):
    if key not in cfg:
        return default
    try:
        if cast is bool:
            return cfg[key].lower() in ("1", "true", "yes", "on")
        return cast(cfg[key])
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {cfg[key]!r}") from exc


def _resolve_case(cfg):
    ident = cfg.get("case")
    if ident is None:
        raise ConfigurationError("missing required key 'case'")
    overrides = {}
    for key, val in cfg.items():
        if key.startswith("case."):
            name = key[5:]
            if name not in _CASE_FIELD_TYPES:
                raise ConfigurationError(f"unknown case override {name!r}")
            overrides[name] = _CASE_FIELD_TYPES[name](val)
    return make_case(ident, **overrides)


def _out_dir(cfg) -> str:
    out = os.environ.get("POSL2MOM_OUTDIR") or cfg.get("output.dir", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _write_csv(path: str, header_lines: list[str], columns: list[str], rows):
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("# columns: " + ",".join(columns) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_manifest(out: str, cfg: dict, phases: dict, status: int, extra=()):
    path = os.path.join(out, "manifest")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        for key in sorted(cfg):
            fh.write(f"{key}={cfg[key]}\n")
        for name, secs in sorted(phases.items()):
            fh.write(f"timing.{name}={_fmt(secs)}\n")
        for key, val in extra:
            fh.write(f"{key}={_fmt(val)}\n")
        fh.write(f"exit_status={status}\n")
    os.replace(tmp, path)


def _field_rows(state):
    """(t, x[, y], rho, v..., theta) rows of a FieldState or DvmState."""
    cons = state.conserved()
    dim = 1 if cons.shape[-1] == 3 else 2
    rho, v, theta = macro_from_conserved(cons, dim)
    xc = state.cell_centers()
    rows = []
    if dim == 1:
        for i in range(state.nx):
            rows.append((state.time, xc[i], rho[i], v[i, 0], theta[i]))
        cols = ["t", "x", "rho", "v1", "theta"]
    else:
        for i in range(state.nx):
            for j in range(state.nx):
                rows.append((state.time, xc[i], xc[j], rho[i, j],
                             v[i, j, 0], v[i, j, 1], theta[i, j]))
        cols = ["t", "x", "y", "rho", "v1", "v2", "theta"]
    return cols, rows


def _run_moments(cfg, case, out):
    m = _get(cfg, "solver.M", int, case.order)
    n = _get(cfg, "solver.N", int, case.n)
    nx = _get(cfg, "solver.N_x", int, case.nx)
    kn = _get(cfg, "solver.Kn", float, case.kn)
    lo = _get(cfg, "solver.box_lo", float, case.box[0])
    hi = _get(cfg, "solver.box_hi", float, case.box[1])
    grid = velocity_grid(n, lo, hi, dim=case.dim)
    basis = build_basis(grid, m)
    boundary = BoundaryData.for_grid(grid, case.boundary_macros)
    state = initialize_field(basis, case.initial_macro, case.x_lo, case.x_hi, nx)
    times = cfg.get("output.times", "")
    snaps = tuple(float(t) for t in times.split(",") if t.strip())
    config = EvolveConfig(
        t_end=_get(cfg, "solver.T", float, case.t_end), kn=kn,
        dt=_get(cfg, "solver.dt", float, None),
        cfl_mode=cfg.get("solver.cfl_mode", "stability"),
        cfl_safety=_get(cfg, "solver.cfl_safety", float, 1.0),
        entropy_tol=_get(cfg, "solver.entropy_tol", float, 1e-8),
        snapshot_times=snaps,
    )
    result = None
    status = 0
    err = None
    try:
        result = evolve(state, boundary, config)
    except Exception as exc:  # flush partial outputs with a failure marker
        status = 1
        err = exc

    head = [f"case={case.identifier} solver=moments M={m} N={n} N_x={nx} Kn={_fmt(kn)}",
            "units: nondimensional kinetic units throughout"]
    if result is not None:
        cols, rows = None, []
        for snap in list(result.snapshots) + [result.state]:
            cols, r = _field_rows(snap)
            rows.extend(r)
        _write_csv(os.path.join(out, "fields.csv"), head, cols, rows)
        d = result.diagnostics
        drows = [(k + 1, d.t[k], d.energy[k], d.b_prev[k], d.b_maxwellian[k],
                  d.b_inflow[k], d.min_weight[k], d.qp_iters_mean[k])
                 for k in range(len(d.t))]
        _write_csv(os.path.join(out, "diagnostics.csv"), head,
                   ["step", "t", "E_k", "B_k", "B_M", "B_in", "min_weight", "qp_iters_mean"],
                   drows)
        phases = result.phase_seconds
    else:
        _write_csv(os.path.join(out, "diagnostics.csv"), head + [f"FAILED: {err}"],
                   ["step", "t", "E_k", "B_k", "B_M", "B_in", "min_weight", "qp_iters_mean"],
                   [("FAILED", repr(str(err)), "", "", "", "", "", "")])
        phases = {}
    _write_manifest(out, cfg, phases, status,
                    extra=[("steps", result.steps)] if result else [("error", err)])
    return status


def _run_dvm(cfg, case, out):
    nx = _get(cfg, "solver.N_x", int, case.nx)
    kn = _get(cfg, "solver.Kn", float, case.kn)
    head = [f"case={case.identifier} solver=dvm N_x={nx} Kn={_fmt(kn)}",
            "units: nondimensional kinetic units throughout"]
    status = 0
    if _get(cfg, "dvm.refine", bool, False):
        outcome, state = refine_reference(
            case, tolerance=_get(cfg, "dvm.tolerance", float, 1e-5),
            nx=nx, kn=kn, sweep=_get(cfg, "dvm.sweep", bool, True))
        _write_csv(os.path.join(out, "refinement.csv"), head,
                   ["cycle", "box_lo", "box_hi", "N", "delta"], outcome.log)
        extra = [("refined.box_lo", outcome.box[0]), ("refined.box_hi", outcome.box[1]),
                 ("refined.N", outcome.n), ("refined.converged", outcome.converged)]
        if not outcome.converged:
            status = 1
    else:
        n = _get(cfg, "solver.N", int, 350)
        lo = _get(cfg, "solver.box_lo", float, case.box[0])
        hi = _get(cfg, "solver.box_hi", float, case.box[1])
        grid = velocity_grid(n, lo, hi, dim=case.dim)
        boundary = BoundaryData.for_grid(grid, case.boundary_macros)
        state = run_dvm(grid, case.initial_macro, boundary, case.x_lo, case.x_hi,
                        nx, _get(cfg, "solver.T", float, case.t_end), kn,
                        dt=_get(cfg, "solver.dt", float, None))
        extra = []
    cols, rows = _field_rows(state)
    _write_csv(os.path.join(out, "fields.csv"), head, cols, rows)
    _write_manifest(out, cfg, {}, status, extra=extra)
    return status


def _run_closure_study(cfg, case, out):
    if case.pdf is None:
        raise ConfigurationError("closure-study needs a pdf case (bimodal)")
    n = _get(cfg, "solver.N", int, case.n)
    m_lo = _get(cfg, "study.m_min", int, 3)
    m_hi = _get(cfg, "study.m_max", int, 22)
    grid = velocity_grid(n, *case.box)
    f = case.pdf(grid.points[:, 0])
    fnorm = float(np.linalg.norm(f))
    rows = []
    for m in range(m_lo, m_hi + 1):
        basis = build_basis(grid, m)
        lam = moments(basis, f)
        sol = L2Closure(basis).solve(lam)
        w_dg = solve_dg(basis, lam)
        e_m = error_highest_moment(basis, f, sol.W)
        l2 = float(np.linalg.norm(sol.W - f)) / fnorm
        l2_dg = float(np.linalg.norm(w_dg - f)) / fnorm
        rows.append((m, e_m, l2, l2_dg, float(sol.min_weight), float(w_dg.min())))
    head = [f"case={case.identifier} solver=closure-study N={n} box={case.box}",
            "e_highest: relative error of the first unclosed moment",
            "l2/l2_dg: relative L2 node error, constrained vs unconstrained projection"]
    _write_csv(os.path.join(out, "errors.csv"), head,
               ["M", "e_highest", "l2", "l2_dg", "min_weight", "min_weight_dg"], rows)
    _write_manifest(out, cfg, {}, 0)
    return 0


def _read_fields_csv(path: str):
    rows = []
    cols = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if cols is None:
                cols = line.split(",")
                continue
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows)
    # keep only the final time
    tmax = data[:, 0].max()
    return cols, data[data[:, 0] == tmax]


def _conserved_from_fields(cols, data):
    dim = 2 if "y" in cols else 1
    idx = {name: cols.index(name) for name in cols}
    rho = data[:, idx["rho"]]
    theta = data[:, idx["theta"]]
    if dim == 1:
        v1 = data[:, idx["v1"]]
        return np.stack([rho, rho * v1, rho * (theta + v1**2)], axis=-1)
    v1, v2 = data[:, idx["v1"]], data[:, idx["v2"]]
    return np.stack([rho, rho * v1, rho * v2,
                     rho * (3.0 * theta + v1**2 + v2**2)], axis=-1)


def cmd_compare(dir_a: str, dir_b: str, out: str | None = None) -> int:
    cols_a, data_a = _read_fields_csv(os.path.join(dir_a, "fields.csv"))
    cols_b, data_b = _read_fields_csv(os.path.join(dir_b, "fields.csv"))
    if cols_a != cols_b or data_a.shape != data_b.shape:
        raise ConfigurationError(
            f"mesh mismatch between {dir_a} and {dir_b}: "
            f"{data_a.shape} vs {data_b.shape}")
    qa = _conserved_from_fields(cols_a, data_a)
    qb = _conserved_from_fields(cols_b, data_b)
    reports = error_macro(qa, qb)
    rows = [(r.metric, r.value) for r in reports.values()]
    out = out or dir_a
    _write_csv(os.path.join(out, "errors.csv"),
               [f"reference={dir_b} candidate={dir_a}"], ["metric", "value"], rows)
    for name, rep in reports.items():
        print(f"{name} = {_fmt(rep.value)}")
    return 0


def cmd_run(cfg: dict) -> int:
    case = _resolve_case(cfg)
    out = _out_dir(cfg)
    solver = cfg.get("solver", "moments")
    if solver == "moments":
        return _run_moments(cfg, case, out)
    if solver == "dvm":
        return _run_dvm(cfg, case, out)
    if solver == "closure-study":
        return _run_closure_study(cfg, case, out)
    raise ConfigurationError(f"unknown solver {solver!r}")


def cmd_sweep(cfg: dict) -> int:
    axes = {}
    base = {}
    for key, val in cfg.items():
        if key.startswith("sweep."):
            axes[key[6:]] = [v.strip() for v in val.split(",") if v.strip()]
        else:
            base[key] = val
    if not axes:
        raise ConfigurationError("sweep needs at least one sweep.<key>=v1,v2,... axis")
    root = _out_dir(base)
    names = sorted(axes)
    status = 0
    for combo in itertools.product(*(axes[k] for k in names)):
        sub = dict(base)
        tag_parts = []
        for key, val in zip(names, combo):
            sub[key] = val
            tag_parts.append(f"{key.split('.')[-1]}{val}")
        sub_dir = os.path.join(root, "_".join(tag_parts))
        os.makedirs(sub_dir, exist_ok=True)
        sub["output.dir"] = sub_dir
        saved = os.environ.pop("POSL2MOM_OUTDIR", None)
        try:
            status = max(status, cmd_run(sub))
        finally:
            if saved is not None:
                os.environ["POSL2MOM_OUTDIR"] = saved
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="posl2mom", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("run", "sweep"):
        sp = sub.add_parser(verb)
        sp.add_argument("config", nargs="?", help="key=value config file")
        sp.add_argument("overrides", nargs="*", help="key=value overrides")
    cp = sub.add_parser("compare")
    cp.add_argument("dir_a")
    cp.add_argument("dir_b")
    cp.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    try:
        if args.verb == "compare":
            return cmd_compare(args.dir_a, args.dir_b, args.out)
        config_path = args.config
        overrides = list(args.overrides)
        if config_path and "=" in config_path and not os.path.exists(config_path):
            overrides.insert(0, config_path)
            config_path = None
        cfg = parse_config(config_path, overrides)
        if args.verb == "run":
            return cmd_run(cfg)
        return cmd_sweep(cfg)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
