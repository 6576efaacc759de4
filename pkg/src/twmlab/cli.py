"""Command line entry point: `twm algebra|simulate|analyze|reconstruct|
convergence|sweep`.

Exit codes: 0 ok, 1 configuration error, 2 numerical error, 3 suspected
blow-up.  Environment overrides use the TWM_ prefix (TWM_OUT, TWM_SEED,
TWM_THREADS, TWM_ALLOW_LARGE_LAMBDA).
"""

from __future__ import annotations

import argparse
import itertools
import math
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import algebra as alg_mod
from . import diagnostics, reconstruct, runio
from .config import (build_algebra, build_coupling, build_geometry_from_config,
                     build_setup, load_config, set_by_path, _build_grid)
from .errors import ConfigurationError, NumericalError, TwmError
from .frame import evaluate_profile, evolve
from .grid import CIRCLE, Grid
from .wavemap import builtin_chart, evolve_wavemap, frame_projection

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BLOWUP = 0, 1, 2, 3


def _env_default(name, fallback, cast=str):
    raw = os.environ.get(f"TWM_{name}")
    if raw is None:
        return fallback
    if cast is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    return cast(raw)


def _add_common(sp, out_required=False):
    sp.add_argument("--out", default=_env_default("OUT", None), required=out_required,
                    help="output directory")
    sp.add_argument("--seed", type=int, default=_env_default("SEED", None, int),
                    help="seed for random data profiles")
    sp.add_argument("--allow-large-lambda", action="store_true",
                    default=_env_default("ALLOW_LARGE_LAMBDA", False, bool),
                    help="override the energy-positivity bound on lambda")
    sp.add_argument("--allow-noninvariant-target", action="store_true",
                    default=_env_default("ALLOW_NONINVARIANT_TARGET", False, bool),
                    help="override the (g, p) invariance gate for R != 0 runs")
    sp.add_argument("--threads", type=int, default=_env_default("THREADS", 1, int),
                    help="worker count for sweeps")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twm", description=__doc__)
    ap.add_argument("--version", action="version", version=f"twm {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("algebra", help="algebraic target checks")
    asub = p.add_subparsers(dest="subcommand", required=True)
    pc = asub.add_parser("check", help="print all algebra/geometry residuals")
    pc.add_argument("--config", required=True)
    _add_common(pc)

    p = sub.add_parser("simulate", help="run one evolution")
    p.add_argument("--config", required=True)
    p.add_argument("--formulation", choices=["frame", "wavemap"], default=None,
                   help="override run.formulation")
    _add_common(p, out_required=True)

    p = sub.add_parser("analyze", help="recompute diagnostics from stored snapshots")
    p.add_argument("--run", required=True, help="run directory")
    _add_common(p)

    p = sub.add_parser("reconstruct", help="recover the group-valued map from a run")
    p.add_argument("--run", required=True)
    _add_common(p, out_required=True)

    p = sub.add_parser("convergence", help="grid refinement study")
    p.add_argument("--config", required=True)
    p.add_argument("--levels", type=int, default=3)
    _add_common(p)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("--config", required=True)
    _add_common(p, out_required=True)
    return ap


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _run_setup(setup, args):
    kw = dict(T=setup.run["T"], cfl=setup.run["cfl"], order=setup.run["order"],
              diag_stride=setup.run["diag_stride"],
              snapshot_stride=setup.run["snapshot_stride"],
              blowup_factor=setup.run["blowup_factor"])
    if setup.formulation == "frame":
        return evolve(setup.initial_frame, setup.alg, setup.geom, setup.coupling,
                      setup.grid, allow_large_lambda=args.allow_large_lambda,
                      allow_noninvariant=args.allow_noninvariant_target, **kw)
    return evolve_wavemap(setup.initial_wavemap, setup.chart, setup.coupling,
                          setup.grid, allow_large_lambda=args.allow_large_lambda, **kw)


def _write_run(outdir, result, setup, config_path, seed):
    os.makedirs(outdir, exist_ok=True)
    started = runio.now_iso()
    shutil.copyfile(config_path, os.path.join(outdir, "config.toml"))
    diag_path = runio.write_diagnostics(outdir, result.diagnostics)
    snap_paths = []
    x = setup.grid.x
    for st in result.snapshots:
        if setup.formulation == "frame":
            fields = [st.E, st.H, st.B]
        else:
            fields = [st.phi, st.theta]
        snap_paths.append(runio.write_snapshot(outdir, st.t, x, fields, setup.formulation))
    manifest = {
        "config_hash": runio.config_hash(config_path),
        "version": __version__,
        "started": started,
        "finished": runio.now_iso(),
        "status": result.status,
        "message": result.message,
        "formulation": setup.formulation,
        "seed": seed,
        "outputs": {
            "config": "config.toml",
            "diagnostics": os.path.basename(diag_path),
            "snapshots": [os.path.basename(p) for p in snap_paths],
        },
    }
    runio.write_manifest(outdir, manifest)
    return manifest


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.formulation:
        cfg.setdefault("run", {})["formulation"] = args.formulation
    setup = build_setup(cfg, seed=args.seed)
    result = _run_setup(setup, args)
    _write_run(args.out, result, setup, args.config, args.seed)
    last = result.diagnostics[-1] if result.diagnostics else {}
    print(f"status: {result.status}  t_end: {last.get('t', 0.0):.6g}  "
          f"energy: {last.get('energy', float('nan')):.9e}")
    if result.message:
        print(result.message)
    if result.status == "blowup_suspected":
        return EXIT_BLOWUP
    if result.status == "error":
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# algebra check
# ---------------------------------------------------------------------------

def cmd_algebra_check(args) -> int:
    cfg = load_config(args.config)
    alg = build_algebra(cfg)
    geom = build_geometry_from_config(cfg, alg)
    coupling = build_coupling(cfg, alg)
    rows = alg_mod.geometry_report(alg, geom, coupling.R)
    rows.append(("lambda_max", diagnostics.lambda_max(geom, coupling.v_t), None))
    psec = cfg.get("geometry", {}).get("p", {})
    if psec.get("kind") == "commuting_pair":
        _s, cert = alg_mod.torsion_nonzero_witness(
            geom.g, geom.p, alg, np.asarray(psec["pvec"], float),
            np.asarray(psec["qvec"], float))
        rows.append(("torsion_witness", cert, None))
    width = max(len(r[0]) for r in rows)
    failed = False
    for name, value, bound in rows:
        status = ""
        if bound is not None and value > bound:
            status, failed = "  FAIL", True
        if name == "metric_min_eigenvalue" and value <= 0.0:
            status, failed = "  FAIL", True
        print(f"{name:<{width}}  {value: .6e}{status}")
    return EXIT_CONFIG if failed else EXIT_OK


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _context_from_run(rundir):
    cfg = load_config(os.path.join(rundir, "config.toml"))
    grid = _build_grid(cfg)
    manifest = runio.read_manifest(rundir)
    if manifest["formulation"] == "wavemap":
        chart = builtin_chart(cfg.get("target", {}).get("chart", "flat_torsion_r3"))
        from .frame import make_coupling
        coupling = make_coupling(lam=float(cfg.get("coupling", {}).get("lambda", 0.0)),
                                 v=cfg.get("coupling", {}).get("v", [1.0, 0.0, 0.0]),
                                 dim=chart.dim)
        return cfg, manifest, grid, None, None, coupling, chart
    alg = build_algebra(cfg)
    geom = build_geometry_from_config(cfg, alg)
    coupling = build_coupling(cfg, alg)
    return cfg, manifest, grid, alg, geom, coupling, None


def cmd_analyze(args) -> int:
    rundir = args.run
    cfg, manifest, grid, alg, geom, coupling, chart = _context_from_run(rundir)
    _m, records, times, series = runio.load_run(rundir)
    order = int(cfg.get("run", {}).get("order", 4))
    rec_by_t = {round(r["t"], 10): r for r in records}
    aligned = all(round(t, 10) in rec_by_t for t in times)

    from .frame import FrameOperator, FrameState
    worst = {}
    compared = 0
    for j, t in enumerate(times):
        key = round(float(t), 10)
        if key not in rec_by_t:
            continue
        streamed = rec_by_t[key]
        if manifest["formulation"] == "frame":
            E, H, B = series["E"][j], series["H"][j], series["B"][j]
            op = FrameOperator(alg, geom, coupling, grid, order)
            cons = op.constraint_residual(FrameState(float(t), E, H, B))
            fresh = diagnostics.frame_record(t, E, H, B, geom, coupling, grid, cons)
        else:
            phi, theta = series["phi"][j], series["theta"][j]
            fresh = diagnostics.wavemap_record(t, phi, theta, chart, grid, order)
        if aligned and len(times) >= 3:
            if j == 0:
                window, at = range(0, 3), 0
            elif j == len(times) - 1:
                window, at = range(len(times) - 3, len(times)), 2
            else:
                window, at = range(j - 1, j + 2), 1
            if manifest["formulation"] == "frame":
                triples = [(times[i], series["E"][i], series["H"][i], series["B"][i])
                           for i in window]
                r_ll, r_nn = diagnostics.null_conservation_residual(
                    triples, geom, coupling, grid, order=order, t_order=2, eval_index=at)
            else:
                triples = [(times[i], series["phi"][i], series["theta"][i]) for i in window]
                r_ll, r_nn = diagnostics.wavemap_null_conservation_residual(
                    triples, chart, grid, order=order, t_order=2, eval_index=at)
            fresh["null_residual_ll"] = float(np.abs(r_ll).max())
            fresh["null_residual_nn"] = float(np.abs(r_nn).max())
            fresh["null_conservation_residual"] = max(fresh["null_residual_ll"],
                                                      fresh["null_residual_nn"])
        compared += 1
        for k, v in fresh.items():
            if k == "energy_k":
                v = max(abs(a - b) for a, b in zip(v, streamed[k]))
                ref = max(abs(a) for a in fresh[k]) or 1.0
                worst[k] = max(worst.get(k, 0.0), v / ref)
                continue
            if k not in streamed or not isinstance(v, float):
                continue
            dev = abs(v - streamed[k]) / max(abs(v), 1e-12)
            worst[k] = max(worst.get(k, 0.0), dev)

    if compared == 0:
        print("no snapshot times match diagnostics records; nothing to compare")
        return EXIT_CONFIG
    print(f"compared {compared} snapshots against streamed records")
    bad = False
    for k in sorted(worst):
        flag = ""
        if worst[k] > 1e-9:
            flag, bad = "  MISMATCH", True
        print(f"{k:<28} max rel deviation {worst[k]:.3e}{flag}")
    return EXIT_CONFIG if bad else EXIT_OK


# ---------------------------------------------------------------------------
# reconstruct
# ---------------------------------------------------------------------------

def cmd_reconstruct(args) -> int:
    rundir = args.run
    cfg, manifest, grid, alg, geom, coupling, chart = _context_from_run(rundir)
    _m, _records, times, series = runio.load_run(rundir)
    if len(times) < 3:
        raise ConfigurationError("reconstruction needs at least three stored snapshots")
    if manifest["formulation"] == "wavemap":
        if chart.coframe is None:
            raise ConfigurationError(
                f"chart {chart.name!r} carries no coframe; cannot reconstruct")
        alg = alg_mod.builtin_algebra("su2")
        geom = alg_mod.build_geometry(alg)
        from .frame import make_coupling
        coupling = make_coupling(lam=coupling.lam, v=coupling.v, dim=alg.dim)
        from .wavemap import WaveMapState
        Ks = [frame_projection(WaveMapState(t, series["phi"][j], series["theta"][j]),
                               chart, grid) for j, t in enumerate(times)]
        E_series = [k[0] for k in Ks]
        H_series = [k[1] for k in Ks]
        B_series = [k[2] for k in Ks]
    else:
        E_series, H_series, B_series = series["E"], series["H"], series["B"]

    L = reconstruct.generators(alg)
    d = L.shape[-1]
    U0 = np.eye(d, dtype=complex)
    keep = max(1, (len(times) // 2) // 20)
    fields, monodromy = reconstruct.reconstruct_map(times, E_series, B_series,
                                                    alg, U0, grid, keep_stride=keep)
    drift = reconstruct.unitarity_drift(fields)
    mid = len(times) // 2
    flat = reconstruct.flatness_residual(times, E_series, B_series, alg, grid,
                                         eval_index=mid)
    path = reconstruct.path_commutativity(times, E_series, B_series, alg, U0, grid)
    report = [
        {"check": "unitarity_drift", "value": drift["unitarity"]},
        {"check": "det_drift", "value": drift["det"]},
        {"check": "flatness_residual_max", "value": float(np.abs(flat).max()),
         "t": float(times[mid])},
        {"check": "path_commutativity", "value": path},
    ]
    if coupling.equivariant:
        report.append({"check": "adU_constancy", "status": "not_applicable",
                       "reason": "R != 0 run"})
    else:
        adu = reconstruct.adU_constancy(H_series, fields, alg)
        report.append({"check": "adU_constancy", "value": adu})
    if monodromy is not None:
        dev = float(np.abs(monodromy - np.eye(d)).max())
        report.append({"check": "monodromy_deviation_from_identity", "value": dev})
    if drift["unitarity"] > 1e-4:
        report.append({"check": "unitarity_warning",
                       "status": f"drift {drift['unitarity']:.3e} exceeds 1e-4"})

    os.makedirs(args.out, exist_ok=True)
    for f in fields:
        runio.write_group_field(args.out, f.t, grid.x, f.U)
    runio.write_report(args.out, "reconstruction_report.ndjson", report)
    for rec in report:
        val = rec.get("value")
        print(f"{rec['check']:<36} {val if val is None else f'{val:.6e}'}"
              f"{'  ' + rec.get('status', '') if 'status' in rec else ''}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

def _refined_grid(grid: Grid, factor: int) -> Grid:
    if grid.kind == CIRCLE:
        return Grid(grid.kind, grid.N * factor, grid.x0, grid.length)
    return Grid(grid.kind, (grid.N - 1) * factor + 1, grid.x0, grid.length)


def _restrict(arr: np.ndarray, factor: int) -> np.ndarray:
    return arr[..., ::factor]


def _abelian_exact(setup, grid: Grid, t: float):
    """d'Alembert solution for abelian frame runs: E,B decouple per component
    into left/right movers; H stays at its seed value."""
    n = setup.alg.dim

    def wrap(x):
        if grid.kind == CIRCLE:
            return grid.x0 + np.mod(x - grid.x0, grid.length)
        return x

    xm = wrap(grid.x - t)
    xp = wrap(grid.x + t)
    Em = evaluate_profile(setup.e_terms, xm, grid, n)
    Bm = evaluate_profile(setup.b_terms, xm, grid, n)
    Ep = evaluate_profile(setup.e_terms, xp, grid, n)
    Bp = evaluate_profile(setup.b_terms, xp, grid, n)
    # E+B rides the left-moving characteristic, E-B the right-moving one
    E = 0.5 * ((Ep + Bp) + (Em - Bm))
    B = 0.5 * ((Ep + Bp) - (Em - Bm))
    return E, B


def cmd_convergence(args) -> int:
    if args.levels < 3:
        raise ConfigurationError("convergence needs at least 3 levels")
    cfg = load_config(args.config)
    base_setup = build_setup(cfg, seed=args.seed)
    against_exact = (base_setup.formulation == "frame"
                     and np.abs(base_setup.alg.C).max() == 0.0)

    results, grids, setups = [], [], []
    for lev in range(args.levels):
        factor = 2 ** lev
        cfg_l = load_config(args.config)
        g0 = _build_grid(cfg_l)
        gl = _refined_grid(g0, factor)
        set_by_path(cfg_l, "grid.N", gl.N)
        cfg_l.setdefault("run", {})["diag_stride"] = 1
        cfg_l["run"]["snapshot_stride"] = 1
        setup = build_setup(cfg_l, seed=args.seed)
        result = _run_setup(setup, args)
        if result.status != "ok":
            raise NumericalError(f"level {lev} run ended with status {result.status}")
        results.append(result)
        grids.append(setup.grid)
        setups.append(setup)

    rows = []

    def order_row(name, values):
        orders = [math.log2(values[i] / values[i + 1]) if values[i + 1] > 0 else float("inf")
                  for i in range(len(values) - 1)]
        rows.append({"quantity": name, "values": values, "orders": orders})

    # solution error: against the exact solution, or self-convergence on
    # nested grids against the next finer level
    sol_errs = []
    if against_exact:
        for lev, res in enumerate(results):
            E, B = _abelian_exact(setups[lev], grids[lev], res.final.t)
            err = max(np.abs(res.final.E - E).max(), np.abs(res.final.B - B).max())
            sol_errs.append(float(err))
    else:
        for lev in range(len(results) - 1):
            fine = results[lev + 1].final
            coarse = results[lev].final
            if base_setup.formulation == "frame":
                pairs = ((coarse.E, fine.E), (coarse.H, fine.H), (coarse.B, fine.B))
            else:
                pairs = ((coarse.phi, fine.phi), (coarse.theta, fine.theta))
            err = max(np.abs(c - _restrict(f, 2)).max() for c, f in pairs)
            sol_errs.append(float(err))
    order_row("solution_error", sol_errs)

    if base_setup.formulation == "frame":
        cons = [max(r["max_constraint"] for r in res.diagnostics) for res in results]
        order_row("max_constraint", [float(c) for c in cons])
    null_vals = []
    for res in results:
        interior = res.diagnostics[1:-1] or res.diagnostics
        null_vals.append(float(max(r["null_conservation_residual"] for r in interior)))
    order_row("null_conservation_residual", null_vals)

    for row in rows:
        vals = "  ".join(f"{v:.4e}" for v in row["values"])
        ords = "  ".join(f"{o:.2f}" for o in row["orders"])
        print(f"{row['quantity']:<28} values: {vals}")
        print(f"{'':<28} orders: {ords}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "convergence.csv")
        with open(path, "w") as fh:
            fh.write("quantity,level,value,order_to_next\n")
            for row in rows:
                for i, v in enumerate(row["values"]):
                    o = row["orders"][i] if i < len(row["orders"]) else ""
                    fh.write(f"{row['quantity']},{i},{v!r},{o!r}\n")
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _sweep_worker(payload):
    index, config_path, overrides, outdir, flags = payload
    try:
        cfg = load_config(config_path)
        cfg.pop("sweep", None)
        for key, value in overrides:
            set_by_path(cfg, key, value)
        ns = argparse.Namespace(**flags)
        setup = build_setup(cfg, seed=flags.get("seed"))
        result = _run_setup(setup, ns)
        os.makedirs(outdir, exist_ok=True)
        _write_run(outdir, result, setup, config_path, flags.get("seed"))
        diag = result.diagnostics
        e0 = diag[0]["energy"]
        drift = abs(diag[-1]["energy"] - e0) / max(abs(e0), 1e-30)
        row = {
            "status": result.status,
            "sup_E": max(r["sup_E"] for r in diag),
            "sup_H": max(r["sup_H"] for r in diag),
            "sup_B": max(r["sup_B"] for r in diag),
            "energy_drift": drift,
            "max_constraint": max(r["max_constraint"] for r in diag),
        }
    except TwmError as exc:
        row = {"status": "error", "sup_E": float("nan"), "sup_H": float("nan"),
               "sup_B": float("nan"), "energy_drift": float("nan"),
               "max_constraint": float("nan"), "message": str(exc)}
    row["index"] = index
    return row


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    sweep = cfg.get("sweep")
    if not sweep or not sweep.get("axes"):
        raise ConfigurationError("config has no [sweep] section with axes")
    cap = int(sweep.get("cap", 256))
    axes = [(ax["key"], list(ax["values"])) for ax in sweep["axes"]]
    combos = list(itertools.product(*(vals for _k, vals in axes)))
    if len(combos) > cap:
        raise ConfigurationError(f"sweep size {len(combos)} exceeds cap {cap}")
    combos.sort(key=lambda c: tuple(str(v) for v in c))
    workers = args.threads or int(sweep.get("parallelism", 1))

    os.makedirs(args.out, exist_ok=True)
    flags = {"allow_large_lambda": args.allow_large_lambda,
             "allow_noninvariant_target": args.allow_noninvariant_target,
             "seed": args.seed, "formulation": None}
    payloads = []
    for i, combo in enumerate(combos):
        overrides = [(axes[j][0], combo[j]) for j in range(len(axes))]
        payloads.append((i, args.config, overrides,
                         os.path.join(args.out, f"run_{i:04d}"), flags))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, payloads))
    else:
        rows = [_sweep_worker(p) for p in payloads]
    rows.sort(key=lambda r: r["index"])

    table = os.path.join(args.out, "sweep.csv")
    keys = [k for k, _v in axes]
    with open(table, "w") as fh:
        fh.write(",".join(["run_id"] + keys
                          + ["status", "sup_E", "sup_H", "sup_B",
                             "energy_drift", "max_constraint"]) + "\n")
        for i, row in enumerate(rows):
            vals = [f"run_{i:04d}"] + [repr(v) for v in combos[i]]
            vals += [row["status"]] + [runio.FLOAT_FMT % row[k] for k in
                                       ("sup_E", "sup_H", "sup_B",
                                        "energy_drift", "max_constraint")]
            fh.write(",".join(vals) + "\n")
    n_ok = sum(1 for r in rows if r["status"] == "ok")
    print(f"sweep complete: {len(rows)} runs, {n_ok} ok; table at {table}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "algebra":
            return cmd_algebra_check(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "reconstruct":
            return cmd_reconstruct(args)
        if args.command == "convergence":
            return cmd_convergence(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        raise ConfigurationError(f"unknown command {args.command}")
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
