"""TOML run configuration: strict parsing (unknown keys are hard errors with
their dotted path), and assembly of solver objects from the validated tree.

Sections: [grid], [algebra], [geometry], [coupling], [initial_data], [run],
[target] (wave-map chart), [sweep] (sweep axes).  Metric/potential selection
follows the keys algebra.name, geometry.metric.kind in {cartan_killing,
identity, explicit}, geometry.p.kind in {zero, natural, commuting_pair,
explicit}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import algebra as alg_mod
from .errors import ConfigurationError
from .frame import (Coupling, FrameState, ProfileTerm, evaluate_profile,
                    make_coupling, make_initial_data, random_mode_terms)
from .grid import CIRCLE, Grid
from .wavemap import TargetChart, WaveMapState, builtin_chart

_SCALAR = object()
_VECTOR = object()
_MATRIX = object()

_TERM_SCHEMA = {
    "type": _SCALAR, "component": _SCALAR, "direction": _VECTOR,
    "amplitude": _SCALAR, "k": _SCALAR, "phase": _SCALAR,
    "center": _SCALAR, "width": _SCALAR,
}

_SCHEMA = {
    "grid": {"kind": _SCALAR, "N": _SCALAR, "x0": _SCALAR, "length": _SCALAR},
    "algebra": {"name": _SCALAR},
    "geometry": {
        "metric": {"kind": _SCALAR, "entries": _MATRIX},
        "p": {"kind": _SCALAR, "entries": _MATRIX, "R": _VECTOR,
              "pvec": _VECTOR, "qvec": _VECTOR},
    },
    "coupling": {"lambda": _SCALAR, "v": _VECTOR, "R": _VECTOR},
    "R": {"entries": _VECTOR},
    "initial_data": {
        "kind": _SCALAR, "h0": _VECTOR, "amplitude_scale": _SCALAR,
        "seed": _SCALAR, "amplitude": _SCALAR, "kmax": _SCALAR,
        "phi_base": _VECTOR,
        "e": [_TERM_SCHEMA], "b": [_TERM_SCHEMA],
        "phi": [_TERM_SCHEMA], "theta": [_TERM_SCHEMA],
    },
    "run": {"formulation": _SCALAR, "T": _SCALAR, "cfl": _SCALAR,
            "order": _SCALAR, "diag_stride": _SCALAR,
            "snapshot_stride": _SCALAR, "blowup_factor": _SCALAR},
    "target": {"chart": _SCALAR},
    "sweep": {"parallelism": _SCALAR, "cap": _SCALAR,
              "axes": [{"key": _SCALAR, "values": _VECTOR}]},
}


def _check_keys(node, schema, path=""):
    if not isinstance(node, dict):
        raise ConfigurationError(f"config section {path or '<root>'} must be a table")
    for key, val in node.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigurationError(f"unknown config key: {here}")
        spec = schema[key]
        if isinstance(spec, dict):
            _check_keys(val, spec, here)
        elif isinstance(spec, list):
            if not isinstance(val, list):
                raise ConfigurationError(f"config key {here} must be an array of tables")
            for i, item in enumerate(val):
                _check_keys(item, spec[0], f"{here}[{i}]")


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error in {path}: {exc}") from exc
    _check_keys(cfg, _SCHEMA)
    return cfg


def set_by_path(cfg: dict, dotted: str, value):
    """Override cfg['a']['b']... = value for dotted key 'a.b....' (sweep axes).
    Missing tables are created; the caller re-validates against the schema, so
    misspelled axis keys still fail hard."""
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if p in node and not isinstance(node[p], dict):
            raise ConfigurationError(f"sweep axis key {dotted} crosses a non-table")
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    _check_keys(cfg, _SCHEMA)


def _vec(raw, n, what) -> np.ndarray:
    arr = np.asarray(raw, float)
    if arr.shape != (n,):
        raise ConfigurationError(f"{what} must be a length-{n} vector")
    return arr


def _build_grid(cfg) -> Grid:
    sec = cfg.get("grid", {})
    for key in ("kind", "N", "length"):
        if key not in sec:
            raise ConfigurationError(f"grid.{key} is required")
    return Grid(kind=sec["kind"], N=int(sec["N"]), x0=float(sec.get("x0", 0.0)),
                length=float(sec["length"]))


def build_algebra(cfg):
    name = cfg.get("algebra", {}).get("name")
    if name is None:
        raise ConfigurationError("algebra.name is required")
    return alg_mod.builtin_algebra(str(name))


def build_geometry_from_config(cfg, alg) -> alg_mod.TargetGeometry:
    n = alg.dim
    gsec = cfg.get("geometry", {})
    msec = gsec.get("metric", {"kind": "cartan_killing"})
    kind = msec.get("kind", "cartan_killing")
    if kind == "cartan_killing":
        g = alg_mod.cartan_killing(alg)
        if np.abs(g).max() == 0.0:
            raise ConfigurationError(
                "Cartan-Killing form vanishes for an abelian algebra; use "
                "geometry.metric.kind = 'identity' or 'explicit'")
    elif kind == "identity":
        g = np.eye(n)
    elif kind == "explicit":
        g = np.asarray(msec.get("entries"), float)
        if g.shape != (n, n):
            raise ConfigurationError(f"geometry.metric.entries must be {n}x{n}")
        g = 0.5 * (g + g.T)
    else:
        raise ConfigurationError(f"unknown geometry.metric.kind {kind!r}")

    psec = gsec.get("p", {"kind": "zero"})
    pkind = psec.get("kind", "zero")
    if pkind == "zero":
        p = np.zeros((n, n))
    elif pkind == "natural":
        p = alg_mod.natural_p(alg, g, _vec(psec.get("R"), n, "geometry.p.R"))
    elif pkind == "commuting_pair":
        p = alg_mod.commuting_pair_p(alg, g, _vec(psec.get("pvec"), n, "geometry.p.pvec"),
                                     _vec(psec.get("qvec"), n, "geometry.p.qvec"))
    elif pkind == "explicit":
        p = np.asarray(psec.get("entries"), float)
        if p.shape != (n, n):
            raise ConfigurationError(f"geometry.p.entries must be {n}x{n}")
        p = 0.5 * (p - p.T)
    else:
        raise ConfigurationError(f"unknown geometry.p.kind {pkind!r}")
    return alg_mod.build_geometry(alg, g, p)


def build_coupling(cfg, alg) -> Coupling:
    sec = cfg.get("coupling", {})
    lam = float(sec.get("lambda", 0.0))
    v = _vec(sec.get("v", [1.0, 0.0, 0.0]), 3, "coupling.v")
    if "R" in sec:
        R = _vec(sec["R"], alg.dim, "coupling.R")
    elif "R" in cfg and "entries" in cfg["R"]:
        R = _vec(cfg["R"]["entries"], alg.dim, "R.entries")
    else:
        R = np.zeros(alg.dim)
    return Coupling(lam=lam, v=v, R=R)


def _parse_terms(raw_list, n, scale, what) -> list[ProfileTerm]:
    terms = []
    for i, raw in enumerate(raw_list):
        where = f"initial_data.{what}[{i}]"
        kind = raw.get("type", "mode")
        if "direction" in raw:
            direction = _vec(raw["direction"], n, f"{where}.direction")
        elif "component" in raw:
            comp = int(raw["component"])
            if not 0 <= comp < n:
                raise ConfigurationError(f"{where}.component out of range")
            direction = np.eye(n)[comp]
        else:
            raise ConfigurationError(f"{where} needs 'component' or 'direction'")
        amp = scale * float(raw.get("amplitude", 0.0))
        if kind == "mode":
            terms.append(ProfileTerm("mode", amp, direction, k=int(raw.get("k", 1)),
                                     phase=float(raw.get("phase", 0.0))))
        elif kind == "bump":
            terms.append(ProfileTerm("bump", amp, direction,
                                     center=float(raw.get("center", 0.0)),
                                     width=float(raw.get("width", 1.0))))
        else:
            raise ConfigurationError(f"{where}.type must be 'mode' or 'bump'")
    return terms


@dataclass
class Setup:
    """Everything a run needs, assembled from one validated config."""

    formulation: str
    alg: object
    geom: object
    coupling: Coupling
    grid: Grid
    chart: TargetChart | None
    initial_frame: FrameState | None
    initial_wavemap: WaveMapState | None
    run: dict
    raw: dict
    e_terms: list | None = None
    b_terms: list | None = None


def build_setup(cfg: dict, seed: int | None = None) -> Setup:
    grid = _build_grid(cfg)
    run_sec = cfg.get("run", {})
    formulation = run_sec.get("formulation", "frame")
    if formulation not in ("frame", "wavemap"):
        raise ConfigurationError("run.formulation must be 'frame' or 'wavemap'")
    run = {
        "T": float(run_sec.get("T", 1.0)),
        "cfl": float(run_sec.get("cfl", 0.5)),
        "order": int(run_sec.get("order", 4)),
        "diag_stride": int(run_sec.get("diag_stride", 0)) or None,
        "snapshot_stride": int(run_sec.get("snapshot_stride", 0)) or None,
        "blowup_factor": float(run_sec.get("blowup_factor", 1e6)),
    }

    idata = cfg.get("initial_data", {})
    scale = float(idata.get("amplitude_scale", 1.0))

    if formulation == "wavemap":
        chart = builtin_chart(cfg.get("target", {}).get("chart", "flat_torsion_r3"))
        n = chart.dim
        coupling = make_coupling(
            lam=float(cfg.get("coupling", {}).get("lambda", 0.0)),
            v=_vec(cfg.get("coupling", {}).get("v", [1.0, 0.0, 0.0]), 3, "coupling.v"),
            dim=n)
        base = _vec(idata.get("phi_base", [0.0] * n), n, "initial_data.phi_base")
        phi_terms = _parse_terms(idata.get("phi", []), n, scale, "phi")
        th_terms = _parse_terms(idata.get("theta", []), n, scale, "theta")
        phi = base[:, None] + evaluate_profile(phi_terms, grid.x, grid, n)
        theta = evaluate_profile(th_terms, grid.x, grid, n)
        state = WaveMapState(0.0, phi, theta)
        return Setup(formulation, None, None, coupling, grid, chart, None, state, run, cfg)

    alg = build_algebra(cfg)
    geom = build_geometry_from_config(cfg, alg)
    coupling = build_coupling(cfg, alg)
    n = alg.dim
    kind = idata.get("kind", "terms")
    if kind == "random":
        if grid.kind != CIRCLE:
            raise ConfigurationError("random initial data profiles need a circle grid")
        use_seed = seed if seed is not None else int(idata.get("seed", 0))
        rng = np.random.default_rng(use_seed)
        amp = scale * float(idata.get("amplitude", 0.1))
        kmax = int(idata.get("kmax", 3))
        # single direction for E so the constraint transport closes on S^1
        u = rng.normal(size=n)
        u /= max(np.linalg.norm(u), 1e-30)
        e_terms = random_mode_terms(rng, n, amp, kmax, direction=u)
        b_terms = random_mode_terms(rng, n, amp, kmax)
    elif kind == "terms":
        e_terms = _parse_terms(idata.get("e", []), n, scale, "e")
        b_terms = _parse_terms(idata.get("b", []), n, scale, "b")
    else:
        raise ConfigurationError("initial_data.kind must be 'terms' or 'random'")
    h0 = _vec(idata.get("h0", [0.0] * n), n, "initial_data.h0")
    state = make_initial_data(e_terms, b_terms, h0, alg, coupling, grid)
    return Setup(formulation, alg, geom, coupling, grid, None, state, None, run, cfg,
                 e_terms=e_terms, b_terms=b_terms)
