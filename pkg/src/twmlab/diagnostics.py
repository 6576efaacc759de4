"""Monitored quantities: the energy, k-th order energies, all stress-energy
components in Cartesian and null form, conservation residuals, the coupling
positivity bound, and sup norms.

Everything here is a pure function of state snapshots.  The coupling argument
is duck-typed (needs .lam, .v_t, .v_x, .v_y), so this module stays import-free
of the solvers.
"""

from __future__ import annotations

import math

import numpy as np

from .algebra import TargetGeometry
from .errors import ConfigurationError
from .grid import Grid, d1, d2, fornberg_weights, integrate


def lambda_max(geom: TargetGeometry, v_t: float) -> float:
    """Positivity bound |lambda| <= 1/sqrt(|v_t| |p|), |p|^2 = |p_ab p_cd
    g^ac g^bd|; +inf when p == 0 or v_t == 0 (the bound degenerates)."""
    pn = geom.p_norm
    if pn == 0.0 or v_t == 0.0:
        return math.inf
    return 1.0 / math.sqrt(abs(v_t) * pn)


def stress_components(E, H, B, geom: TargetGeometry, c) -> dict:
    """All nine stress-energy components as (N,) arrays, T_tt last.

    X^2 = X^a X^b g_ab and X.Y = X^a Y^b g_ab; the torsion potential enters
    only through the lambda v terms.
    """
    E2, H2, B2 = geom.norm2(E), geom.norm2(H), geom.norm2(B)
    EB, HB, EH = geom.inner(E, B), geom.inner(H, B), geom.inner(E, H)
    lam = c.lam
    pHE, pHB, pBE = geom.p_pair(H, E), geom.p_pair(H, B), geom.p_pair(B, E)
    return {
        "T_xx": 0.5 * (E2 - H2 + B2) + lam * c.v_x * pHB,
        "T_yy": 0.5 * (-E2 + H2 + B2) + lam * c.v_y * pBE,
        "T_tx": EB + lam * c.v_x * pHE,
        "T_xt": EB + lam * c.v_t * pHB,
        "T_ty": HB + lam * c.v_y * pHE,
        "T_yt": HB + lam * c.v_t * pBE,
        "T_xy": EH + lam * c.v_y * pHB,
        "T_yx": EH + lam * c.v_x * pBE,
        "T_tt": 0.5 * (E2 + H2 + B2) + lam * c.v_t * pHE,
    }


def null_components(E, H, B, geom: TargetGeometry, c) -> dict:
    """Null-frame components for l = t + x, n = -t + x:

        T_ll = 1/4 (B+E)^2 + (lam/4)(v_t+v_x) p(H, B+E)
        T_nn = 1/4 (-B+E)^2 - (lam/4)(-v_t+v_x) p(H, -B+E)
        T_ln = -1/2 H^2 + (lam/4)(-v_t+v_x) p(H, B+E)
        T_nl = -1/2 H^2 - (lam/4)(v_t+v_x) p(H, -B+E)
    """
    al = B + E
    be = -B + E
    H2 = geom.norm2(H)
    lam = c.lam
    pHa, pHb = geom.p_pair(H, al), geom.p_pair(H, be)
    return {
        "T_ll": 0.25 * geom.norm2(al) + 0.25 * lam * (c.v_t + c.v_x) * pHa,
        "T_nn": 0.25 * geom.norm2(be) - 0.25 * lam * (-c.v_t + c.v_x) * pHb,
        "T_ln": -0.5 * H2 + 0.25 * lam * (-c.v_t + c.v_x) * pHa,
        "T_nl": -0.5 * H2 - 0.25 * lam * (c.v_t + c.v_x) * pHb,
    }


def _time_weights(times: np.ndarray, eval_index: int, t_order: int) -> tuple[slice, np.ndarray]:
    """Window and Fornberg weights for d/dt at times[eval_index]."""
    m = len(times)
    need = t_order + 1
    if m < need:
        raise ConfigurationError(f"need at least {need} snapshots for t_order={t_order}")
    lo = max(0, min(eval_index - need // 2, m - need))
    w = fornberg_weights(times[eval_index], times[lo: lo + need], 1)[1]
    return slice(lo, lo + need), w


def null_conservation_residual(snapshots, geom: TargetGeometry, c, grid: Grid,
                               order: int = 4, t_order: int = 2,
                               eval_index: int | None = None):
    """Discrete residuals of the null conservation laws

        d_n T_ll + d_l T_nl = 0,    d_l T_nn + d_n T_ln = 0

    with d_l = (d_t + d_x)/2, d_n = (-d_t + d_x)/2.  `snapshots` is a list of
    (t, E, H, B); time derivatives use finite differences on the snapshot
    times at accuracy t_order (2 or 4), spatial derivatives the scheme's
    stencil.  Returns the two residual grids at snapshots[eval_index]."""
    if len(snapshots) < 3:
        raise ConfigurationError("need at least three consecutive snapshots")
    times = np.array([s[0] for s in snapshots])
    if eval_index is None:
        eval_index = len(snapshots) // 2
    window, w = _time_weights(times, eval_index, t_order)
    comps = [null_components(E, H, B, geom, c) for (_, E, H, B) in snapshots[window]]
    here = comps[eval_index - window.start]

    def ddt(key):
        return sum(wk * comp[key] for wk, comp in zip(w, comps))

    def ddx(key):
        return d1(here[key], grid, order)

    dl = lambda key: 0.5 * (ddt(key) + ddx(key))
    dn = lambda key: 0.5 * (-ddt(key) + ddx(key))
    r_ll = dn("T_ll") + dl("T_nl")
    r_nn = dl("T_nn") + dn("T_ln")
    return r_ll, r_nn


def energy(E, H, B, geom: TargetGeometry, c, grid: Grid) -> float:
    """E(t) = integral of T_tt = 1/2 (E^2 + H^2 + B^2) + lam v_t H^a E^b p_ab."""
    density = 0.5 * (geom.norm2(E) + geom.norm2(H) + geom.norm2(B)) \
        + c.lam * c.v_t * geom.p_pair(H, E)
    return float(integrate(density, grid))


def energy_positivity_scan(E, H, B, geom: TargetGeometry, c) -> float:
    """Min pointwise energy density T_tt; >= 0 whenever |lambda| <= lambda_max."""
    density = 0.5 * (geom.norm2(E) + geom.norm2(H) + geom.norm2(B)) \
        + c.lam * c.v_t * geom.p_pair(H, E)
    return float(density.min())


def frame_sobolev_energies(E, H, B, geom: TargetGeometry, grid: Grid, order: int = 4):
    """Quadratic energies of the frame fields and of their first x-derivatives
    (the frame-side stand-ins for the 0th and 1st order energies)."""
    e0 = 0.5 * float(integrate(geom.norm2(E) + geom.norm2(H) + geom.norm2(B), grid))
    dE, dH, dB = d1(E, grid, order), d1(H, grid, order), d1(B, grid, order)
    e1 = 0.5 * float(integrate(geom.norm2(dE) + geom.norm2(dH) + geom.norm2(dB), grid))
    return e0, e1


def frame_record(t, E, H, B, geom: TargetGeometry, c, grid: Grid, constraint) -> dict:
    """One diagnostics record (null residual fields are attached by the
    evolution loop once neighbouring samples exist)."""
    e0, e1 = frame_sobolev_energies(E, H, B, geom, grid)
    return {
        "t": float(t),
        "energy": energy(E, H, B, geom, c, grid),
        "energy_k": [e0, e1],
        "E0": e0,
        "E1": e1,
        "sup_E": float(np.abs(E).max()),
        "sup_H": float(np.abs(H).max()),
        "sup_B": float(np.abs(B).max()),
        "max_constraint": float(np.abs(constraint).max()),
        "min_energy_density": energy_positivity_scan(E, H, B, geom, c),
    }


# ---------------------------------------------------------------------------
# wave-map formulation diagnostics (chart-valued states)
# ---------------------------------------------------------------------------

def _chart_norm2(chart, phi, X) -> np.ndarray:
    gfield = chart.metric(phi)          # (N, n, n)
    return np.einsum("ai,iab,bi->i", X, gfield, X)


def energy_k(phi, theta, chart, grid: Grid, k: int, order: int = 4) -> float:
    """k-th order energy (1/2) int |d_t d_x^k phi|^2 + |d_x^{k+1} phi|^2 dx,
    metric norms evaluated at phi(x); k in {0, 1}."""
    if k not in (0, 1):
        raise ConfigurationError("energy_k supports k in {0, 1}")
    if k == 0:
        a, b = theta, d1(phi, grid, order)
    else:
        a, b = d1(theta, grid, order), d2(phi, grid, order)
    return 0.5 * float(integrate(_chart_norm2(chart, phi, a) + _chart_norm2(chart, phi, b), grid))


def wavemap_energy_density(phi, theta, chart, grid: Grid, order: int = 4) -> np.ndarray:
    """T_tt = 1/2 (|d_t phi|^2 + |d_x phi|^2); torsion-free by reduction."""
    dphi = d1(phi, grid, order)
    return 0.5 * (_chart_norm2(chart, phi, theta) + _chart_norm2(chart, phi, dphi))


def wavemap_record(t, phi, theta, chart, grid: Grid, order: int = 4) -> dict:
    """Diagnostics record for the direct solver.  Field-name mapping: sup_E is
    the x-gradient, sup_B the velocity, sup_H = 0 (y-invariant map)."""
    density = wavemap_energy_density(phi, theta, chart, grid, order)
    e0 = energy_k(phi, theta, chart, grid, 0, order)
    e1 = energy_k(phi, theta, chart, grid, 1, order)
    return {
        "t": float(t),
        "energy": float(integrate(density, grid)),
        "energy_k": [e0, e1],
        "E0": e0,
        "E1": e1,
        "sup_E": float(np.abs(d1(phi, grid, order)).max()),
        "sup_H": 0.0,
        "sup_B": float(np.abs(theta).max()),
        "max_constraint": 0.0,
        "min_energy_density": float(density.min()),
    }


def wavemap_null_conservation_residual(snapshots, chart, grid: Grid,
                                       order: int = 4, t_order: int = 2,
                                       eval_index: int | None = None):
    """Null residuals for the invariant wave map: here T_ll = 1/4|theta+phi'|^2,
    T_nn = 1/4|-theta+phi'|^2 and T_ln = T_nl = 0, so the laws reduce to pure
    null transport of the two null energy densities."""
    if len(snapshots) < 3:
        raise ConfigurationError("need at least three consecutive snapshots")
    times = np.array([s[0] for s in snapshots])
    if eval_index is None:
        eval_index = len(snapshots) // 2
    window, w = _time_weights(times, eval_index, t_order)

    def comps(phi, theta):
        dphi = d1(phi, grid, order)
        return (0.25 * _chart_norm2(chart, phi, theta + dphi),
                0.25 * _chart_norm2(chart, phi, -theta + dphi))

    series = [comps(phi, theta) for (_, phi, theta) in snapshots[window]]
    here = series[eval_index - window.start]
    dt_ll = sum(wk * s[0] for wk, s in zip(w, series))
    dt_nn = sum(wk * s[1] for wk, s in zip(w, series))
    r_ll = 0.5 * (-dt_ll + d1(here[0], grid, order))
    r_nn = 0.5 * (dt_nn + d1(here[1], grid, order))
    return r_ll, r_nn
