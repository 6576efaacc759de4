"""Direct second-order solver for the translation-invariant torsion wave map
equation on chart-based targets, reduced to first order in time as
(phi, theta = d_t phi):

    d_t theta^A = d_x^2 phi^A
                  - G~^A_BC(phi) [theta^B theta^C - phi'^B phi'^C]
                  + lam v_y [G~^A_BC - G~^A_CB](phi) theta^B phi'^C

where G~ = Gamma + Q carries the metric connection and the torsion; its
symmetric part pairs with the 1+1 Minkowski metric (signature -,+) and its
antisymmetric part with the volume form (eps^{tx} = +1), so only Q survives
in the last term.  This solver is independent of the frame formulation and is
used to cross-validate it.

Chart tensors use the package index layout: connection arrays are indexed
[point, B, C, A] = G~^A_BC(phi_point).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diagnostics
from .errors import ChartDomainError, ConfigurationError, NumericalError
from .grid import CIRCLE, Grid, d1, d2
from .frame import Coupling, RunResult

_CHRISTOFFEL_STEP = 1e-5


@dataclass(frozen=True)
class TargetChart:
    """Chart-based target: vectorized metric and connection callbacks.

    metric(phi):     (n, N) -> (N, n, n) array of g_AB(phi_i)
    connection(phi): (n, N) -> (N, n, n, n) array, [i, B, C, A] = G~^A_BC
    coframe:         optional (n, N) -> (N, n, n), [i, a, A] = e^a_A(phi_i),
                     for Lie-group charts (frame projection)
    domain_check:    optional callback raising ChartDomainError outside the
                     chart validity region
    torsion_potential: optional (n, N) -> (N, n, n) with p_AB(phi_i), used by
                     the consistency validator only
    """

    name: str
    dim: int
    metric: Callable
    connection: Callable
    coframe: Callable | None = None
    domain_check: Callable | None = None
    torsion_potential: Callable | None = None


@dataclass
class WaveMapState:
    """Chart coordinates and velocity on one time slice, arrays (n, N)."""

    t: float
    phi: np.ndarray
    theta: np.ndarray

    def copy(self) -> "WaveMapState":
        return WaveMapState(self.t, self.phi.copy(), self.theta.copy())

    @property
    def sup(self) -> float:
        return max(np.abs(self.phi).max(), np.abs(self.theta).max())


# ---------------------------------------------------------------------------
# built-in charts
# ---------------------------------------------------------------------------

def _flat_metric(phi):
    N = phi.shape[1]
    return np.broadcast_to(np.eye(3), (N, 3, 3))


def _flat_connection(phi):
    # p_23 = phi^1 gives Q^A_BC = (1/2) eps_ABC, Gamma = 0.
    N = phi.shape[1]
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0
    Q = 0.5 * eps  # layout [B, C, A]; eps is cyclic-invariant so values match
    return np.broadcast_to(Q, (N, 3, 3, 3))


def _flat_torsion_potential(phi):
    N = phi.shape[1]
    p = np.zeros((N, 3, 3))
    p[:, 1, 2] = phi[0]
    p[:, 2, 1] = -phi[0]
    return p


def _cross_matrices(phi):
    """[phi]_x per grid point, (N, 3, 3); the adjoint action on su2."""
    N = phi.shape[1]
    A = np.zeros((N, 3, 3))
    A[:, 0, 1], A[:, 0, 2] = -phi[2], phi[1]
    A[:, 1, 0], A[:, 1, 2] = phi[2], -phi[0]
    A[:, 2, 0], A[:, 2, 1] = -phi[1], phi[0]
    return A


def su2_coframe(phi) -> np.ndarray:
    """Left-invariant coframe of SU(2) in the exponential chart,

        M(phi) = I - (1-cos t)/t^2 [phi]_x + (t - sin t)/t^3 [phi]_x^2

    with t = |phi|; M[i, a, A] = e^a_A(phi_i), so K_mu = M d_mu phi."""
    phi = np.asarray(phi, float)
    t2 = np.einsum("ai,ai->i", phi, phi)
    t = np.sqrt(t2)
    A = _cross_matrices(phi)
    A2 = np.einsum("iab,ibc->iac", A, A)
    small = t < 1e-4
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                      (1.0 - np.cos(t)) / np.where(small, 1.0, t2))
        c2 = np.where(small, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
                      (t - np.sin(t)) / np.where(small, 1.0, t2 * t))
    eye = np.broadcast_to(np.eye(3), A.shape)
    return eye - c1[:, None, None] * A + c2[:, None, None] * A2


def _su2_metric(phi):
    M = su2_coframe(phi)
    # pull-back of the bi-invariant (Cartan-Killing) metric g_ab = 2 delta
    return 2.0 * np.einsum("iaA,iaB->iAB", M, M)


def _su2_connection(phi):
    """Christoffels of the pulled-back metric by centered differencing of
    g_AB with step 1e-5 (the chart has no torsion potential)."""
    n, N = phi.shape
    h = _CHRISTOFFEL_STEP
    dg = np.zeros((n, N, n, n))  # dg[D, i, A, B] = d_D g_AB
    for D in range(n):
        e = np.zeros((n, 1))
        e[D] = h
        dg[D] = (_su2_metric(phi + e) - _su2_metric(phi - e)) / (2.0 * h)
    g_inv = np.linalg.inv(_su2_metric(phi))
    # Gamma^A_BC = 1/2 g^AD (d_B g_DC + d_C g_DB - d_D g_BC), layout [i,B,C,A]
    sym = np.einsum("bidc->ibcd", dg) + np.einsum("cidb->ibcd", dg) - np.einsum("dibc->ibcd", dg)
    return 0.5 * np.einsum("iad,ibcd->ibca", g_inv, sym)


def _su2_domain_check(phi, grid: Grid, t: float):
    r = np.sqrt(np.einsum("ai,ai->i", phi, phi))
    bad = np.argwhere(r >= 0.9 * math.pi)
    if len(bad):
        i = int(bad[0, 0])
        raise ChartDomainError(
            f"wave map left the exponential chart (|phi| = {r[i]:.4f} >= 0.9 pi) "
            f"at x = {grid.x[i]:.6g}, t = {t:.6g}")


def builtin_chart(name: str) -> TargetChart:
    """Built-in charts: flat_torsion_r3 (R^3, identity metric, constant
    torsion Q = eps/2 from p_23 = x^1) and su2_exponential (SU(2) through the
    exponential map, bi-invariant metric, no torsion)."""
    if name == "flat_torsion_r3":
        return TargetChart(name=name, dim=3, metric=_flat_metric,
                           connection=_flat_connection,
                           torsion_potential=_flat_torsion_potential)
    if name == "su2_exponential":
        return TargetChart(name=name, dim=3, metric=_su2_metric,
                           connection=_su2_connection, coframe=su2_coframe,
                           domain_check=_su2_domain_check)
    raise ConfigurationError(
        f"unknown chart {name!r}; built-ins: flat_torsion_r3, su2_exponential")


# ---------------------------------------------------------------------------
# right-hand side and evolution
# ---------------------------------------------------------------------------

def rhs_wavemap(state: WaveMapState, chart: TargetChart, coupling: Coupling,
                grid: Grid, order: int = 4) -> np.ndarray:
    """Acceleration d_t theta, shape (n, N)."""
    phi, theta = state.phi, state.theta
    if not (np.isfinite(phi).all() and np.isfinite(theta).all()):
        raise NumericalError(f"non-finite wave map state at t = {state.t:.6g}")
    dphi = d1(phi, grid, order)
    G = chart.connection(phi)  # (N, b, c, a)
    acc = d2(phi, grid, order)
    acc -= np.einsum("ibca,bi,ci->ai", G, theta, theta)
    acc += np.einsum("ibca,bi,ci->ai", G, dphi, dphi)
    lamv = coupling.lam * coupling.v_y
    if lamv != 0.0:
        anti = np.einsum("ibca,bi,ci->ai", G, theta, dphi) \
            - np.einsum("ibca,bi,ci->ai", G, dphi, theta)
        acc += lamv * anti
    return acc


def step_wavemap(state: WaveMapState, chart: TargetChart, coupling: Coupling,
                 grid: Grid, dt: float, order: int = 4,
                 cfl_limit: float = 0.9) -> WaveMapState:
    if dt > cfl_limit * grid.dx * (1.0 + 1e-12):
        raise ConfigurationError(
            f"CFL violation: dt = {dt:.3e} > {cfl_limit} * dx = {cfl_limit * grid.dx:.3e}")
    phi, th = state.phi, state.theta

    def f(phi, th, t):
        s = WaveMapState(t, phi, th)
        return th, rhs_wavemap(s, chart, coupling, grid, order)

    k1 = f(phi, th, state.t)
    k2 = f(phi + 0.5 * dt * k1[0], th + 0.5 * dt * k1[1], state.t + 0.5 * dt)
    k3 = f(phi + 0.5 * dt * k2[0], th + 0.5 * dt * k2[1], state.t + 0.5 * dt)
    k4 = f(phi + dt * k3[0], th + dt * k3[1], state.t + dt)
    phi_new = phi + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    th_new = th + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return WaveMapState(state.t + dt, phi_new, th_new)


def evolve_wavemap(initial: WaveMapState, chart: TargetChart, coupling: Coupling,
                   grid: Grid, T: float, cfl: float = 0.5, order: int = 4,
                   diag_stride: int | None = None,
                   snapshot_stride: int | None = None,
                   blowup_factor: float = 1e6,
                   allow_large_lambda: bool = False) -> RunResult:
    """Fixed-step evolution of (phi, theta); same run contract as the frame
    solver (chart targets carry no constant p, so the lambda gate does not
    bind unless a torsion potential norm is meaningful for the chart)."""
    if cfl > 0.9:
        raise ConfigurationError(f"cfl must be <= 0.9, got {cfl}")
    if T < 0:
        raise ConfigurationError("T must be >= 0")
    nsteps = 0 if T == 0 else max(1, math.ceil(T / (cfl * grid.dx)))
    dt = 0.0 if nsteps == 0 else T / nsteps
    if diag_stride is None:
        diag_stride = max(1, nsteps // 200)
    if snapshot_stride is None:
        snapshot_stride = diag_stride

    ceiling = blowup_factor * max(initial.sup, 1e-12)
    state = initial.copy()
    if chart.domain_check is not None:
        chart.domain_check(state.phi, grid, state.t)
    samples: list[WaveMapState] = []
    records: list[dict] = []
    snapshots: list[WaveMapState] = []
    snapshot_times: list[float] = []
    status, message = "ok", ""

    def sample(s):
        records.append(diagnostics.wavemap_record(s.t, s.phi, s.theta, chart, grid, order))
        samples.append(s.copy())

    def snapshot(s):
        snapshots.append(s.copy())
        snapshot_times.append(s.t)

    sample(state)
    snapshot(state)
    for k in range(1, nsteps + 1):
        try:
            state = step_wavemap(state, chart, coupling, grid, dt, order)
            if chart.domain_check is not None:
                chart.domain_check(state.phi, grid, state.t)
        except NumericalError as exc:
            status, message = "error", f"{exc}; last good time t = {state.t - dt:.6g}"
            break
        if not np.isfinite(state.phi).all() or not np.isfinite(state.theta).all():
            status = "error"
            message = f"non-finite state after step {k}; last good time t = {state.t - dt:.6g}"
            break
        if state.sup > ceiling:
            status = "blowup_suspected"
            message = (f"sup norm {state.sup:.3e} exceeded ceiling {ceiling:.3e} "
                       f"at t = {state.t:.6g}")
            sample(state)
            if snapshot_times[-1] != state.t:
                snapshot(state)
            break
        if k % diag_stride == 0 or k == nsteps:
            sample(state)
        if k % snapshot_stride == 0 or k == nsteps:
            if not snapshot_times or snapshot_times[-1] != state.t:
                snapshot(state)

    _attach_wavemap_null(records, samples, chart, grid, order)
    result = RunResult(status=status, message=message, grid=grid,
                       snapshot_times=snapshot_times, snapshots=snapshots,
                       diagnostics=records, final=state)
    result.formulation = "wavemap"
    return result


def _attach_wavemap_null(records, samples, chart, grid, order, t_order=2):
    m = len(samples)
    for j, rec in enumerate(records):
        if m < 3:
            rec["null_residual_ll"] = rec["null_residual_nn"] = 0.0
            rec["null_conservation_residual"] = 0.0
            continue
        if j == 0:
            window, at = samples[0:3], 0
        elif j == m - 1:
            window, at = samples[m - 3: m], 2
        else:
            window, at = samples[j - 1: j + 2], 1
        triples = [(s.t, s.phi, s.theta) for s in window]
        r_ll, r_nn = diagnostics.wavemap_null_conservation_residual(
            triples, chart, grid, order=order, t_order=t_order, eval_index=at)
        rec["null_residual_ll"] = float(np.abs(r_ll).max())
        rec["null_residual_nn"] = float(np.abs(r_nn).max())
        rec["null_conservation_residual"] = max(rec["null_residual_ll"], rec["null_residual_nn"])


# ---------------------------------------------------------------------------
# frame projection (cross-validation against the frame solver)
# ---------------------------------------------------------------------------

def frame_projection(state: WaveMapState, chart: TargetChart, grid: Grid,
                     order: int = 4):
    """Frame components of the wave map gradient for Lie-group charts:
    E^a = e^a_A d_x phi^A, B^a = e^a_A d_t phi^A, and H = 0 (the map is
    y-invariant).  Requires the chart to carry a coframe."""
    if chart.coframe is None:
        raise ConfigurationError(f"chart {chart.name!r} has no coframe; cannot project")
    if chart.domain_check is not None:
        chart.domain_check(state.phi, grid, state.t)
    M = chart.coframe(state.phi)  # (N, a, A)
    dphi = d1(state.phi, grid, order)
    E = np.einsum("iaA,Ai->ai", M, dphi)
    B = np.einsum("iaA,Ai->ai", M, state.theta)
    H = np.zeros_like(E)
    return E, H, B


def validate_chart(chart: TargetChart, phi_samples: np.ndarray, tol: float = 1e-8) -> dict:
    """Chart invariants on sample points: metric positive definite, and the
    antisymmetric part of the connection consistent with the chart torsion
    potential (when one is provided) via Q^A_BC = 3/2 g^AD d_[D p_BC]."""
    g = chart.metric(phi_samples)
    eigs = np.linalg.eigvalsh(g)
    res = {"metric_min_eigenvalue": float(eigs.min())}
    if chart.torsion_potential is not None:
        G = chart.connection(phi_samples)
        anti = 0.5 * (G - np.einsum("ibca->icba", G))
        n = chart.dim
        h = 1e-6
        dp = np.zeros((n,) + chart.torsion_potential(phi_samples).shape)
        for D in range(n):
            e = np.zeros((n, 1))
            e[D] = h
            dp[D] = (chart.torsion_potential(phi_samples + e)
                     - chart.torsion_potential(phi_samples - e)) / (2 * h)
        # Q^A_BC = (1/2) g^AD (d_D p_BC + d_B p_CD + d_C p_DB), layout [i,B,C,A]
        tot = (np.einsum("dibc->idbc", dp) + np.einsum("bicd->idbc", dp)
               + np.einsum("cidb->idbc", dp))
        Q = 0.5 * np.einsum("iad,idbc->ibca", np.linalg.inv(g), tot)
        res["torsion_consistency"] = float(np.abs(anti - Q).max())
    return res
