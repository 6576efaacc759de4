"""Method-of-lines solver for the 1+1 reduced frame-field system on a Lie
group target, covering both the invariant system (R = 0) and the equivariant
system (R != 0); they are one code path.

Fields per grid point: E^a = K^a_x, H^a = K^a_y, B^a = K^a_t.  Evolution:

    dE^a/dt = d_x B^a - C_bc^a B^b E^c
    dH^a/dt = -C_bc^a B^b (H^c - R^c)
    dB^a/dt = d_x E^a + C_bc^a H^b R^c
              - C^a_bc (B^b B^c - E^b E^c - H^b H^c)
              + 2 lambda Q^a_bc (v_y B^b E^c - v_x B^b H^c + v_t E^b H^c)

with the constraint d_x H^a = -C_bc^a E^b (H^c - R^c) on initial data.  The
signs of the H^b R^c term and of the torsion coupling are the unique choice
under which the monitored stress-energy tensor is exactly conserved (the
other sign/weight choices break conservation at O(1); see the diagnostics
test suite, which pins this down numerically).

Conventions: base metric diag(-1,+1,+1) on (t,x,y), orientation eps^{txy}=+1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diagnostics
from .algebra import LieAlgebraSpec, SparseBilinear, TargetGeometry, check_g_invariance, check_p_invariance
from .errors import ConfigurationError, DataError, NumericalError
from .grid import CIRCLE, Grid, d1

INVARIANCE_GATE_TOL = 1e-10
MONODROMY_TOL = 1e-8


@dataclass(frozen=True)
class Coupling:
    """Torsion coupling lambda, the constant base one-form v = (v_t, v_x, v_y),
    and the Lie algebra element R generating the equivariance subgroup."""

    lam: float
    v: np.ndarray
    R: np.ndarray

    @property
    def v_t(self) -> float:
        return float(self.v[0])

    @property
    def v_x(self) -> float:
        return float(self.v[1])

    @property
    def v_y(self) -> float:
        return float(self.v[2])

    @property
    def equivariant(self) -> bool:
        return bool(np.abs(self.R).max() > 0.0)


def make_coupling(lam=0.0, v=(1.0, 0.0, 0.0), R=None, dim=3) -> Coupling:
    R = np.zeros(dim) if R is None else np.asarray(R, float)
    return Coupling(lam=float(lam), v=np.asarray(v, float), R=R)


@dataclass
class FrameState:
    """Frame fields on one time slice; arrays have shape (n, N)."""

    t: float
    E: np.ndarray
    H: np.ndarray
    B: np.ndarray

    def copy(self) -> "FrameState":
        return FrameState(self.t, self.E.copy(), self.H.copy(), self.B.copy())

    @property
    def sup(self) -> float:
        return max(np.abs(self.E).max(), np.abs(self.H).max(), np.abs(self.B).max())


class FrameOperator:
    """Caches the sparse tensor contractions for one (algebra, geometry,
    coupling, grid) combination; owns the right-hand side."""

    def __init__(self, alg: LieAlgebraSpec, geom: TargetGeometry, coupling: Coupling,
                 grid: Grid, order: int = 4):
        if coupling.R.shape != (alg.dim,):
            raise ConfigurationError(f"R must have length {alg.dim}")
        self.alg = alg
        self.geom = geom
        self.coupling = coupling
        self.grid = grid
        self.order = order
        self.comm = SparseBilinear(alg.C)
        self.raised = SparseBilinear(geom.C_raised)
        self.torsion = SparseBilinear(geom.Q)
        # [X, R]^a = M_R[a, b] X^b
        self.M_R = np.einsum("bca,c->ab", alg.C, coupling.R)

    def rhs(self, state: FrameState, check: bool = True):
        """Time derivatives (dE, dH, dB); raises NumericalError with the grid
        location if the input state is not finite."""
        E, H, B = state.E, state.H, state.B
        if check and not (np.isfinite(E).all() and np.isfinite(H).all() and np.isfinite(B).all()):
            raise NumericalError(_nonfinite_message(state, self.grid))
        c = self.coupling
        HmR = H - c.R[:, None]
        dE = d1(B, self.grid, self.order) - self.comm(B, E)
        dH = -self.comm(B, HmR)
        quad = self.raised(B, B) - self.raised(E, E) - self.raised(H, H)
        tors = (
            c.v_y * self.torsion(B, E)
            - c.v_x * self.torsion(B, H)
            + c.v_t * self.torsion(E, H)
        )
        dB = d1(E, self.grid, self.order) + self.M_R @ H - quad + 2.0 * c.lam * tors
        return dE, dH, dB

    def constraint_residual(self, state: FrameState) -> np.ndarray:
        """d_x H^a + C_bc^a E^b (H^c - R^c), pointwise (n, N)."""
        HmR = state.H - self.coupling.R[:, None]
        return d1(state.H, self.grid, self.order) + self.comm(state.E, HmR)


def _nonfinite_message(state: FrameState, grid: Grid) -> str:
    for name, arr in (("E", state.E), ("H", state.H), ("B", state.B)):
        bad = np.argwhere(~np.isfinite(arr))
        if len(bad):
            a, i = bad[0]
            return (f"non-finite value in {name}^{a} at x = {grid.x[i]:.6g} "
                    f"(index {i}), t = {state.t:.6g}")
    return "non-finite value"


def rhs(state: FrameState, geom: TargetGeometry, alg: LieAlgebraSpec,
        coupling: Coupling, grid: Grid, order: int = 4):
    """One-shot right-hand side; prefer a cached FrameOperator in loops."""
    return FrameOperator(alg, geom, coupling, grid, order).rhs(state)


def constraint_residual(state: FrameState, alg: LieAlgebraSpec, coupling: Coupling,
                        grid: Grid, order: int = 4) -> np.ndarray:
    return FrameOperator(alg, _trivial_geom(alg), coupling, grid, order).constraint_residual(state)


def _trivial_geom(alg: LieAlgebraSpec) -> TargetGeometry:
    n = alg.dim
    eye = np.eye(n)
    return TargetGeometry(g=eye, g_inv=eye, p=np.zeros((n, n)),
                          Q=np.zeros((n, n, n)), C_raised=alg.C.copy())


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProfileTerm:
    """One additive term of a field profile.

    kind "mode":  amplitude * sin(k * (2 pi / L) (x - x0) + phase) * direction
    kind "bump":  amplitude * exp(1 - 1/(1 - s^2)) * direction, s = (x-center)/width
    """

    kind: str
    amplitude: float
    direction: np.ndarray
    k: int = 1
    phase: float = 0.0
    center: float = 0.0
    width: float = 1.0


def evaluate_profile(terms: list[ProfileTerm], x: np.ndarray, grid: Grid, dim: int) -> np.ndarray:
    """Sum the closed-form terms at arbitrary positions x; returns (dim, len(x))."""
    x = np.atleast_1d(np.asarray(x, float))
    out = np.zeros((dim, x.size))
    for term in terms:
        if term.kind == "mode":
            kfreq = 2.0 * math.pi * term.k / grid.length
            f = term.amplitude * np.sin(kfreq * (x - grid.x0) + term.phase)
        elif term.kind == "bump":
            s = (x - term.center) / term.width
            f = np.zeros_like(x)
            inside = np.abs(s) < 1.0
            f[inside] = term.amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        else:
            raise ConfigurationError(f"unknown profile term kind {term.kind!r}")
        out += np.outer(np.asarray(term.direction, float), f)
    return out


def random_mode_terms(rng: np.random.Generator, dim: int, amplitude: float = 0.1,
                      kmax: int = 3, direction: np.ndarray | None = None) -> list[ProfileTerm]:
    """Band-limited random profile (zero mean by construction).  Pass a fixed
    direction to get a single-direction profile (required for E-hat on circle
    domains, where it makes the constraint monodromy exactly trivial)."""
    terms = []
    for k in range(1, kmax + 1):
        if direction is None:
            d = rng.normal(size=dim)
            d /= max(np.linalg.norm(d), 1e-30)
        else:
            d = np.asarray(direction, float)
        terms.append(ProfileTerm(kind="mode", amplitude=amplitude * float(rng.uniform(0.3, 1.0)) / k,
                                 direction=d, k=k, phase=float(rng.uniform(0, 2 * math.pi))))
    return terms


def make_initial_data(e_terms: list[ProfileTerm], b_terms: list[ProfileTerm],
                      h0: np.ndarray, alg: LieAlgebraSpec, coupling: Coupling,
                      grid: Grid, substeps: int = 8) -> FrameState:
    """Constrained data: E-hat and B-hat from closed-form profiles, H-hat by
    integrating d_x H = -[E, H - R] node to node with a 4th-order one-step
    method (RK4 on `substeps` sub-cells, profile evaluated exactly).

    On the circle the constraint transport must return to H(x0) after one
    circumference; a mismatch beyond MONODROMY_TOL * scale raises DataError
    (use a single-direction zero-mean E profile, for which the monodromy is
    exactly trivial).
    """
    n = alg.dim
    h0 = np.asarray(h0, float)
    if h0.shape != (n,):
        raise ConfigurationError(f"H seed must have length {n}")
    x = grid.x
    E = evaluate_profile(e_terms, x, grid, n)
    B = evaluate_profile(b_terms, x, grid, n)

    R = coupling.R
    comm = SparseBilinear(alg.C)

    def ode(xval: float, Hval: np.ndarray) -> np.ndarray:
        Ex = evaluate_profile(e_terms, np.array([xval]), grid, n)[:, 0]
        return -comm(Ex, Hval - R)

    H = np.zeros((n, grid.N))
    H[:, 0] = h0
    h = grid.dx / substeps
    Hcur = h0.copy()
    ncells = grid.N if grid.kind == CIRCLE else grid.N - 1
    for i in range(ncells):
        xcur = grid.x0 + i * grid.dx
        for s in range(substeps):
            xs = xcur + s * h
            k1 = ode(xs, Hcur)
            k2 = ode(xs + 0.5 * h, Hcur + 0.5 * h * k1)
            k3 = ode(xs + 0.5 * h, Hcur + 0.5 * h * k2)
            k4 = ode(xs + h, Hcur + h * k3)
            Hcur = Hcur + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if i + 1 < grid.N:
            H[:, i + 1] = Hcur
    if grid.kind == CIRCLE:
        scale = max(1.0, float(np.abs(h0 - R).max()))
        mismatch = float(np.abs(Hcur - h0).max())
        if mismatch > MONODROMY_TOL * scale:
            raise DataError(
                f"constraint transport around the circle does not close "
                f"(|H(x0+L) - H(x0)| = {mismatch:.3e}); use a single-direction "
                f"zero-mean E profile, for which the monodromy is trivial"
            )
    return FrameState(t=0.0, E=E, H=H, B=B)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def step(state: FrameState, geom: TargetGeometry, alg: LieAlgebraSpec,
         coupling: Coupling, grid: Grid, dt: float, order: int = 4,
         cfl_limit: float = 0.9, op: FrameOperator | None = None) -> FrameState:
    """One classic 4-stage explicit step.  dt must respect dt <= cfl_limit*dx
    (unit characteristic speeds)."""
    if dt > cfl_limit * grid.dx * (1.0 + 1e-12):
        raise ConfigurationError(
            f"CFL violation: dt = {dt:.3e} > {cfl_limit} * dx = {cfl_limit * grid.dx:.3e}")
    if op is None:
        op = FrameOperator(alg, geom, coupling, grid, order)
    E, H, B = state.E, state.H, state.B
    s = state

    def f(E, H, B, t):
        return op.rhs(FrameState(t, E, H, B), check=False)

    k1 = f(E, H, B, s.t)
    k2 = f(E + 0.5 * dt * k1[0], H + 0.5 * dt * k1[1], B + 0.5 * dt * k1[2], s.t + 0.5 * dt)
    k3 = f(E + 0.5 * dt * k2[0], H + 0.5 * dt * k2[1], B + 0.5 * dt * k2[2], s.t + 0.5 * dt)
    k4 = f(E + dt * k3[0], H + dt * k3[1], B + dt * k3[2], s.t + dt)
    new = []
    for i, old in enumerate((E, H, B)):
        new.append(old + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    return FrameState(s.t + dt, *new)


@dataclass
class RunResult:
    """In-memory record of one evolution."""

    status: str
    message: str
    grid: Grid
    snapshot_times: list[float]
    snapshots: list[FrameState]
    diagnostics: list[dict]
    final: FrameState
    formulation: str = "frame"


def evolve(initial: FrameState, alg: LieAlgebraSpec, geom: TargetGeometry,
           coupling: Coupling, grid: Grid, T: float, cfl: float = 0.5,
           order: int = 4, diag_stride: int | None = None,
           snapshot_stride: int | None = None, blowup_factor: float = 1e6,
           allow_large_lambda: bool = False, allow_noninvariant: bool = False,
           null_t_order: int = 2) -> RunResult:
    """Fixed-step evolution to time T with streamed diagnostics.

    Refuses couplings beyond the energy-positivity bound on lambda and, for
    R != 0, target data that is not invariant under the adjoint action
    generated by R (both gates can be overridden explicitly).  Suspected
    blow-up (sup norm beyond blowup_factor x initial) ends the run with
    status "blowup_suspected"; non-finite values end it with status "error"
    and the last good time.
    """
    if cfl > 0.9:
        raise ConfigurationError(f"cfl must be <= 0.9, got {cfl}")
    lam_bound = diagnostics.lambda_max(geom, coupling.v_t)
    if abs(coupling.lam) > lam_bound and not allow_large_lambda:
        raise ConfigurationError(
            f"|lambda| = {abs(coupling.lam):.6g} exceeds the energy-positivity "
            f"bound {lam_bound:.6g}; pass allow_large_lambda to override")
    if coupling.equivariant and not allow_noninvariant:
        res_g = check_g_invariance(geom.g, alg, coupling.R)
        res_p = check_p_invariance(geom.p, alg, coupling.R)
        scale = max(1.0, float(np.abs(geom.g).max()), float(np.abs(geom.p).max()))
        if max(res_g, res_p) > INVARIANCE_GATE_TOL * scale:
            raise ConfigurationError(
                f"target (g, p) is not invariant under the adjoint action of R "
                f"(residuals g: {res_g:.3e}, p: {res_p:.3e}); the equivariant "
                f"reduction is inconsistent for this target")

    op = FrameOperator(alg, geom, coupling, grid, order)
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
    samples: list[FrameState] = []
    records: list[dict] = []
    snapshots: list[FrameState] = []
    snapshot_times: list[float] = []
    status, message = "ok", ""

    def sample(s: FrameState):
        cons = op.constraint_residual(s)
        records.append(diagnostics.frame_record(s.t, s.E, s.H, s.B, geom, coupling, grid, cons))
        samples.append(s.copy())

    def snapshot(s: FrameState):
        snapshots.append(s.copy())
        snapshot_times.append(s.t)

    sample(state)
    snapshot(state)
    for k in range(1, nsteps + 1):
        try:
            state = step(state, geom, alg, coupling, grid, dt, order, op=op)
        except NumericalError as exc:
            status, message = "error", f"{exc}; last good time t = {state.t:.6g}"
            break
        if not np.isfinite(state.E).all() or not np.isfinite(state.H).all() \
                or not np.isfinite(state.B).all():
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

    # null conservation residuals need three consecutive samples; attach the
    # centered value to each interior record, one-sided at the ends.
    _attach_null_residuals(records, samples, geom, coupling, grid, order, null_t_order)
    return RunResult(status=status, message=message, grid=grid,
                     snapshot_times=snapshot_times, snapshots=snapshots,
                     diagnostics=records, final=state)


def _attach_null_residuals(records, samples, geom, coupling, grid, order, t_order):
    m = len(samples)
    for j, rec in enumerate(records):
        if m < 3:
            rec["null_residual_ll"] = 0.0
            rec["null_residual_nn"] = 0.0
            rec["null_conservation_residual"] = 0.0
            continue
        if j == 0:
            window, at = samples[0:3], 0
        elif j == m - 1:
            window, at = samples[m - 3: m], 2
        else:
            window, at = samples[j - 1: j + 2], 1
        triples = [(s.t, s.E, s.H, s.B) for s in window]
        r_ll, r_nn = diagnostics.null_conservation_residual(
            triples, geom, coupling, grid, order=order, t_order=t_order,
            eval_index=at)
        rec["null_residual_ll"] = float(np.abs(r_ll).max())
        rec["null_residual_nn"] = float(np.abs(r_nn).max())
        rec["null_conservation_residual"] = max(rec["null_residual_ll"], rec["null_residual_nn"])
