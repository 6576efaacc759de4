"""Lie-algebraic target data: structure constants, invariant metrics, torsion
potentials and torsion tensors, plus the constructions that certify when the
torsion is forced to vanish and when it can be made nonzero.

Index layout, fixed once for the whole package: every rank-3 tensor stores its
lower index pair first and the upper index last,

    C[b, c, a]        = C_bc^a      (structure constants, [e_b, e_c] = C_bc^a e_a)
    Q[b, c, a]        = Q^a_bc      (torsion tensor)
    C_raised[b, c, a] = C^a_bc      (C^a_bc = g^ad C_db^e g_ec)

so a bilinear contraction is always einsum('bca,b...,c...->a...', T, X, Y).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConstructionError, GeometryError

# Pure-algebra identities hold to near machine precision; representation
# checks go through matrix products and get one digit of slack.
IDENTITY_TOL = 1e-13
REP_TOL = 1e-12
COMMUTE_TOL = 1e-12

_PAULI = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


def bilinear(T: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Contract a rank-3 tensor in package layout with two (n,...) fields."""
    return np.einsum("bca,b...,c...->a...", T, X, Y)


class SparseBilinear:
    """Same contraction as :func:`bilinear`, precomputed from the nonzero
    entries of T.  The built-in algebras have O(n) nonzero structure
    constants, so this is what the solver hot loop uses."""

    def __init__(self, T: np.ndarray, tol: float = 0.0):
        self.n = T.shape[2]
        idx = np.argwhere(np.abs(T) > tol)
        self.entries = [(int(b), int(c), int(a), float(T[b, c, a])) for b, c, a in idx]
        self._dense = T if len(self.entries) > T.size // 2 else None

    def __call__(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return bilinear(self._dense, X, Y)
        out = np.zeros((self.n,) + X.shape[1:])
        for b, c, a, w in self.entries:
            out[a] += w * X[b] * Y[c]
        return out


@dataclass(frozen=True)
class LieAlgebraSpec:
    """A finite-dimensional real Lie algebra given by structure constants.

    Attributes:
      name: identifier, e.g. "su2".
      dim:  dimension n.
      C:    (n, n, n) array, C[b, c, a] = C_bc^a.
      rep:  optional tuple of n complex generator matrices L_a satisfying
            [L_b, L_c] = C_bc^a L_a; needed for group reconstruction.
    """

    name: str
    dim: int
    C: np.ndarray
    rep: tuple | None = None

    def commutator(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """[u, v]^a = C_bc^a u^b v^c; bilinear, antisymmetric."""
        return bilinear(self.C, np.asarray(u, float), np.asarray(v, float))

    def rep_matrix(self, u: np.ndarray) -> np.ndarray:
        """u^a L_a as a matrix of the representation."""
        if self.rep is None:
            raise ConfigurationError(f"algebra {self.name!r} carries no matrix rep")
        return np.einsum("a,aij->ij", np.asarray(u, float), np.stack(self.rep))


def antisymmetry_residual(C: np.ndarray) -> float:
    return float(np.abs(C + np.swapaxes(C, 0, 1)).max())


def jacobi_residual(C: np.ndarray) -> float:
    """Max component of C_ab^e C_ec^d + C_bc^e C_ea^d + C_ca^e C_eb^d."""
    t = np.einsum("abe,ecd->abcd", C, C)
    jac = t + np.einsum("abcd->bcad", t) + np.einsum("abcd->cabd", t)
    return float(np.abs(jac).max())


def rep_residual(alg: LieAlgebraSpec) -> float:
    """Max entry of [L_b, L_c] - C_bc^a L_a over all generator pairs."""
    if alg.rep is None:
        return 0.0
    L = np.stack(alg.rep)
    comm = np.einsum("bij,cjk->bcik", L, L) - np.einsum("cij,bjk->bcik", L, L)
    target = np.einsum("bca,aij->bcij", alg.C, L)
    return float(np.abs(comm - target).max())


def validate_algebra(alg: LieAlgebraSpec) -> dict:
    """All LieAlgebraSpec invariants as named residuals; raises on violation."""
    res = {
        "antisymmetry": antisymmetry_residual(alg.C),
        "jacobi": jacobi_residual(alg.C),
        "rep_commutator": rep_residual(alg),
    }
    if res["antisymmetry"] != 0.0:
        raise ConfigurationError(f"structure constants not antisymmetric: {res['antisymmetry']:.3e}")
    if res["jacobi"] > IDENTITY_TOL:
        raise ConfigurationError(f"Jacobi identity violated: residual {res['jacobi']:.3e}")
    if res["rep_commutator"] > REP_TOL:
        raise ConfigurationError(f"rep does not match structure constants: {res['rep_commutator']:.3e}")
    return res


def _epsilon3() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0
    return eps


def builtin_algebra(name: str) -> LieAlgebraSpec:
    """Built-in targets: abelian(n), su2, su2xsu2.

    su2 uses the epsilon-symbol basis (C_bc^a = eps_bca, so [e_1,e_2] = e_3)
    with generators -i sigma_a / 2; su2xsu2 is the block direct sum with a
    block-diagonal 4x4 rep; abelian(n) has C = 0 and a diagonal-phase rep.
    """
    m = re.fullmatch(r"abelian\((\d+)\)", name.strip())
    if m:
        n = int(m.group(1))
        if n < 1:
            raise ConfigurationError(f"abelian dimension must be >= 1, got {n}")
        rep = tuple(1j * np.diag(np.eye(n)[a]).astype(complex) for a in range(n))
        alg = LieAlgebraSpec(name=name.strip(), dim=n, C=np.zeros((n, n, n)), rep=rep)
    elif name == "su2":
        rep = tuple(-0.5j * s for s in _PAULI)
        alg = LieAlgebraSpec(name="su2", dim=3, C=_epsilon3(), rep=rep)
    elif name == "su2xsu2":
        eps = _epsilon3()
        C = np.zeros((6, 6, 6))
        C[:3, :3, :3] = eps
        C[3:, 3:, 3:] = eps
        rep = []
        for a in range(3):
            M = np.zeros((4, 4), dtype=complex)
            M[:2, :2] = -0.5j * _PAULI[a]
            rep.append(M)
        for a in range(3):
            M = np.zeros((4, 4), dtype=complex)
            M[2:, 2:] = -0.5j * _PAULI[a]
            rep.append(M)
        alg = LieAlgebraSpec(name="su2xsu2", dim=6, C=C, rep=tuple(rep))
    else:
        raise ConfigurationError(f"unknown algebra {name!r}; built-ins: abelian(n), su2, su2xsu2")
    validate_algebra(alg)
    return alg


def cartan_killing(alg: LieAlgebraSpec) -> np.ndarray:
    """g_ab = -C_ae^c C_bc^e.  Zero for abelian algebras (supply an explicit
    metric instead); 2*I for su2 in the epsilon basis."""
    return -np.einsum("aec,bce->ab", alg.C, alg.C)


def torsion_tensor(g: np.ndarray, p: np.ndarray, alg: LieAlgebraSpec) -> np.ndarray:
    """Torsion from a constant antisymmetric potential p on a left-invariant
    target:

        Q^a_bc = -(3/2) g^ad * (1/3) (p_ed C_bc^e + p_eb C_cd^e + p_ec C_db^e)

    Returned in package layout Q[b, c, a]; antisymmetric in (b, c).
    """
    g = np.asarray(g, float)
    p = np.asarray(p, float)
    if np.abs(p + p.T).max() > 0.0:
        raise GeometryError("torsion potential p must be exactly antisymmetric")
    try:
        g_inv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise GeometryError("metric is singular") from exc
    C = alg.C
    t = (
        np.einsum("ed,bce->dbc", p, C)
        + np.einsum("eb,cde->dbc", p, C)
        + np.einsum("ec,dbe->dbc", p, C)
    )
    return -0.5 * np.einsum("ad,dbc->bca", g_inv, t)


def raised_structure(g: np.ndarray, alg: LieAlgebraSpec) -> np.ndarray:
    """C^a_bc = g^ad C_db^e g_ec in package layout [b, c, a]."""
    g_inv = np.linalg.inv(np.asarray(g, float))
    return np.einsum("ad,dbe,ec->bca", g_inv, alg.C, g)


def natural_p(alg: LieAlgebraSpec, g: np.ndarray, R: np.ndarray) -> np.ndarray:
    """p_ab = C_ab^d g_de R^e; translation invariant, with identically zero
    torsion by the Jacobi identity."""
    return np.einsum("abd,de,e->ab", alg.C, np.asarray(g, float), np.asarray(R, float))


def commuting_pair_p(
    alg: LieAlgebraSpec, g: np.ndarray, pvec: np.ndarray, qvec: np.ndarray
) -> np.ndarray:
    """p_ab = p_a q_b - q_a p_b from two linearly independent commuting
    vectors (indices lowered with g).  On compact semi-simple algebras of
    dimension > 3 this is the construction with nonzero torsion."""
    pvec = np.asarray(pvec, float)
    qvec = np.asarray(qvec, float)
    comm = alg.commutator(pvec, qvec)
    scale = max(1.0, float(np.abs(pvec).max() * np.abs(qvec).max()))
    if np.abs(comm).max() > COMMUTE_TOL * scale:
        raise ConstructionError(
            f"vectors do not commute: max |[p,q]| = {np.abs(comm).max():.3e}"
        )
    if np.linalg.matrix_rank(np.stack([pvec, qvec]), tol=1e-10) < 2:
        raise ConstructionError("vectors are linearly dependent")
    g = np.asarray(g, float)
    pl, ql = g @ pvec, g @ qvec
    return np.outer(pl, ql) - np.outer(ql, pl)


def check_g_invariance(g: np.ndarray, alg: LieAlgebraSpec, R: np.ndarray) -> float:
    """Max component of g_ae C_bc^e R^c + g_be C_ac^e R^c (0 iff g is
    invariant under the adjoint action generated by R)."""
    M = np.einsum("ae,bce,c->ab", np.asarray(g, float), alg.C, np.asarray(R, float))
    return float(np.abs(M + M.T).max())


def check_p_invariance(p: np.ndarray, alg: LieAlgebraSpec, R: np.ndarray) -> float:
    """Max component of p_ae C_bc^e R^c - p_be C_ac^e R^c."""
    M = np.einsum("ae,bce,c->ab", np.asarray(p, float), alg.C, np.asarray(R, float))
    return float(np.abs(M - M.T).max())


def torsion_nonzero_witness(
    g: np.ndarray,
    p: np.ndarray,
    alg: LieAlgebraSpec,
    pvec: np.ndarray,
    qvec: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Witness vector s^a = p^a q_e q^e - q^a p^e q_e and the certificate
    max_bc |s^a g_ad Q^d_bc|; a positive value certifies Q != 0."""
    g = np.asarray(g, float)
    pvec = np.asarray(pvec, float)
    qvec = np.asarray(qvec, float)
    ql = g @ qvec
    s = pvec * (qvec @ ql) - qvec * (pvec @ ql)
    Q = torsion_tensor(g, p, alg)
    cert = np.einsum("a,ad,bcd->bc", s, g, Q)
    return s, float(np.abs(cert).max())


@dataclass(frozen=True)
class TargetGeometry:
    """Constant left-invariant target data: metric, torsion potential and the
    tensors derived from them.  Immutable; safe to share between workers."""

    g: np.ndarray
    g_inv: np.ndarray
    p: np.ndarray
    Q: np.ndarray
    C_raised: np.ndarray

    def norm2(self, X: np.ndarray) -> np.ndarray:
        """X^a X^b g_ab, pointwise over trailing axes."""
        return np.einsum("a...,ab,b...->...", X, self.g, X)

    def inner(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return np.einsum("a...,ab,b...->...", X, self.g, Y)

    def p_pair(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """p_ab X^a Y^b, pointwise."""
        return np.einsum("a...,ab,b...->...", X, self.p, Y)

    @property
    def p_norm(self) -> float:
        """|p| with |p|^2 = |p_ab p_cd g^ac g^bd|."""
        val = np.einsum("ab,cd,ac,bd->", self.p, self.p, self.g_inv, self.g_inv)
        return float(np.sqrt(abs(val)))


def build_geometry(
    alg: LieAlgebraSpec, g: np.ndarray | None = None, p: np.ndarray | None = None
) -> TargetGeometry:
    """Assemble and validate a TargetGeometry.

    Defaults: Cartan-Killing metric where it is definite, identity for
    abelian targets; zero torsion potential.
    """
    n = alg.dim
    if g is None:
        g = cartan_killing(alg)
        if np.abs(g).max() == 0.0:
            g = np.eye(n)
    g = np.asarray(g, float)
    if g.shape != (n, n) or np.abs(g - g.T).max() > 0.0:
        raise GeometryError("metric must be a symmetric n x n matrix")
    eigs = np.linalg.eigvalsh(g)
    if eigs.min() <= 0.0:
        raise GeometryError(f"metric not positive definite (min eigenvalue {eigs.min():.3e})")
    if p is None:
        p = np.zeros((n, n))
    p = np.asarray(p, float)
    if p.shape != (n, n) or np.abs(p + p.T).max() > 0.0:
        raise GeometryError("torsion potential must be an exactly antisymmetric n x n matrix")
    Q = torsion_tensor(g, p, alg)
    if np.abs(Q + np.swapaxes(Q, 0, 1)).max() > IDENTITY_TOL * max(1.0, np.abs(Q).max()):
        raise GeometryError("torsion tensor lost (b,c) antisymmetry")
    return TargetGeometry(
        g=g, g_inv=np.linalg.inv(g), p=p, Q=Q, C_raised=raised_structure(g, alg)
    )


def geometry_report(
    alg: LieAlgebraSpec, geom: TargetGeometry, R: np.ndarray
) -> list[tuple[str, float, float | None]]:
    """(name, value, bound-or-None) rows for the `algebra check` table."""
    rows = [
        ("antisymmetry", antisymmetry_residual(alg.C), 0.0),
        ("jacobi", jacobi_residual(alg.C), IDENTITY_TOL),
        ("rep_commutator", rep_residual(alg), REP_TOL),
        ("metric_min_eigenvalue", float(np.linalg.eigvalsh(geom.g).min()), None),
        ("g_invariance", check_g_invariance(geom.g, alg, R), None),
        ("p_invariance", check_p_invariance(geom.p, alg, R), None),
        ("max_torsion", float(np.abs(geom.Q).max()), None),
    ]
    return rows
