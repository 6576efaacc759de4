"""Uniform 1D grids with periodic (circle) or compact-line topology, finite
difference derivative operators of order 2 and 4, quadrature, and midpoint
interpolation.  Derivatives act along the last axis of an array."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError

CIRCLE = "circle"
LINE = "line_compact"


@dataclass(frozen=True)
class Grid:
    kind: str
    N: int
    x0: float
    length: float

    def __post_init__(self):
        if self.kind not in (CIRCLE, LINE):
            raise ConfigurationError(f"grid kind must be {CIRCLE!r} or {LINE!r}, got {self.kind!r}")
        if self.N < 16:
            raise ConfigurationError(f"grid needs N >= 16, got {self.N}")
        if self.length <= 0.0:
            raise ConfigurationError("grid length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.N if self.kind == CIRCLE else self.length / (self.N - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.N)


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite difference weights for the m-th derivative at z on nodes x
    (Fornberg's recursion).  Returns shape (m+1, len(x)); row k holds the
    weights of the k-th derivative."""
    x = np.asarray(x, float)
    n = len(x)
    c = np.zeros((m + 1, n))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


@lru_cache(maxsize=None)
def _edge_weights(deriv: int, width: int, half: int) -> np.ndarray:
    """One-sided unit-spacing weights for the `half` nodes nearest a line
    boundary; row i differentiates at offset i using the first `width` nodes."""
    rows = [
        fornberg_weights(float(i), np.arange(width, dtype=float), deriv)[deriv]
        for i in range(half)
    ]
    return np.array(rows)


_STENCILS = {
    # (deriv, order): (interior offsets, interior weights, one-sided width)
    (1, 2): (np.array([-1, 1]), np.array([-0.5, 0.5]), 3),
    (1, 4): (np.array([-2, -1, 1, 2]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0, 5),
    (2, 2): (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0]), 4),
    (2, 4): (np.array([-2, -1, 0, 1, 2]), np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0, 6),
}


def _apply_stencil(f: np.ndarray, grid: Grid, deriv: int, order: int) -> np.ndarray:
    if (deriv, order) not in _STENCILS:
        raise ConfigurationError(f"unsupported derivative/order combination ({deriv}, {order})")
    f = np.asarray(f)
    if not np.issubdtype(f.dtype, np.inexact):
        f = f.astype(float)
    offsets, weights, width = _STENCILS[(deriv, order)]
    h = grid.dx
    if grid.kind == CIRCLE:
        out = np.zeros_like(f)
        for o, w in zip(offsets, weights):
            out += w * np.roll(f, -o, axis=-1)
        return out / h**deriv
    out = np.zeros_like(f)
    half = max(abs(int(offsets.min())), abs(int(offsets.max())))
    # interior
    for o, w in zip(offsets, weights):
        sl = slice(half + o, f.shape[-1] - half + o if -half + o != 0 else None)
        out[..., half:-half] += w * f[..., sl]
    out[..., half:-half] /= h**deriv
    # one-sided closures at the requested order
    W = _edge_weights(deriv, width, half)
    left = np.einsum("rw,...w->...r", W, f[..., :width]) / h**deriv
    sign = (-1.0) ** deriv
    right = sign * np.einsum("rw,...w->...r", W, f[..., : -width - 1 : -1]) / h**deriv
    out[..., :half] = left
    out[..., -half:] = right[..., ::-1]
    return out


def d1(f: np.ndarray, grid: Grid, order: int = 4) -> np.ndarray:
    """First x-derivative along the last axis."""
    return _apply_stencil(f, grid, 1, order)


def d2(f: np.ndarray, grid: Grid, order: int = 4) -> np.ndarray:
    """Second x-derivative along the last axis."""
    return _apply_stencil(f, grid, 2, order)


def integrate(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Quadrature along the last axis: rectangle rule on the circle (exact for
    the periodic trapezoid), trapezoid on the line."""
    if grid.kind == CIRCLE:
        return np.sum(f, axis=-1) * grid.dx
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return trapezoid(f, dx=grid.dx, axis=-1)


def midpoints(f: np.ndarray, grid: Grid) -> np.ndarray:
    """4th-order interpolation of f to x_i + dx/2 (length N on circle, N-1 on
    line); used by the one-step integrators that need half-node samples."""
    f = np.asarray(f)
    if not np.issubdtype(f.dtype, np.inexact):
        f = f.astype(float)
    if grid.kind == CIRCLE:
        return (
            -np.roll(f, 1, -1) + 9.0 * f + 9.0 * np.roll(f, -1, -1) - np.roll(f, -2, -1)
        ) / 16.0
    mid = (-f[..., :-3] + 9.0 * f[..., 1:-2] + 9.0 * f[..., 2:-1] - f[..., 3:]) / 16.0
    left = (5.0 * f[..., 0] + 15.0 * f[..., 1] - 5.0 * f[..., 2] + f[..., 3]) / 16.0
    right = (5.0 * f[..., -1] + 15.0 * f[..., -2] - 5.0 * f[..., -3] + f[..., -4]) / 16.0
    return np.concatenate(
        [left[..., None], mid, right[..., None]], axis=-1
    )
