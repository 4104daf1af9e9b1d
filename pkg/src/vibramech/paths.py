"""Path abstractions on the unit interval.

Every path maps s (scalar or 1-D array) to R^m values, returning shape (m,)
for scalar input and (S, m) for array input, and exposes an exact
``derivative``.  ``breakpoints`` lists interior points where the path (or its
derivative) is allowed to jump; integrators restart there so discontinuities
never sit inside a step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "Path",
    "PiecewiseAffinePath",
    "PiecewiseConstantPath",
    "AnalyticPath",
    "SplinePath",
    "MollifiedPath",
    "ZeroPath",
    "PathControl",
]


def _shape_out(values: np.ndarray, scalar: bool) -> np.ndarray:
    return values[0] if scalar else values


class Path:
    """Base class; subclasses implement _values/_derivatives on 1-D arrays."""

    m: int
    breakpoints: tuple[float, ...] = ()

    def __call__(self, s):
        arr = np.atleast_1d(np.asarray(s, dtype=float))
        return _shape_out(self._values(arr), np.ndim(s) == 0)

    def derivative(self, s):
        arr = np.atleast_1d(np.asarray(s, dtype=float))
        return _shape_out(self._derivatives(arr), np.ndim(s) == 0)

    def _values(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _derivatives(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class PiecewiseAffinePath(Path):
    """Linear interpolation through (grid, values); constant outside [0, 1
    grid range].  Derivative is piecewise constant (left slope at knots)."""

    def __init__(self, grid: Sequence[float], values: np.ndarray):
        grid = np.asarray(grid, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] != grid.size:
            values = values.T
        if values.shape[0] != grid.size:
            raise ValueError("values must align with the grid")
        if not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        self.grid = grid
        self.values = values
        self.m = values.shape[1]
        self.slopes = np.diff(values, axis=0) / np.diff(grid)[:, None]
        self.breakpoints = tuple(float(x) for x in grid[1:-1])

    def _values(self, s):
        out = np.empty((s.size, self.m))
        for j in range(self.m):
            out[:, j] = np.interp(s, self.grid, self.values[:, j])
        return out

    def _derivatives(self, s):
        idx = np.clip(np.searchsorted(self.grid, s, side="right") - 1,
                      0, len(self.grid) - 2)
        out = self.slopes[idx]
        out[s < self.grid[0]] = 0.0
        out[s > self.grid[-1]] = 0.0
        return out


class PiecewiseConstantPath(Path):
    """Constant on each cell (breaks[i], breaks[i+1]]; value at breaks[0]
    taken from the first cell.  Derivative is zero."""

    def __init__(self, breaks: Sequence[float], values: np.ndarray):
        breaks = np.asarray(breaks, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] != breaks.size - 1:
            values = values.T
        if values.shape[0] != breaks.size - 1:
            raise ValueError("need one value per cell")
        self.breaks = breaks
        self.cell_values = values
        self.m = values.shape[1]
        self.breakpoints = tuple(float(x) for x in breaks[1:-1])

    def _values(self, s):
        idx = np.clip(np.searchsorted(self.breaks, s, side="left") - 1,
                      0, self.cell_values.shape[0] - 1)
        return self.cell_values[idx]

    def _derivatives(self, s):
        return np.zeros((s.size, self.m))


class AnalyticPath(Path):
    """Closed-form path: vectorized value and derivative callables."""

    def __init__(self, fn: Callable, dfn: Callable, m: int):
        self.fn = fn
        self.dfn = dfn
        self.m = m

    def _eval(self, f, s):
        out = np.asarray(f(s), dtype=float)
        if out.ndim == 1 and self.m == 1:
            out = out[:, None]
        elif out.ndim == 1:  # constant vector broadcast over samples
            out = np.broadcast_to(out, (s.size, self.m)).copy()
        return out

    def _values(self, s):
        return self._eval(self.fn, s)

    def _derivatives(self, s):
        return self._eval(self.dfn, s)


class ZeroPath(Path):
    def __init__(self, m: int):
        self.m = m

    def _values(self, s):
        return np.zeros((s.size, self.m))

    def _derivatives(self, s):
        return np.zeros((s.size, self.m))


class SplinePath(Path):
    """Cubic-spline path through dense samples (hot-path form of a smooth
    path: O(log S) evaluation, analytic derivative)."""

    def __init__(self, grid: Sequence[float], values: np.ndarray):
        grid = np.asarray(grid, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] != grid.size:
            values = values.T
        self.m = values.shape[1]
        self.grid = grid
        self._spline = CubicSpline(grid, values, axis=0)
        self._dspline = self._spline.derivative()

    def _values(self, s):
        return np.asarray(self._spline(np.clip(s, self.grid[0], self.grid[-1])))

    def _derivatives(self, s):
        return np.asarray(self._dspline(np.clip(s, self.grid[0], self.grid[-1])))


# 5-point Gauss-Legendre rule: exact for the degree <= 9 piecewise-polynomial
# integrands produced by the bump kernel times affine/constant path pieces.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


class MollifiedPath(Path):
    """Convolution with the polynomial bump kernel c (1 - (x/rho)^2)^3 on
    [-rho, rho], unit mass; the base path is extended constantly outside
    [0, 1].

    Values are exact piecewise-polynomial integrals: the kernel window is
    split at the base path's breakpoints (shifted into the window) and at the
    window edges, and each smooth piece is integrated with a 5-point
    Gauss-Legendre rule.  The derivative convolves with the kernel
    derivative, so outputs are genuinely smooth even for piecewise bases.
    """

    def __init__(self, base: Path, rho: float):
        if rho <= 0:
            raise ValueError("mollification radius must be positive")
        self.base = base
        self.rho = float(rho)
        self.m = base.m
        self._norm = 35.0 / (32.0 * self.rho)
        # knots of the base path (including the constant-extension seams)
        self._knots = np.array(sorted({0.0, 1.0, *base.breakpoints}))

    def _kernel(self, x):
        z = x / self.rho
        return self._norm * (1.0 - z * z) ** 3

    def _kernel_prime(self, x):
        z = x / self.rho
        return self._norm * (-6.0 * z / self.rho) * (1.0 - z * z) ** 2

    def _base_clip(self, x):
        return self.base(np.clip(x, 0.0, 1.0))

    def _convolve(self, s: np.ndarray, kernel) -> np.ndarray:
        out = np.empty((s.size, self.m))
        rho = self.rho
        for i, si in enumerate(s):
            # integrate over sigma in [-rho, rho] of base(s - sigma) k(sigma)
            cuts = si - self._knots  # sigma values where base(s - sigma) kinks
            pts = np.concatenate(([-rho, rho], cuts[(cuts > -rho) & (cuts < rho)]))
            pts = np.unique(pts)
            acc = np.zeros(self.m)
            for a, b in zip(pts[:-1], pts[1:]):
                half = 0.5 * (b - a)
                mid = 0.5 * (a + b)
                sig = mid + half * _GL_X
                vals = self._base_clip(si - sig) * kernel(sig)[:, None]
                acc += half * (_GL_W @ vals)
            out[i] = acc
        return out

    def _values(self, s):
        return self._convolve(s, self._kernel)

    def _derivatives(self, s):
        return self._convolve(s, self._kernel_prime)

    def resampled(self, points: int = 2001) -> SplinePath:
        grid = np.linspace(0.0, 1.0, points)
        return SplinePath(grid, self._values(grid))


@dataclass
class PathControl:
    """Reference control u*(s) and vibration amplitude w*(s) on [0, 1].

    ``w`` may be None for vibration-free tracking.  When present it must
    vanish identically on the leading interval [0, eps0] with eps0 > 0;
    construction enforces this on a fine grid.  ``q`` optionally carries the
    reference free coordinates for tracking reports.
    """

    u: Path
    w: Path | None = None
    eps0: float = 0.05
    q: Path | None = None

    def __post_init__(self):
        if self.w is not None:
            if self.eps0 <= 0:
                raise ValueError("eps0 must be positive when w* is present")
            probe = np.linspace(0.0, self.eps0, 64)
            if np.max(np.abs(self.w(probe))) > 1e-12:
                raise ValueError(
                    f"w* must vanish on [0, eps0={self.eps0}]: found nonzero values"
                )

    @property
    def m(self) -> int:
        return self.u.m

    def has_vibration(self) -> bool:
        if self.w is None:
            return False
        probe = np.linspace(0.0, 1.0, 257)
        return bool(np.max(np.abs(self.w(probe))) > 0.0)

    def sample(self, grid: np.ndarray) -> dict:
        """Serializable dict of samples (s-grid, u*, w*, eps0)."""
        grid = np.asarray(grid, dtype=float)
        w = self.w(grid) if self.w is not None else np.zeros((grid.size, self.m))
        out = {"s": grid, "u": self.u(grid), "w": w, "eps0": self.eps0}
        if self.q is not None:
            out["q"] = self.q(grid)
        return out
