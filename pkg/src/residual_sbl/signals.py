"""Periodic grids, the synthetic test signals/images and their jump vectors.

Grid points are 0-based: ``s_j = -pi + j*ds`` for ``j = 0..n-1``. Formulas
written with 1-based indices map to ``j - 1`` here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

PI = np.pi

# Breakpoints of the three branch intervals U1=[-pi,-pi/2), U2=[-pi/2,pi/2), U3=[pi/2,pi).
_BREAKS = (-PI / 2, PI / 2)

# Radial regions for the 2D patterns: R1=[0,0.3pi), R2=[0.3pi,0.7pi), R3=[0.7pi, ...).
_RADII = (0.3 * PI, 0.7 * PI)

MIXED_SPIKES = (15, 40)
MIXED_SPIKE_AMPLITUDE = 1.0


@dataclass(frozen=True)
class Grid:
    n: int
    points: np.ndarray

    @property
    def ds(self) -> float:
        return 2 * PI / self.n


@dataclass(frozen=True)
class SignalVector:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("signal values must be finite")


@dataclass(frozen=True)
class EdgeVector:
    grid: Grid
    values: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values)


def make_grid(n: int) -> Grid:
    if n < 4 or n % 2:
        raise ValueError(f"grid size must be even and >= 4, got {n}")
    return Grid(n, -PI + 2 * PI * np.arange(n) / n)


def sample(fn: Callable[[np.ndarray], np.ndarray], grid: Grid) -> SignalVector:
    """Evaluate ``fn`` at every grid point."""
    values = np.asarray(fn(grid.points), dtype=float)
    if values.shape == ():
        values = np.full(grid.n, float(values))
    if not np.all(np.isfinite(values)):
        raise ValueError("function returned non-finite values on the grid")
    return SignalVector(grid, values)


# Each piecewise signal is three branches, one per interval U1, U2, U3.
# Branches are smooth on the closed interval so one-sided limits are plain evaluations.
_PIECEWISE: dict[str, tuple[Callable, Callable, Callable]] = {
    "f1": (
        lambda s: 11 * PI / 4 - 5 - s**2 / 5,
        lambda s: 7 / 4 - s / 2 + 6 * np.sin(s - 1 / 4),
        lambda s: 11 * s / 4 - 5,
    ),
    "f2": (
        lambda s: s + PI,
        lambda s: -np.sin(6 * s) / 2,
        lambda s: np.sin(-s + PI),
    ),
    "f3": (
        lambda s: np.sin(-s / 2),
        lambda s: np.cos(3 * s / 2),
        lambda s: np.sin(s / 2),
    ),
    "f4": (lambda s: 1.5 + 0 * s, lambda s: -6 / PI + 0 * s, lambda s: 1.5 + 0 * s),
    "f5": (lambda s: -3.0 + 0 * s, lambda s: -4 / PI + 0 * s, lambda s: -3.0 + 0 * s),
    "f6": (lambda s: 0.5 + 0 * s, lambda s: -2 / PI + 0 * s, lambda s: 0.5 + 0 * s),
}

_MIXED = {"mixed1": "f1", "mixed2": "f2", "mixed3": "f3"}

SIGNAL_IDS = tuple(_PIECEWISE) + tuple(_MIXED)
IMAGE_IDS = ("h1", "h2", "h3")


def _piecewise(branches, s):
    s = np.asarray(s, dtype=float)
    u1 = s < _BREAKS[0]
    u3 = s >= _BREAKS[1]
    return np.where(u1, branches[0](s), np.where(u3, branches[2](s), branches[1](s)))


def example_signal(sid: str, s, n: int = 128):
    """Evaluate test signal ``sid`` at ``s`` in [-pi, pi).

    The mixed signals vanish on [-pi, 0) except for unit spikes at grid
    indices 15 and 40 of the size-``n`` grid, and follow f1/f2/f3 on [0, pi).
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < -PI) or np.any(s_arr >= PI):
        raise ValueError("s must lie in [-pi, pi)")
    if sid in _PIECEWISE:
        out = _piecewise(_PIECEWISE[sid], s_arr)
    elif sid in _MIXED:
        out = np.where(s_arr >= 0, _piecewise(_PIECEWISE[_MIXED[sid]], s_arr), 0.0)
        ds = 2 * PI / n
        for j in MIXED_SPIKES:
            out = np.where(np.abs(s_arr - (-PI + j * ds)) < 1e-9 * ds, MIXED_SPIKE_AMPLITUDE, out)
    else:
        raise ValueError(f"unknown signal id {sid!r}")
    return float(out) if out.ndim == 0 else out


def sample_signal(sid: str, grid: Grid) -> SignalVector:
    return sample(lambda s: example_signal(sid, s, n=grid.n), grid)


def _image_values(iid: str, s_row, s_col):
    rho = np.hypot(s_row, s_col)
    r1 = rho < _RADII[0]
    r3 = rho >= _RADII[1]
    if iid == "h1":
        b = (
            3 + (np.cos(s_row) + 1) ** 2 + (np.cos(s_col) + 1) ** 2,
            4 + np.sin(4 * s_row) + np.sin(4 * s_col),
            np.sin(s_row),
        )
    elif iid == "h2":
        b = (np.sin(6 * s_row), -0.3 * np.sin(6 * s_col), np.sin(-s_row + PI))
    elif iid == "h3":
        b = (np.cos(2 * rho), np.cos(4 * rho), -0.5 * np.cos(s_row))
    else:
        raise ValueError(f"unknown image id {iid!r}")
    return np.where(r1, b[0], np.where(r3, b[2], b[1]))


def example_image(iid: str, j: int, jp: int, n: int) -> float:
    """Pixel (j, j') of pattern ``iid`` with 1-based indices on an n x n grid.

    Pixel j sits at ``s = -pi + (j-1)*ds``; the radius is measured from the
    domain centre (0, 0). Radii beyond pi (the corners) use the outer branch.
    """
    if not (1 <= j <= n and 1 <= jp <= n):
        raise ValueError(f"pixel ({j}, {jp}) outside 1..{n}")
    ds = 2 * PI / n
    return float(_image_values(iid, -PI + (j - 1) * ds, -PI + (jp - 1) * ds))


def sample_image(iid: str, n: int) -> np.ndarray:
    """Full n x n image; row index follows the first coordinate."""
    s = make_grid(n).points
    rows, cols = np.meshgrid(s, s, indexing="ij")
    return _image_values(iid, rows, cols)


def true_edge_vector(sid: str, grid: Grid) -> EdgeVector:
    """Jump heights of a piecewise test signal, one entry per grid cell.

    A jump at xi is assigned to cell j when ``s_j < xi <= s_{j+1}``, i.e. to the
    pair of samples ``(f_j, f_{j+1})`` that straddles it. The periodic wrap at
    +-pi lands in the last cell.
    """
    if sid not in _PIECEWISE:
        raise ValueError(f"no analytic jump description for {sid!r}")
    b = _PIECEWISE[sid]
    jumps = [
        (_BREAKS[0], b[1](_BREAKS[0]) - b[0](_BREAKS[0])),
        (_BREAKS[1], b[2](_BREAKS[1]) - b[1](_BREAKS[1])),
        (PI, b[0](-PI) - b[2](PI)),
    ]
    g = np.zeros(grid.n)
    for xi, size in jumps:
        # smallest j with s_{j+1} >= xi
        j = int(np.ceil((xi + PI) / grid.ds - 1e-9)) - 1
        g[j % grid.n] += size
    g[np.abs(g) < 1e-14] = 0.0
    return EdgeVector(grid, g)
