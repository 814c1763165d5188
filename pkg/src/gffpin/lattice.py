"""Geometry of the box {0,...,N}^2.

Site classification (boundary, interior, near-boundary ring), the l^1
distance to the boundary, the inner sub-boxes used to keep observables away
from the boundary, the coarse-graining cell tiling with its four parity
classes, and the scale index j(x) used by the multiscale field
decomposition.

Sites are stored row-major: linear index = x1 * (N+1) + x2, which is also
the flat index of a numpy array of shape (N+1, N+1).  All per-site arrays in
the package use this layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySubBoxError, InvalidGeometryError, TilingError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BoxGeometry:
    """The box Lambda_N = {0,...,N}^2 with precomputed site classification.

    Immutable after construction; safe to share between workers.
    """

    N: int
    side: int = field(init=False)
    nsites: int = field(init=False)

    def __post_init__(self):
        if self.N < 2:
            raise InvalidGeometryError(f"N must be >= 2 (got {self.N}): no interior sites")
        object.__setattr__(self, "side", self.N + 1)
        object.__setattr__(self, "nsites", (self.N + 1) ** 2)
        n, side = self.N, self.side
        x1, x2 = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        boundary = (x1 == 0) | (x1 == n) | (x2 == 0) | (x2 == n)
        interior = ~boundary
        # l1 distance to the boundary frame reduces to the min coordinate gap
        dist = np.minimum.reduce([x1, x2, n - x1, n - x2])
        near = interior & (dist == 1)
        tilde = (x1 >= 1) & (x2 >= 1)
        object.__setattr__(self, "_x1", x1)
        object.__setattr__(self, "_x2", x2)
        object.__setattr__(self, "_boundary", boundary)
        object.__setattr__(self, "_interior", interior)
        object.__setattr__(self, "_near_boundary", near)
        object.__setattr__(self, "_tilde", tilde)
        object.__setattr__(self, "_dist", dist)

    # -- masks, all shaped (N+1, N+1) --
    @property
    def boundary_mask(self) -> np.ndarray:
        return self._boundary

    @property
    def interior_mask(self) -> np.ndarray:
        return self._interior

    @property
    def near_boundary_mask(self) -> np.ndarray:
        """The ring just inside the boundary (every interior site adjacent to it)."""
        return self._near_boundary

    @property
    def tilde_mask(self) -> np.ndarray:
        """Lambda~_N = {1,...,N}^2, the canonical interaction range."""
        return self._tilde

    @property
    def dist_boundary(self) -> np.ndarray:
        """d(x, boundary) in the l1 metric, 0 on the boundary itself."""
        return self._dist

    @property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return self._x1, self._x2

    # -- index maps --
    def index(self, x1, x2) -> np.ndarray:
        return np.asarray(x1) * self.side + np.asarray(x2)

    def site(self, idx) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(idx)
        return idx // self.side, idx % self.side

    def counts(self) -> dict:
        return {
            "sites": self.nsites,
            "boundary": int(self._boundary.sum()),
            "interior": int(self._interior.sum()),
            "tilde": int(self._tilde.sum()),
        }


def build_box(N: int) -> BoxGeometry:
    return BoxGeometry(int(N))


def _inward_interval(N: int, frac: float) -> tuple[int, int]:
    # closed interval [N*frac, N*(1-frac)], rounded inward
    lo = math.ceil(N * frac - 1e-12)
    hi = math.floor(N * (1.0 - frac) + 1e-12)
    return lo, hi


def sub_box_interval(geom: BoxGeometry, exponent: float) -> tuple[int, int]:
    """Coordinate range [lo, hi] of the inner box with margin N*(log N)^-exponent.

    exponent 1/8 gives the primary inner box, exponent 2 the wide one.  At
    laboratory sizes the 1/8 margin exceeds N/2, in which case the box is
    empty and this raises rather than silently returning no sites.
    """
    frac = math.log(geom.N) ** (-exponent)
    lo, hi = _inward_interval(geom.N, frac)
    if lo > hi:
        raise EmptySubBoxError(
            f"inner box with margin N(log N)^-{exponent} is empty at N={geom.N} "
            f"(needs (log N)^-{exponent} < 1/2, i.e. N > {math.exp(2.0 ** (1.0 / exponent)):.3g})"
        )
    return lo, hi


def sub_box_mask(geom: BoxGeometry, exponent: float) -> np.ndarray:
    lo, hi = sub_box_interval(geom, exponent)
    x1, x2 = geom.coords
    return (x1 >= lo) & (x1 <= hi) & (x2 >= lo) & (x2 <= hi)


def inner_window(geom: BoxGeometry, margin: int) -> np.ndarray:
    """Mask of sites at coordinate distance >= margin from the box edge.

    Laboratory stand-in for the asymptotic inner boxes when those are empty.
    """
    if margin < 0 or 2 * margin >= geom.N:
        raise EmptySubBoxError(f"margin {margin} leaves no sites in a box of side {geom.N}")
    x1, x2 = geom.coords
    return (x1 >= margin) & (x1 <= geom.N - margin) & (x2 >= margin) & (x2 <= geom.N - margin)


@dataclass(frozen=True)
class Cell:
    """One coarse-graining cell and its surrounding window.

    The cell is the N1 x N1 block of sites centred at N1*y (shifted +1/2),
    the window is the box of side 2*N1 whose lower corner sits at N1*(y-1).
    Slices index arrays of shape (N+1, N+1).
    """

    y: tuple[int, int]
    cell_slice: tuple[slice, slice]
    window_slice: tuple[slice, slice]


@dataclass(frozen=True)
class CellTiling:
    N: int
    N1: int
    k: int
    cells: tuple[Cell, ...]

    def parity_class(self, i: int) -> list[Cell]:
        """Cells whose index parities match the two dyadic digits of i-1 (i in 1..4)."""
        if i not in (1, 2, 3, 4):
            raise TilingError(f"parity class index must be in 1..4 (got {i})")
        a1, a2 = (i - 1) % 2, (i - 1) // 2
        return [c for c in self.cells if c.y[0] % 2 == a1 and c.y[1] % 2 == a2]

    @property
    def covered_sites(self) -> int:
        return (self.k - 1) ** 2 * self.N1 ** 2

    @property
    def uncovered_sites(self) -> int:
        """Sites of Lambda~_N in no cell; always at most 2*N*N1."""
        return self.N ** 2 - self.covered_sites


def cell_tiling(geom: BoxGeometry, N1: int) -> CellTiling:
    """Tile the box with disjoint N1-cells indexed by y in [1, k-1]^2."""
    N1 = int(N1)
    if N1 < 2 or N1 % 2 != 0:
        raise TilingError(f"cell side must be a positive even integer (got {N1})")
    if geom.N % N1 != 0:
        raise TilingError(f"N={geom.N} is not a multiple of the cell side N1={N1}")
    k = geom.N // N1
    if k < 2:
        raise TilingError(f"need at least 2 cells per side (N={geom.N}, N1={N1})")
    half = N1 // 2
    cells = []
    for y1 in range(1, k):
        for y2 in range(1, k):
            c1 = slice(N1 * y1 - half + 1, N1 * y1 + half + 1)
            c2 = slice(N1 * y2 - half + 1, N1 * y2 + half + 1)
            w1 = slice(N1 * (y1 - 1), N1 * (y1 + 1) + 1)
            w2 = slice(N1 * (y2 - 1), N1 * (y2 + 1) + 1)
            cells.append(Cell((y1, y2), (c1, c2), (w1, w2)))
    return CellTiling(geom.N, N1, k, tuple(cells))


def _ceil_guard(v: np.ndarray) -> np.ndarray:
    # guard against sites sitting a rounding error above an exact scale edge
    return np.ceil(v - 1e-9)


@dataclass(frozen=True)
class ScaleIndex:
    k: int
    j: np.ndarray  # shaped (N+1, N+1), integer in [0, k]


def scale_index(geom: BoxGeometry, k: int) -> ScaleIndex:
    """j(x) = (k - ceil(log d(x,boundary) / 2pi))_+ clamped to [0, k].

    Boundary sites (d = 0) get j = k, matching the d = 1 value.
    """
    if k < 1:
        raise InvalidGeometryError(f"scale count must be >= 1 (got {k})")
    d = np.maximum(geom.dist_boundary, 1)
    j = k - _ceil_guard(np.log(d) / TWO_PI)
    j = np.clip(j, 0, k).astype(np.int64)
    return ScaleIndex(k, j)


def scale_index_value(k: int, d: float) -> int:
    """Scalar j for a site at l1 distance d from the boundary."""
    d = max(float(d), 1.0)
    return int(np.clip(k - _ceil_guard(np.array(math.log(d) / TWO_PI)), 0, k))


def pair_scale_index(k: int, dist: np.ndarray) -> np.ndarray:
    """Decorrelation scale of two sites at l1 distance dist.

    ceil(k - log|x-y| / 2pi) clamped to [0, k]; coincident sites get k.
    """
    d = np.maximum(np.asarray(dist, dtype=float), 1.0)
    j = _ceil_guard(k - np.log(d) / TWO_PI)
    return np.clip(j, 0, k).astype(np.int64)
