"""Exact sampling of the free field and its relatives.

Zero-boundary (Dirichlet) and massive fields are drawn exactly in the sine
eigenbasis; boundary data for the infinite-volume massive field comes from a
dense Cholesky of the translation-invariant Green covariance; arbitrary
boundary conditions are folded in by adding the (massive-)harmonic extension,
which is how the boundary-shift identity P^{m,bc}[phi in .] = P^m[phi + H in .]
is realized.  The multiscale stack cuts the field into independent layers
whose covariances are the time slices of the heat kernel, and the Gaussian
bridge utility prices the cost of staying below a barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, GeometryMismatchError, NumericError
from .lattice import BoxGeometry, ScaleIndex, scale_index


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

def boundary_indices(geom: BoxGeometry) -> np.ndarray:
    """Linear indices of the 4N boundary sites, in row-major order."""
    return np.flatnonzero(geom.boundary_mask.ravel())


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary data on the 4N frame sites (row-major site order)."""

    kind: str  # zero | constant | explicit | sampled-infinite-massive
    values: np.ndarray | None = None
    constant: float = 0.0
    seed: tuple | None = None
    jitter: float = 0.0

    def grid(self, geom: BoxGeometry) -> np.ndarray:
        """Boundary values placed on the (N+1, N+1) grid, zero inside."""
        out = np.zeros((geom.side, geom.side))
        mask = geom.boundary_mask
        if self.kind == "zero":
            return out
        if self.kind == "constant":
            out[mask] = self.constant
            return out
        if self.values is None or self.values.shape != (int(mask.sum()),):
            raise DomainError("explicit boundary condition needs one value per boundary site")
        out[mask] = self.values
        return out

    def max_abs(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return abs(self.constant)
        return float(np.max(np.abs(self.values)))


def zero_bc() -> BoundaryCondition:
    return BoundaryCondition("zero")


def constant_bc(c: float) -> BoundaryCondition:
    return BoundaryCondition("constant", constant=float(c))


def explicit_bc(values: np.ndarray) -> BoundaryCondition:
    return BoundaryCondition("explicit", values=np.asarray(values, dtype=float))


# ---------------------------------------------------------------------------
# field samples
# ---------------------------------------------------------------------------

@dataclass
class ScaleStack:
    """Independent layers xi_1..xi_k with partial sums phi_i = xi_1 + ... + xi_i."""

    grid: kernels.ScaleTimeGrid
    jmap: ScaleIndex
    xi: np.ndarray  # (k, N+1, N+1)

    @property
    def k(self) -> int:
        return self.grid.k

    def partial(self, i: int) -> np.ndarray:
        if not 0 <= i <= self.k:
            raise DomainError(f"partial sum index {i} outside 0..{self.k}")
        if i == 0:
            return np.zeros_like(self.xi[0])
        return self.xi[:i].sum(axis=0)

    def partials(self) -> np.ndarray:
        """All phi_i stacked, shape (k, N+1, N+1)."""
        return np.cumsum(self.xi, axis=0)


@dataclass
class FieldSample:
    """One realization of the field with its boundary record.

    values holds the full grid including boundary sites; for zero-boundary
    samples the stack (when present) sums exactly to values.
    """

    geom: BoxGeometry
    values: np.ndarray
    m: float
    bc: BoundaryCondition
    stack: ScaleStack | None = None
    shift: np.ndarray | None = None  # harmonic extension already added, if any

    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1]


def sample_dirichlet_field(geom: BoxGeometry, m: float, rng: np.random.Generator) -> FieldSample:
    """Exact zero-boundary sample: independent N(0, 1/(lam_i+lam_j+m^2)) modes."""
    basis = kernels.spectral_basis(geom.N)
    scale = 1.0 / np.sqrt(basis.lam2d + m * m)
    z = rng.standard_normal(scale.shape)
    values = np.zeros((geom.side, geom.side))
    values[1:-1, 1:-1] = kernels.dst2(z * scale)
    return FieldSample(geom, values, float(m), zero_bc())


def sample_dirichlet_interior(geom: BoxGeometry, m: float, n: int, rng: np.random.Generator,
                              batch: int = 2000) -> np.ndarray:
    """n independent interior samples, shape (n, N-1, N-1); batched transform."""
    basis = kernels.spectral_basis(geom.N)
    scale = 1.0 / np.sqrt(basis.lam2d + m * m)
    out = np.empty((n, geom.N - 1, geom.N - 1))
    done = 0
    while done < n:
        b = min(batch, n - done)
        z = rng.standard_normal((b,) + scale.shape)
        out[done : done + b] = kernels.dst2(z * scale[None])
        done += b
    return out


# ---------------------------------------------------------------------------
# harmonic extension
# ---------------------------------------------------------------------------

@dataclass
class HarmonicExtension:
    """Solution of Delta H = m^2 H inside with H = bc on the frame."""

    geom: BoxGeometry
    m: float
    bc: BoundaryCondition
    values: np.ndarray
    residual: float


def _laplacian(grid: np.ndarray) -> np.ndarray:
    """Delta applied at interior sites (shape (N-1, N-1))."""
    return (grid[:-2, 1:-1] + grid[2:, 1:-1] + grid[1:-1, :-2] + grid[1:-1, 2:]
            - 4.0 * grid[1:-1, 1:-1])


def harmonic_extension(geom: BoxGeometry, m: float, bc: BoundaryCondition,
                       residual_tol: float = 1e-10) -> HarmonicExtension:
    """Sparse solve of (Delta - m^2) H = 0 with pinned boundary rows."""
    if m < 0:
        raise DomainError(f"mass must be >= 0 (got {m})")
    if bc.kind == "zero":
        return HarmonicExtension(geom, float(m), bc, np.zeros((geom.side, geom.side)), 0.0)
    bgrid = bc.grid(geom)
    n = geom.N
    rhs = np.zeros((n - 1, n - 1))
    rhs[0, :] += bgrid[0, 1:-1]
    rhs[-1, :] += bgrid[n, 1:-1]
    rhs[:, 0] += bgrid[1:-1, 0]
    rhs[:, -1] += bgrid[1:-1, n]
    from scipy.sparse.linalg import spsolve

    sol = spsolve(kernels.dirichlet_precision(geom, m), rhs.ravel())
    H = bgrid.copy()
    H[1:-1, 1:-1] = sol.reshape(n - 1, n - 1)
    resid = float(np.max(np.abs(_laplacian(H) - m * m * H[1:-1, 1:-1])))
    if not np.isfinite(resid) or resid > residual_tol:
        raise NumericError(f"harmonic extension residual {resid:.3e} above {residual_tol:.1e}",
                           residual=resid)
    return HarmonicExtension(geom, float(m), bc, H, resid)


def harmonic_extension_mc(geom: BoxGeometry, m: float, bc: BoundaryCondition, sites,
                          n_walks: int, rng: np.random.Generator) -> dict:
    """Random-walk representation E_x[e^{-m^2 tau} bc(X_tau)], as an MC spot check.

    Uses the embedded jump chain: each jump contributes a discount factor
    4/(4+m^2), the expectation of e^{-m^2 E} over the Exp(4) holding time.
    Returns per-site mean and standard error.
    """
    bgrid = bc.grid(geom)
    disc = 4.0 / (4.0 + m * m)
    n = geom.N
    steps = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    means, ses = [], []
    max_steps = 2000 * n * n
    for (sx1, sx2) in sites:
        pos = np.tile([[sx1, sx2]], (n_walks, 1))
        weight = np.ones(n_walks)
        value = np.zeros(n_walks)
        active = np.ones(n_walks, dtype=bool)
        for _ in range(max_steps):
            if not active.any():
                break
            idx = rng.integers(0, 4, size=int(active.sum()))
            pos[active] += steps[idx]
            weight[active] *= disc
            p = pos[active]
            hit = (p[:, 0] == 0) | (p[:, 0] == n) | (p[:, 1] == 0) | (p[:, 1] == n)
            if hit.any():
                act_idx = np.flatnonzero(active)[hit]
                value[act_idx] = weight[act_idx] * bgrid[pos[act_idx, 0], pos[act_idx, 1]]
                active[act_idx] = False
        if active.any():
            raise NumericError("random walks failed to reach the boundary within the step cap")
        means.append(float(value.mean()))
        ses.append(float(value.std(ddof=1) / math.sqrt(n_walks)))
    return {"sites": list(sites), "mean": np.array(means), "se": np.array(ses)}


def shift_by_extension(sample: FieldSample, ext: HarmonicExtension) -> FieldSample:
    """phi + H: turns a zero-boundary sample into one with the extension's boundary."""
    if sample.geom.N != ext.geom.N:
        raise GeometryMismatchError(f"field on N={sample.geom.N} but extension on N={ext.geom.N}")
    if sample.m != ext.m:
        raise GeometryMismatchError(f"field mass {sample.m} but extension mass {ext.m}")
    return FieldSample(sample.geom, sample.values + ext.values, sample.m, ext.bc,
                       stack=sample.stack, shift=ext.values)


# ---------------------------------------------------------------------------
# boundary sampling for the infinite-volume massive field
# ---------------------------------------------------------------------------

def sample_boundary_infinite_massive(geom: BoxGeometry, m: float, rng: np.random.Generator,
                                     cov: np.ndarray | None = None,
                                     seed: tuple | None = None) -> BoundaryCondition:
    """Joint draw of the 4N frame values under the infinite-volume massive law.

    Covariance G^m(x - y) between frame sites, dense Cholesky; a tiny
    diagonal jitter is added (and recorded) if the factorization needs it.
    Combined with a zero-boundary sample plus the harmonic shift, this
    reproduces the infinite-volume field on the whole box.  The generator's
    stream identity can be passed as `seed` for the record.
    """
    if m <= 0:
        raise DomainError("infinite-volume boundary sampling needs m > 0")
    if cov is None:
        cov = boundary_covariance(geom, m)
    jitter = 0.0
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * float(np.trace(cov)) / cov.shape[0]
        chol = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
    values = chol @ rng.standard_normal(cov.shape[0])
    return BoundaryCondition("sampled-infinite-massive", values=values, jitter=jitter,
                             seed=seed)


def boundary_covariance(geom: BoxGeometry, m: float) -> np.ndarray:
    """Covariance matrix of the frame sites under the infinite-volume law."""
    table = kernels.green_offset_table(m, geom.N)
    idx = boundary_indices(geom)
    x1, x2 = geom.site(idx)
    d1 = np.abs(x1[:, None] - x1[None, :])
    d2 = np.abs(x2[:, None] - x2[None, :])
    return table[d1, d2]


def sample_infinite_volume_field(geom: BoxGeometry, m: float, rng: np.random.Generator,
                                 cov: np.ndarray | None = None) -> FieldSample:
    """Marginal of the infinite-volume massive field on the box (exact)."""
    bc = sample_boundary_infinite_massive(geom, m, rng, cov=cov)
    ext = harmonic_extension(geom, m, bc)
    return shift_by_extension(sample_dirichlet_field(geom, m, rng), ext)


# ---------------------------------------------------------------------------
# multiscale stack
# ---------------------------------------------------------------------------

def sample_scale_stack(geom: BoxGeometry, m: float, rng: np.random.Generator,
                       min_scales: int = 3,
                       grid: kernels.ScaleTimeGrid | None = None) -> FieldSample:
    """Zero-boundary sample built as a sum of independent scale layers.

    Layer i has covariance Q*_i (the i-th heat-kernel time slice), sampled
    per sine mode; the sum is distributed exactly as the massive field, so
    the stack is a coupling of the field with its own decomposition.
    """
    if grid is None:
        grid = kernels.scale_time_grid(m, min_scales=min_scales)
    basis = kernels.spectral_basis(geom.N)
    k = grid.k
    xi = np.empty((k, geom.side, geom.side))
    xi[:, :, :] = 0.0
    for i in range(1, k + 1):
        w = kernels.slice_mode_weights(geom, grid, i)
        z = rng.standard_normal(w.shape)
        xi[i - 1, 1:-1, 1:-1] = kernels.dst2(z * np.sqrt(w))
    jmap = scale_index(geom, k)
    stack = ScaleStack(grid, jmap, xi)
    values = xi.sum(axis=0)
    return FieldSample(geom, values, float(m), zero_bc(), stack=stack)


def stack_barrier_margin(stack: ScaleStack, mask: np.ndarray, slope: float) -> float:
    """max over masked sites and scales i >= j(x) of phi_i(x) - slope*(i - j(x)).

    The extremal event A_N(threshold) is {margin <= threshold}; computing the
    margin once makes the event's monotonicity in the threshold exact
    sample-by-sample.
    """
    partials = stack.partials()
    j = stack.jmap.j
    worst = -np.inf
    for i in range(1, stack.k + 1):
        sel = mask & (j <= i)
        if not np.any(sel):
            continue
        margin = partials[i - 1][sel] - slope * (i - j[sel])
        worst = max(worst, float(margin.max()))
    return worst


# ---------------------------------------------------------------------------
# Gaussian bridges
# ---------------------------------------------------------------------------

def bridge_positivity_probability(variances, x: float, n_samples: int,
                                  rng: np.random.Generator, batch: int = 20000) -> tuple[float, float]:
    """MC estimate of P[max_i X_i <= x | X_k = 0] for a Gaussian walk.

    The bridge is realized exactly by B_i = X_i - (V_i / V_k) X_k, which has
    the standard bridge covariance V_i (V_k - V_j) / V_k.  Returns (estimate,
    standard error).
    """
    v = np.asarray(variances, dtype=float)
    k = len(v)
    if k < 1:
        raise DomainError("need at least one step")
    if np.any(v <= 0) or np.any(v > 2.0 + 1e-12):
        raise DomainError("step variances must lie in (0, 2]")
    V = np.cumsum(v)
    if V[-1] < k / 2.0 - 1e-12:
        raise DomainError(f"total variance {V[-1]:.3f} below k/2 = {k / 2:.1f}")
    if x < 0:
        raise DomainError("barrier must be >= 0")
    sd = np.sqrt(v)
    hits = 0
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        incr = rng.standard_normal((b, k)) * sd[None, :]
        walk = np.cumsum(incr, axis=1)
        bridge = walk - (V[None, :] / V[-1]) * walk[:, -1:]
        hits += int(np.sum(bridge.max(axis=1) <= x))
        done += b
    p = hits / n_samples
    se = math.sqrt(max(p * (1.0 - p), 1.0 / n_samples) / n_samples)
    return p, se
