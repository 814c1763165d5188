"""The pinning Gibbs measure and its exact heat-bath dynamics.

The interaction rewards sites whose height (after any boundary shift) lies
in the band [u-1, u+1]; the co-membrane variant instead charges sites in the
lower half-plane.  Both are instances of a density with piecewise-constant
per-site log-weights in the height, so the single-site conditional is a
mixture of truncated Gaussians and can be sampled exactly: the chain is
rejection-free and in detailed balance with the target at every sweep.  A
checkerboard schedule turns a sweep into two vectorized half-updates.

Extra bands can be stacked on the same chain (a soft wall at |phi| <= b is
how the height-restriction probability is integrated thermodynamically).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import special

from .disorder import DisorderField, log_mgf
from .errors import ContractError, DomainError, UnsupportedGeometryError
from .fields import BoundaryCondition, FieldSample, harmonic_extension, zero_bc
from .lattice import BoxGeometry

_Z_FAR = 38.0  # standard-normal quantile beyond which mass is below 1e-300


@dataclass(frozen=True)
class PinningParams:
    """Model parameters: disorder strength beta, reward h, mass m, substrate
    height u; model is 'pinning' or 'copolymer' (copolymer uses rho)."""

    beta: float = 0.0
    h: float = 0.0
    m: float = 0.0
    u: float = 0.0
    model: str = "pinning"
    rho: float = 0.0
    bc: BoundaryCondition = dc_field(default_factory=zero_bc)

    def __post_init__(self):
        if self.model not in ("pinning", "copolymer"):
            raise DomainError(f"unknown model {self.model!r}")
        if self.beta < 0 or self.m < 0:
            raise DomainError("beta and m must be >= 0")
        if self.model == "copolymer" and self.rho <= 0:
            raise DomainError("copolymer needs rho > 0")


def site_weights(params: PinningParams, omega: DisorderField) -> np.ndarray:
    """Per-site log-weight s_x of a contact: beta*omega_x - lambda(beta) + h."""
    lam = log_mgf(omega.spec, params.beta)[0]
    return params.beta * omega.values - lam + params.h


def contact_indicators(values: np.ndarray, u: float) -> np.ndarray:
    return np.abs(values - u) <= 1.0


def sign_indicators(values: np.ndarray) -> np.ndarray:
    """Delta_x = 1 iff phi_x < 0 (sign(0) counts as +1)."""
    return values < 0.0


def _interaction_mask(geom: BoxGeometry, interaction: str) -> np.ndarray:
    if interaction == "tilde":
        return geom.tilde_mask
    if interaction == "interior":
        return geom.interior_mask
    raise DomainError(f"unknown interaction range {interaction!r}")


def energy(sample: FieldSample, omega: DisorderField, params: PinningParams,
           interaction: str = "tilde") -> float:
    """Interaction part of the Hamiltonian, on the (possibly shifted) field.

    The Gaussian part lives in the sampler/MCMC; this is the exponent of the
    density against the free measure.
    """
    mask = _interaction_mask(sample.geom, interaction)
    if params.model == "pinning":
        s = site_weights(params, omega)
        delta = contact_indicators(sample.values, params.u)
        return float(np.sum(s[mask & delta]))
    dlt = sign_indicators(sample.values)
    return float(-2.0 * params.rho * np.sum((omega.values + params.h)[mask & dlt]))


# ---------------------------------------------------------------------------
# exact sampling of piecewise-reweighted Gaussian conditionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Band:
    """Height band [lo, hi] carrying per-site log-weight (grid or scalar)."""

    lo: float
    hi: float
    logw: np.ndarray | float


def _interval_prob(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """P(a < Z <= b), stable in both tails."""
    direct = special.ndtr(b) - special.ndtr(a)
    mirror = special.ndtr(-a) - special.ndtr(-b)
    return np.maximum(np.maximum(direct, mirror), 0.0)


def _truncnorm(rng: np.random.Generator, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard normal conditioned to (a, b], elementwise.

    Inversion through whichever tail of the CDF is well conditioned.
    """
    flip = a > -b
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    u = special.ndtr(lo) + (special.ndtr(hi) - special.ndtr(lo)) * rng.random(a.shape)
    z = special.ndtri(np.clip(u, 1e-320, 1.0 - 1e-16))
    z = np.where(flip, -z, z)
    return np.clip(z, np.minimum(a, b), np.maximum(a, b))


def sample_banded_conditional(rng: np.random.Generator, mu: np.ndarray, sigma: float,
                              bands: list[tuple[float, float, np.ndarray]]) -> np.ndarray:
    """Exact draw from N(mu, sigma^2) reweighted by exp(sum of band log-weights).

    bands hold (lo, hi, logw-per-site); band edges are global constants, so
    the real line splits into shared intervals with per-site piecewise
    constant log-weight.
    """
    edges = sorted({e for lo, hi, _ in bands for e in (lo, hi) if math.isfinite(e)})
    n_int = len(edges) + 1
    n = mu.shape[0]
    zc = np.empty((n, n_int + 1))
    zc[:, 0] = -_Z_FAR
    zc[:, -1] = _Z_FAR
    for j, e in enumerate(edges):
        zc[:, j + 1] = (e - mu) / sigma
    zc = np.maximum.accumulate(np.clip(zc, -_Z_FAR, _Z_FAR), axis=1)
    probs = _interval_prob(zc[:, :-1], zc[:, 1:])
    logw = np.zeros((n, n_int))
    lows = [-math.inf] + edges
    highs = edges + [math.inf]
    for lo, hi, w in bands:
        cover = np.array([(lo <= a) and (b <= hi) for a, b in zip(lows, highs)])
        if np.any(cover):
            logw[:, cover] += np.asarray(w)[:, None] if np.ndim(w) else w
    logw -= logw.max(axis=1, keepdims=True)
    w = probs * np.exp(logw)
    tot = w.sum(axis=1, keepdims=True)
    u = rng.random((n, 1)) * np.maximum(tot, 1e-300)
    idx = np.minimum((np.cumsum(w, axis=1) < u).sum(axis=1), n_int - 1)
    rows = np.arange(n)
    return mu + sigma * _truncnorm(rng, zc[rows, idx], zc[rows, idx + 1])


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

@dataclass
class GibbsChain:
    """MCMC state: the current field (boundary pinned), parameters, disorder.

    Interior sites are refreshed exactly from their single-site conditionals,
    Normal(sum of neighbours / (4 + m^2), 1 / (4 + m^2)) reweighted by the
    model's bands, in a checkerboard schedule; the boundary never changes.
    """

    geom: BoxGeometry
    params: PinningParams
    omega: DisorderField
    field: np.ndarray
    rng: np.random.Generator
    extra_bands: tuple[Band, ...] = ()
    coupling: float = 1.0
    sweeps_done: int = 0

    def __post_init__(self):
        self._sigma = 1.0 / math.sqrt(4.0 + self.params.m ** 2)
        if self.params.model == "pinning":
            band = Band(self.params.u - 1.0, self.params.u + 1.0,
                        self.coupling * site_weights(self.params, self.omega))
        else:
            band = Band(-math.inf, 0.0,
                        -2.0 * self.coupling * self.params.rho * (self.omega.values + self.params.h))
        self._bands = (band,) + tuple(self.extra_bands)
        x1, x2 = self.geom.coords
        inter = self.geom.interior_mask
        self._color_masks = [inter & ((x1 + x2) % 2 == c) for c in (0, 1)]
        self._band_logw = [
            [(b.lo, b.hi, np.asarray(b.logw)[mask] if np.ndim(b.logw) else float(b.logw))
             for b in self._bands]
            for mask in self._color_masks
        ]

    def interaction_energy(self, interaction: str = "tilde") -> float:
        sample = FieldSample(self.geom, self.field, self.params.m, self.params.bc)
        return energy(sample, self.omega, self.params, interaction)


def make_chain(geom: BoxGeometry, params: PinningParams, omega: DisorderField,
               rng: np.random.Generator, extra_bands: tuple[Band, ...] = ()) -> GibbsChain:
    """Fresh chain started from the harmonic extension of the boundary data."""
    ext = harmonic_extension(geom, params.m, params.bc)
    return GibbsChain(geom, params, omega, ext.values.copy(), rng, extra_bands=extra_bands)


def heat_bath_sweep(chain: GibbsChain, n_sweeps: int = 1) -> GibbsChain:
    """n_sweeps full checkerboard sweeps, each refreshing every interior site."""
    f = chain.field
    denom = 4.0 + chain.params.m ** 2
    sigma = chain._sigma
    for _ in range(n_sweeps):
        for mask, bands in zip(chain._color_masks, chain._band_logw):
            nb = np.zeros_like(f)
            nb[1:-1, 1:-1] = f[:-2, 1:-1] + f[2:, 1:-1] + f[1:-1, :-2] + f[1:-1, 2:]
            mu = nb[mask] / denom
            f[mask] = sample_banded_conditional(chain.rng, mu, sigma, bands)
        chain.sweeps_done += 1
    return chain


@dataclass
class ChainRecord:
    """Thinned observable stream from one chain run."""

    sweeps: np.ndarray
    contacts_window: np.ndarray
    contact_fraction: np.ndarray
    energy: np.ndarray
    extra: dict
    iact: float
    final_field: np.ndarray

    def mean_se(self, series: np.ndarray) -> tuple[float, float]:
        n = len(series)
        mean = float(series.mean())
        if n < 4:
            return mean, float("inf")
        var = float(series.var(ddof=1))
        return mean, math.sqrt(var * max(self.iact, 1.0) / n)


def integrated_autocorrelation(series: np.ndarray, cap: int | None = None) -> float:
    """Initial-positive-sequence IACT estimate (in units of recorded samples)."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 8 or np.allclose(x, x[0]):
        return 1.0
    x = x - x.mean()
    acov = np.correlate(x, x, mode="full")[n - 1 :] / n
    if acov[0] <= 0:
        return 1.0
    rho = acov / acov[0]
    tau = 1.0
    cap = cap or n // 4
    for t in range(1, cap):
        if rho[t] <= 0:
            break
        tau += 2.0 * rho[t]
    return float(tau)


def run_chain(geom: BoxGeometry, params: PinningParams, omega: DisorderField,
              rng: np.random.Generator, sweeps: int, burn_in: int = 0, thinning: int = 1,
              window_mask: np.ndarray | None = None, chain: GibbsChain | None = None,
              interaction: str = "tilde", observables: dict | None = None) -> ChainRecord:
    """Run (or continue) a chain; record observables every `thinning` sweeps.

    Deterministic given the generator state.  The window mask (default: the
    interaction range) is where the contact total is counted; `observables`
    maps names to callables field -> float for extra per-record statistics.
    """
    if burn_in < 0:
        raise DomainError("burn-in must be >= 0")
    if chain is None:
        chain = make_chain(geom, params, omega, rng)
    mask = _interaction_mask(geom, interaction)
    wmask = mask if window_mask is None else window_mask
    n_tilde = int(mask.sum())
    if burn_in:
        heat_bath_sweep(chain, burn_in)
    n_rec = max(sweeps // thinning, 1)
    recs = {"sweep": [], "L": [], "frac": [], "energy": []}
    extra = {name: [] for name in (observables or {})}
    for _ in range(n_rec):
        heat_bath_sweep(chain, thinning)
        if params.model == "pinning":
            delta = contact_indicators(chain.field, params.u)
        else:
            delta = sign_indicators(chain.field)
        recs["sweep"].append(chain.sweeps_done)
        recs["L"].append(int(np.sum(delta & wmask)))
        recs["frac"].append(float(np.sum(delta & mask)) / n_tilde)
        recs["energy"].append(chain.interaction_energy(interaction))
        for name, fn in (observables or {}).items():
            extra[name].append(fn(chain.field))
    L = np.array(recs["L"], dtype=float)
    return ChainRecord(
        sweeps=np.array(recs["sweep"]),
        contacts_window=L,
        contact_fraction=np.array(recs["frac"]),
        energy=np.array(recs["energy"]),
        extra={k: np.array(v) for k, v in extra.items()},
        iact=integrated_autocorrelation(L),
        final_field=chain.field.copy(),
    )


# ---------------------------------------------------------------------------
# exact small-system partition function
# ---------------------------------------------------------------------------

def _gauss_band_integral(mu: float, var: float, s: float, u: float, n_panels: int = 80) -> float:
    """E[e^{s 1_band}(phi)] for phi ~ N(mu, var), by panelled quadrature."""
    sd = math.sqrt(var)
    nodes, weights = np.polynomial.legendre.leggauss(32)
    lo, hi = mu - 40 * sd, mu + 40 * sd
    cuts = sorted({lo, u - 1.0, u + 1.0, hi})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        a, b = max(a, lo), min(b, hi)
        if b <= a:
            continue
        edges = np.linspace(a, b, n_panels + 1)
        p, q = edges[:-1], edges[1:]
        t = 0.5 * (p + q)[:, None] + 0.5 * (q - p)[:, None] * nodes[None, :]
        w = 0.5 * (q - p)[:, None] * weights[None, :]
        dens = np.exp(-0.5 * ((t - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        bump = np.where(np.abs(t - u) <= 1.0, math.exp(s), 1.0)
        total += float(np.sum(w * dens * bump))
    return total


def exact_partition_small(geom: BoxGeometry, params: PinningParams, omega: DisorderField,
                          interaction: str = "interior") -> float:
    """log Z by direct quadrature; ground truth for one interior site (N = 2).

    Square boxes only realize Gaussian dimension one; dimension two is served
    by log_partition_quadrature on an explicit precision system.  With the
    'tilde' range the deterministic boundary contacts of the frame are added.
    """
    n_int = (geom.N - 1) ** 2
    if n_int > 2:
        raise UnsupportedGeometryError(
            f"exact partition supports <= 2 interior sites (N={geom.N} has {n_int})")
    if params.model != "pinning":
        raise UnsupportedGeometryError("exact small partition implemented for the pinning model")
    bgrid = params.bc.grid(geom)
    mu = float(bgrid[0, 1] + bgrid[2, 1] + bgrid[1, 0] + bgrid[1, 2]) / (4.0 + params.m ** 2)
    var = 1.0 / (4.0 + params.m ** 2)
    s_grid = site_weights(params, omega)
    log_z = math.log(_gauss_band_integral(mu, var, float(s_grid[1, 1]), params.u))
    if interaction == "tilde":
        delta_b = contact_indicators(bgrid, params.u)
        mask = geom.tilde_mask & geom.boundary_mask
        log_z += float(np.sum(s_grid[mask & delta_b]))
    return log_z


def log_partition_quadrature(precision: np.ndarray, mean: np.ndarray, s: np.ndarray,
                             u: float, n_panels: int = 60) -> float:
    """log E[e^{sum_i s_i 1_band(phi_i)}] for a 1- or 2-dim Gaussian.

    Direct tensor quadrature against the N(mean, precision^-1) density.
    """
    prec = np.atleast_2d(np.asarray(precision, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    d = prec.shape[0]
    if d > 2:
        raise UnsupportedGeometryError("quadrature supports dimension <= 2")
    cov = np.linalg.inv(prec)
    if d == 1:
        return math.log(_gauss_band_integral(mean[0], cov[0, 0], s[0], u, n_panels))
    sds = np.sqrt(np.diag(cov))
    nodes, weights = np.polynomial.legendre.leggauss(32)

    def axis_points(mu_i, sd_i):
        lo, hi = mu_i - 12 * sd_i, mu_i + 12 * sd_i
        cuts = sorted({lo, u - 1.0, u + 1.0, hi})
        xs, ws = [], []
        for a, b in zip(cuts[:-1], cuts[1:]):
            a, b = max(a, lo), min(b, hi)
            if b <= a:
                continue
            edges = np.linspace(a, b, n_panels + 1)
            p, q = edges[:-1], edges[1:]
            xs.append((0.5 * (p + q)[:, None] + 0.5 * (q - p)[:, None] * nodes[None, :]).ravel())
            ws.append((0.5 * (q - p)[:, None] * weights[None, :]).ravel())
        return np.concatenate(xs), np.concatenate(ws)

    x0, w0 = axis_points(mean[0], sds[0])
    x1, w1 = axis_points(mean[1], sds[1])
    g0 = x0[:, None] - mean[0]
    g1 = x1[None, :] - mean[1]
    quad_form = prec[0, 0] * g0 ** 2 + 2 * prec[0, 1] * g0 * g1 + prec[1, 1] * g1 ** 2
    dens = np.exp(-0.5 * quad_form) * math.sqrt(np.linalg.det(prec)) / (2 * math.pi)
    bump = np.exp(s[0] * (np.abs(x0[:, None] - u) <= 1.0) + s[1] * (np.abs(x1[None, :] - u) <= 1.0))
    return math.log(float(np.einsum("i,j,ij->", w0, w1, dens * bump)))


# ---------------------------------------------------------------------------
# restricted contacts
# ---------------------------------------------------------------------------

def restricted_contacts(sample: FieldSample, u: float, window_mask: np.ndarray,
                        barrier_offset: float = 10.0) -> tuple[int, int]:
    """(L, L') over the window: plain contacts, and contacts whose scale
    trajectory stays below the line u*i/k + offset at every scale."""
    if sample.stack is None:
        raise ContractError("restricted contacts need a field carrying its scale stack")
    delta = contact_indicators(sample.values, u) & window_mask
    partials = sample.stack.partials()
    k = sample.stack.k
    below = np.ones_like(delta)
    for i in range(1, k + 1):
        below &= partials[i - 1] <= u * i / k + barrier_offset
    return int(delta.sum()), int((delta & below).sum())
