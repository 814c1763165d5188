import math

import numpy as np
import pytest

from gffpin import fields, kernels, lattice, rng
from gffpin.errors import DomainError, GeometryMismatchError


def test_single_site_law():
    g = lattice.build_box(2)
    r = rng.stream(1, "single")
    vals = np.array([fields.sample_dirichlet_field(g, 0.0, r).values[1, 1] for _ in range(20000)])
    assert abs(vals.mean()) < 4 * 0.5 / math.sqrt(len(vals))
    assert abs(vals.var() - 0.25) < 5 * 0.25 * math.sqrt(2 / len(vals))


def test_zero_mean_probes():
    g = lattice.build_box(16)
    r = rng.stream(2, "mean")
    batch = fields.sample_dirichlet_interior(g, 0.0, 30000, r)
    diag = kernels.green_dirichlet_diag(g, 0.0)[1:-1, 1:-1]
    probes = [(7, 7), (0, 0), (3, 11), (14, 2), (7, 0), (11, 3), (5, 5), (9, 9), (1, 7), (13, 13)]
    for p in probes:
        se = math.sqrt(diag[p] / batch.shape[0])
        assert abs(batch[:, p[0], p[1]].mean()) < 4 * se


def test_variance_matches_green():
    g = lattice.build_box(16)
    r = rng.stream(3, "var")
    n = 50000
    batch = fields.sample_dirichlet_interior(g, 0.0, n, r)
    center = batch[:, 7, 7]
    target = kernels.green_dirichlet_diag(g, 0.0)[8, 8]
    se = target * math.sqrt(2.0 / n)
    assert abs(center.var() - target) < 3 * se


def test_boundary_is_exact():
    g = lattice.build_box(8)
    s = fields.sample_dirichlet_field(g, 0.1, rng.stream(4, "b"))
    assert np.all(s.values[g.boundary_mask] == 0.0)
    bc = fields.constant_bc(2.5)
    ext = fields.harmonic_extension(g, 0.1, bc)
    shifted = fields.shift_by_extension(s, ext)
    assert np.abs(shifted.values[g.boundary_mask] - 2.5).max() < 1e-12


def test_harmonic_extension_constant():
    g = lattice.build_box(8)
    ext = fields.harmonic_extension(g, 0.0, fields.constant_bc(3.0))
    assert np.abs(ext.values - 3.0).max() < 1e-10
    # massive with one interior site: H(center) = 4c/(4+m^2)
    g2 = lattice.build_box(2)
    m = 0.7
    ext2 = fields.harmonic_extension(g2, m, fields.constant_bc(1.0))
    assert abs(ext2.values[1, 1] - 4.0 / (4.0 + m * m)) < 1e-12


def test_harmonic_extension_max_principle():
    g = lattice.build_box(12)
    r = rng.stream(5, "mp")
    bc = fields.explicit_bc(r.standard_normal(48))
    for m in (0.0, 0.5):
        ext = fields.harmonic_extension(g, m, bc)
        assert np.abs(ext.values).max() <= bc.max_abs() + 1e-12
        assert ext.residual < 1e-10


def test_harmonic_extension_mc_agreement():
    g = lattice.build_box(16)
    r = rng.stream(6, "mc")
    bc = fields.explicit_bc(r.standard_normal(64))
    ext = fields.harmonic_extension(g, 0.0, bc)
    mc = fields.harmonic_extension_mc(g, 0.0, bc, [(8, 8), (4, 12)], 8000,
                                      rng.stream(6, "mc-walk"))
    for i, s in enumerate([(8, 8), (4, 12)]):
        assert abs(mc["mean"][i] - ext.values[s]) < 4 * mc["se"][i]


def test_shift_identity_and_mismatch():
    g = lattice.build_box(8)
    s = fields.sample_dirichlet_field(g, 0.0, rng.stream(7, "s"))
    ext0 = fields.harmonic_extension(g, 0.0, fields.zero_bc())
    assert np.array_equal(fields.shift_by_extension(s, ext0).values, s.values)
    other = fields.harmonic_extension(lattice.build_box(10), 0.0, fields.zero_bc())
    with pytest.raises(GeometryMismatchError):
        fields.shift_by_extension(s, other)
    # contacts of the shifted field are the band indicators of phi + H
    bc = fields.constant_bc(1.2)
    ext = fields.harmonic_extension(g, 0.0, bc)
    shifted = fields.shift_by_extension(s, ext)
    u = 0.5
    direct = np.abs(s.values + ext.values - u) <= 1.0
    assert np.array_equal(np.abs(shifted.values - u) <= 1.0, direct)


def test_boundary_sampling_covariance():
    g = lattice.build_box(16)
    m = 0.4
    r = rng.stream(8, "bc")
    cov = fields.boundary_covariance(g, m)
    n = 6000
    draws = np.array([fields.sample_boundary_infinite_massive(g, m, r, cov=cov).values
                      for _ in range(n)])
    g00 = kernels.green_massive_infinite((0, 0), m)
    ge1 = kernels.green_massive_infinite((1, 0), m)
    var0 = draws[:, 0].var()
    assert abs(var0 - g00) < 5 * g00 * math.sqrt(2.0 / n)
    # adjacent boundary sites sit next to each other in row-major order on an edge
    idx = fields.boundary_indices(g)
    x1, x2 = g.site(idx)
    pair = None
    for i in range(len(idx)):
        for j in range(i + 1, len(idx)):
            if abs(x1[i] - x1[j]) + abs(x2[i] - x2[j]) == 1:
                pair = (i, j)
                break
        if pair:
            break
    c = np.cov(draws[:, pair[0]], draws[:, pair[1]])[0, 1]
    assert abs(c - ge1) < 5 * g00 * math.sqrt(2.0 / n)


def test_infinite_volume_pipeline():
    # Var(phi + H) at the centre equals the translation-invariant G^m(0,0)
    g = lattice.build_box(16)
    m = 0.4
    r = rng.stream(9, "pipe")
    cov = fields.boundary_covariance(g, m)
    n = 4000
    vals = np.empty(n)
    for i in range(n):
        s = fields.sample_infinite_volume_field(g, m, r, cov=cov)
        vals[i] = s.values[8, 8]
    target = kernels.green_massive_infinite((0, 0), m)
    assert abs(vals.var() - target) < 5 * target * math.sqrt(2.0 / n)
    assert abs(vals.mean()) < 4 * math.sqrt(target / n)


def test_cov_h_identity():
    # Var(H(x)) + G^{m,*}(x,x) = G^m(0,0) under sampled boundary data
    g = lattice.build_box(16)
    m = 0.3
    r = rng.stream(10, "covh")
    cov = fields.boundary_covariance(g, m)
    n = 4000
    hval = np.empty(n)
    for i in range(n):
        bc = fields.sample_boundary_infinite_massive(g, m, r, cov=cov)
        hval[i] = fields.harmonic_extension(g, m, bc).values[8, 8]
    total = hval.var() + kernels.green_dirichlet_diag(g, m)[8, 8]
    target = kernels.green_massive_infinite((0, 0), m)
    assert abs(total - target) < 5 * target * math.sqrt(2.0 / n)


def test_extension_regularity():
    # |H(x) - H(y)| <= C B log(N) |x-y| / N on the inner window, C stable in N
    fits = []
    for N in (32, 64):
        g = lattice.build_box(N)
        r = rng.stream(11, "reg", N)
        window = lattice.sub_box_mask(g, 2.0)
        x1, x2 = g.coords
        worst = 0.0
        for _ in range(5):
            bc = fields.explicit_bc(r.standard_normal(4 * N))
            ext = fields.harmonic_extension(g, 0.0, bc)
            b = bc.max_abs()
            hw = ext.values[window]
            xs1, xs2 = x1[window], x2[window]
            span = int(math.log(N) ** 2)
            for shift in (1, span):
                sel = (xs1 + shift <= xs1.max())
                a = ext.values[np.clip(xs1 + shift, None, x1.max()), xs2]
                d = np.abs(a[sel] - hw[sel]).max()
                worst = max(worst, d * N / (b * math.log(N) * shift))
        fits.append(worst)
    assert max(fits) < 50.0
    assert max(fits) / min(fits) < 5.0


def test_spatial_markov_resampling():
    # resampling inside a contour reproduces the sub-box variance on top of
    # the harmonic extension of the contour values
    g = lattice.build_box(16)
    sub = lattice.build_box(8)  # sub-box [4,12]^2
    r = rng.stream(12, "markov")
    n = 4000
    vals = np.empty(n)
    for i in range(n):
        outer = fields.sample_dirichlet_field(g, 0.0, r)
        patch = outer.values[4:13, 4:13]
        bc_vals = np.concatenate([patch[sub.boundary_mask]])
        ext = fields.harmonic_extension(sub, 0.0, fields.explicit_bc(patch[sub.boundary_mask]))
        inner = fields.sample_dirichlet_field(sub, 0.0, r)
        vals[i] = ext.values[4, 4] + inner.values[4, 4]
    target = kernels.green_dirichlet_diag(g, 0.0)[8, 8]
    assert abs(vals.var() - target) < 5 * target * math.sqrt(2.0 / n)


def test_scale_stack_consistency():
    g = lattice.build_box(16)
    m = 1e-8
    r = rng.stream(13, "stack")
    grid = kernels.scale_time_grid(m)
    s = fields.sample_scale_stack(g, m, r, grid=grid)
    assert np.abs(s.stack.xi.sum(axis=0) - s.values).max() < 1e-10
    assert s.stack.k == grid.k
    # partial sums telescope
    assert np.abs(s.stack.partial(grid.k) - s.values).max() < 1e-10
    assert np.all(s.stack.partial(0) == 0.0)


def test_scale_stack_variance_profile():
    # Var(phi_i(x)) - (i - j(x))_+ stays bounded at interior probes
    g = lattice.build_box(64)
    m = 1e-8
    grid = kernels.scale_time_grid(m)
    jmap = lattice.scale_index(g, grid.k)
    cum = np.zeros((g.side, g.side))
    for i in range(1, grid.k + 1):
        cum += kernels.covariance_slice_diag(g, grid, i)
        for x in ((32, 32), (8, 8), (2, 2)):
            excess = cum[x] - max(i - jmap.j[x], 0)
            assert abs(excess) < 3.0


def test_scale_stack_sum_variance_mc():
    g = lattice.build_box(16)
    m = 1e-8
    r = rng.stream(14, "stackmc")
    grid = kernels.scale_time_grid(m)
    n = 3000
    vals = np.array([fields.sample_scale_stack(g, m, r, grid=grid).values[8, 8]
                     for i in range(n)])
    target = kernels.green_dirichlet_diag(g, m)[8, 8]
    assert abs(vals.var() - target) < 5 * target * math.sqrt(2.0 / n)


def test_bridge_edge_cases():
    r = rng.stream(15, "bridge")
    p, se = fields.bridge_positivity_probability([1.0], 0.5, 1000, r)
    assert p == 1.0
    with pytest.raises(DomainError):
        fields.bridge_positivity_probability([3.0] * 4, 1.0, 100, r)
    with pytest.raises(DomainError):
        fields.bridge_positivity_probability([0.3] * 10, 1.0, 100, r)  # total < k/2
    with pytest.raises(DomainError):
        fields.bridge_positivity_probability([1.0] * 10, -1.0, 100, r)


def test_bridge_monotone_in_barrier():
    r = rng.stream(16, "bridgemono")
    ps = [fields.bridge_positivity_probability([1.0] * 50, x, 40000, r)[0]
          for x in (1.0, 2.0, 5.0, 10.0)]
    assert all(np.diff(ps) > 0)


def test_bridge_bounds_small():
    r = rng.stream(17, "bridgebound")
    k, x = 100, 2.0
    p, se = fields.bridge_positivity_probability([1.0] * k, x, 100000, r)
    assert p >= 1 - math.exp(-x * x / k) - 4 * se
    assert p <= 0.8 * (x + math.log(k)) ** 2 / k + 4 * se


def test_stack_requires_valid_grid():
    with pytest.raises(Exception):
        fields.sample_scale_stack(lattice.build_box(8), 0.3, rng.stream(18, "x"))


def test_explicit_bc_validates_length():
    g = lattice.build_box(8)
    bad = fields.explicit_bc(np.zeros(5))
    with pytest.raises(DomainError):
        bad.grid(g)


def test_shifted_sample_keeps_stack_identity():
    g = lattice.build_box(8)
    m = 0.01
    grid = kernels.scale_time_grid(m, min_scales=1)
    s = fields.sample_scale_stack(g, m, rng.stream(19, "shift"), grid=grid)
    ext = fields.harmonic_extension(g, m, fields.constant_bc(0.7))
    shifted = fields.shift_by_extension(s, ext)
    # the stack still sums to the field minus the extension
    resid = shifted.stack.xi.sum(axis=0) - (shifted.values - ext.values)
    assert np.abs(resid).max() < 1e-10


def test_disorder_domain_guard():
    from gffpin import disorder

    spec = disorder.DisorderSpec("gaussian", beta_bar=0.5)
    with pytest.raises(DomainError):
        disorder.log_mgf(spec, 1.5)
