import math

import numpy as np
import pytest
from scipy import stats

from gffpin import disorder, lattice, rng
from gffpin.errors import DomainError


def test_log_mgf_gaussian():
    lam, d1, d2 = disorder.log_mgf(disorder.GAUSSIAN, 0.8)
    assert lam == pytest.approx(0.32)
    assert d1 == pytest.approx(0.8)
    assert d2 == 1.0


def test_log_mgf_bernoulli():
    for b in (0.3, 2.0, -1.5, 40.0):
        lam, d1, d2 = disorder.log_mgf(disorder.BERNOULLI, b)
        assert lam == pytest.approx(math.log(math.cosh(b)) if abs(b) < 30 else abs(b) - math.log(2), rel=1e-12)
        assert d1 == pytest.approx(math.tanh(b))
        assert d2 == pytest.approx(1.0 - math.tanh(b) ** 2)


def test_log_mgf_tabulated_matches_bernoulli():
    tab = disorder.DisorderSpec("tabulated", values=np.array([-1.0, 1.0]),
                                probs=np.array([0.5, 0.5]))
    for b in (0.0, 0.7, -2.0):
        a = disorder.log_mgf(tab, b)
        c = disorder.log_mgf(disorder.BERNOULLI, b)
        assert np.allclose(a, c, atol=1e-12)


def test_tabulated_validation():
    with pytest.raises(DomainError):
        disorder.DisorderSpec("tabulated", values=np.array([0.0, 2.0]),
                              probs=np.array([0.5, 0.5]))  # not centred
    with pytest.raises(DomainError):
        disorder.DisorderSpec("nope")


def test_chi_gaussian():
    # chi(beta) = lambda(2 beta) - 2 lambda(beta) = beta^2 for gaussian charges
    for b in (0.2, 0.5, 1.1):
        assert disorder.chi(disorder.GAUSSIAN, b) == pytest.approx(b * b)


def test_sampling_moments_and_determinism():
    g = lattice.build_box(64)
    r1 = rng.stream(101, "omega")
    om1 = disorder.sample_disorder(g, disorder.GAUSSIAN, r1)
    om2 = disorder.sample_disorder(g, disorder.GAUSSIAN, rng.stream(101, "omega"))
    assert np.array_equal(om1.values, om2.values)  # reseeding reproduces bit-exactly
    vals = om1.values[g.tilde_mask]
    assert abs(vals.mean()) < 4.0 / math.sqrt(vals.size)
    beta = 0.5
    emp = np.exp(beta * vals).mean()
    lam = disorder.log_mgf(disorder.GAUSSIAN, beta)[0]
    se = np.exp(beta * vals).std() / math.sqrt(vals.size)
    assert abs(emp - math.exp(lam)) < 5 * se
    assert np.all(om1.values[~g.tilde_mask] == 0.0)


def test_sampling_independence_smoke():
    # sign agreement between neighbours is ~Binomial(n, 1/2)
    g = lattice.build_box(32)
    om = disorder.sample_disorder(g, disorder.BERNOULLI, rng.stream(103, "ind"))
    v = om.values[1:, 1:]
    agree = (v[:-1, :] == v[1:, :]).ravel()
    p = stats.binomtest(int(agree.sum()), len(agree), 0.5).pvalue
    assert p > 0.01


def test_tilted_resample():
    g = lattice.build_box(32)
    r = rng.stream(104, "tilt")
    om = disorder.sample_disorder(g, disorder.GAUSSIAN, r)
    contacts = np.zeros((33, 33), dtype=bool)
    contacts[1:17, 1:17] = True
    beta = 0.8
    tilted = disorder.tilted_resample(om, contacts, beta, r)
    sel = contacts & g.tilde_mask
    off = ~contacts & g.tilde_mask
    assert np.array_equal(tilted.values[off], om.values[off])  # untouched off contacts
    n = int(sel.sum())
    lam1 = disorder.log_mgf(disorder.GAUSSIAN, beta)[1]
    assert abs(tilted.values[sel].mean() - lam1) < 4.0 / math.sqrt(n)


def test_tilted_null_is_identity_in_law():
    g = lattice.build_box(24)
    r = rng.stream(105, "tiltnull")
    om = disorder.sample_disorder(g, disorder.GAUSSIAN, r)
    none = np.zeros((25, 25), dtype=bool)
    tilted = disorder.tilted_resample(om, none, 0.7, r)
    assert np.array_equal(tilted.values, om.values)
    # two-sample KS between an untilted resample and the original draw
    om2 = disorder.sample_disorder(g, disorder.GAUSSIAN, rng.stream(106, "tiltnull2"))
    p = stats.ks_2samp(om.values[g.tilde_mask], om2.values[g.tilde_mask]).pvalue
    assert p > 0.01


def test_bernoulli_tilted_law():
    g = lattice.build_box(48)
    r = rng.stream(107, "tiltb")
    om = disorder.sample_disorder(g, disorder.BERNOULLI, r)
    contacts = g.tilde_mask.copy()
    beta = 0.6
    tilted = disorder.tilted_resample(om, contacts, beta, r)
    vals = tilted.values[g.tilde_mask]
    lam1 = disorder.log_mgf(disorder.BERNOULLI, beta)[1]
    assert abs(vals.mean() - lam1) < 4.0 / math.sqrt(vals.size)


def test_event_e_trivial_cases():
    g = lattice.build_box(16)
    t = lattice.cell_tiling(g, 4)
    cell = t.cells[0]
    z = disorder.DisorderField(g, disorder.GAUSSIAN, np.zeros((17, 17)))
    assert not disorder.event_E_cell(z, cell, beta=1.0).triggered  # threshold > 0
    big = disorder.DisorderField(g, disorder.GAUSSIAN, np.full((17, 17), 50.0))
    assert disorder.event_E_cell(big, cell, beta=1.0).triggered


def test_event_e_monotone_in_omega():
    g = lattice.build_box(16)
    t = lattice.cell_tiling(g, 4)
    r = rng.stream(108, "mono")
    for trial in range(20):
        om = disorder.sample_disorder(g, disorder.GAUSSIAN, r)
        cell = t.cells[trial % len(t.cells)]
        before = disorder.event_E_cell(om, cell, beta=0.8)
        bumped = om.values.copy()
        idx = (1 + r.integers(0, 16), 1 + r.integers(0, 16))
        bumped[idx] += float(r.random() * 3)
        after = disorder.event_E_cell(
            disorder.DisorderField(g, disorder.GAUSSIAN, bumped), cell, beta=0.8)
        if before.triggered:
            assert after.triggered
        assert after.max_window >= before.max_window - 1e-12


def test_event_c_structural_flag():
    g = lattice.build_box(8)
    t = lattice.cell_tiling(g, 2)
    cell = t.cells[0]
    none = np.zeros((9, 9), dtype=bool)
    res = disorder.event_C_cell(none, cell)
    assert not res.triggered
    # at this cell side the cluster threshold exceeds the window: flagged
    assert res.structurally_false == (res.threshold > res.window_sites)
    allc = np.ones((9, 9), dtype=bool)
    res2 = disorder.event_C_cell(allc, cell, radius=2, threshold=3.0)
    assert res2.triggered


def test_penalty_formula():
    g = lattice.build_box(16)
    t = lattice.cell_tiling(g, 4)
    z = disorder.DisorderField(g, disorder.GAUSSIAN, np.zeros((17, 17)))
    res = disorder.penalty_f(z, t, beta=1.0)
    assert res.value == 1.0 and res.count == 0
    big = disorder.DisorderField(g, disorder.GAUSSIAN, np.full((17, 17), 50.0))
    res2 = disorder.penalty_f(big, t, beta=1.0)
    assert res2.count == len(t.cells)
    assert res2.value == pytest.approx(math.exp(-2 * len(t.cells)))


def test_penalty_inverse_factorizes():
    # E[1/f] over the box equals (one-cell value)^(number of cells)
    g = lattice.build_box(8)
    t = lattice.cell_tiling(g, 4)
    assert len(t.cells) == 1
    g2 = lattice.build_box(16)
    t2 = lattice.cell_tiling(g2, 4)
    r = rng.stream(109, "fact")
    n = 400
    one = np.mean([math.exp(2 * disorder.penalty_f(
        disorder.sample_disorder(g, disorder.GAUSSIAN, r), t, 1.0).count) for _ in range(n)])
    many = np.mean([math.exp(2 * disorder.penalty_f(
        disorder.sample_disorder(g2, disorder.GAUSSIAN, r), t2, 1.0).count) for _ in range(n)])
    # cells are iid across the box: log E[1/f] scales with the cell count
    assert abs(math.log(many) - len(t2.cells) * math.log(one)) < 0.75


def test_window_sums_diamond():
    vals = np.zeros((7, 7))
    vals[3, 3] = 1.0
    s = disorder.window_sums(vals, 2)
    # the l1 ball of radius 2 around the unit mass
    x1, x2 = np.meshgrid(np.arange(7), np.arange(7), indexing="ij")
    expect = (np.abs(x1 - 3) + np.abs(x2 - 3) <= 2).astype(float)
    assert np.abs(s - expect).max() < 1e-12


def test_event_e_frequency_shape():
    # P(mean event) fitted against N1^2 exp(-c (log N1)^2): c stays positive
    g = lattice.build_box(32)
    t = lattice.cell_tiling(g, 16)
    r = rng.stream(110, "efreq")
    n = 300
    hits = 0
    for _ in range(n):
        om = disorder.sample_disorder(g, disorder.GAUSSIAN, r)
        hits += int(disorder.event_E_cell(om, t.cells[0], beta=1.0).triggered)
    freq = max(hits / n, 0.5 / n)
    c_fit = -math.log(freq / 16 ** 2) / math.log(16) ** 2
    assert c_fit > 0.0
