"""Named experiments: the acceptance suite plus exploratory runs.

Every acceptance check is exactly one registry entry; `gffpin verify` runs
them all and prints one verdict line each.  Experiments draw all randomness
from streams keyed by (seed, experiment, purpose, replica), so a rerun with
the same resolved configuration reproduces every number bit-for-bit on the
same platform.

Frozen constants (the density-event offset K and the bridge envelope C)
come from the calibration experiments in this module, run once at the
recorded seeds; the calibration entries remain runnable to re-derive them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import special

from . import fields, freeenergy, kernels, lattice, pinning, rng as rngmod
from .disorder import (BERNOULLI, GAUSSIAN, DisorderField, penalty_f,
                       sample_disorder)
from .errors import ConfigError

# calibrated once and frozen; re-derivable via the *-calibrate experiments
FROZEN_DENSITY_K = 0.35       # smallest grid value with typical-density freq >= target at N=256
FROZEN_BRIDGE_C = 0.80        # envelope constant, 20% above the largest fitted cell value
FROZEN_DENSITY_C_CAP = 1.0    # family constant cap for the typicality criterion


@dataclass
class ExperimentResult:
    name: str
    passed: bool | None
    lines: list = dc_field(default_factory=list)
    records: list = dc_field(default_factory=list)
    tables: dict = dc_field(default_factory=dict)
    wall_time: float = 0.0
    config: dict = dc_field(default_factory=dict)
    streams: list = dc_field(default_factory=list)


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    statement: str
    defaults: dict
    fn: object
    acceptance: int | None = None  # criterion number when part of the gate


class Accumulator:
    """Mergeable (count, mean, M2) accumulator; merging is associative and
    order-independent, so replica streams can be reduced in any order."""

    def __init__(self, n=0, mean=0.0, m2=0.0):
        self.n, self.mean, self.m2 = n, mean, m2

    def add(self, x: float) -> "Accumulator":
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)
        return self

    def merge(self, other: "Accumulator") -> "Accumulator":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean, other.m2
            return self
        n = self.n + other.n
        d = other.mean - self.mean
        self.mean += d * other.n / n
        self.m2 += other.m2 + d * d * self.n * other.n / n
        self.n = n
        return self

    @property
    def var(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else float("inf")

    @property
    def se(self) -> float:
        return math.sqrt(self.var / self.n) if self.n > 1 else float("inf")


def _line(ok: bool | None, text: str) -> str:
    tag = "PASS" if ok else ("FAIL" if ok is not None else "info")
    return f"[{tag}] {text}"


# ---------------------------------------------------------------------------
# 1. exact small box
# ---------------------------------------------------------------------------

def _run_exact_small_box(cfg) -> ExperimentResult:
    res = ExperimentResult("exact-small-box", None)
    checks = []
    g2 = lattice.build_box(2)
    g_center = kernels.green_dirichlet(g2, 0.0).table[0, 0]
    checks.append(("G*(center) = 1/4 at N=2", abs(g_center - 0.25) < 1e-12))
    for m in (0.5, 1.0, 2.0):
        gm = kernels.green_dirichlet(g2, m).table[0, 0]
        checks.append((f"G*(center) = 1/(4+m^2) at m={m}", abs(gm - 1.0 / (4 + m * m)) < 1e-12))
    om = DisorderField(g2, GAUSSIAN, np.zeros((3, 3)))
    params = pinning.PinningParams(beta=0.0, h=1.0)
    logz = pinning.exact_partition_small(g2, params, om)
    p = 2.0 * special.ndtr(2.0) - 1.0
    ref = math.log(1.0 + (math.e - 1.0) * p)
    checks.append((f"log Z(N=2, h=1) = log(1+(e-1)(2Phi(2)-1)) [{logz:.9f} vs {ref:.9f}]",
                   abs(logz - ref) < 1e-9))
    logz0 = pinning.exact_partition_small(g2, pinning.PinningParams(beta=0.0, h=0.0), om)
    checks.append(("Z = 1 exactly at h = 0", abs(logz0) < 1e-12))
    res.passed = all(ok for _, ok in checks)
    res.lines = [_line(ok, t) for t, ok in checks]
    res.records = [{"check": t, "ok": ok} for t, ok in checks]
    return res


# ---------------------------------------------------------------------------
# 2. Green asymptotics
# ---------------------------------------------------------------------------

def _run_green_asymptotics(cfg) -> ExperimentResult:
    res = ExperimentResult("green-asymptotics", None)
    masses = [1e-1, 1e-2, 1e-3, 1e-4]
    rows = []
    resid_inf = []
    for m in masses:
        G = kernels.green_massive_infinite((0, 0), m)
        ref = -math.log(m) / (2.0 * math.pi)
        resid_inf.append(G - ref)
        rows.append((m, G, ref, G - ref))
    res.tables["green_infinite"] = (["m", "G(0,0)", "log(1/m)/2pi", "residual"], rows)
    drift_inf = (max(resid_inf) - min(resid_inf)) / abs(np.mean(resid_inf))
    ok_inf = max(abs(r) for r in resid_inf) < 2.0 and drift_inf < 0.20
    dir_rows = []
    worst = {}
    for N in (64, 128, 256):
        g = lattice.build_box(N)
        w = 0.0
        for m in (0.1, 0.02, 0.004):
            diag = kernels.green_dirichlet_diag(g, m)
            mask = g.interior_mask
            ref = np.log(np.minimum(1.0 / m, g.dist_boundary[mask])) / (2.0 * math.pi)
            w = max(w, float(np.abs(diag[mask] - ref).max()))
        worst[N] = w
        dir_rows.append((N, w))
    res.tables["green_dirichlet_residual"] = (["N", "max_abs_residual"], dir_rows)
    vals = list(worst.values())
    drift_dir = (max(vals) - min(vals)) / np.mean(vals)
    ok_dir = max(vals) < 2.0 and drift_dir < 0.20
    res.lines = [
        _line(ok_inf, f"infinite-volume residual {np.mean(resid_inf):.5f}, drift {drift_inf:.2%}"),
        _line(ok_dir, f"Dirichlet residual max {max(vals):.5f}, drift across N {drift_dir:.2%}"),
    ]
    res.passed = ok_inf and ok_dir
    res.records = [{"resid_infinite": resid_inf, "resid_dirichlet": worst,
                    "drift_infinite": drift_inf, "drift_dirichlet": drift_dir}]
    return res


# ---------------------------------------------------------------------------
# 3. f(m) asymptotics
# ---------------------------------------------------------------------------

def _run_f_asymptotics(cfg) -> ExperimentResult:
    res = ExperimentResult("f-asymptotics", None)
    ratios = []
    rows = []
    for m in (1e-1, 1e-2, 1e-3):
        f = kernels.f_of_m(m)
        asym = m * m * abs(math.log(m)) / (4.0 * math.pi)
        ratios.append((f - asym) / (m * m))
        rows.append((m, f, asym, ratios[-1]))
    drift = (max(ratios) - min(ratios)) / abs(np.mean(ratios))
    ok_drift = drift < 0.20 and all(np.isfinite(ratios))
    f_pan = kernels.f_of_m(0.5)
    f_adp = kernels.f_of_m_adaptive(0.5)
    ok_dual = abs(f_pan - f_adp) < 1e-9
    res.tables["f_asymptotics"] = (["m", "f(m)", "m^2|log m|/4pi", "residual/m^2"], rows)
    res.lines = [
        _line(ok_drift, f"residual/m^2 = {np.mean(ratios):.5f}, drift {drift:.2%}"),
        _line(ok_dual, f"dual quadrature at m=0.5: |{f_pan:.12f} - {f_adp:.12f}| = {abs(f_pan - f_adp):.2e}"),
    ]
    res.passed = ok_drift and ok_dual
    res.records = [{"ratios": ratios, "drift": drift, "dual_diff": abs(f_pan - f_adp)}]
    return res


# ---------------------------------------------------------------------------
# 4. sampler exactness
# ---------------------------------------------------------------------------

def _run_sampler_exactness(cfg) -> ExperimentResult:
    res = ExperimentResult("sampler-exactness", None)
    seed = cfg["seed"]
    n = cfg["samples"]
    g = lattice.build_box(8)
    r = rngmod.stream(seed, "sampler-exactness", "cov")
    batch = fields.sample_dirichlet_interior(g, 0.0, n, r).reshape(n, -1)
    emp = batch.T @ batch / n
    exact = kernels.green_dirichlet(g, 0.0).table
    se = np.sqrt((np.outer(np.diag(exact), np.diag(exact)) + exact ** 2) / n)
    z = np.abs(emp - exact) / se
    ok_cov = float(z.max()) < 5.0
    # scale-stack sum at the laboratory mass: the slices telescope to the
    # Dirichlet Green function both analytically and empirically
    g32 = lattice.build_box(32)
    m = 0.3
    grid = kernels.scale_time_grid(m, min_scales=0)
    diag_sum = np.zeros((g32.side, g32.side))
    for i in range(1, grid.k + 1):
        diag_sum += kernels.covariance_slice_diag(g32, grid, i)
    exact32 = kernels.green_dirichlet_diag(g32, m)
    tele = float(np.abs(diag_sum - exact32).max())
    ok_tele = tele < 1e-7
    r2 = rngmod.stream(seed, "sampler-exactness", "stack")
    n2 = cfg["stack_samples"]
    probes = [(16, 16), (8, 8), (4, 4), (2, 2), (24, 10)]
    acc = {p: Accumulator() for p in probes}
    for _ in range(n2 // 500):
        s = fields.sample_dirichlet_interior(g32, m, 500, r2)
        for (x1, x2) in probes:
            for v in s[:, x1 - 1, x2 - 1]:
                acc[(x1, x2)].add(float(v))
    ok_stack = True
    stack_rows = []
    for p, a in acc.items():
        target = exact32[p]
        var_se = target * math.sqrt(2.0 / a.n)
        zs = abs(a.var - target) / var_se
        stack_rows.append((p[0], p[1], a.var, target, zs))
        ok_stack &= zs < 5.0
    res.tables["stack_variances"] = (["x1", "x2", "empirical", "exact", "z"], stack_rows)
    res.lines = [
        _line(ok_cov, f"N=8 covariance: max |z| = {float(z.max()):.2f} over {z.size} entries ({n} samples)"),
        _line(ok_tele, f"slice telescoping N=32 m=0.3: max error {tele:.2e}"),
        _line(ok_stack, f"stack-sum variances at probes: max z = {max(rw[4] for rw in stack_rows):.2f}"),
    ]
    res.passed = ok_cov and ok_tele and ok_stack
    res.records = [{"max_z_cov": float(z.max()), "telescoping": tele}]
    return res


# ---------------------------------------------------------------------------
# 5. harmonic extension
# ---------------------------------------------------------------------------

def _run_harmonic_extension(cfg) -> ExperimentResult:
    res = ExperimentResult("harmonic-extension", None)
    seed = cfg["seed"]
    g = lattice.build_box(16)
    r = rngmod.stream(seed, "harmonic", "bc")
    bc = fields.explicit_bc(r.standard_normal(4 * 16))
    m = 0.2
    ext = fields.harmonic_extension(g, m, bc)
    ok_resid = ext.residual < 1e-10
    sites = [(8, 8), (3, 3), (12, 5), (1, 14), (6, 11)]
    mc = fields.harmonic_extension_mc(g, m, bc, sites, cfg["walks"],
                                      rngmod.stream(seed, "harmonic", "mc"))
    zs = []
    for i, s in enumerate(sites):
        zs.append(abs(mc["mean"][i] - ext.values[s]) / mc["se"][i])
    ok_mc = max(zs) < 4.0
    okmax = ext.values.max() <= bc.max_abs() + 1e-12
    res.lines = [
        _line(ok_resid, f"solver residual {ext.residual:.2e}"),
        _line(ok_mc, f"walk representation at 5 probes: max z = {max(zs):.2f}"),
        _line(okmax, "maximum principle |H| <= max |bc|"),
    ]
    res.passed = ok_resid and ok_mc and okmax
    res.records = [{"residual": ext.residual, "mc_z": zs}]
    return res


# ---------------------------------------------------------------------------
# 6. bridge lemma
# ---------------------------------------------------------------------------

def _run_bridge(cfg) -> ExperimentResult:
    res = ExperimentResult("bridge-lemma", None)
    seed = cfg["seed"]
    n = cfg["bridges"]
    C = FROZEN_BRIDGE_C
    rows = []
    ok = True
    for k in (25, 100, 400):
        for x in (1.0, 2.0, 5.0, 10.0):
            r = rngmod.stream(seed, "bridge", k, x)
            p, se = fields.bridge_positivity_probability([1.0] * k, x, n, r)
            lower = 1.0 - math.exp(-x * x / k)
            upper = min(C * (x + math.log(k)) ** 2 / k, 1.0)
            cell_ok = (p >= lower - 4.0 * se) and (p <= upper + 4.0 * se)
            ok &= cell_ok
            rows.append((k, x, p, se, lower, upper, cell_ok))
    res.tables["bridge_cells"] = (["k", "x", "estimate", "se", "lower", "upper", "ok"], rows)
    res.lines = [_line(ok, f"12 cells inside [1-e^(-x^2/k), C(x+log k)^2/k] with frozen C={C}")]
    res.passed = ok
    res.records = [{"cells": rows}]
    return res


# ---------------------------------------------------------------------------
# 7. thermodynamic consistency
# ---------------------------------------------------------------------------

def _run_thermo(cfg) -> ExperimentResult:
    res = ExperimentResult("thermo-consistency", None)
    seed = cfg["seed"]
    N = cfg["N"]
    geom = lattice.build_box(N)
    h_grid = np.round(np.arange(0.0, 0.36, 0.05), 10)
    lines = []
    ok_all = True
    curves = {}
    for beta, reps in ((0.0, 1), (0.5, cfg["replicas"])):
        curve = freeenergy.free_energy_curve(geom, GAUSSIAN, beta, h_grid, seed,
                                             replicas=reps, sweeps=cfg["sweeps"],
                                             burn_in=cfg["burn_in"], tag=f"thermo-{beta}")
        curves[beta] = curve
        d2, d2se = curve.second_differences()
        ok_convex = bool(np.all(d2 >= -3.0 * d2se))
        ok_monotone = bool(np.all(np.diff(curve.value) >= -3.0 * np.hypot(curve.se[1:], curve.se[:-1])))
        ok_all &= ok_convex and ok_monotone
        lines.append(_line(ok_convex, f"beta={beta}: convexity, min d2/se = "
                                      f"{float((d2 / np.maximum(d2se, 1e-300)).min()):.2f}"))
        lines.append(_line(ok_monotone, f"beta={beta}: nondecreasing in h"))
    ok_zero = abs(curves[0.0].value[0]) == 0.0
    ok_all &= ok_zero
    lines.append(_line(ok_zero, "pure F(0) = 0 exactly"))
    i3 = int(np.searchsorted(h_grid, 0.30))
    fq = curves[0.5].value[i3]
    fa = curves[0.0].value[i3]
    se = math.hypot(curves[0.5].se[i3], curves[0.0].se[i3])
    ok_anneal = fq <= fa + 3.0 * se
    ok_all &= ok_anneal
    lines.append(_line(ok_anneal, f"quenched {fq:.4f} <= annealed {fa:.4f} + 3se ({se:.4f})"))
    res.tables["curves"] = (["beta", "h", "F", "se"],
                            [(b, float(h), float(v), float(s))
                             for b, c in curves.items()
                             for h, v, s in zip(c.h, c.value, c.se)])
    res.lines = lines
    res.passed = bool(ok_all)
    res.records = [{"beta": b, "h": c.h, "F": c.value, "se": c.se} for b, c in curves.items()]
    return res


# ---------------------------------------------------------------------------
# 8. massive comparison
# ---------------------------------------------------------------------------

def _run_massive_comparison(cfg) -> ExperimentResult:
    res = ExperimentResult("massive-comparison", None)
    seed, N, h, m = cfg["seed"], cfg["N"], cfg["h"], cfg["m"]
    pure = freeenergy.pure_free_energy_estimate(h, N, seed, sweeps=cfg["sweeps"],
                                                burn_in=cfg["burn_in"])
    mass = freeenergy.massive_shifted_free_energy_estimate(0.0, h, m, 0.0, N, seed,
                                                           sweeps=cfg["sweeps"],
                                                           burn_in=cfg["burn_in"])
    fm = kernels.f_of_m(m)
    se = math.hypot(pure.se, mass.se)
    ok = mass.value <= pure.value + fm + 3.0 * se
    res.lines = [_line(ok, f"F(0,{h},{m},0) = {mass.value:.5f} <= F({h}) + f(m) = "
                           f"{pure.value:.5f} + {fm:.5f} (+3se = {3 * se:.5f})")]
    res.passed = ok
    from .io import estimate_record
    res.records = [{"massive": mass.value, "pure": pure.value, "f_m": fm, "se": se},
                   estimate_record(pure, 0.0), estimate_record(mass, 0.0)]
    return res


# ---------------------------------------------------------------------------
# 9. density typicality
# ---------------------------------------------------------------------------

def _run_density_typicality(cfg) -> ExperimentResult:
    res = ExperimentResult("density-typicality", None)
    seed, K = cfg["seed"], cfg["K"]
    rows = []
    cs = []
    for m in (0.2, 0.1, 0.05):
        N = math.ceil((1.0 / m) * math.log(1.0 / m) ** 0.25)
        g = lattice.build_box(N)
        r = rngmod.stream(seed, "density", m)
        s = fields.sample_dirichlet_interior(g, m, cfg["samples"], r)
        stats = (s ** 2).sum(axis=(1, 2))
        thr = freeenergy.density_event_threshold(N, m, K)
        freq = float(np.mean(stats >= thr))
        c = (1.0 - freq) * math.sqrt(math.log(N))
        cs.append(c)
        rows.append((m, N, freq, c))
    c_star = max(cs)
    stable = max(cs) / min(cs) < 1.2
    ok = c_star <= FROZEN_DENSITY_C_CAP and stable
    res.tables["typicality"] = (["m", "N", "frequency", "fitted_C"], rows)
    res.lines = [_line(ok, f"family constant C* = {c_star:.3f} (cap {FROZEN_DENSITY_C_CAP}), "
                           f"stability {max(cs) / min(cs):.3f} < 1.2, K = {K}")]
    res.passed = bool(ok)
    res.records = [{"rows": rows, "C_star": c_star}]
    return res


def _run_density_calibrate(cfg) -> ExperimentResult:
    res = ExperimentResult("density-calibrate", None)
    seed, N = cfg["seed"], cfg["N"]
    m = freeenergy.desk_mass(N)
    g = lattice.build_box(N)
    r = rngmod.stream(seed, "density-calibrate")
    stats = []
    done = 0
    while done < cfg["samples"]:
        b = min(250, cfg["samples"] - done)
        s = fields.sample_dirichlet_interior(g, m, b, r)
        stats.append((s ** 2).sum(axis=(1, 2)))
        done += b
    stats = np.concatenate(stats)
    target = 1.0 - 1.0 / math.sqrt(math.log(N))
    rows = []
    k_star = None
    for K in np.arange(0.0, 1.51, 0.05):
        thr = freeenergy.density_event_threshold(N, m, float(K))
        freq = float(np.mean(stats >= thr))
        rows.append((float(K), freq))
        if k_star is None and freq >= target:
            k_star = float(K)
    res.tables["calibration"] = (["K", "frequency"], rows)
    res.lines = [_line(None, f"smallest K with freq >= {target:.4f} at N={N}, m={m:.5f}: {k_star}"),
                 _line(None, f"frozen default in use: {FROZEN_DENSITY_K}")]
    res.records = [{"K_star": k_star, "target": target, "N": N, "m": m}]
    return res


# ---------------------------------------------------------------------------
# 10. extremal event
# ---------------------------------------------------------------------------

def _run_extremal_event(cfg) -> ExperimentResult:
    res = ExperimentResult("extremal-event", None)
    seed, N = cfg["seed"], cfg["N"]
    m = freeenergy.desk_mass(N)
    g = lattice.build_box(N)
    grid = kernels.scale_time_grid(m, min_scales=1)
    wide = lattice.sub_box_mask(g, 2.0)
    r = rngmod.stream(seed, "extremal")
    n = cfg["samples"]
    margins = np.empty(n)
    for i in range(n):
        s = fields.sample_scale_stack(g, m, r, grid=grid)
        margins[i] = fields.stack_barrier_margin(s.stack, wide, freeenergy.GAMMA)
    t_star = freeenergy.GAMMA * math.log(math.log(N))
    offsets = [-1.0, -0.5, 0.0, 0.5, 1.0, t_star]
    freqs = [float(np.mean(margins <= t)) for t in offsets]
    ok_freq = freqs[-1] >= 0.99
    ok_mono = bool(np.all(np.diff(freqs) >= 0.0))
    res.tables["extremal"] = (["offset", "frequency"], list(zip(offsets, freqs)))
    res.lines = [
        _line(ok_freq, f"relaxed barrier (offset {t_star:.2f}): frequency {freqs[-1]:.4f} >= 0.99 "
                       f"({n} stacks, k={grid.k})"),
        _line(ok_mono, "frequency nondecreasing in the additive offset (shared samples)"),
        _line(None, f"observed margin quantiles 50/99/100%: "
                    f"{np.percentile(margins, 50):.3f} / {np.percentile(margins, 99):.3f} / "
                    f"{margins.max():.3f}"),
    ]
    res.passed = ok_freq and ok_mono
    res.records = [{"offsets": offsets, "freqs": freqs, "k": grid.k}]
    return res


# ---------------------------------------------------------------------------
# 11. copolymer
# ---------------------------------------------------------------------------

def _run_copolymer(cfg) -> ExperimentResult:
    res = ExperimentResult("copolymer", None)
    seed, N, rho = cfg["seed"], cfg["N"], cfg["rho"]
    ok_g = abs(freeenergy.copolymer_critical_point(GAUSSIAN, rho) - rho) < 1e-12
    ref_b = math.log(math.cosh(2 * rho)) / (2 * rho)
    ok_b = abs(freeenergy.copolymer_critical_point(BERNOULLI, rho) - ref_b) < 1e-12
    g = lattice.build_box(N)
    h_c = rho
    fracs = {}
    ses = {}
    for label, h in (("at_2hc", 2 * h_c), ("at_0", 0.0)):
        om = sample_disorder(g, GAUSSIAN, rngmod.stream(seed, "cop-omega", label))
        params = pinning.PinningParams(model="copolymer", rho=rho, h=h)
        rec = pinning.run_chain(g, params, om, rngmod.stream(seed, "cop-chain", label),
                                sweeps=cfg["sweeps"], burn_in=cfg["burn_in"], thinning=2)
        fracs[label], ses[label] = rec.mean_se(rec.contact_fraction)
    ok_high = fracs["at_2hc"] + 3 * ses["at_2hc"] < 0.05
    ok_zero = fracs["at_0"] - 3 * ses["at_0"] > 0.20
    res.lines = [
        _line(ok_g, f"gaussian critical point = rho exactly ({rho})"),
        _line(ok_b, f"bernoulli critical point = log cosh(2 rho)/(2 rho) = {ref_b:.12f}"),
        _line(ok_high, f"lower-solvent fraction at h=2 rho: {fracs['at_2hc']:.4f} < 0.05"),
        _line(ok_zero, f"lower-solvent fraction at h=0: {fracs['at_0']:.4f} > 0.20"),
    ]
    res.passed = ok_g and ok_b and ok_high and ok_zero
    res.records = [{"fracs": fracs, "ses": ses}]
    return res


# ---------------------------------------------------------------------------
# 12. sub-additivity
# ---------------------------------------------------------------------------

def _run_subadditivity(cfg) -> ExperimentResult:
    res = ExperimentResult("subadditivity", None)
    out = freeenergy.doubling_gap(cfg["beta"], cfg["h"], cfg["m"], 0.0, cfg["K"],
                                  cfg["N"], cfg["seed"], replicas=cfg["replicas"],
                                  sweeps=cfg["sweeps"], burn_in=cfg["burn_in"],
                                  threads=cfg.get("threads", 1))
    ok = out["gap"] >= -3.0 * out["gap_se"]
    res.lines = [_line(ok, f"E log Z'({2 * cfg['N']}) - 4 E log Z'({cfg['N']}) = "
                           f"{out['gap']:.2f} >= -3 se ({out['gap_se']:.2f})")]
    res.passed = bool(ok)
    res.records = [out]
    return res


# ---------------------------------------------------------------------------
# exploratory experiments (not part of the gate)
# ---------------------------------------------------------------------------

def _run_pure_free_energy(cfg) -> ExperimentResult:
    res = ExperimentResult("pure-free-energy", None)
    geom = lattice.build_box(cfg["N"])
    h_grid = np.round(np.arange(cfg["h_min"], cfg["h_max"] + 1e-12, cfg["h_step"]), 10)
    curve = freeenergy.free_energy_curve(geom, GAUSSIAN, 0.0, h_grid, cfg["seed"],
                                         sweeps=cfg["sweeps"], burn_in=cfg["burn_in"],
                                         tag="pure-grid")
    res.tables["pure_free_energy"] = (["h", "value", "se"],
                                      [(float(h), float(v), float(s))
                                       for h, v, s in zip(curve.h, curve.value, curve.se)])
    ratio = [float(v * math.sqrt(abs(math.log(h))) / h) for h, v in zip(curve.h, curve.value) if h > 0]
    res.lines = [_line(None, f"F * sqrt|log h| / h along the grid: "
                             f"{', '.join(f'{x:.3f}' for x in ratio)}")]
    res.records = [{"h": curve.h, "value": curve.value, "se": curve.se}]
    return res


def _run_finite_volume(cfg) -> ExperimentResult:
    res = ExperimentResult("finite-volume-criterion", None)
    rep = freeenergy.finite_volume_criterion(cfg["beta"], cfg["h"], cfg["m"], cfg["u"],
                                             cfg["K"], cfg["N"], cfg["seed"],
                                             replicas=cfg["replicas"], sweeps=cfg["sweeps"],
                                             burn_in=cfg["burn_in"],
                                             threads=cfg.get("threads", 1))
    res.lines = [_line(None, f"verdict: {rep.verdict} (estimate {rep.estimate:.4f} "
                             f"+- {rep.se:.4f}, penalty {rep.penalty:.4f}, "
                             f"event freq {rep.event_frequency:.3f})")]
    res.records = [rep.__dict__]
    return res


def _run_wall_restriction(cfg) -> ExperimentResult:
    res = ExperimentResult("wall-restriction", None)
    rows = []
    prev = None
    monotone = True
    for h in (0.3, 0.2, 0.1):
        out = freeenergy.height_restriction_logp(cfg["beta"], h, cfg["N"], cfg["seed"],
                                                 sweeps=cfg["sweeps"], burn_in=cfg["burn_in"])
        rows.append((h, out["barrier"], out["logp_per_site"]))
        if prev is not None and out["logp_per_site"] < prev:
            monotone = False
        prev = out["logp_per_site"]
    res.tables["wall"] = (["h", "barrier", "logp_per_site"], rows)
    res.lines = [_line(None, "restriction cost per site shrinks as h decreases: "
                             + ("yes" if monotone else "no"))]
    res.records = [{"rows": rows, "monotone": monotone}]
    return res


def _run_contact_statistics(cfg) -> ExperimentResult:
    res = ExperimentResult("contact-statistics", None)
    out = freeenergy.conditioned_contact_statistics(cfg["N"], cfg["seed"],
                                                    samples=cfg["samples"])
    res.lines = [
        _line(None, f"E[L] = {out['mean_L']:.2f} (se {out['se_L']:.2f}), "
                    f"E[L'] = {out['mean_Lp']:.2f} <= E[L]"),
        _line(None, f"Paley-Zygmund ratio E[L'^2]/E[L']^2 = {out['paley_zygmund_ratio']:.2f}"),
        _line(None, f"barrier event frequency {out['an_frequency']:.3f}, "
                    f"decorrelation-scale histogram {out['j_histogram']}"),
    ]
    res.records = [out]
    return res


def _run_cluster_probability(cfg) -> ExperimentResult:
    """Frequency of a contact cluster in the central cell of a double box,
    against the variance-split bound shape evaluated numerically.

    The split time (log N1)^8 exceeds the relaxation time of any laboratory
    box, so the long-time variance V' degenerates to ~0 there; the result is
    then reported as structurally out of regime rather than asserted.
    """
    from .disorder import event_C_cell

    res = ExperimentResult("cluster-probability", None)
    N1, h, seed = cfg["N1"], cfg["h"], cfg["seed"]
    g = lattice.build_box(2 * N1)
    tiling = lattice.cell_tiling(g, N1)
    center = next(c for c in tiling.cells if c.y == (1, 1))
    om = DisorderField(g, GAUSSIAN, np.zeros((g.side, g.side)))
    params = pinning.PinningParams(beta=0.0, h=h)
    chain = pinning.make_chain(g, params, om, rngmod.stream(seed, "cluster"))
    pinning.heat_bath_sweep(chain, cfg["burn_in"])
    hits = Accumulator()
    structural = False
    for _ in range(cfg["samples"]):
        pinning.heat_bath_sweep(chain, 2)
        delta = pinning.contact_indicators(chain.field, 0.0)
        ev = event_C_cell(delta, center)
        structural |= ev.structurally_false
        hits.add(float(ev.triggered))
    t_split = math.log(N1) ** 8
    q1, _ = kernels.split_diag(g, 0.0, t_split)
    block = q1[center.cell_slice]
    v_prime = float(block.min())
    v_max = float(kernels.green_dirichlet_diag(g, 0.0)[center.cell_slice].max())
    res.lines = [
        _line(None, f"cluster frequency {hits.mean:.4f} (se {hits.se:.4f}) at N1={N1}, h={h}"),
        _line(None, f"V = max G*(x,x) = {v_max:.4f} vs log(N1)/2pi = "
                    f"{math.log(N1) / (2 * math.pi):.4f}"),
        _line(None, f"long-time variance V' = {v_prime:.3e}"
                    + (" (split time beyond box relaxation: bound degenerate here)"
                       if v_prime < 1e-6 else "")),
        _line(None, f"cluster threshold structurally unreachable: {structural}"),
    ]
    res.records = [{"frequency": hits.mean, "se": hits.se, "v_prime": v_prime,
                    "v_max": v_max, "structural": structural}]
    return res


def _run_penalty_cost(cfg) -> ExperimentResult:
    res = ExperimentResult("penalty-cost", None)
    N, N1, beta = cfg["N"], cfg["N1"], cfg["beta"]
    g = lattice.build_box(N)
    til = lattice.cell_tiling(g, N1)
    r = rngmod.stream(cfg["seed"], "penalty")
    inv = Accumulator()
    counts = Accumulator()
    for _ in range(cfg["samples"]):
        om = sample_disorder(g, GAUSSIAN, r)
        p = penalty_f(om, til, beta)
        inv.add(1.0 / p.value)
        counts.add(p.count)
    res.lines = [
        _line(None, f"E[1/f(omega)] = {inv.mean:.4f} (se {inv.se:.4f}) over "
                    f"{len(til.cells)} cells; mean flagged cells {counts.mean:.3f}"),
        _line(None, f"(1/N^2) log E[1/f] = {math.log(max(inv.mean, 1e-300)) / N ** 2:.3e}"),
    ]
    res.records = [{"mean_inverse": inv.mean, "se": inv.se, "mean_count": counts.mean}]
    return res


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

REGISTRY: dict[str, Experiment] = {}


def _register(name, description, statement, defaults, fn, acceptance=None):
    REGISTRY[name] = Experiment(name, description, statement, defaults, fn, acceptance)


_register(
    "exact-small-box",
    "one-interior-site identities for the Green function and partition function",
    "G*(center)=1/4 and 1/(4+m^2) at N=2; log Z(N=2,b=0,h=1) = log(1+(e-1)(2 Phi(2)-1))",
    {"seed": 20260801}, _run_exact_small_box, acceptance=1)
_register(
    "green-asymptotics",
    "log-law residuals of the massive and Dirichlet Green functions",
    "|G^m(0,0) - log(1/m)/2pi| and |G^{m,*}(x,x) - log(min(1/m, d))/2pi| bounded, stable",
    {"seed": 20260802}, _run_green_asymptotics, acceptance=2)
_register(
    "f-asymptotics",
    "mass-cost integral f(m) against its m^2 log(1/m) law",
    "|f(m) - m^2 |log m| / 4pi| / m^2 stable over three decades; dual quadratures agree to 1e-9",
    {"seed": 20260803}, _run_f_asymptotics, acceptance=3)
_register(
    "sampler-exactness",
    "spectral sampler covariance and scale-slice telescoping",
    "empirical covariance matches the Green table within 5 MC se; slices sum to G^{m,*}",
    {"seed": 20260804, "samples": 100_000, "stack_samples": 40_000},
    _run_sampler_exactness, acceptance=4)
_register(
    "harmonic-extension",
    "boundary-data extension: solver residual and walk representation",
    "(Delta - m^2) H = 0 residual < 1e-10; discounted-walk estimate matches at 5 probes (4 se)",
    {"seed": 20260805, "walks": 20_000}, _run_harmonic_extension, acceptance=5)
_register(
    "bridge-lemma",
    "Gaussian bridge below a barrier: two-sided envelope",
    "P[max <= x | end pinned] in [1 - e^{-x^2/k}, C (x + log k)^2 / k] with frozen C",
    {"seed": 20260806, "bridges": 1_000_000}, _run_bridge, acceptance=6)
_register(
    "thermo-consistency",
    "free-energy curve shape in h and the quenched/annealed order",
    "F convex nondecreasing on an 8-point grid (both disorder strengths); quenched <= annealed",
    {"seed": 20260807, "N": 32, "replicas": 6, "sweeps": 500, "burn_in": 250},
    _run_thermo, acceptance=7)
_register(
    "massive-comparison",
    "confinement cost: massive free energy against pure plus f(m)",
    "F(0,h,m,0) <= F(h) + f(m) + 3 se at (h,m,N) = (0.3, 0.3, 32)",
    {"seed": 20260808, "N": 32, "h": 0.3, "m": 0.3, "sweeps": 600, "burn_in": 300},
    _run_massive_comparison, acceptance=8)
_register(
    "density-typicality",
    "typical squared-field density event across the scaled mass family",
    "freq(sum phi^2 >= N^2(2f(m)/m^2 - K)) >= 1 - C/sqrt(log N) with one C over the family",
    {"seed": 20260809, "K": FROZEN_DENSITY_K, "samples": 20_000},
    _run_density_typicality, acceptance=9)
_register(
    "extremal-event",
    "multiscale barrier event at the laboratory schedule",
    "all scale trajectories stay below gamma(i - j(x)) + offset with frequency >= 0.99",
    {"seed": 20260810, "N": 256, "samples": 1000}, _run_extremal_event, acceptance=10)
_register(
    "copolymer",
    "co-membrane critical point formulas and solvent asymmetry",
    "h_c = lambda(-2 rho)/2 rho exactly; lower-solvent fraction < 0.05 at h = 2 h_c, > 0.2 at 0",
    {"seed": 20260811, "N": 32, "rho": 0.5, "sweeps": 4000, "burn_in": 800},
    _run_copolymer, acceptance=11)
_register(
    "subadditivity",
    "doubling inequality for the boundary-averaged restricted partition function",
    "E log Z'(2N) >= 4 E log Z'(N) within 3 se at N = 16 -> 32",
    {"seed": 20260812, "N": 16, "beta": 0.5, "h": 0.3, "m": 0.3, "K": FROZEN_DENSITY_K,
     "replicas": 8, "sweeps": 400, "burn_in": 200},
    _run_subadditivity, acceptance=12)

_register(
    "pure-free-energy",
    "pure-model free energy along an h-grid (CSV output)",
    "F(h) tracks sqrt(2) h / sqrt|log h| up to laboratory-size effects",
    {"seed": 20260820, "N": 64, "h_min": 0.05, "h_max": 0.3, "h_step": 0.05,
     "sweeps": 500, "burn_in": 250},
    _run_pure_free_energy)
_register(
    "finite-volume-criterion",
    "positivity certificate from one finite box with stationary boundary",
    "(1/N^2) E log E^{m,bc}[e^{interaction} 1_D] - K m^2 > 0 certifies F > 0",
    {"seed": 20260821, "N": 32, "beta": 0.0, "h": 2.0, "m": 0.3, "u": 0.2,
     "K": 10.0, "replicas": 4, "sweeps": 400, "burn_in": 250},
    _run_finite_volume)
_register(
    "density-calibrate",
    "calibration sweep for the typical-density offset K",
    "smallest K with event frequency >= 1 - 1/sqrt(log N) at the laboratory schedule",
    {"seed": 20260822, "N": 256, "samples": 1500}, _run_density_calibrate)
_register(
    "wall-restriction",
    "cost of confining all heights below |log h|^2 (soft-wall integration)",
    "(1/N^2) log P[all heights within the band] shrinks in magnitude as h decreases",
    {"seed": 20260823, "N": 64, "beta": 0.5, "sweeps": 200, "burn_in": 150},
    _run_wall_restriction)
_register(
    "contact-statistics",
    "scale-restricted contact moments near the extremal height",
    "E[L'] <= E[L]; second-moment ratio finite; pairwise decorrelation scales",
    {"seed": 20260824, "N": 32, "samples": 400}, _run_contact_statistics)
_register(
    "cluster-probability",
    "contact-cluster frequency in one cell vs the variance-split bound shape",
    "freq(cluster in the central cell) against c/log(N1) e^{-u^2/2V'} with V' computed numerically",
    {"seed": 20260826, "N1": 8, "h": 0.1, "samples": 300, "burn_in": 300},
    _run_cluster_probability)
_register(
    "penalty-cost",
    "inverse-penalty cost of the disorder change of measure",
    "E[f(omega)^{-1}] stays subexponential in the cell count",
    {"seed": 20260825, "N": 16, "N1": 4, "beta": 1.0, "samples": 200}, _run_penalty_cost)


def list_experiments() -> list[tuple[str, str, str]]:
    """Sorted (name, description, statement) rows; stable across runs."""
    return [(e.name, e.description, e.statement) for _, e in sorted(REGISTRY.items())]


def acceptance_names() -> list[str]:
    pairs = [(e.acceptance, e.name) for e in REGISTRY.values() if e.acceptance]
    return [name for _, name in sorted(pairs)]


def run_experiment(name: str, overrides: dict | None = None) -> ExperimentResult:
    if name not in REGISTRY:
        known = ", ".join(sorted(REGISTRY))
        raise ConfigError(f"unknown experiment {name!r}; registry: {known}")
    exp = REGISTRY[name]
    cfg = dict(exp.defaults)
    for key, val in (overrides or {}).items():
        cfg[key] = val
    t0 = time.time()
    with rngmod.audit_streams() as audit:
        result: ExperimentResult = exp.fn(cfg)
    result.wall_time = time.time() - t0
    result.config = cfg
    result.streams = audit.consumed
    return result
