"""End-to-end acceptance suite.

One test per criterion, each asserting its stated tolerance and printing a
single pass line (visible with `pytest -s tests/test_acceptance.py`).
Everything runs at desk scale with fixed seeds.
"""

import time

import numpy as np
import pytest
from scipy import stats as sstats

from stablelab.fields import Grid, GridField
from stablelab.levy import (LevyModel, SphericalMeasure, Tail,
                            restricted_mass, symbol, symbol_bound_fit)
from stablelab.lp import (DyadicPartition, ZeroBlockError, bernstein_ratio,
                          paraproduct, project, random_band_limited_field,
                          remainder)
from stablelab.nonlocal_op import (DriftField, JumpKernel, coercivity_check,
                                   maxprinciple_check)
from stablelab.pde import PdeProblem, solve, verify_apriori, verify_h1q
from stablelab.sde import (SimConfig, TimeSource, char_function_mc,
                           feynman_kac_check, krylov_estimate, path_rng,
                           simulate_coupled, _draw_events)
from stablelab.zvonkin import bilipschitz_sample_check, build, verify_transform


def report(num, name, detail=""):
    print(f"[acceptance] criterion {num} ({name}): PASS {detail}")


def line_model(alpha, **kw):
    return LevyModel(alpha, SphericalMeasure.line(1.0), **kw)


def xi_span_1d(rng, octaves=6, per_oct=10):
    mags = np.sort(2.0 ** rng.uniform(0.0, octaves, size=octaves * per_oct))
    return mags[:, None]


def xi_span_2d(rng, octaves=6, per_oct=10):
    mags = 2.0 ** rng.uniform(0.0, octaves, size=octaves * per_oct)
    ang = rng.uniform(0.0, 2.0 * np.pi, size=mags.size)
    return mags[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def test_criterion_01_symbol_coercivity():
    t0 = time.time()
    rng = np.random.default_rng(101)
    models = {
        "isotropic-1d": lambda a: line_model(a, pure_stable=True),
        "cylindrical-2d": lambda a: LevyModel(
            a, SphericalMeasure.axes(2), pure_stable=True),
        "truncated-profile-2d": lambda a: LevyModel(
            a, SphericalMeasure.axes(2),
            radial_profile=lambda th, r: 1.0 + 0.5 * np.cos(3.0 * r),
            kappa_low=0.5, kappa_high=1.5),
    }
    fitted = {}
    for name, make in models.items():
        for alpha in (0.5, 1.0):
            m = make(alpha)
            xis = xi_span_1d(rng) if m.dim == 1 else xi_span_2d(rng)
            c0, c1 = symbol_bound_fit(m, xis)
            assert c0 > 0.0, f"{name} alpha={alpha}: C0 = {c0}"
            fitted[(name, alpha)] = (c0, c1)
    # pure-stable isotropic closed form: C0 = 2 sqrt(2 pi) at alpha = 1/2
    c0 = fitted[("isotropic-1d", 0.5)][0]
    ref = 2.0 * np.sqrt(2.0 * np.pi)
    assert abs(c0 - ref) / ref < 0.005
    report(1, "symbol coercivity",
           f"C0_pure = {c0:.6f} vs 2*sqrt(2pi) = {ref:.6f}; "
           f"{len(fitted)} model/alpha combinations; "
           f"{time.time() - t0:.1f}s")


def test_criterion_02_littlewood_paley_identities():
    t0 = time.time()
    grid = Grid(1, 256)
    part = DyadicPartition(grid)
    assert part.j_max == 6
    rng = np.random.default_rng(102)
    worst_rec, worst_bony = 0.0, 0.0
    ratios = {j: 0.0 for j in range(1, 7)}
    for _ in range(50):
        full = random_band_limited_field(grid, rng, part)
        acc = np.zeros(grid.shape)
        for j in part.blocks():
            acc += project(full, j, part).values
        worst_rec = max(worst_rec, float(np.max(np.abs(acc - full.values))))
        f = random_band_limited_field(grid, rng, part, j_hi=part.j_max - 1)
        g = random_band_limited_field(grid, rng, part, j_hi=part.j_max - 1)
        bony = (paraproduct(f, g, part) + paraproduct(g, f, part)
                + remainder(f, g, part))
        worst_bony = max(worst_bony, float(
            np.max(np.abs(bony.values - f.values * g.values))))
        for j in ratios:
            try:
                ratios[j] = max(ratios[j], bernstein_ratio(
                    full, j, 1, np.inf, np.inf, part))
            except ZeroBlockError:
                pass
    assert worst_rec < 1e-10
    for j in range(-1, part.j_max + 1):
        for k in range(j + 2, part.j_max + 1):
            assert np.all(part.multiplier(j) * part.multiplier(k) == 0.0)
    assert worst_bony < 1e-8
    rv = np.array([ratios[j] for j in range(1, 7)])
    assert np.all(rv > 0)
    assert rv.max() <= 2.0 * rv.min()
    report(2, "dyadic partition identities",
           f"reconstruction {worst_rec:.2e}, bony {worst_bony:.2e}, "
           f"bernstein spread {rv.max() / rv.min():.3f}; "
           f"{time.time() - t0:.1f}s")


def test_criterion_03_maxprinciple_and_coercivity():
    t0 = time.time()
    model = line_model(0.5, pure_stable=True)
    grid = Grid(1, 256)
    part = DyadicPartition(grid)
    rng = np.random.default_rng(103)
    cs = {}
    for j in (2, 3, 4, 5):
        vals = maxprinciple_check(model, 1.0, j, 100, rng, grid=grid)
        assert len(vals) == 100
        assert np.all(vals < 0.0)
        cs[j] = -float(np.max(vals))
    arr = np.array(list(cs.values()))
    assert arr.max() <= 3.0 * arr.min()
    spreads = {}
    for p in (2.0, 4.0):
        c0s = []
        for j in (2, 3, 4, 5):
            worst = np.inf
            for _ in range(100):
                f = random_band_limited_field(grid, rng, part)
                lhs, rhs = coercivity_check(f, j, p, model, 1.0, part)
                assert lhs < 0.0
                worst = min(worst, -lhs / rhs)
            c0s.append(worst)
        c0s = np.array(c0s)
        assert np.all(c0s > 0.0)
        spreads[p] = float(c0s.max() / c0s.min())
        assert spreads[p] <= 3.0
    report(3, "extremum sign and block dissipativity",
           f"c spread {arr.max() / arr.min():.2f}, "
           f"C0 spreads {spreads}; {time.time() - t0:.1f}s")


def test_criterion_04_pde_oracle_equivalence():
    t0 = time.time()
    model = line_model(0.5, pure_stable=True)
    grid = Grid(1, 128)

    def problem(**kw):
        base = dict(grid=grid, model=model, kernel=JumpKernel.constant(1.0),
                    T=0.5, dt=1e-2)
        base.update(kw)
        return PdeProblem(**base)

    # (a) order >= 1 against the exact per-mode Duhamel solution
    lam = 0.5
    a = symbol(model, [1.0]).real - lam
    T = 0.5
    f = np.cos(grid.axes())
    exact_amp = ((np.exp(a * T) - 1.0) / a
                 + (2.0 * np.exp(a * T) - 2.0 * np.cos(2.0 * T)
                    - a * np.sin(2.0 * T)) / (a * a + 4.0))
    errs = []
    for dt in (2e-2, 1e-2, 5e-3):
        sol = solve(problem(source=lambda t: (1.0 + np.sin(2.0 * t)) * f,
                            lam=lam, T=T, dt=dt))
        errs.append(float(np.max(np.abs(sol.snapshots[-1] - exact_amp * f))))
    assert errs[0] / errs[1] >= 1.8
    assert errs[1] / errs[2] >= 1.8
    # (b) constant source closed form to 1e-8
    c, lam2 = 0.8, 2.0
    sol = solve(problem(source=lambda t: np.full(grid.shape, c), lam=lam2))
    for k, t in enumerate(sol.times):
        assert np.max(np.abs(sol.snapshots[k]
                             - c * (1.0 - np.exp(-lam2 * t)) / lam2)) < 1e-8
    # (c) positivity with a genuinely variable kernel
    kern = JumpKernel.from_x_function(lambda x: 1.0 + 0.3 * np.sin(x[0]),
                                      kappa0=0.7, kappa1=1.3)
    fsrc = 1.0 + np.cos(grid.axes())
    sol = solve(problem(kernel=kern, source=lambda t: fsrc, lam=0.5, dt=5e-3))
    assert sol.snapshots.min() >= -1e-8 * float(np.max(fsrc))
    report(4, "evolution against exact multiplier",
           f"dt-halving ratios {errs[0]/errs[1]:.2f}, {errs[1]/errs[2]:.2f}; "
           f"min u = {sol.snapshots.min():.2e}; {time.time() - t0:.1f}s")


def test_criterion_05_apriori_estimate_shapes():
    t0 = time.time()
    lambdas = [1.0, 10.0, 100.0]
    # regime (a): Besov drift with a genuinely x-dependent kernel
    model = line_model(0.5, pure_stable=True)
    grid = Grid(1, 64)
    kern = JumpKernel.from_x_function(lambda x: 1.0 + 0.25 * np.sin(x[0]),
                                      kappa0=0.75, kappa1=1.25)
    drift_a = DriftField(lambda t, x: 0.25 * np.sin(x), 1, beta=1.0,
                         p=np.inf, declared_norm=0.25)
    prob_a = PdeProblem(grid=grid, model=model, kernel=kern, drift=drift_a,
                        lam=1.0, T=0.2, dt=2e-3)
    rep_a = verify_apriori(prob_a, gamma=0.4, p=np.inf, q=2,
                           lambdas=lambdas, n_sources=10, seed=105)
    assert np.isfinite(rep_a.max_ratio) and rep_a.max_ratio > 0
    assert rep_a.refinement_drift <= 0.2
    assert all(x > y for (_, x), (_, y)
               in zip(rep_a.lambda_sweep, rep_a.lambda_sweep[1:]))
    # regime (b): Holder variant with p = q = inf and small drift
    drift_b = DriftField(lambda t, x: 0.05 * np.sin(x), 1, beta=0.5,
                         p=np.inf, declared_norm=0.05)
    prob_b = PdeProblem(grid=grid, model=model,
                        kernel=JumpKernel.constant(1.0), drift=drift_b,
                        lam=1.0, T=0.2, dt=2e-3)
    rep_b = verify_apriori(prob_b, gamma=0.3, p=np.inf, q=np.inf,
                           lambdas=lambdas, n_sources=10, seed=106)
    assert np.isfinite(rep_b.max_ratio) and rep_b.max_ratio > 0
    assert rep_b.refinement_drift <= 0.2
    assert all(x > y for (_, x), (_, y)
               in zip(rep_b.lambda_sweep, rep_b.lambda_sweep[1:]))
    # regime (c): alpha = 1 with small bounded drift, H^{1,q} control
    model1 = line_model(1.0, pure_stable=True)
    drift_c = DriftField(lambda t, x: 0.05 * np.sin(x), 1, beta=1.0,
                         p=np.inf, declared_norm=0.05)
    prob_c = PdeProblem(grid=grid, model=model1,
                        kernel=JumpKernel.constant(1.0), drift=drift_c,
                        lam=1.0, T=0.2, dt=2e-3)
    rep_c = verify_h1q(prob_c, q=2, seed=107)
    assert rep_c.smallness_ok
    assert np.isfinite(rep_c.ratio) and rep_c.ratio > 0
    assert rep_c.refinement_drift() <= 0.2
    report(5, "smoothing-estimate shapes",
           f"ratios {rep_a.max_ratio:.3g} / {rep_b.max_ratio:.3g} / "
           f"{rep_c.ratio:.3g}; drifts {rep_a.refinement_drift:.3f}, "
           f"{rep_b.refinement_drift:.3f}, {rep_c.refinement_drift():.3f}; "
           f"{time.time() - t0:.1f}s")


def test_criterion_06_thinning_simulator_laws():
    t0 = time.time()
    model = line_model(0.5, pure_stable=True)
    # (a) Poisson event-count law, chi-square over 10^4 runs
    cfg = SimConfig(x0=[0.0], T=1.0, dt=1e-2, eps=0.25, thinning_bound=1.0,
                    seed=1061)
    lam = restricted_mass(model, cfg.eps) * cfg.T
    counts = np.array([_draw_events(model, cfg, path_rng(cfg.seed, i))[0].size
                       for i in range(10_000)])
    kmax = int(counts.max())
    observed = np.bincount(counts, minlength=kmax + 1).astype(float)
    expected = sstats.poisson.pmf(np.arange(kmax + 1), lam)
    expected[-1] += 1.0 - expected.sum()
    keep = expected * 10_000 >= 5.0
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum()) * 10_000
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    pval = 1.0 - sstats.chi2.cdf(chi2, df=len(obs) - 1)
    assert pval > 0.01
    # (b) acceptance frequency sigma / bound within 3 sigma
    kappa, bound = 0.7, 1.4
    cfg2 = SimConfig(x0=[0.0], T=30.0, dt=0.5, eps=0.1, thinning_bound=bound,
                     seed=1062)
    hits = total = 0
    from stablelab.sde import simulate
    for i in range(40):
        rec = simulate(model, JumpKernel.constant(kappa), None, cfg2,
                       path_index=i)
        total += len(rec.events)
        hits += sum(1 for e in rec.events if e[3])
    p = kappa / bound
    assert total > 5000
    assert abs(hits - total * p) <= 3.0 * np.sqrt(total * p * (1 - p))
    # (c) characteristic function at 10^5 paths
    tte = 0.1
    psi1 = symbol(model, [1.0]).real
    ref = float(np.exp(tte * psi1))
    assert ref == pytest.approx(0.6058, abs=2e-4)
    cfg3 = SimConfig(x0=[0.2], T=tte, dt=5e-3, eps=0.01, thinning_bound=1.0,
                     n_paths=100_000, seed=1063)
    est, se = char_function_mc(model, JumpKernel.constant(1.0), None, cfg3,
                               [1.0])
    cutoff_allowance = tte * (2.0 / 3.0) * cfg3.eps ** 1.5
    assert abs(est.real - ref) <= 3.0 * se + cutoff_allowance
    report(6, "thinning laws",
           f"chi2 p = {pval:.3f}, acceptance defect "
           f"{abs(hits - total * p) / np.sqrt(total * p * (1 - p)):.2f} sigma, "
           f"cf err {abs(est.real - ref):.2e} vs 3se = {3 * se:.2e}; "
           f"{time.time() - t0:.1f}s")


def test_criterion_07_feynman_kac_identity():
    t0 = time.time()
    model = line_model(0.5)  # unit-ball measure, alpha + beta = 1.5 > 1
    grid = Grid(1, 128)
    f = TimeSource(grid, lambda t: 1.0 + np.cos(grid.axes()))
    drift = DriftField(lambda t, x: 0.3 * np.sin(x), 1, beta=1.0, p=np.inf,
                       declared_norm=0.3)
    cfg = SimConfig(x0=[0.0], T=0.25, dt=2.5e-3, eps=0.05,
                    thinning_bound=1.0, n_paths=100_000, seed=107)
    x_grid = [[0.0], [1.2], [2.4], [3.6], [4.8]]
    rep = feynman_kac_check(model, JumpKernel.constant(1.0), drift, f,
                            x_grid, cfg, pde_dt=2.5e-3)
    assert rep.balance_ok
    for x0, lhs, est, se, allowance, ok in rep.rows:
        assert ok, (f"identity failed at x = {x0}: u0 = {lhs:.6f}, "
                    f"mc = {est:.6f}, 3se = {3 * se:.2e}, "
                    f"allowance = {allowance:.2e}")
    worst = max(abs(r[1] - r[2]) for r in rep.rows)
    report(7, "backward-solution identity",
           f"worst defect {worst:.3e}, allowance "
           f"{rep.rows[0][4]:.3e}; {time.time() - t0:.1f}s")


def test_criterion_08_krylov_estimate():
    t0 = time.time()
    model = line_model(0.5)
    grid = Grid(1, 64)
    drift = DriftField(lambda t, x: 0.2 * np.sin(x), 1, beta=1.0, p=np.inf,
                       declared_norm=0.2)
    kern = JumpKernel.constant(1.0)
    x_grid = [[0.0], [1.5], [3.0], [4.5]]
    # (a) f = 1 integrates to exactly T
    ones = TimeSource(grid, lambda t: np.ones(grid.shape))
    cfg_small = SimConfig(x0=[0.0], T=0.5, dt=1e-2, eps=0.15,
                          thinning_bound=1.0, n_paths=50, seed=108)
    rep1 = krylov_estimate(model, kern, drift, ones, x_grid, cfg_small)
    for _, est, se in rep1.rows:
        assert est == pytest.approx(0.5, abs=1e-12)
    # (b) ratio stable as paths quadruple
    f = TimeSource(grid, lambda t: 1.0 + 0.5 * np.sin(grid.axes()))
    cfg_a = SimConfig(x0=[0.0], T=0.5, dt=1e-2, eps=0.15, thinning_bound=1.0,
                      n_paths=5000, seed=109)
    cfg_b = SimConfig(x0=[0.0], T=0.5, dt=1e-2, eps=0.15, thinning_bound=1.0,
                      n_paths=20_000, seed=109)
    ra = krylov_estimate(model, kern, drift, f, x_grid, cfg_a)
    rb = krylov_estimate(model, kern, drift, f, x_grid, cfg_b)
    se_budget = max(r[2] for r in ra.rows) + max(r[2] for r in rb.rows)
    assert abs(ra.sup_estimate - rb.sup_estimate) <= 3.0 * se_budget
    assert np.isfinite(ra.ratio) and ra.ratio > 0
    report(8, "path-integral bound",
           f"sup ratio {ra.ratio:.4f} -> {rb.ratio:.4f} under 4x paths; "
           f"{time.time() - t0:.1f}s")


def test_criterion_09_zvonkin_verification():
    t0 = time.time()
    model = line_model(0.5, tail=Tail.powerlaw(30.0))
    grid = Grid(1, 128)
    kern = JumpKernel.constant(1.0)
    drift = DriftField(lambda t, x: 0.2 * np.sin(x), 1, beta=1.0, p=np.inf,
                       declared_norm=0.2)
    zmap = build(model, kern, drift,
                 [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0],
                 grid, T=0.4, dt=2e-3)
    assert zmap.certificate_value() <= 0.5
    bil = bilipschitz_sample_check(zmap, n_pairs=10_000, seed=9)
    assert bil["forward_ratio_min"] >= 0.5 - 1e-9
    assert bil["forward_ratio_max"] <= 1.5 + 1e-9
    assert bil["inverse_ratio_max"] <= 2.0 + 1e-9
    reps = []
    for dt in (0.02, 0.01):
        cfg = SimConfig(x0=[1.0], T=0.4, dt=dt, eps=0.2, thinning_bound=1.0,
                        seed=110)
        reps.append(verify_transform(model, kern, drift, zmap, cfg,
                                     n_replicas=50))
    ratio = reps[1].mean_discrepancy / reps[0].mean_discrepancy
    assert 0.35 <= ratio <= 0.65
    report(9, "transform verification",
           f"lambda = {zmap.lam:g}, certificate "
           f"{zmap.certificate_value():.3f}, halving ratio {ratio:.3f}; "
           f"{time.time() - t0:.1f}s")


def test_criterion_10_coupled_pathwise_uniqueness():
    t0 = time.time()
    model = line_model(0.5)
    lip = 0.5
    drift = DriftField(lambda t, x: lip * np.sin(x), 1, beta=1.0, p=np.inf,
                       declared_norm=lip)
    kern = JumpKernel.constant(1.0)
    delta = 1e-8
    rates, seps = [], []
    for i in range(100):
        cfg = SimConfig(x0=[0.0], T=1.0, dt=2e-3, eps=0.3,
                        thinning_bound=1.0, seed=111)
        a, b = simulate_coupled(model, kern, drift, cfg, [0.0], [delta],
                                path_index=i)
        sep = np.abs(a.states[:, 0] - b.states[:, 0])
        seps.append(float(sep.max()))
        rates.append(float(np.log(sep.max() / delta)))
    fitted = max(rates)
    assert lip / 2.0 <= fitted <= 2.0 * lip
    assert max(seps) <= delta * np.exp(2.0 * lip)
    report(10, "coupled separation growth",
           f"fitted exponent {fitted:.3f} vs Lip(b) = {lip}; max separation "
           f"{max(seps):.3e}; {time.time() - t0:.1f}s")
