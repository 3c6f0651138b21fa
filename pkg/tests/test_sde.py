import numpy as np
import pytest
from scipy import stats

from stablelab.fields import Grid
from stablelab.levy import LevyModel, SphericalMeasure, restricted_mass, symbol
from stablelab.nonlocal_op import DriftField, JumpKernel
from stablelab.sde import (
    FeynmanKacReport, SimConfig, ThinningBoundError, TimeSource,
    char_function_mc, feynman_kac_check, krylov_estimate, path_rng,
    simulate, simulate_coupled, _draw_events, _Compensator,
)


@pytest.fixture
def model():
    return LevyModel(0.5, SphericalMeasure.line(1.0), pure_stable=True)


def base_cfg(**kw):
    d = dict(x0=[0.0], T=1.0, dt=1e-2, eps=0.1, thinning_bound=1.0,
             n_paths=1, seed=42)
    d.update(kw)
    return SimConfig(**d)


class TestSinglePath:
    def test_pure_drift_ode(self):
        # no jump mass: eps = 1 with an empty tail degenerates to dX = b dt
        m = LevyModel(0.5, SphericalMeasure.line(1.0))
        cfg = base_cfg(eps=1.0, dt=1e-3)
        rec = simulate(m, JumpKernel.constant(1.0), DriftField.constant([1.0]),
                       cfg)
        assert len(rec.events) == 0
        assert rec.states[-1][0] == pytest.approx(1.0, abs=1e-2)
        assert len(rec.times) == len(rec.states)

    def test_acceptance_rate_constant_kernel(self, model):
        kappa, bound = 0.6, 1.5
        cfg = base_cfg(eps=0.2, thinning_bound=bound, T=300.0, dt=0.5, seed=3)
        rec = simulate(model, JumpKernel.constant(kappa), None, cfg)
        acc = np.array([e[3] for e in rec.events])
        n = len(acc)
        assert n > 2500
        p = kappa / bound
        assert abs(acc.sum() - n * p) <= 3.0 * np.sqrt(n * p * (1 - p))

    def test_event_marks_consistent(self, model):
        # accepted iff r <= sigma(t, X_-, z); state jumps by z exactly then
        kern = JumpKernel.from_x_function(lambda x: 1.0 + 0.4 * np.sin(x[0]),
                                          kappa0=0.6, kappa1=1.4)
        cfg = base_cfg(eps=0.15, thinning_bound=1.5, T=5.0, seed=7)
        rec = simulate(model, kern, DriftField.constant([0.3]), cfg)
        assert len(rec.events) > 20
        for t, z, r, ok in rec.events:
            i = np.nonzero(rec.times == t)[0][-1]
            x_before = rec.states[i - 1]
            sigma = 1.0 + 0.4 * np.sin(x_before[0])
            assert ok == (r <= sigma)
            jump = rec.states[i] - x_before
            assert np.allclose(jump, z if ok else 0.0, atol=1e-14)

    def test_determinism(self, model):
        cfg = base_cfg(T=2.0, seed=11)
        k = JumpKernel.constant(1.0)
        a = simulate(model, k, DriftField.constant([0.2]), cfg, path_index=5)
        b = simulate(model, k, DriftField.constant([0.2]), cfg, path_index=5)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.times, b.times)

    def test_thinning_bound_guard(self, model):
        cfg = base_cfg(thinning_bound=0.5)
        with pytest.raises(ThinningBoundError):
            simulate(model, JumpKernel.constant(1.0), None, cfg)


class TestEventLaw:
    def test_poisson_count_chi_square(self, model):
        cfg = base_cfg(eps=0.25, T=1.0, thinning_bound=1.0, seed=123)
        lam = restricted_mass(model, cfg.eps) * cfg.thinning_bound * cfg.T
        counts = np.array([
            _draw_events(model, cfg, path_rng(cfg.seed, i))[0].size
            for i in range(10_000)])
        kmax = int(counts.max())
        observed = np.bincount(counts, minlength=kmax + 1).astype(float)
        expected = np.array([stats.poisson.pmf(k, lam) for k in range(kmax + 1)])
        expected[-1] = 1.0 - expected[:-1].sum()  # fold the tail
        observed[-1] = 10_000 - observed[:-1].sum()
        keep = expected * 10_000 >= 5.0
        # merge sparse cells into the tail for a valid chi-square
        obs = np.append(observed[keep], observed[~keep].sum())
        exp = np.append(expected[keep], expected[~keep].sum()) * 10_000
        chi2 = np.sum((obs - exp) ** 2 / exp)
        p = 1.0 - stats.chi2.cdf(chi2, df=len(obs) - 1)
        assert p > 0.01

    def test_mean_event_count(self, model):
        cfg = base_cfg(eps=0.2, T=2.0, thinning_bound=1.3, seed=5)
        lam = restricted_mass(model, cfg.eps) * cfg.thinning_bound * cfg.T
        counts = [len(_draw_events(model, cfg, path_rng(cfg.seed, i))[0])
                  for i in range(2000)]
        assert np.mean(counts) == pytest.approx(lam, rel=0.05)


class TestCharacteristicFunction:
    def test_matches_symbol_exponential(self, model):
        # E cos(X_t - x0) at t = 0.1 against exp(t psi(1))
        t = 0.1
        psi1 = symbol(model, [1.0]).real
        ref = np.exp(t * psi1)
        assert ref == pytest.approx(0.6058, abs=2e-4)
        cfg = base_cfg(x0=[0.3], T=t, dt=5e-3, eps=0.01, n_paths=100_000,
                       seed=2024)
        est, se = char_function_mc(model, JumpKernel.constant(1.0), None,
                                   cfg, [1.0])
        # cutoff allowance: discarded symbol mass below eps, times t
        cut = t * (2.0 / 3.0) * cfg.eps ** 1.5
        assert abs(est.real - ref) <= 3.0 * se + cut
        assert abs(est.imag) <= 3.0 * se + cut

    def test_variable_kernel_acceptance_law(self, model):
        # with sigma(x) = 1 + 0.5 sin(x) frozen near x0, early-time
        # acceptance frequency tracks sigma(x0)/bound
        kern = JumpKernel.from_x_function(lambda x: 1.0 + 0.5 * np.sin(x[0]),
                                          kappa0=0.5, kappa1=1.5)
        cfg = base_cfg(x0=[np.pi / 2.0], T=0.01, dt=1e-3, eps=0.3,
                       thinning_bound=2.0, seed=31)
        hits, total = 0, 0
        for i in range(4000):
            rec = simulate(model, kern, None, cfg, path_index=i)
            for _, _, _, ok in rec.events[:1]:   # first event: state == x0
                total += 1
                hits += ok
        p = 1.5 / 2.0
        assert total > 500
        assert abs(hits - total * p) <= 3.0 * np.sqrt(total * p * (1 - p))


class TestCoupled:
    def test_identical_starts_identical_paths(self, model):
        cfg = base_cfg(T=2.0, seed=17)
        a, b = simulate_coupled(model, JumpKernel.constant(1.0),
                                DriftField.constant([0.1]), cfg, [0.5], [0.5])
        assert np.array_equal(a.states, b.states)

    def test_x_independent_kernel_shares_decisions(self, model):
        cfg = base_cfg(T=3.0, seed=19)
        drift = DriftField(lambda t, x: 0.3 * np.sin(x), 1)
        a, b = simulate_coupled(model, JumpKernel.constant(1.0), drift, cfg,
                                [0.0], [1.0])
        assert len(a.events) == len(b.events)
        for ea, eb in zip(a.events, b.events):
            assert ea[3] == eb[3]

    def test_gronwall_growth_rate(self, model):
        # b = L sin(x) with both paths near 0: separation grows like
        # delta exp(L t) until a jump relocates the pair
        lip = 0.5
        drift = DriftField(lambda t, x: lip * np.sin(x), 1, beta=1.0)
        delta = 1e-8
        rates = []
        seps = []
        for i in range(100):
            cfg = base_cfg(T=1.0, dt=2e-3, eps=0.3, seed=99)
            a, b = simulate_coupled(model, JumpKernel.constant(1.0), drift,
                                    cfg, [0.0], [delta], path_index=i)
            sep = np.abs(a.states[:, 0] - b.states[:, 0])
            seps.append(sep.max())
            rates.append(np.log(sep.max() / delta))
        fitted = np.max(rates)  # replicas without jumps realize the full rate
        assert lip / 2.0 <= fitted <= 2.0 * lip
        assert max(seps) <= delta * np.exp(2.0 * lip)


class TestCompensator:
    def test_symmetric_zero_matches_quadrature(self):
        m = LevyModel(1.0, SphericalMeasure.line(1.0))
        k = JumpKernel.constant(1.0)
        cfg_a = base_cfg(T=1.0, eps=0.2, seed=4,
                         compensator_mode="symmetric-zero")
        cfg_b = base_cfg(T=1.0, eps=0.2, seed=4,
                         compensator_mode="quadrature")
        a = simulate(m, k, None, cfg_a)
        b = simulate(m, k, None, cfg_b)
        assert np.max(np.abs(a.states - b.states)) < 1e-10

    def test_quadrature_compensator_oracle(self):
        # sigma depending on the sign of z: the drift correction equals
        # -0.5 integral_eps^1 r * r^-2 dr = -0.5 ln(1/eps)
        m = LevyModel(1.0, SphericalMeasure.line(1.0))
        kern = JumpKernel(lambda t, x, z: np.broadcast_to(
            1.0 + 0.5 * (z[0] > 0), np.shape(x)[1:]),
            kappa0=1.0, kappa1=1.5, z_symmetric=False)
        eps = 0.2
        cfg = base_cfg(eps=eps, compensator_mode="quadrature")
        comp = _Compensator(m, kern, cfg)
        val = comp(0.0, np.zeros((1, 1)), kern)
        oracle = -0.5 * np.log(1.0 / eps)
        assert val[0, 0] == pytest.approx(oracle, rel=1e-8)

    def test_alpha_below_one_inactive(self, model):
        cfg = base_cfg(compensator_mode="quadrature")
        comp = _Compensator(model, JumpKernel.constant(1.0), cfg)
        assert not comp.active


class TestKrylov:
    def test_constant_one_gives_T_exactly(self, model):
        g = Grid(1, 64)
        f = TimeSource(g, lambda t: np.ones(g.shape))
        cfg = base_cfg(T=0.7, dt=1e-2, eps=0.2, n_paths=50, seed=8)
        rep = krylov_estimate(model, JumpKernel.constant(1.0), None, f,
                              [[0.0], [1.0]], cfg)
        for _, est, se in rep.rows:
            assert est == pytest.approx(0.7, abs=1e-12)
            assert se == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative_integrand(self, model):
        g = Grid(1, 64)
        f = TimeSource(g, lambda t: 1.0 + np.cos(g.axes()))
        cfg = base_cfg(T=0.5, dt=1e-2, eps=0.2, n_paths=400, seed=9)
        rep = krylov_estimate(model, JumpKernel.constant(1.0),
                              DriftField.constant([0.4]), f,
                              [[0.0], [2.0]], cfg)
        assert all(r[1] >= 0.0 for r in rep.rows)
        assert np.isfinite(rep.ratio) and rep.ratio > 0

    def test_ratio_stable_as_paths_quadruple(self, model):
        g = Grid(1, 64)
        f = TimeSource(g, lambda t: 1.0 + 0.5 * np.sin(g.axes()))
        cfgs = [base_cfg(T=0.4, dt=1e-2, eps=0.15, n_paths=n, seed=10)
                for n in (800, 3200)]
        k = JumpKernel.constant(1.0)
        reps = [krylov_estimate(model, k, None, f, [[0.0], [1.5], [3.0]], c)
                for c in cfgs]
        se_scale = max(max(r[2] for r in rep.rows) for rep in reps)
        assert abs(reps[0].sup_estimate - reps[1].sup_estimate) \
            <= 4.0 * se_scale


class TestFeynmanKac:
    def test_constant_source_closed_form(self, model):
        # f = c: u(0, x) = -cT exactly and the path integral is cT exactly
        g = Grid(1, 64)
        c = 0.9
        f = TimeSource(g, lambda t: np.full(g.shape, c))
        cfg = base_cfg(T=0.3, dt=5e-3, eps=0.1, n_paths=100, seed=12)
        rep = feynman_kac_check(model, JumpKernel.constant(1.0), None, f,
                                [[0.0], [1.0]], cfg, pde_dt=5e-3)
        for x0, lhs, est, se, allowance, ok in rep.rows:
            assert est == pytest.approx(c * 0.3, abs=1e-12)
            assert lhs == pytest.approx(c * 0.3, abs=1e-9)
            assert ok

    def test_cosine_source_with_drift(self, model):
        g = Grid(1, 128)
        f = TimeSource(g, lambda t: 1.0 + np.cos(g.axes()))
        drift = DriftField(lambda t, x: 0.3 * np.sin(x), 1, beta=1.0,
                           p=np.inf, declared_norm=0.3)
        cfg = base_cfg(T=0.25, dt=2.5e-3, eps=0.05, n_paths=20_000, seed=13)
        rep = feynman_kac_check(model, JumpKernel.constant(1.0), drift, f,
                                [[0.0], [1.5], [3.0]], cfg, pde_dt=2.5e-3)
        assert rep.balance_ok
        assert rep.all_passed()

    def test_zero_source(self, model):
        g = Grid(1, 64)
        f = TimeSource(g, lambda t: np.zeros(g.shape))
        cfg = base_cfg(T=0.2, dt=5e-3, eps=0.1, n_paths=50, seed=14)
        rep = feynman_kac_check(model, JumpKernel.constant(1.0), None, f,
                                [[0.5]], cfg, pde_dt=5e-3)
        x0, lhs, est, se, allowance, ok = rep.rows[0]
        assert lhs == 0.0 and est == 0.0 and ok
