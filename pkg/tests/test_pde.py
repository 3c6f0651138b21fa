import numpy as np
import pytest

from stablelab.fields import Grid, GridField
from stablelab.levy import LevyModel, SphericalMeasure, symbol
from stablelab.nonlocal_op import DriftField, JumpKernel
from stablelab.pde import (
    ConfigurationError, InstabilityError, PdeProblem, refine_field_values,
    solve, solve_quasilinear, verify_apriori, verify_h1q,
)


@pytest.fixture
def model():
    return LevyModel(0.5, SphericalMeasure.line(1.0), pure_stable=True)


@pytest.fixture
def grid():
    return Grid(1, 128)


def make_problem(grid, model, **kw):
    base = dict(grid=grid, model=model, kernel=JumpKernel.constant(1.0),
                T=1.0, dt=5e-3)
    base.update(kw)
    return PdeProblem(**base)


class TestLinearSolve:
    def test_zero_source_zero_solution(self, grid, model):
        sol = solve(make_problem(grid, model, source=None, lam=1.0))
        assert sol.sup_linf() == 0.0

    def test_constant_source_closed_form(self, grid, model):
        # u(t) = c (1 - exp(-lambda t)) / lambda, spatially constant
        c, lam = 0.8, 2.0
        prob = make_problem(grid, model, source=lambda t: np.full(grid.shape, c),
                            lam=lam, T=0.5, dt=1e-2)
        sol = solve(prob)
        for k, t in enumerate(sol.times):
            expected = c * (1.0 - np.exp(-lam * t)) / lam
            assert np.max(np.abs(sol.snapshots[k] - expected)) < 1e-8

    def test_cosine_source_multiplier_oracle(self, grid, model):
        # per-mode mild solution with time-independent forcing is exact
        lam = 1.0
        psi1 = symbol(model, [1.0]).real
        f = np.cos(grid.axes())
        prob = make_problem(grid, model, source=lambda t: f, lam=lam,
                            T=4.0, dt=2e-2)
        sol = solve(prob)
        for k in (10, 100, 200):
            t = sol.times[k]
            amp = (1.0 - np.exp((psi1 - lam) * t)) / (lam - psi1)
            assert np.max(np.abs(sol.snapshots[k] - amp * f)) < 1e-10
        # long-time limit cos(x) / (1 - psi(1))
        assert (1.0 / (lam - psi1)) == pytest.approx(0.16630, abs=5e-5)
        assert np.max(np.abs(sol.snapshots[-1] - f / (lam - psi1))) < 1e-6

    def test_order_one_in_dt_against_duhamel(self, grid, model):
        # time-dependent forcing makes the frozen-source rule order one;
        # oracle is the closed-form Duhamel integral per mode
        lam = 0.5
        a = symbol(model, [1.0]).real - lam
        T = 0.5
        f = np.cos(grid.axes())

        def source(t):
            return (1.0 + np.sin(2.0 * t)) * f

        exact_amp = ((np.exp(a * T) - 1.0) / a
                     + (2.0 * np.exp(a * T) - 2.0 * np.cos(2.0 * T)
                        - a * np.sin(2.0 * T)) / (a * a + 4.0))
        errs = []
        for dt in (2e-2, 1e-2, 5e-3):
            prob = make_problem(grid, model, source=source, lam=lam, T=T, dt=dt)
            sol = solve(prob)
            errs.append(np.max(np.abs(sol.snapshots[-1] - exact_amp * f)))
        assert errs[0] / errs[1] > 1.8
        assert errs[1] / errs[2] > 1.8

    def test_positivity_preservation(self, grid, model):
        f = 1.0 + np.cos(grid.axes())  # nonnegative source
        kernel = JumpKernel.from_x_function(
            lambda x: 1.0 + 0.3 * np.sin(x[0]), kappa0=0.7, kappa1=1.3)
        prob = make_problem(grid, model, kernel=kernel,
                            source=lambda t: f, lam=0.5, T=0.5, dt=5e-3)
        sol = solve(prob)
        assert sol.snapshots.min() >= -1e-8 * np.max(f)

    def test_backward_constant_source(self, grid, model):
        c, lam, T = 1.4, 1.5, 0.75
        prob = make_problem(grid, model, direction="backward",
                            source=lambda t: np.full(grid.shape, c),
                            lam=lam, T=T, dt=5e-3)
        sol = solve(prob)
        assert np.max(np.abs(sol.snapshots[-1])) == 0.0  # u(T) = 0
        for k, t in enumerate(sol.times):
            expected = c * (1.0 - np.exp(-lam * (T - t))) / lam
            assert np.max(np.abs(sol.snapshots[k] - expected)) < 1e-8

    def test_drift_cfl_guard(self, grid, model):
        prob = make_problem(grid, model, drift=DriftField.constant([50.0]),
                            dt=0.1)
        with pytest.raises(ConfigurationError):
            solve(prob)

    def test_instability_detected(self, model):
        # dt sits in the window where the explicit jump remainder amplifies
        # faster than the reference multiplier damps
        g = Grid(1, 64)
        kernel = JumpKernel.from_x_function(
            lambda x: 5.0 + 4.4 * np.sin(x[0]), kappa0=0.6, kappa1=9.4)
        prob = make_problem(g, model, kernel=kernel,
                            source=lambda t: np.cos(g.axes()),
                            T=40.0, dt=0.1)
        with pytest.raises(InstabilityError):
            solve(prob)

    def test_alpha_above_one_rejected(self, grid):
        with pytest.warns(UserWarning):
            m = LevyModel(1.5, SphericalMeasure.line(1.0))
        with pytest.raises(ConfigurationError):
            solve(make_problem(grid, m, source=lambda t: np.cos(grid.axes())))


class TestQuasilinear:
    def test_kappa_zero_bitwise_equal(self, grid, model):
        f = np.cos(grid.axes())
        a = solve(make_problem(grid, model, source=lambda t: f, lam=1.0,
                               T=0.2, dt=5e-3))
        b = solve_quasilinear(make_problem(grid, model, source=lambda t: f,
                                           lam=1.0, T=0.2, dt=5e-3,
                                           quasilinear_kappa=0.0))
        assert np.array_equal(a.snapshots, b.snapshots)

    def test_constant_source_unchanged(self, grid, model):
        # spatially constant solution has |grad u| = 0
        c, lam = 0.8, 2.0
        prob = make_problem(grid, model,
                            source=lambda t: np.full(grid.shape, c),
                            lam=lam, T=0.3, dt=5e-3, quasilinear_kappa=0.4)
        sol = solve_quasilinear(prob)
        for k, t in enumerate(sol.times):
            expected = c * (1.0 - np.exp(-lam * t)) / lam
            assert np.max(np.abs(sol.snapshots[k] - expected)) < 1e-8

    def test_small_kappa_expansion_richardson(self, grid, model):
        # u_k = u_0 + k du + O(k^2): successive difference quotients of the
        # kappa-derivative must shrink linearly in kappa
        f = np.cos(grid.axes())

        def final(kappa):
            prob = make_problem(grid, model, source=lambda t: f, lam=1.0,
                                T=0.3, dt=5e-3, quasilinear_kappa=kappa)
            return solve_quasilinear(prob).snapshots[-1]

        u0 = final(0.0)
        k = 0.2
        d1 = (final(k) - u0) / k
        d2 = (final(k / 2) - u0) / (k / 2)
        d3 = (final(k / 4) - u0) / (k / 4)
        r1 = np.max(np.abs(d1 - d2))
        r2 = np.max(np.abs(d2 - d3))
        assert r1 / r2 == pytest.approx(2.0, rel=0.35)


class TestRefinement:
    def test_refine_exact_for_bandlimited(self):
        g = Grid(1, 64)
        vals = np.cos(3.0 * g.axes()) + 0.5 * np.sin(7.0 * g.axes())
        fine = refine_field_values(vals)
        gf = Grid(1, 128)
        expected = np.cos(3.0 * gf.axes()) + 0.5 * np.sin(7.0 * gf.axes())
        assert np.max(np.abs(fine - expected)) < 1e-12

    def test_refine_2d(self):
        g = Grid(2, 16)
        xs = g.meshgrid()
        vals = np.cos(xs[0]) * np.cos(2 * xs[1])
        fine = refine_field_values(vals)
        gf = Grid(2, 32)
        xf = gf.meshgrid()
        assert np.max(np.abs(fine - np.cos(xf[0]) * np.cos(2 * xf[1]))) < 1e-12


class TestApriori:
    def test_ratio_finite_stable_and_lambda_decay(self, model):
        g = Grid(1, 64)
        drift = DriftField(lambda t, x: 0.2 * np.sin(x), 1, beta=1.0,
                           p=np.inf, declared_norm=0.2)
        prob = PdeProblem(grid=g, model=model, kernel=JumpKernel.constant(1.0),
                          drift=drift, lam=1.0, T=0.2, dt=2e-3)
        rep = verify_apriori(prob, gamma=0.4, p=np.inf, q=2, lambdas=[1, 10, 100],
                             n_sources=3, seed=0)
        assert np.isfinite(rep.max_ratio) and rep.max_ratio > 0
        assert rep.refinement_drift <= 0.2
        assert rep.lambda_monotone
        assert rep.passed()

    def test_regime_warning(self, model):
        g = Grid(1, 64)
        drift = DriftField(lambda t, x: 0.1 * np.sin(x), 1, beta=0.2,
                           p=np.inf, declared_norm=0.1)
        prob = PdeProblem(grid=g, model=model, kernel=JumpKernel.constant(1.0),
                          drift=drift, lam=1.0, T=0.1, dt=2e-3)
        rep = verify_apriori(prob, gamma=0.3, p=np.inf, q=2, lambdas=[1, 10],
                             n_sources=1, seed=1)
        assert rep.regime_warnings


class TestH1q:
    def test_ratio_and_smallness(self):
        m1 = LevyModel(1.0, SphericalMeasure.line(1.0), pure_stable=True)
        g = Grid(1, 64)
        drift = DriftField(lambda t, x: 0.05 * np.sin(x), 1, beta=1.0,
                           p=np.inf, declared_norm=0.05)
        prob = PdeProblem(grid=g, model=m1, kernel=JumpKernel.constant(1.0),
                          drift=drift, lam=1.0, T=0.2, dt=2e-3)
        rep = verify_h1q(prob, q=2)
        assert rep.smallness_ok
        assert np.isfinite(rep.ratio) and rep.ratio > 0
        assert rep.refinement_drift() <= 0.2

    def test_alpha_requirement(self, grid, model):
        prob = make_problem(grid, model)
        with pytest.raises(Exception):
            verify_h1q(prob, q=2)
