"""Jump-SDE simulation by thinning a dominating Poisson measure.

A path proposes jump events from the time-homogeneous Poisson process with
intensity thinning_bound * nu({|z| > eps}); each event carries a jump z
drawn from the normalized restricted measure and an independent uniform
mark r on [0, thinning_bound].  The jump is accepted exactly when
r <= sigma(t, X_-, z), which realizes the state-dependent intensity
sigma(t, x, z) nu(dz) without ever evaluating its total mass.  Between
events the drift is integrated by explicit Euler with step at most dt.

Jumps below eps are dropped; their first-moment mass is reported through
the model quadrature machinery.  At alpha = 1 the compensator of the
small-jump integral re-enters as a drift correction, computed by
quadrature or identically zero for z-symmetric kernels over symmetric
measures.

Reproducibility: path i draws from a counter-based generator whose counter
block is (0, 0, i, 0) under the run key, so any parallel schedule yields
bitwise identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import Grid, GridField
from .levy import model_quadrature, restricted_mass, sample_jumps
from .lp import DyadicPartition, besov_norm_report
from .pde import PdeProblem, solve

__all__ = [
    "ThinningBoundError", "SimConfig", "PathRecord", "TimeSource",
    "path_rng", "simulate", "simulate_coupled", "char_function_mc",
    "krylov_estimate", "feynman_kac_check", "KrylovReport",
    "FeynmanKacReport",
]


class ThinningBoundError(RuntimeError):
    pass


@dataclass
class SimConfig:
    x0: np.ndarray
    T: float
    dt: float
    eps: float
    thinning_bound: float
    n_paths: int = 1
    seed: int = 0
    compensator_mode: str = "symmetric-zero"   # or "quadrature"

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        # eps = 1 is allowed and leaves only the tail (possibly nothing),
        # which degenerates the dynamics to the drift ODE
        if not (0.0 < self.eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("need T > 0 and dt > 0")
        if self.compensator_mode not in ("symmetric-zero", "quadrature"):
            raise ValueError(f"unknown compensator mode "
                             f"{self.compensator_mode!r}")

    def validate_against(self, kernel):
        if self.thinning_bound < kernel.kappa1:
            raise ThinningBoundError(
                f"thinning bound {self.thinning_bound:g} below the kernel "
                f"bound {kernel.kappa1:g}")


@dataclass
class PathRecord:
    times: np.ndarray
    states: np.ndarray               # (len(times), d)
    events: list                     # (t, z, r, accepted)

    def state_at(self, t):
        i = int(np.searchsorted(self.times, t, side="right") - 1)
        return self.states[max(i, 0)]


def path_rng(seed, index):
    """Counter-based stream for one path: Philox keyed by the run seed with
    counter block (0, 0, index, 0)."""
    counter = np.array([0, 0, index, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


def _draw_events(model, cfg, rng):
    lam = restricted_mass(model, cfg.eps)
    rate = cfg.thinning_bound * lam
    k = int(rng.poisson(rate * cfg.T))
    times = np.sort(rng.uniform(0.0, cfg.T, size=k))
    zs = sample_jumps(model, cfg.eps, rng, k) if k else np.zeros((0, model.dim))
    rs = rng.uniform(0.0, cfg.thinning_bound, size=k)
    return times, zs, rs


def _compensator_nodes(model, eps):
    nodes = model_quadrature(model, eps_low=eps, phase_rate=0.0)
    keep = nodes.small & (np.linalg.norm(nodes.z, axis=1) > eps * (1 - 1e-12))
    return nodes.z[keep], nodes.w[keep]


class _Compensator:
    """Drift correction reinstating the compensated small jumps (alpha = 1)."""

    def __init__(self, model, kernel, cfg):
        self.active = (model.alpha >= 1.0
                       and cfg.compensator_mode == "quadrature")
        if self.active:
            self.z, self.w = _compensator_nodes(model, cfg.eps)

    def __call__(self, t, x_cols, kernel):
        # x_cols has components-first shape (d, n)
        if not self.active:
            return 0.0
        out = np.zeros_like(x_cols)
        for z, w in zip(self.z, self.w):
            sig = np.asarray(kernel(t, x_cols, z), dtype=float)
            out -= w * z[:, None] * sig[None, :]
        return out


def _accept(kernel, t, x, z, r, bound):
    sig = float(np.asarray(kernel(t, x[:, None], z)).ravel()[0])
    if sig > bound * (1.0 + 1e-12):
        raise ThinningBoundError(
            f"sigma = {sig:g} observed above the thinning bound {bound:g}")
    return r <= sig


def simulate(model, kernel, drift, cfg, path_index=0, rng=None):
    """One path of the thinned-measure dynamics, with full event marks."""
    cfg.validate_against(kernel)
    if rng is None:
        rng = path_rng(cfg.seed, path_index)
    ev_t, ev_z, ev_r = _draw_events(model, cfg, rng)
    comp = _Compensator(model, kernel, cfg)
    x = cfg.x0.copy()
    times = [0.0]
    states = [x.copy()]
    events = []

    def euler_to(t_from, t_to):
        nonlocal x
        span = t_to - t_from
        if span <= 0:
            return
        nsub = max(1, int(math.ceil(span / cfg.dt)))
        h = span / nsub
        for m in range(nsub):
            t = t_from + m * h
            vel = np.zeros_like(x)
            if drift is not None:
                vel = vel + drift(t, x[:, None])[:, 0]
            if comp.active:
                vel = vel + comp(t, x[:, None], kernel)[:, 0]
            x = x + h * vel
            times.append(t + h)
            states.append(x.copy())

    t_prev = 0.0
    for te, z, r in zip(ev_t, ev_z, ev_r):
        euler_to(t_prev, te)
        ok = _accept(kernel, te, x, z, r, cfg.thinning_bound)
        if ok:
            x = x + z
        events.append((float(te), z.copy(), float(r), bool(ok)))
        times.append(float(te))
        states.append(x.copy())
        t_prev = te
    euler_to(t_prev, cfg.T)
    return PathRecord(np.asarray(times), np.asarray(states), events)


def simulate_coupled(model, kernel, drift, cfg, x0_a, x0_b, path_index=0):
    """Two solutions driven by one realization of the Poisson measure.

    The event stream (t_i, z_i, r_i) is drawn once; each path accepts
    against its own state, which is the coupling used by the pathwise
    uniqueness experiments.
    """
    cfg.validate_against(kernel)
    rng = path_rng(cfg.seed, path_index)
    ev_t, ev_z, ev_r = _draw_events(model, cfg, rng)
    comp = _Compensator(model, kernel, cfg)

    def run(x0):
        x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
        times = [0.0]
        states = [x.copy()]
        events = []

        def euler_to(t_from, t_to):
            nonlocal x
            span = t_to - t_from
            if span <= 0:
                return
            nsub = max(1, int(math.ceil(span / cfg.dt)))
            h = span / nsub
            for m in range(nsub):
                t = t_from + m * h
                vel = np.zeros_like(x)
                if drift is not None:
                    vel = vel + drift(t, x[:, None])[:, 0]
                if comp.active:
                    vel = vel + comp(t, x[:, None], kernel)[:, 0]
                x = x + h * vel
                times.append(t + h)
                states.append(x.copy())

        t_prev = 0.0
        for te, z, r in zip(ev_t, ev_z, ev_r):
            euler_to(t_prev, te)
            ok = _accept(kernel, te, x, z, r, cfg.thinning_bound)
            if ok:
                x = x + z
            events.append((float(te), z.copy(), float(r), bool(ok)))
            times.append(float(te))
            states.append(x.copy())
            t_prev = te
        euler_to(t_prev, cfg.T)
        return PathRecord(np.asarray(times), np.asarray(states), events)

    return run(x0_a), run(x0_b)


# ---------------------------------------------------------------------------
# vectorized Monte Carlo engine
# ---------------------------------------------------------------------------


def _gather_events(model, cfg, n_paths):
    """Per-path event tables merged into one time-sorted global table."""
    pid, ts, zs, rs = [], [], [], []
    for i in range(n_paths):
        rng = path_rng(cfg.seed, i)
        t, z, r = _draw_events(model, cfg, rng)
        if t.size:
            pid.append(np.full(t.size, i))
            ts.append(t)
            zs.append(z)
            rs.append(r)
    if not ts:
        return (np.zeros(0, int), np.zeros(0), np.zeros((0, model.dim)),
                np.zeros(0))
    pid = np.concatenate(pid)
    ts = np.concatenate(ts)
    zs = np.concatenate(zs)
    rs = np.concatenate(rs)
    order = np.argsort(ts, kind="stable")
    return pid[order], ts[order], zs[order], rs[order]


def _run_batch(model, kernel, drift, cfg, collect=None):
    """March all paths on the common step grid; events fire in time order.

    collect(t, states) is accumulated as a left-endpoint time integral and
    returned alongside the terminal states.
    """
    cfg.validate_against(kernel)
    n = cfg.n_paths
    d = model.dim
    states = np.tile(cfg.x0, (n, 1))
    pid, ts, zs, rs = _gather_events(model, cfg, n)
    comp = _Compensator(model, kernel, cfg)
    nsteps = max(1, int(round(cfg.T / cfg.dt)))
    dt = cfg.T / nsteps
    acc = np.zeros(n) if collect is not None else None
    bucket_hi = np.searchsorted(ts, (np.arange(nsteps) + 1) * dt, side="right")
    lo = 0
    for k in range(nsteps):
        t = k * dt
        if collect is not None:
            acc += collect(t, states) * dt
        if drift is not None or comp.active:
            xc = states.T.copy()
            vel = np.zeros_like(xc)
            if drift is not None:
                vel += drift(t, xc)
            if comp.active:
                vel += comp(t, xc, kernel)
            states = states + dt * vel.T
        hi = bucket_hi[k]
        for e in range(lo, hi):
            i = pid[e]
            if _accept(kernel, ts[e], states[i], zs[e], rs[e],
                       cfg.thinning_bound):
                states[i] = states[i] + zs[e]
        lo = hi
    return states, acc


def char_function_mc(model, kernel, drift, cfg, xi):
    """Monte Carlo characteristic function E exp(i xi . (X_T - x0)).

    Returns (estimate, standard error of the real part).  For a constant
    kernel this should match exp(T psi(xi)) up to the jump cutoff.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    states, _ = _run_batch(model, kernel, drift, cfg)
    phase = (states - cfg.x0[None, :]) @ xi
    vals = np.exp(1j * phase)
    est = complex(np.mean(vals))
    se = float(np.std(vals.real, ddof=1) / math.sqrt(cfg.n_paths))
    return est, se


@dataclass
class TimeSource:
    """Time-indexed grid data f(t, .) used as an integrand or PDE source."""

    grid: Grid
    fn: object                       # t -> values on grid
    time_independent: bool = True

    def values(self, t):
        return np.asarray(self.fn(t), dtype=float)

    def sup_besov_b0q(self, q, times):
        part = DyadicPartition(self.grid)
        if self.time_independent:
            times = times[:1]
        out = 0.0
        for t in times:
            nrm, _ = besov_norm_report(GridField(self.grid, self.values(t)),
                                       0.0, q, np.inf, part)
            out = max(out, nrm)
        return out


def _interp_periodic(grid, vals, points):
    """Linear periodic interpolation of grid data at points (n, d)."""
    pts = np.asarray(points, dtype=float)
    h = grid.h
    idx = np.floor(pts / h).astype(int)
    frac = pts / h - idx
    idx = idx % grid.n
    nxt = (idx + 1) % grid.n
    if grid.dim == 1:
        i = idx[:, 0]
        j = nxt[:, 0]
        w = frac[:, 0]
        return (1.0 - w) * vals[i] + w * vals[j]
    if grid.dim == 2:
        i0, j0 = idx[:, 0], idx[:, 1]
        i1, j1 = nxt[:, 0], nxt[:, 1]
        wx, wy = frac[:, 0], frac[:, 1]
        return ((1 - wx) * (1 - wy) * vals[i0, j0]
                + wx * (1 - wy) * vals[i1, j0]
                + (1 - wx) * wy * vals[i0, j1]
                + wx * wy * vals[i1, j1])
    raise NotImplementedError("path interpolation supports d <= 2")


@dataclass
class KrylovReport:
    rows: list                        # (x, estimate, stderr)
    sup_estimate: float
    f_norm: float
    ratio: float
    n_paths: int


def krylov_estimate(model, kernel, drift, f, x_grid, cfg, q=2):
    """Monte Carlo of E integral_0^T f(s, X_s(x)) ds over starting points.

    Reports the per-start estimates with standard errors, the sup over
    starts, and its ratio to the sup-in-time B^0_{q,inf} norm of f.
    """
    rows = []
    for x0 in x_grid:
        c = SimConfig(x0=x0, T=cfg.T, dt=cfg.dt, eps=cfg.eps,
                      thinning_bound=cfg.thinning_bound,
                      n_paths=cfg.n_paths, seed=cfg.seed,
                      compensator_mode=cfg.compensator_mode)

        def collect(t, states):
            return _interp_periodic(f.grid, f.values(t), states)

        _, acc = _run_batch(model, kernel, drift, c, collect=collect)
        est = float(np.mean(acc))
        se = float(np.std(acc, ddof=1) / math.sqrt(c.n_paths))
        rows.append((np.atleast_1d(np.asarray(x0, float)), est, se))
    sup_est = max(abs(r[1]) for r in rows)
    nsteps = max(1, int(round(cfg.T / cfg.dt)))
    f_norm = f.sup_besov_b0q(q, np.arange(nsteps) * (cfg.T / nsteps))
    return KrylovReport(rows, sup_est, f_norm,
                        sup_est / f_norm if f_norm > 0 else np.nan,
                        cfg.n_paths)


# ---------------------------------------------------------------------------
# the backward-solution identity
# ---------------------------------------------------------------------------


def _truncated_model_view(model, grid, eps, phase_rate):
    """A view of the model whose grid symbol drops the jumps below eps."""
    import copy

    from .nonlocal_op import _node_jump_multiplier

    nodes = model_quadrature(model, eps_low=eps, phase_rate=phase_rate)
    view = copy.copy(model)
    view._symbol_cache = {}
    key = ("symbol", grid.signature())
    view._symbol_cache[key] = _node_jump_multiplier(view, grid, nodes)
    return view


@dataclass
class FeynmanKacReport:
    rows: list            # (x, u(0,x), mc, stderr, allowance, passed)
    allowance_parts: dict
    balance_ok: bool

    def all_passed(self):
        return all(r[-1] for r in self.rows)


def feynman_kac_check(model, kernel, drift, f, x_grid, cfg, pde_dt,
                      se_factor=3.0):
    """Compare u(0, x) of the backward equation against the path integral.

    u solves du/dt + L^sigma u + b.grad u + f = 0 with u(T) = 0, so that
    u(0, x) = E integral_0^T f(s, X_s(x)) ds; the right side is estimated
    by Monte Carlo.  The allowance combines
    directly measured sensitivities: PDE step halving, grid refinement,
    jump-cutoff truncation of the generator, and Monte Carlo step halving
    under common event streams.
    """
    balance_ok = True
    if drift is not None and drift.beta + model.alpha < 1.0:
        balance_ok = False
    grid = f.grid

    def solve_u0(grid_, dt_, model_=None, source_vals=None):
        src = (lambda t: source_vals) if source_vals is not None else f.fn
        prob = PdeProblem(grid=grid_, model=model_ or model, kernel=kernel,
                          drift=drift, source=src, lam=0.0, T=cfg.T, dt=dt_,
                          direction="backward")
        return solve(prob).snapshots[0]

    u0 = solve_u0(grid, pde_dt)
    u0_half = solve_u0(grid, pde_dt / 2.0)
    from .pde import refine_field_values
    fine = Grid(grid.dim, grid.n * 2, grid.length)
    if f.time_independent:
        u0_fine = solve_u0(fine, pde_dt,
                           source_vals=refine_field_values(f.values(0.0)))
    else:
        u0_fine = None
    trunc = _truncated_model_view(model, grid, cfg.eps,
                                  grid.nyquist * math.sqrt(grid.dim))
    u0_trunc = solve_u0(grid, pde_dt, model_=trunc)

    xg = np.atleast_2d(np.asarray(x_grid, dtype=float))
    u0_at = _interp_periodic(grid, u0, xg)
    parts = {
        "pde_dt": 2.0 * float(np.max(np.abs(
            _interp_periodic(grid, u0, xg) - _interp_periodic(grid, u0_half, xg)))),
        "cutoff": float(np.max(np.abs(
            _interp_periodic(grid, u0, xg) - _interp_periodic(grid, u0_trunc, xg)))),
    }
    if u0_fine is not None:
        parts["grid_h"] = float(np.max(np.abs(
            _interp_periodic(fine, u0_fine, xg) - u0_at)))
    else:
        parts["grid_h"] = 0.0

    rows = []
    mc_dt_defect = 0.0
    for x0 in xg:
        def collect(t, states):
            return _interp_periodic(f.grid, f.values(t), states)

        c1 = SimConfig(x0=x0, T=cfg.T, dt=cfg.dt, eps=cfg.eps,
                       thinning_bound=cfg.thinning_bound,
                       n_paths=cfg.n_paths, seed=cfg.seed,
                       compensator_mode=cfg.compensator_mode)
        _, acc = _run_batch(model, kernel, drift, c1, collect=collect)
        c2 = SimConfig(x0=x0, T=cfg.T, dt=cfg.dt / 2.0, eps=cfg.eps,
                       thinning_bound=cfg.thinning_bound,
                       n_paths=cfg.n_paths, seed=cfg.seed,
                       compensator_mode=cfg.compensator_mode)
        _, acc2 = _run_batch(model, kernel, drift, c2, collect=collect)
        est = float(np.mean(acc))
        se = float(np.std(acc, ddof=1) / math.sqrt(c1.n_paths))
        mc_dt_defect = max(mc_dt_defect, 2.0 * abs(est - float(np.mean(acc2))))
        rows.append([x0, est, se])
    parts["mc_dt"] = mc_dt_defect
    allowance = sum(parts.values())

    out = []
    for (x0, est, se), ux in zip(rows, u0_at):
        lhs = float(ux)
        ok = abs(lhs - est) <= se_factor * se + allowance
        out.append((x0, lhs, est, se, allowance, ok))
    return FeynmanKacReport(out, parts, balance_ok)
