"""Config-file parsing and construction of model/kernel/drift/grid objects.

The config format is flat TOML: one [section] per object, scalar keys.
Named constructors keep the file format closed (no code in configs); the
registry below documents every recognized kind.
"""

from __future__ import annotations

import math

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from ..fields import Grid
from ..levy import LevyModel, SphericalMeasure, Tail
from ..nonlocal_op import DriftField, JumpKernel
from ..pde import PdeProblem
from ..sde import SimConfig


class ConfigError(ValueError):
    pass


def load_config(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _inf(v):
    if v in ("inf", "Inf", "INF"):
        return np.inf
    return float(v)


def build_model(sec):
    dim = int(sec.get("dim", 1))
    geometry = sec.get("geometry", "line")
    weight = float(sec.get("weight", 1.0))
    if geometry == "line":
        if dim != 1:
            raise ConfigError("geometry 'line' is one-dimensional")
        sph = SphericalMeasure.line(weight)
    elif geometry == "axes":
        sph = SphericalMeasure.axes(dim, weight)
    elif geometry == "circle":
        if dim != 2:
            raise ConfigError("geometry 'circle' is two-dimensional")
        sph = SphericalMeasure.circle(int(sec.get("m", 4)),
                                      total_weight=float(sec.get(
                                          "total_weight", 2.0 * math.pi)))
    elif geometry == "pair":
        sph = SphericalMeasure.pair(sec["direction"], weight)
    else:
        raise ConfigError(f"unknown spherical geometry {geometry!r}")

    profile = sec.get("profile", "constant")
    if profile == "constant":
        radial, lo, hi = None, 1.0, 1.0
    elif profile == "cosine":
        amp = float(sec.get("profile_amp", 0.5))
        freq = float(sec.get("profile_freq", 3.0))
        if not (0.0 < amp < 1.0):
            raise ConfigError("cosine profile needs 0 < profile_amp < 1")
        radial = (lambda th, r: 1.0 + amp * np.cos(freq * r))
        lo, hi = 1.0 - amp, 1.0 + amp
    else:
        raise ConfigError(f"unknown radial profile {profile!r}")

    tail_kind = sec.get("tail", "none")
    pure = False
    tail = Tail.none()
    if tail_kind == "powerlaw":
        tail = Tail.powerlaw(float(sec.get("tail_rmax", 100.0)))
    elif tail_kind == "pure":
        pure = True
        radial, lo, hi = None, 1.0, 1.0
    elif tail_kind != "none":
        raise ConfigError(f"unknown tail kind {tail_kind!r}")

    return LevyModel(float(sec["alpha"]), sph, radial_profile=radial,
                     kappa_low=lo, kappa_high=hi, tail=tail,
                     pure_stable=pure)


def build_kernel(sec):
    kind = sec.get("kind", "constant")
    if kind == "constant":
        return JumpKernel.constant(float(sec.get("value", 1.0)))
    if kind == "x_sine":
        base = float(sec.get("base", 1.0))
        amp = float(sec.get("amp", 0.25))
        freq = float(sec.get("freq", 1.0))
        if amp >= base:
            raise ConfigError("x_sine kernel needs amp < base")
        return JumpKernel.from_x_function(
            lambda x: base + amp * np.sin(freq * x[0]),
            kappa0=base - amp, kappa1=base + amp,
            kappa2=max(1.0, amp * freq), theta_holder=1.0)
    raise ConfigError(f"unknown kernel kind {kind!r}")


def build_drift(sec, dim):
    kind = sec.get("kind", "zero")
    beta = float(sec.get("beta", 1.0))
    p = _inf(sec.get("p", "inf"))
    if kind == "zero":
        return DriftField.zero(dim)
    if kind == "constant":
        return DriftField.constant(sec["value"])
    if kind == "sine":
        amp = float(sec.get("amp", 0.2))
        freq = float(sec.get("freq", 1.0))
        return DriftField(lambda t, x: amp * np.sin(freq * x), dim,
                          beta=beta, p=p, declared_norm=amp, name="sine")
    if kind == "lacunary":
        # Weierstrass-type series: block norms decay like 2^{-beta j}
        amp = float(sec.get("amp", 1.0))
        j_lo = int(sec.get("j_lo", 0))
        j_hi = int(sec.get("j_hi", 6))
        seed = int(sec.get("phase_seed", 0))
        rng = np.random.default_rng(seed)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=j_hi - j_lo + 1)

        def fn(t, x):
            out = np.zeros_like(np.asarray(x, dtype=float))
            for k, j in enumerate(range(j_lo, j_hi + 1)):
                out += amp * 2.0 ** (-beta * j) * np.cos(
                    2.0 ** j * x + phases[k])
            return out

        norm = amp * sum(2.0 ** (-beta * j) for j in range(j_lo, j_hi + 1))
        return DriftField(fn, dim, beta=beta, p=p, declared_norm=norm,
                          name="lacunary")
    raise ConfigError(f"unknown drift kind {kind!r}")


def build_grid(sec):
    length = sec.get("length", "2pi")
    if length == "2pi":
        length = 2.0 * math.pi
    return Grid(int(sec.get("dim", 1)), int(sec.get("n", 256)),
                float(length))


def build_pde_problem(config, grid, model, kernel, drift, source=None):
    sec = config.get("pde", {})
    return PdeProblem(
        grid=grid, model=model, kernel=kernel, drift=drift, source=source,
        lam=float(sec.get("lam", 0.0)), T=float(sec.get("T", 1.0)),
        dt=float(sec.get("dt", 1e-2)),
        direction=sec.get("direction", "forward"),
        quasilinear_kappa=float(sec.get("quasilinear_kappa", 0.0)),
        c_cfl=float(sec.get("c_cfl", 0.5)),
        eps_q=sec.get("eps_q"),
    )


def build_sim_config(config, seed, n_paths=None):
    sec = config.get("sim", {})
    return SimConfig(
        x0=np.asarray(sec.get("x0", [0.0]), dtype=float),
        T=float(sec.get("T", 1.0)), dt=float(sec.get("dt", 1e-2)),
        eps=float(sec.get("eps", 0.1)),
        thinning_bound=float(sec.get("thinning_bound", 1.0)),
        n_paths=int(n_paths if n_paths is not None
                    else sec.get("n_paths", 1000)),
        seed=int(seed),
        compensator_mode=sec.get("compensator_mode", "symmetric-zero"),
    )


def build_objects(config):
    """(model, kernel, drift, grid) from their config sections."""
    model = build_model(config["model"])
    kernel = build_kernel(config.get("kernel", {}))
    drift = build_drift(config.get("drift", {}), model.dim)
    grid = build_grid(config.get("grid", {"dim": model.dim}))
    if grid.dim != model.dim:
        raise ConfigError("grid and model dimensions disagree")
    return model, kernel, drift, grid
