"""Dyadic frequency decomposition, Besov norms and paradifferential calculus.

The partition of unity is built from a C-infinity transition in log2|xi|:
chi equals one on the ball of radius 1/2 and vanishes outside the unit
ball, and rho(xi) = chi(xi/2) - chi(xi) is supported in the closed annulus
1/2 <= |xi| <= 2 and vanishes at both boundary spheres.  The telescoping
identity

    chi(xi) + sum_{j=0..J} rho(2^-j xi) = chi(2^-(J+1) xi)

then reconstructs band-limited grid data exactly, and blocks two apart are
orthogonal because their multiplier supports only touch where both vanish.
"""

from __future__ import annotations

import math

import numpy as np

from .fields import GridField, lp_norm

__all__ = [
    "ResolutionError", "GridMismatchError", "ZeroBlockError",
    "DyadicPartition", "project", "low_pass", "besov_norm",
    "besov_norm_report", "bessel_norm", "paraproduct", "remainder",
    "commutator_lp", "commutator_decay_fit", "bernstein_ratio",
    "maximal_function", "band_limit", "random_band_field",
    "random_band_limited_field", "random_besov_field",
]


class ResolutionError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


class ZeroBlockError(ValueError):
    pass


def _bump(u):
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def transition(u):
    """C-infinity monotone map [0,1] -> [0,1], identically 0/1 outside."""
    u = np.asarray(u, dtype=float)
    a = _bump(u)
    b = _bump(1.0 - u)
    return a / (a + b + np.finfo(float).tiny * (a + b == 0))


def chi_profile(s):
    """Radial low-pass profile: 1 on [0, 1/2], 0 on [1, inf)."""
    s = np.asarray(s, dtype=float)
    out = np.ones_like(s)
    high = s >= 1.0
    mid = (s > 0.5) & ~high
    out[high] = 0.0
    out[mid] = 1.0 - transition(np.log2(2.0 * s[mid]))
    return out


def rho_profile(s):
    """Annulus profile supported in 1/2 <= s <= 2, rho = chi(s/2) - chi(s)."""
    s = np.asarray(s, dtype=float)
    return chi_profile(0.5 * s) - chi_profile(s)


class DyadicPartition:
    """Dyadic partition of unity sampled on a grid's frequency lattice."""

    def __init__(self, grid, j_max=None):
        cap = int(math.floor(math.log2(grid.nyquist))) - 1
        if j_max is None:
            j_max = cap
        if j_max > cap:
            raise ResolutionError(
                f"j_max={j_max} needs block support 2^{j_max + 1} beyond the "
                f"grid Nyquist frequency {grid.nyquist:g}")
        if j_max < 0:
            raise ResolutionError("j_max must be >= 0")
        self.grid = grid
        self.j_max = int(j_max)
        self._mult = {}
        self._low = {}

    def multiplier(self, j):
        """The block-j multiplier rho_j(|xi|) (chi for j = -1)."""
        if j < -1 or j > self.j_max:
            raise ResolutionError(
                f"block {j} outside [-1, {self.j_max}] supported by the grid")
        if j not in self._mult:
            s = self.grid.freq_norm()
            if j == -1:
                self._mult[j] = chi_profile(s)
            else:
                self._mult[j] = rho_profile(s / 2.0 ** j)
        return self._mult[j]

    def low_pass_multiplier(self, j):
        """Multiplier of S_j = sum of blocks below j, i.e. chi(2^-j xi)."""
        if j not in self._low:
            s = self.grid.freq_norm()
            self._low[j] = chi_profile(s / 2.0 ** j) if j >= 0 else np.zeros_like(s)
        return self._low[j]

    def blocks(self):
        return range(-1, self.j_max + 1)

    def partition_sum(self):
        total = self.multiplier(-1).copy()
        for j in range(self.j_max + 1):
            total += self.multiplier(j)
        return total

    def band_mask(self):
        """Frequencies where the truncated partition sums to one."""
        return self.grid.freq_norm() <= 2.0 ** self.j_max


def _require_same_grid(*fields):
    sig = fields[0].grid.signature()
    for f in fields[1:]:
        if f.grid.signature() != sig:
            raise GridMismatchError("fields live on different grids")


def project(f, j, partition):
    """Frequency block Lambda_j f (j = -1 is the low-frequency cut)."""
    if partition.grid.signature() != f.grid.signature():
        raise GridMismatchError("partition built for a different grid")
    return f.multiplier(partition.multiplier(j))


def low_pass(f, j, partition):
    """S_j f, the sum of all blocks strictly below j."""
    if partition.grid.signature() != f.grid.signature():
        raise GridMismatchError("partition built for a different grid")
    return f.multiplier(partition.low_pass_multiplier(j))


def band_limit(f, partition):
    """Restrict to the frequencies that the truncated partition covers."""
    return f.multiplier(partition.band_mask().astype(float))


def besov_norm(f, beta, p, q, partition):
    return besov_norm_report(f, beta, p, q, partition)[0]


def besov_norm_report(f, beta, p, q, partition):
    """Truncated Besov norm plus the top-block share as truncation indicator.

    Returns (norm, top_share); top_share near one signals that mass sits in
    the last resolved block and the grid truncation is unsafe.
    """
    terms = []
    for j in partition.blocks():
        terms.append(2.0 ** (beta * j) * project(f, j, partition).lp_norm(p))
    terms = np.array(terms)
    if q == np.inf or q == "inf":
        norm = float(np.max(terms))
        top = float(terms[-1] / norm) if norm > 0 else 0.0
    else:
        qf = float(q)
        norm = float(np.sum(terms ** qf) ** (1.0 / qf))
        top = float((terms[-1] / norm) ** qf) if norm > 0 else 0.0
    return norm, top


def bessel_norm(f, beta, p):
    """|f|_p plus the L^p norm of the order-beta spectral derivative."""
    if not (0.0 < beta <= 2.0):
        raise ValueError("beta must lie in (0, 2]")
    frac = f.multiplier(f.grid.freq_norm() ** beta)
    return f.lp_norm(p) + frac.lp_norm(p)


def paraproduct(f, g, partition):
    """T_f g = sum_i S_{i-1} f . Lambda_i g."""
    _require_same_grid(f, g)
    acc = np.zeros(f.grid.shape)
    for i in range(1, partition.j_max + 1):
        acc = acc + low_pass(f, i - 1, partition).values * project(g, i, partition).values
    return GridField(f.grid, acc)


def remainder(f, g, partition):
    """R(f, g) = sum over |i - k| <= 1 of Lambda_i f . Lambda_k g."""
    _require_same_grid(f, g)
    jm = partition.j_max
    acc = np.zeros(f.grid.shape)
    for i in range(-1, jm + 1):
        fi = project(f, i, partition).values
        for k in (i - 1, i, i + 1):
            if -1 <= k <= jm:
                acc = acc + fi * project(g, k, partition).values
    return GridField(f.grid, acc)


def commutator_lp(j, f, g, partition):
    """[Lambda_j, f] g = Lambda_j(f g) - f Lambda_j g."""
    _require_same_grid(f, g)
    fg = GridField(f.grid, f.values * g.values)
    return project(fg, j, partition) - GridField(
        f.grid, f.values * project(g, j, partition).values)


def commutator_decay_fit(f, g, p, js, partition):
    """Least-squares slope of log2 |[Lambda_j, f] g|_p against j."""
    js = list(js)
    logs = []
    for j in js:
        nrm = commutator_lp(j, f, g, partition).lp_norm(p)
        if nrm <= 0:
            raise ZeroBlockError(f"commutator vanishes at block {j}")
        logs.append(math.log2(nrm))
    slope = np.polyfit(np.asarray(js, dtype=float), np.asarray(logs), 1)[0]
    return float(slope)


def _tensor_derivative_norm(f, k):
    """Pointwise Frobenius norm of the k-th derivative tensor (k <= 2)."""
    if k == 0:
        return np.abs(f.values)
    if k == 1:
        return np.sqrt(np.sum(f.gradient() ** 2, axis=0))
    if k == 2:
        acc = np.zeros(f.grid.shape)
        for a in range(f.grid.dim):
            fa = f.derivative(a)
            for b in range(f.grid.dim):
                acc += fa.derivative(b).values ** 2
        return np.sqrt(acc)
    raise ValueError("derivative order k <= 2 supported")


def bernstein_ratio(f, j, k, p, q, partition):
    """|grad^k Lambda_j f|_q divided by 2^{(k + d(1/p - 1/q)) j} |Lambda_j f|_p.

    A j-independent bound on this ratio is the content of the Bernstein
    inequality for dyadic blocks.
    """
    pe = 0.0 if p in (np.inf, "inf") else 1.0 / float(p)
    qe = 0.0 if q in (np.inf, "inf") else 1.0 / float(q)
    if pe < qe:
        raise ValueError("need p <= q")
    block = project(f, j, partition)
    den = block.lp_norm(p)
    if den <= 1e-13 * max(f.lp_norm(p), 1e-300):
        raise ZeroBlockError(f"block {j} of the field vanishes")
    num = lp_norm(_tensor_derivative_norm(block, k), q, f.grid.cell_volume)
    expo = (k + f.grid.dim * (pe - qe)) * j
    return float(num / (2.0 ** expo * den))


def maximal_function(f, radii=None):
    """Discrete Hardy-Littlewood maximal function over dyadic ball radii.

    Averages |f| over periodic grid balls via FFT convolution; the point
    value itself participates, so M f >= |f| pointwise.
    """
    g = f.grid
    if radii is None:
        radii = []
        r = g.h
        while r <= g.length / 2.0:
            radii.append(r)
            r *= 2.0
    absf = np.abs(f.values)
    out = absf.copy()
    x = g.axes()
    sq = np.minimum(x, g.length - x) ** 2
    d2 = np.zeros(g.shape)
    for ax in range(g.dim):
        shape = [1] * g.dim
        shape[ax] = g.n
        d2 = d2 + sq.reshape(shape)
    hat = np.fft.fftn(absf)
    for r in radii:
        ball = (d2 <= r * r + 1e-12).astype(float)
        avg = np.fft.ifftn(hat * np.fft.fftn(ball)).real / ball.sum()
        out = np.maximum(out, avg)
    return GridField(g, out)


# ---------------------------------------------------------------------------
# random field factories
# ---------------------------------------------------------------------------


def random_band_field(grid, j, rng, partition=None, normalize="inf"):
    """White noise projected onto block j: spectrum inside the j-th annulus."""
    if partition is None:
        partition = DyadicPartition(grid)
    noise = GridField(grid, rng.standard_normal(grid.shape))
    f = project(noise, j, partition)
    if normalize == "inf":
        m = f.linf()
    elif normalize is None:
        m = 1.0
    else:
        m = f.lp_norm(normalize)
    if m == 0.0:
        raise ZeroBlockError("random block came out identically zero")
    return GridField(grid, f.values / m)


def random_band_limited_field(grid, rng, partition=None, j_hi=None,
                              normalize="inf"):
    """White noise restricted to the partition's resolved band."""
    if partition is None:
        partition = DyadicPartition(grid)
    noise = GridField(grid, rng.standard_normal(grid.shape))
    if j_hi is not None and j_hi < partition.j_max:
        mask = (grid.freq_norm() <= 2.0 ** j_hi).astype(float)
        f = noise.multiplier(mask)
    else:
        f = band_limit(noise, partition)
    m = f.linf() if normalize == "inf" else f.lp_norm(normalize)
    return GridField(grid, f.values / m)


def random_besov_field(grid, beta, p, rng, partition=None, j_lo=0, j_hi=None):
    """Lacunary random field with unit-size B^beta_{p,inf} norm.

    Sums 2^{-beta j} times p-normalized random blocks, so the block norms
    realize the prescribed decay exponent.
    """
    if partition is None:
        partition = DyadicPartition(grid)
    if j_hi is None:
        j_hi = partition.j_max - 1
    acc = np.zeros(grid.shape)
    for j in range(j_lo, j_hi + 1):
        blk = random_band_field(grid, j, rng, partition, normalize=None)
        nrm = blk.lp_norm(p)
        if nrm > 0:
            acc = acc + 2.0 ** (-beta * j) * blk.values / nrm
    return GridField(grid, acc)
