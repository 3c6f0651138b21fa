"""Periodic grid fields with cached Fourier data.

Everything in the lab lives on the torus [0, L)^d sampled on a uniform grid
with ``n`` points per axis (``n`` a power of two).  Shifts, derivatives and
frequency projections are computed spectrally, so they are exact for
band-limited data; this is the reason the torus stands in for the whole
space throughout the package.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Grid", "GridField", "save_field_csv", "load_field_csv",
           "save_field_raw", "load_field_raw"]


class Grid:
    """Uniform periodic grid on [0, L)^d with n points per axis."""

    def __init__(self, dim, n, length=2.0 * np.pi):
        if n < 4 or (n & (n - 1)) != 0:
            raise ValueError(f"points per axis must be a power of two >= 4, got {n}")
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self.dim = int(dim)
        self.n = int(n)
        self.length = float(length)
        self._freq_1d = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.length / self.n)
        self._freq_norm = None
        self._axes = None
        self.cache = {}

    @property
    def h(self):
        return self.length / self.n

    @property
    def cell_volume(self):
        return (self.length / self.n) ** self.dim

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def nyquist(self):
        """Largest angular frequency representable per axis."""
        return np.pi * self.n / self.length

    def axes(self):
        """Physical coordinates along one axis (shared by all axes)."""
        if self._axes is None:
            self._axes = np.arange(self.n) * self.h
        return self._axes

    def meshgrid(self):
        """Coordinate arrays, shape (dim, n, ..., n)."""
        x = self.axes()
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def points(self):
        """All grid points as an (n^d, dim) array."""
        return self.meshgrid().reshape(self.dim, -1).T

    def freq_along(self, axis):
        """Angular frequencies along one axis in FFT order."""
        shape = [1] * self.dim
        shape[axis] = self.n
        return self._freq_1d.reshape(shape)

    def freq_norm(self):
        """|xi| on the full frequency grid."""
        if self._freq_norm is None:
            s = np.zeros(self.shape)
            for ax in range(self.dim):
                s = s + self.freq_along(ax) ** 2
            self._freq_norm = np.sqrt(s)
        return self._freq_norm

    def freq_vectors(self):
        """All frequency vectors as an (n^d, dim) array in FFT order."""
        cols = [np.broadcast_to(self.freq_along(ax), self.shape).ravel()
                for ax in range(self.dim)]
        return np.stack(cols, axis=-1)

    def phase(self, z):
        """Return exp(i xi . z) on the frequency grid for a shift z."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.exp(1j * self.freq_along(0) * z[0])
        for ax in range(1, self.dim):
            out = out * np.exp(1j * self.freq_along(ax) * z[ax])
        return out

    def signature(self):
        return (self.dim, self.n, self.length)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.signature() == other.signature()

    def __hash__(self):
        return hash(self.signature())

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n}, length={self.length:g})"


class GridField:
    """A scalar function sampled on a :class:`Grid`, with a cached transform.

    The Fourier cache is invalidated on no path: fields are treated as
    immutable once constructed.  Arithmetic helpers return new fields.
    """

    def __init__(self, grid, values, meta=None):
        values = np.asarray(values)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.values = values
        self.meta = dict(meta) if meta else {}
        self._fourier = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid, fn):
        """Sample ``fn(x)`` with x of shape (dim, n, ..., n)."""
        return cls(grid, np.asarray(fn(grid.meshgrid()), dtype=float))

    @classmethod
    def from_fourier(cls, grid, coeffs, real=True):
        vals = np.fft.ifftn(coeffs)
        if real:
            vals = vals.real
        f = cls(grid, vals)
        f._fourier = np.asarray(coeffs, dtype=complex)
        return f

    # -- spectral machinery -------------------------------------------------

    def fourier(self):
        if self._fourier is None:
            self._fourier = np.fft.fftn(self.values)
        return self._fourier

    def is_real(self):
        return not np.iscomplexobj(self.values)

    def shift(self, z):
        """Exact periodic translate x -> x + z (z need not be a grid vector)."""
        out = np.fft.ifftn(self.fourier() * self.grid.phase(z))
        if self.is_real():
            out = out.real
        return GridField(self.grid, out)

    def derivative(self, axis, order=1):
        mult = (1j * self.grid.freq_along(axis)) ** order
        if self.grid.n % 2 == 0 and order % 2 == 1:
            # odd-order derivative of the unpaired Nyquist mode is ill-defined
            kill = np.abs(self.grid.freq_along(axis)) >= self.grid.nyquist - 1e-12
            mult = np.where(kill, 0.0, mult)
        out = np.fft.ifftn(self.fourier() * mult)
        if self.is_real():
            out = out.real
        return GridField(self.grid, out)

    def gradient(self):
        """All first derivatives, shape (dim, n, ..., n)."""
        return np.stack([self.derivative(ax).values for ax in range(self.grid.dim)])

    def multiplier(self, mult):
        """Apply a Fourier multiplier given as an array on the frequency grid."""
        out = np.fft.ifftn(self.fourier() * mult)
        if self.is_real() and not np.iscomplexobj(mult):
            out = out.real
        elif self.is_real():
            # real-symbol convention: keep the real part when the input is real
            out = out.real
        return GridField(self.grid, out)

    # -- norms ---------------------------------------------------------------

    def lp_norm(self, p):
        return lp_norm(self.values, p, self.grid.cell_volume)

    def linf(self):
        return float(np.max(np.abs(self.values)))

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, GridField):
            self._check_same_grid(other)
            return GridField(self.grid, self.values + other.values)
        return GridField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridField):
            self._check_same_grid(other)
            return GridField(self.grid, self.values - other.values)
        return GridField(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, GridField):
            self._check_same_grid(other)
            return GridField(self.grid, self.values * other.values)
        return GridField(self.grid, self.values * other)

    __rmul__ = __mul__

    def _check_same_grid(self, other):
        if self.grid.signature() != other.grid.signature():
            raise ValueError("fields live on different grids")

    def __repr__(self):
        return f"GridField({self.grid!r}, |f|_max={self.linf():.4g})"


def lp_norm(values, p, cell_volume):
    """L^p norm of grid samples; p = inf is the exact max over grid points."""
    a = np.abs(values)
    if p == np.inf or p == "inf":
        return float(np.max(a))
    p = float(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    return float((cell_volume * np.sum(a ** p)) ** (1.0 / p))


# -- file formats ------------------------------------------------------------
#
# CSV: three header lines carrying d, N, L, then one value per line, the
# array flattened in row-major order.  Complex data stores re,im pairs.
# Raw: little-endian float64 of the flattened array next to a .meta sidecar
# with the same three header lines.


def _header_lines(field):
    g = field.grid
    return [f"d,{g.dim}", f"N,{g.n}", f"L,{g.length!r}"]


def save_field_csv(field, path):
    with open(path, "w", newline="") as fh:
        for line in _header_lines(field):
            fh.write(line + "\n")
        flat = np.asarray(field.values).ravel()
        if np.iscomplexobj(flat):
            for v in flat:
                fh.write(f"{float(v.real)!r},{float(v.imag)!r}\n")
        else:
            for v in flat:
                fh.write(f"{float(v)!r}\n")


def _parse_header(lines):
    vals = {}
    for line in lines:
        key, raw = line.strip().split(",", 1)
        vals[key] = raw
    return int(vals["d"]), int(vals["N"]), float(vals["L"])


def load_field_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    d, n, length = _parse_header(lines[:3])
    rows = [line.split(",") for line in lines[3:] if line.strip()]
    if rows and len(rows[0]) == 2:
        flat = np.array([complex(float(a), float(b)) for a, b in rows])
    else:
        flat = np.array([float(r[0]) for r in rows])
    grid = Grid(d, n, length)
    return GridField(grid, flat.reshape(grid.shape))


def save_field_raw(field, path):
    flat = np.asarray(field.values, dtype=np.float64).ravel()
    flat.astype("<f8").tofile(path)
    with open(str(path) + ".meta", "w") as fh:
        for line in _header_lines(field):
            fh.write(line + "\n")


def load_field_raw(path):
    with open(str(path) + ".meta") as fh:
        d, n, length = _parse_header(fh.read().splitlines()[:3])
    flat = np.fromfile(path, dtype="<f8")
    grid = Grid(d, n, length)
    return GridField(grid, flat.reshape(grid.shape))
