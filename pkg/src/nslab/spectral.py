"""Spectral fields on a periodic box and the Fourier-multiplier operator toolbox.

All operators in this package act mode-by-mode on Fourier coefficients.
The transform normalization is fixed so that the k=0 coefficient equals
the lattice mean, which makes Parseval and all closed-form examples
unambiguous.
"""

from __future__ import annotations

import struct

import numpy as np

TWO_PI = 2.0 * np.pi

SNAPSHOT_MAGIC = b"NSLB"
SNAPSHOT_VERSION = 1


class GridMismatchError(ValueError):
    """Raised when an operation mixes fields living on different grids."""


class Grid:
    """Uniform periodic grid on [0, L)^3 with n modes per dimension.

    Wavenumbers are (2*pi/L)*m for integer m in [-n/2, n/2).  Pointwise
    products are dealiased by the 2/3 rule: modes with any |m| > n//3
    are zeroed.
    """

    def __init__(self, n, length=TWO_PI):
        n = int(n)
        if n < 8 or n % 2 != 0:
            raise ValueError(f"grid size must be an even integer >= 8, got {n}")
        if not length > 0:
            raise ValueError(f"box length must be positive, got {length}")
        self.n = n
        self.length = float(length)
        self.cutoff = n // 3
        modes = np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(int)
        self.modes = modes
        scale = TWO_PI / self.length
        self.mode_scale = scale
        kx, ky, kz = np.meshgrid(modes, modes, modes, indexing="ij")
        self.k = scale * np.stack([kx, ky, kz]).astype(float)
        self.k2 = np.sum(self.k * self.k, axis=0)
        self.kabs = np.sqrt(self.k2)
        self.k2_safe = np.where(self.k2 == 0.0, 1.0, self.k2)
        keep = np.abs(modes) <= self.cutoff
        self.dealias_mask = (
            keep[:, None, None] & keep[None, :, None] & keep[None, None, :]
        )
        self._mesh = None

    def mesh(self):
        """Collocation coordinates (X1, X2, X3), each of shape (n, n, n)."""
        if self._mesh is None:
            x = self.length * np.arange(self.n) / self.n
            self._mesh = np.meshgrid(x, x, x, indexing="ij")
        return self._mesh

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.n == other.n
            and self.length == other.length
        )

    def __hash__(self):
        return hash((self.n, self.length))

    def __repr__(self):
        return f"Grid(n={self.n}, length={self.length!r})"


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


class SpectralField:
    """Complex Fourier coefficients of a real-valued field.

    ``coef`` has shape (ncomp, n, n, n) with ncomp in {1, 3, 9} for
    scalar, vector and tensor fields.  Tensor component (i, j) lives at
    flat index 3*i + j.  Operations return new fields; instances are
    treated as immutable values.
    """

    __slots__ = ("grid", "coef")

    def __init__(self, grid, coef):
        coef = np.asarray(coef, dtype=complex)
        if coef.ndim == 3:
            coef = coef[None]
        n = grid.n
        if coef.ndim != 4 or coef.shape[1:] != (n, n, n) or coef.shape[0] not in (1, 3, 9):
            raise ValueError(f"bad coefficient shape {coef.shape} for n={n}")
        self.grid = grid
        self.coef = coef

    @property
    def ncomp(self):
        return self.coef.shape[0]

    def copy(self):
        return SpectralField(self.grid, self.coef.copy())

    def __add__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coef + other.coef)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coef - other.coef)

    def __neg__(self):
        return SpectralField(self.grid, -self.coef)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coef * scalar)

    __rmul__ = __mul__


class PhysicalField:
    """Real values on the n^3 collocation lattice, one lattice per component."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 3:
            values = values[None]
        self.grid = grid
        self.values = values


def zero_field(grid, ncomp=3):
    return SpectralField(grid, np.zeros((ncomp, grid.n, grid.n, grid.n), dtype=complex))


def to_physical(f):
    """Inverse transform; k=0 coefficient maps to the lattice mean."""
    phys = np.fft.ifftn(f.coef, axes=(1, 2, 3)) * f.grid.n**3
    return PhysicalField(f.grid, phys.real)


def to_spectral(g):
    coef = np.fft.fftn(g.values, axes=(1, 2, 3)) / g.grid.n**3
    return SpectralField(g.grid, coef)


def l2_norm(f):
    """Spectral l2 norm, equal to the physical L2 norm by Parseval."""
    return float(np.sqrt(f.grid.length**3 * np.sum(np.abs(f.coef) ** 2)))


def physical_l2_norm(g):
    w = (g.grid.length / g.grid.n) ** 3
    return float(np.sqrt(w * np.sum(g.values**2)))


def derivative(f, axis):
    """Partial derivative along axis 1..3 (the multiplier i*k_axis)."""
    if axis not in (1, 2, 3):
        raise ValueError(f"axis must be 1, 2 or 3, got {axis}")
    return SpectralField(f.grid, f.coef * (1j * f.grid.k[axis - 1]))


def laplacian(f):
    return SpectralField(f.grid, f.coef * (-f.grid.k2))


def heat_semigroup(f, t):
    """Heat flow e^{t*Laplacian}: multiply mode k by exp(-t|k|^2)."""
    if t < 0:
        raise ValueError(f"heat semigroup requires t >= 0, got {t}")
    return SpectralField(f.grid, f.coef * np.exp(-t * f.grid.k2))


def divergence(f):
    if f.ncomp != 3:
        raise ValueError("divergence requires a vector field")
    k = f.grid.k
    d = 1j * (k[0] * f.coef[0] + k[1] * f.coef[1] + k[2] * f.coef[2])
    return SpectralField(f.grid, d[None])


def leray_project(f):
    """Per-mode projection I - k k^T/|k|^2 onto divergence-free fields.

    The k=0 mode is left untouched (the projector is the identity there).
    """
    if f.ncomp != 3:
        raise ValueError("Leray projection requires a vector field")
    g = f.grid
    kdotf = g.k[0] * f.coef[0] + g.k[1] * f.coef[1] + g.k[2] * f.coef[2]
    out = f.coef - g.k * (kdotf / g.k2_safe)
    return SpectralField(g, out)


def tensor_product(x, y):
    """Dealiased spectral tensor x (x) y with the mean of each entry removed.

    Entry (i, j) is the 2/3-rule-dealiased transform of the pointwise
    product x^i * y^j, at flat component index 3*i + j.
    """
    _check_same_grid(x, y)
    if x.ncomp != 3 or y.ncomp != 3:
        raise ValueError("tensor product requires vector fields")
    g = x.grid
    px = to_physical(x).values
    py = px if (y is x) else to_physical(y).values
    out = np.empty((9, g.n, g.n, g.n), dtype=complex)
    for i in range(3):
        for j in range(3):
            prod = np.fft.fftn(px[i] * py[j]) / g.n**3
            prod *= g.dealias_mask
            prod[0, 0, 0] = 0.0
            out[3 * i + j] = prod
    return SpectralField(g, out)


def q_bilinear(x, y):
    """Pressure-eliminated nonlinearity: Leray-projected divergence of x (x) y.

    The output is divergence-free for arbitrary inputs and has zero mean.
    """
    _check_same_grid(x, y)
    t = tensor_product(x, y)
    g = x.grid
    div = np.empty((3, g.n, g.n, g.n), dtype=complex)
    for l in range(3):
        div[l] = 1j * (
            g.k[0] * t.coef[l]
            + g.k[1] * t.coef[3 + l]
            + g.k[2] * t.coef[6 + l]
        )
    return leray_project(SpectralField(g, div))


def dealias(f):
    return SpectralField(f.grid, f.coef * f.grid.dealias_mask)


# ---------------------------------------------------------------------------
# diagnostics used by the invariant checks


def hermitian_symmetry_error(f):
    """Max |c(k) - conj(c(-k))| relative to max |c| (0 for real fields)."""
    c = f.coef
    rev = c
    for ax in (1, 2, 3):
        rev = np.roll(np.flip(rev, axis=ax), 1, axis=ax)
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(c - np.conj(rev))) / scale)


def divergence_error(f):
    """Max over modes of |k . c(k)| relative to max |c|."""
    d = divergence(f).coef
    scale = np.max(np.abs(f.coef))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(d)) / scale)


def mean_magnitude(f):
    return float(np.max(np.abs(f.coef[:, 0, 0, 0])))


# ---------------------------------------------------------------------------
# field construction


def taylor_green(grid, amplitude=1.0):
    """Divergence-free single-scale vortex, amplitude * (sin cos cos, -cos sin cos, 0)."""
    x1, x2, x3 = grid.mesh()
    u = np.stack(
        [
            np.sin(x1) * np.cos(x2) * np.cos(x3),
            -np.cos(x1) * np.sin(x2) * np.cos(x3),
            np.zeros_like(x1),
        ]
    )
    return to_spectral(PhysicalField(grid, amplitude * u))


def random_divfree_field(grid, seed, kmax=None, slope=2.0, amplitude=1.0):
    """Seeded band-limited divergence-free zero-mean random vector field.

    White noise is shaped by |k|^(-slope), truncated to |k| <= kmax
    (default: the dealias band), Leray-projected, and rescaled to the
    requested L2 amplitude.  Deterministic given the seed.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    noise = rng.standard_normal((3, grid.n, grid.n, grid.n))
    c = np.fft.fftn(noise, axes=(1, 2, 3)) / grid.n**3
    if kmax is None:
        kmax = grid.cutoff * grid.mode_scale
    mask = (grid.kabs <= kmax) & (grid.k2 > 0.0)
    kabs_safe = np.where(grid.kabs == 0.0, 1.0, grid.kabs)
    c *= mask * kabs_safe ** (-slope)
    f = leray_project(SpectralField(grid, c))
    norm = l2_norm(f)
    if norm > 0.0:
        f = f * (amplitude / norm)
    return f


# ---------------------------------------------------------------------------
# snapshot files: little-endian binary, header then row-major (re, im)
# float64 pairs per component


class SnapshotFormatError(ValueError):
    """Raised on a malformed or incompatible snapshot file."""


_HEADER = struct.Struct("<4sIIdI")


def save_snapshot(f, path):
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                SNAPSHOT_MAGIC, SNAPSHOT_VERSION, f.grid.n, f.grid.length, f.ncomp
            )
        )
        flat = np.empty(f.coef.shape + (2,), dtype="<f8")
        flat[..., 0] = f.coef.real
        flat[..., 1] = f.coef.imag
        fh.write(flat.tobytes())


def load_snapshot(path, grid=None):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise SnapshotFormatError(f"{path}: truncated header")
        magic, version, n, length, ncomp = _HEADER.unpack(head)
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise SnapshotFormatError(f"{path}: unsupported version {version}")
        if ncomp not in (1, 3, 9):
            raise SnapshotFormatError(f"{path}: bad component count {ncomp}")
        if grid is None:
            grid = Grid(n, length)
        elif grid.n != n or grid.length != length:
            raise GridMismatchError(
                f"{path}: snapshot grid (n={n}, L={length}) does not match {grid}"
            )
        raw = np.frombuffer(fh.read(), dtype="<f8")
        expect = ncomp * n**3 * 2
        if raw.size != expect:
            raise SnapshotFormatError(
                f"{path}: expected {expect} floats, found {raw.size}"
            )
        pairs = raw.reshape(ncomp, n, n, n, 2)
        return SpectralField(grid, pairs[..., 0] + 1j * pairs[..., 1])
