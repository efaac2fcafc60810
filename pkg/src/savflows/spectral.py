"""Periodic Fourier pseudo-spectral backend.

Provides tensor-product periodic grids, real-to-half-complex transforms,
diagonal (Fourier-multiplier) operators with an optional distinct zero-mode
entry, spectral derivatives, quadrature, norms, and field snapshot I/O.

Conventions: the forward transform is unnormalized and the inverse carries
the 1/prod(N) factor (numpy's default).  Wavenumbers are 2*pi*m/L with
integer m in standard FFT ordering; the last axis is stored in the
half-spectrum (rfft) layout.  The unmatched Nyquist mode is zeroed when
applying odd-order derivative multipliers and kept for even orders.
All floating-point work is 64-bit.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    """Two objects that must share a grid do not."""


class SingularOperatorError(ValueError):
    """A diagonal solve hit a (near-)zero multiplier."""


@dataclass(frozen=True)
class Grid:
    """Periodic tensor-product grid: per-axis extent L_d and point count N_d."""

    extents: tuple[float, ...]
    modes: tuple[int, ...]
    origin: tuple[float, ...] = ()

    def __post_init__(self):
        extents = tuple(float(v) for v in self.extents)
        modes = tuple(int(n) for n in self.modes)
        origin = tuple(float(v) for v in self.origin) if self.origin else (0.0,) * len(modes)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "origin", origin)
        if not 1 <= len(modes) <= 3:
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {len(modes)}")
        if len(extents) != len(modes) or len(origin) != len(modes):
            raise ValueError("extents, modes and origin must have matching lengths")
        for length in extents:
            if not length > 0:
                raise ValueError(f"extent must be positive, got {length}")
        for n in modes:
            if n < 4 or n % 2 != 0:
                raise ValueError(f"point count must be even and >= 4, got {n}")
        if np.prod(modes, dtype=np.float64) > np.iinfo(np.intp).max:
            raise ValueError("total point count exceeds the addressable range")

    @property
    def dim(self) -> int:
        return len(self.modes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.modes

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.modes[:-1] + (self.modes[-1] // 2 + 1,)

    @property
    def npoints(self) -> int:
        return int(np.prod(self.modes))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def cell_volume(self) -> float:
        return self.volume / self.npoints

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(l / n for l, n in zip(self.extents, self.modes))

    def axis_coords(self, axis: int) -> np.ndarray:
        n, length, x0 = self.modes[axis], self.extents[axis], self.origin[axis]
        return x0 + np.arange(n) * (length / n)

    def coords(self) -> list[np.ndarray]:
        """Full meshgrid of collocation coordinates, row-major ('ij')."""
        axes = [self.axis_coords(d) for d in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@functools.lru_cache(maxsize=None)
def _k_axis(grid: Grid, axis: int, zero_nyquist: bool) -> np.ndarray:
    n = grid.modes[axis]
    d = grid.extents[axis] / n
    if axis == grid.dim - 1:
        k = 2.0 * np.pi * np.fft.rfftfreq(n, d=d)
        if zero_nyquist:
            k = k.copy()
            k[-1] = 0.0
    else:
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=d)
        if zero_nyquist:
            k = k.copy()
            k[n // 2] = 0.0
    shape = [1] * grid.dim
    shape[axis] = k.size
    return _readonly(k.reshape(shape))


@functools.lru_cache(maxsize=None)
def k_squared(grid: Grid) -> np.ndarray:
    """|k|^2 on the half-spectrum layout (read-only array)."""
    out = np.zeros(grid.spectral_shape)
    for axis in range(grid.dim):
        out = out + _k_axis(grid, axis, zero_nyquist=False) ** 2
    return _readonly(out)


@functools.lru_cache(maxsize=None)
def dealias_mask(grid: Grid) -> np.ndarray:
    """Boolean 2/3-rule mask on the half-spectrum layout (True = keep)."""
    keep = np.ones(grid.spectral_shape, dtype=bool)
    for axis in range(grid.dim):
        n = grid.modes[axis]
        if axis == grid.dim - 1:
            m = np.arange(n // 2 + 1)
        else:
            m = np.abs(np.rint(np.fft.fftfreq(n) * n).astype(int))
        shape = [1] * grid.dim
        shape[axis] = m.size
        keep &= m.reshape(shape) < (n // 3) + 1
    return _readonly(keep)


@dataclass
class Field:
    """Real scalar field sampled on a grid (row-major collocation values)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def mean(self) -> float:
        return float(self.values.mean())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())

    def _check(self, other: "Field"):
        if self.grid != other.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


@dataclass
class Spectrum:
    """Half-spectrum Fourier coefficients of a real field."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != self.grid.spectral_shape:
            raise GridMismatchError(
                f"spectrum shape {self.coeffs.shape} does not match grid "
                f"{self.grid.spectral_shape}"
            )


@dataclass
class DiagonalSymbol:
    """Per-mode real multiplier; the zero mode may carry a distinct value.

    The distinct zero-mode entry houses nonlocal mean-coupled terms that are
    diagonal in Fourier space only on the constant mode.
    """

    grid: Grid
    multipliers: np.ndarray
    zero_mode: float | None = None

    def __post_init__(self):
        self.multipliers = np.asarray(self.multipliers, dtype=np.float64)
        if self.multipliers.shape != self.grid.spectral_shape:
            raise GridMismatchError("multiplier array does not match the grid layout")
        if not np.isfinite(self.multipliers).all():
            raise ValueError("multipliers must be finite")

    def effective(self) -> np.ndarray:
        """Multipliers with the zero-mode override substituted in."""
        if self.zero_mode is None:
            return self.multipliers
        out = self.multipliers.copy()
        out[(0,) * self.grid.dim] = self.zero_mode
        return out

    def shifted(self, c: float) -> "DiagonalSymbol":
        zm = None if self.zero_mode is None else self.zero_mode + c
        return DiagonalSymbol(self.grid, self.multipliers + c, zm)

    def scaled(self, c: float) -> "DiagonalSymbol":
        zm = None if self.zero_mode is None else self.zero_mode * c
        return DiagonalSymbol(self.grid, self.multipliers * c, zm)

    def times(self, other: "DiagonalSymbol") -> "DiagonalSymbol":
        """Composition of two diagonal operators (mode-wise product)."""
        if self.grid != other.grid:
            raise GridMismatchError("symbols live on different grids")
        if self.zero_mode is None and other.zero_mode is None:
            return DiagonalSymbol(self.grid, self.multipliers * other.multipliers)
        origin = (0,) * self.grid.dim
        zm = float(self.effective()[origin] * other.effective()[origin])
        return DiagonalSymbol(self.grid, self.multipliers * other.multipliers, zm)


def identity_symbol(grid: Grid) -> DiagonalSymbol:
    return DiagonalSymbol(grid, np.ones(grid.spectral_shape))


def laplacian_symbol(grid: Grid) -> DiagonalSymbol:
    return DiagonalSymbol(grid, -k_squared(grid))


def forward(f: Field) -> Spectrum:
    return Spectrum(f.grid, np.fft.rfftn(f.values))


def inverse(s: Spectrum) -> Field:
    axes = tuple(range(s.grid.dim))
    return Field(s.grid, np.fft.irfftn(s.coeffs, s=s.grid.shape, axes=axes))


def apply_symbol(s: Spectrum, d: DiagonalSymbol) -> Spectrum:
    if s.grid != d.grid:
        raise GridMismatchError("spectrum and symbol live on different grids")
    out = s.coeffs * d.multipliers
    if d.zero_mode is not None:
        origin = (0,) * s.grid.dim
        out[origin] = s.coeffs[origin] * d.zero_mode
    return Spectrum(s.grid, out)


def solve_diagonal(rhs: Spectrum, d: DiagonalSymbol) -> Spectrum:
    if rhs.grid != d.grid:
        raise GridMismatchError("spectrum and symbol live on different grids")
    mult = d.effective()
    idx = np.unravel_index(np.argmin(np.abs(mult)), mult.shape)
    if abs(mult[idx]) < 1e-14:
        raise SingularOperatorError(
            f"diagonal operator is singular at mode {tuple(int(i) for i in idx)} "
            f"(multiplier {mult[idx]:.3e})"
        )
    return Spectrum(rhs.grid, rhs.coeffs / mult)


def apply_operator(f: Field, d: DiagonalSymbol) -> Field:
    return inverse(apply_symbol(forward(f), d))


def solve_operator(rhs: Field, d: DiagonalSymbol) -> Field:
    return inverse(solve_diagonal(forward(rhs), d))


def derivative(f: Field, axis: int, order: int = 1) -> Field:
    """Spectral partial derivative along an axis.

    Odd orders zero the unmatched Nyquist mode of that axis so the result
    stays real and antisymmetric; even orders keep it.
    """
    k = _k_axis(f.grid, axis, zero_nyquist=(order % 2 == 1))
    mult = (1j * k) ** order
    s = forward(f)
    return inverse(Spectrum(f.grid, s.coeffs * mult))


def gradient(f: Field) -> list[Field]:
    return [derivative(f, axis) for axis in range(f.grid.dim)]


def integrate(f: Field) -> float:
    """Trapezoidal quadrature (exact spectral quadrature on periodic grids)."""
    return f.grid.cell_volume * float(f.values.sum())


def inner(f: Field, g: Field) -> float:
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")
    return f.grid.cell_volume * float(np.dot(f.values.ravel(), g.values.ravel()))


def l2_norm(f: Field) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def grad_norm_sq(f: Field) -> float:
    """Integral of |grad f|^2 over the domain."""
    return sum(inner(df, df) for df in gradient(f))


def h2_norm(f: Field) -> float:
    """Sobolev-2 norm via the (1 + |k|^2) spectral weight."""
    weighted = apply_operator(f, DiagonalSymbol(f.grid, 1.0 + k_squared(f.grid)))
    return l2_norm(weighted)


HEADER_BYTES = 64


def save_field(path, f: Field, t: float = 0.0):
    """Snapshot format: one 64-byte text header ("dim N.. L.. t"), then raw
    little-endian float64 values in row-major order."""
    dims = " ".join(str(n) for n in f.grid.modes)
    lens = " ".join(f"{l:.12g}" for l in f.grid.extents)
    header = f"{f.grid.dim} {dims} {lens} {t:.12g}"
    if len(header) > HEADER_BYTES - 1:
        raise ValueError("grid description does not fit the 64-byte header")
    header = header.ljust(HEADER_BYTES - 1) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(f.values.astype("<f8").tobytes())


def load_field(path, grid: Grid | None = None) -> tuple[Field, float]:
    """Read a snapshot.  If `grid` is given its exact extents are used (the
    header stores them at reduced precision) after a consistency check."""
    with open(path, "rb") as fh:
        header = fh.read(HEADER_BYTES).decode("ascii").split()
        dim = int(header[0])
        modes = tuple(int(v) for v in header[1 : 1 + dim])
        extents = tuple(float(v) for v in header[1 + dim : 1 + 2 * dim])
        t = float(header[1 + 2 * dim])
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if grid is not None:
        if grid.modes != modes:
            raise GridMismatchError(f"snapshot modes {modes} != grid {grid.modes}")
        for a, b in zip(grid.extents, extents):
            if abs(a - b) > 1e-9 * max(1.0, abs(a)):
                raise GridMismatchError(f"snapshot extents {extents} != grid {grid.extents}")
    else:
        grid = Grid(extents, modes)
    return Field(grid, raw.reshape(grid.shape).astype(np.float64)), t


def field_to_csv(path, f: Field):
    """Debug CSV export for 1D/2D fields: coordinates plus value per row."""
    if f.grid.dim > 2:
        raise ValueError("CSV export supports 1D and 2D fields only")
    mesh = f.grid.coords()
    cols = [m.ravel() for m in mesh] + [f.values.ravel()]
    names = ["x", "y"][: f.grid.dim] + ["value"]
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
