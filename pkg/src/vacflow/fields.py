"""Periodic collocation grids, spectral calculus, and discrete Sobolev norms.

Everything lives on an isotropic periodic box [0, L)^dim sampled at n points
per axis, n a power of two. Derivatives are Fourier multipliers with physical
wavenumbers k = 2*pi*m/L, products that later feed derivatives go through
2/3-rule dealiasing, and the norm convention is fixed so that the s = 0
Sobolev norm coincides with the physical quadrature L2 norm:

    ||f||_s^2 = sum_k (1 + |k|^2)^s |fhat_k|^2 * L^dim,   fhat = FFT(f)/n^dim.

Seminorms |f|_{D^k} replace the weight by |k|^{2k}. The weighted seminorm
|w grad^k u|_2 is evaluated in physical space: all distinct k-th partials of
every velocity component, squared with multinomial multiplicity, against the
quadrature weight h^dim.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations_with_replacement

import numpy as np

SNAPSHOT_MAGIC = b"VACFSNAP"
SNAPSHOT_VERSION = 1
MAX_DERIVATIVE_ORDER = 4


class FieldError(ValueError):
    """Raised when field data violates a structural contract."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Isotropic periodic box [0, L)^dim with n collocation points per axis."""

    dim: int
    n: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise FieldError(f"dim must be 1, 2, or 3, got {self.dim}")
        if not _is_power_of_two(self.n) or self.n < 8:
            raise FieldError(f"n must be a power of two >= 8, got {self.n}")
        if not (math.isfinite(self.box_length) and self.box_length > 0):
            raise FieldError(f"box_length must be positive, got {self.box_length}")

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @cached_property
    def coordinates(self) -> tuple:
        """Per-axis coordinate arrays shaped for broadcasting."""
        x = np.arange(self.n) * self.spacing
        return tuple(
            x.reshape([-1 if a == axis else 1 for a in range(self.dim)])
            for axis in range(self.dim)
        )

    @cached_property
    def wavenumbers(self) -> tuple:
        """Per-axis physical wavenumber arrays shaped for broadcasting."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)
        return tuple(
            k.reshape([-1 if a == axis else 1 for a in range(self.dim)])
            for axis in range(self.dim)
        )

    @cached_property
    def k_squared(self) -> np.ndarray:
        ks = np.zeros(self.shape)
        for k in self.wavenumbers:
            ks = ks + k**2
        return ks

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean 2/3-rule mask: keep integer modes with |m| <= n//3."""
        modes = np.fft.fftfreq(self.n, d=1.0 / self.n)
        keep = np.abs(modes) <= self.n // 3
        mask = np.ones(self.shape, dtype=bool)
        for axis in range(self.dim):
            mask &= keep.reshape(
                [-1 if a == axis else 1 for a in range(self.dim)]
            )
        return mask

    @cached_property
    def _nyquist_free(self) -> np.ndarray:
        """Mask zeroing the Nyquist plane on every axis (odd derivatives)."""
        modes = np.fft.fftfreq(self.n, d=1.0 / self.n)
        keep = np.abs(modes) < self.n // 2
        mask = np.ones(self.shape, dtype=bool)
        for axis in range(self.dim):
            mask &= keep.reshape(
                [-1 if a == axis else 1 for a in range(self.dim)]
            )
        return mask

    # -- spectral calculus -------------------------------------------------

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values)

    def ifft(self, spectrum: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(spectrum).real

    def derivative_multiplier(self, order: tuple) -> np.ndarray:
        """(ik)^order multiplier; Nyquist zeroed on axes with odd order."""
        if len(order) != self.dim:
            raise FieldError(
                f"order has {len(order)} entries for a {self.dim}-d grid"
            )
        if any(o < 0 for o in order) or sum(order) > MAX_DERIVATIVE_ORDER:
            raise FieldError(
                f"derivative order {order} outside supported range "
                f"(nonnegative, total <= {MAX_DERIVATIVE_ORDER})"
            )
        mult = np.ones(self.shape, dtype=complex)
        modes = np.fft.fftfreq(self.n, d=1.0 / self.n)
        nyq_keep = np.abs(modes) < self.n // 2
        for axis, o in enumerate(order):
            if o == 0:
                continue
            k = self.wavenumbers[axis]
            factor = (1j * k) ** o
            if o % 2 == 1:
                shape = [-1 if a == axis else 1 for a in range(self.dim)]
                factor = factor * nyq_keep.reshape(shape)
            mult = mult * factor
        return mult

    def deriv(self, values: np.ndarray, order: tuple) -> np.ndarray:
        return self.ifft(self.derivative_multiplier(order) * self.fft(values))

    def grad(self, values: np.ndarray) -> np.ndarray:
        """Gradient, stacked along a leading component axis."""
        spectrum = self.fft(values)
        out = np.empty((self.dim,) + self.shape)
        for axis in range(self.dim):
            order = tuple(1 if a == axis else 0 for a in range(self.dim))
            out[axis] = self.ifft(self.derivative_multiplier(order) * spectrum)
        return out

    def div(self, vec: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape)
        for axis in range(self.dim):
            order = tuple(1 if a == axis else 0 for a in range(self.dim))
            out += self.deriv(vec[axis], order)
        return out

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        return self.ifft(-self.k_squared * self.fft(values))

    def grad_div(self, vec: np.ndarray) -> np.ndarray:
        d = self.div(vec)
        return self.grad(d)

    def dealias(self, values: np.ndarray) -> np.ndarray:
        return self.ifft(self.dealias_mask * self.fft(values))

    def mult(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Dealiased pointwise product: truncate both factors, multiply,
        truncate the result. Exact for inputs supported on |m| <= n//3."""
        am = self.ifft(self.dealias_mask * self.fft(a))
        bm = self.ifft(self.dealias_mask * self.fft(b))
        return self.ifft(self.dealias_mask * self.fft(am * bm))

    def masked(self, values: np.ndarray) -> np.ndarray:
        """Truncate to the dealias band (alias of dealias, named for use as
        a precomputation step before repeated mult_masked calls)."""
        return self.dealias(values)

    def mult_masked(self, am: np.ndarray, bm: np.ndarray) -> np.ndarray:
        """Product of two already-truncated factors, truncated once more."""
        return self.ifft(self.dealias_mask * self.fft(am * bm))


def _as_values(values, grid: Grid, ncomp: int | None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    expected = grid.shape if ncomp is None else (ncomp,) + grid.shape
    if arr.shape != expected:
        raise FieldError(f"values shape {arr.shape}, expected {expected}")
    if not np.all(np.isfinite(arr)):
        raise FieldError("field values must be finite")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_values(self.values, self.grid, None))

    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class VectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _as_values(self.values, self.grid, self.grid.dim)
        )

    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))


def derivative(field: ScalarField, order: tuple) -> ScalarField:
    """Mixed partial d^order f of total order at most four."""
    return ScalarField(field.grid, field.grid.deriv(field.values, order))


# -- norms -----------------------------------------------------------------


def _component_list(field) -> list:
    if isinstance(field, ScalarField):
        return [field.values]
    if isinstance(field, VectorField):
        return [field.values[i] for i in range(field.grid.dim)]
    raise FieldError(f"expected ScalarField or VectorField, got {type(field)}")


def sobolev_norm(field, s: int) -> float:
    """||f||_s with the quadrature-L2 normalization; vector fields sum
    component squares before the square root."""
    grid = field.grid
    weight = (1.0 + grid.k_squared) ** s
    total = 0.0
    scale = grid.box_length**grid.dim / grid.n ** (2 * grid.dim)
    for comp in _component_list(field):
        spectrum = grid.fft(comp)
        total += float(np.sum(weight * np.abs(spectrum) ** 2)) * scale
    return math.sqrt(total)


def seminorm(field, k: int) -> float:
    """|f|_{D^k}: the |k|^{2k} spectral weight, all components summed."""
    if k < 0 or k > MAX_DERIVATIVE_ORDER:
        raise FieldError(f"seminorm order {k} outside 0..{MAX_DERIVATIVE_ORDER}")
    grid = field.grid
    weight = grid.k_squared**k
    total = 0.0
    scale = grid.box_length**grid.dim / grid.n ** (2 * grid.dim)
    for comp in _component_list(field):
        spectrum = grid.fft(comp)
        total += float(np.sum(weight * np.abs(spectrum) ** 2)) * scale
    return math.sqrt(total)


def quadrature_l2(grid: Grid, values: np.ndarray) -> float:
    """Physical-space L2 norm: (h^dim * sum of squares)^(1/2)."""
    return math.sqrt(float(np.sum(values**2)) * grid.cell_volume)


def multi_indices(dim: int, total: int) -> list:
    """Distinct multi-indices of the given total order, with multinomial
    multiplicity total!/prod(order_i!) attached."""
    out = []
    for combo in combinations_with_replacement(range(dim), total):
        order = [0] * dim
        for axis in combo:
            order[axis] += 1
        mult = math.factorial(total)
        for o in order:
            mult //= math.factorial(o)
        out.append((tuple(order), mult))
    return out


def weighted_seminorm(weight: ScalarField, u: VectorField, k: int) -> float:
    """|w grad^k u|_2: Frobenius contraction of all k-th partials of every
    component of u against |w|, physical quadrature."""
    if weight.grid != u.grid:
        raise FieldError("weight and field live on different grids")
    if k < 1 or k > MAX_DERIVATIVE_ORDER:
        raise FieldError(f"weighted seminorm order {k} outside 1..{MAX_DERIVATIVE_ORDER}")
    grid = u.grid
    w2 = weight.values**2
    total = 0.0
    for comp in _component_list(u):
        spectrum = grid.fft(comp)
        for order, mult in multi_indices(grid.dim, k):
            d = grid.ifft(grid.derivative_multiplier(order) * spectrum)
            total += mult * float(np.sum(w2 * d**2))
    return math.sqrt(total * grid.cell_volume)


@dataclass(frozen=True)
class NormReport:
    """One field's discrete norms: ||.||_s for s = 0..3, |.|_{D^k} for
    k = 1..3, and the max norm. Velocity reports add |w grad^k u|_2."""

    h_norms: tuple
    seminorms: tuple
    linf: float
    weighted: tuple = ()

    def __post_init__(self):
        for a, b in zip(self.h_norms, self.h_norms[1:]):
            if b < a - 1e-12 * max(1.0, a):
                raise FieldError("Sobolev norms must be nondecreasing in s")


def norm_report(field, weight: ScalarField | None = None) -> NormReport:
    h = tuple(sobolev_norm(field, s) for s in range(4))
    d = tuple(seminorm(field, k) for k in (1, 2, 3))
    w = ()
    if weight is not None:
        if not isinstance(field, VectorField):
            raise FieldError("weighted seminorms apply to vector fields")
        w = tuple(weighted_seminorm(weight, field, k) for k in (2, 3, 4))
    return NormReport(h_norms=h, seminorms=d, linf=field.linf(), weighted=w)


# -- support margin ----------------------------------------------------------


def support_margin(density: ScalarField, threshold: float = 1e-12) -> float:
    """Distance from the support {|rho| > threshold} to the nearest box face.

    The periodic seam sits at coordinate 0 (equivalently L); data meant to
    mimic a whole-space profile must keep its support away from it. Returns
    +inf when the field has no support at the threshold.
    """
    grid = density.grid
    mask = np.abs(density.values) > threshold
    if not mask.any():
        return math.inf
    margin = math.inf
    x = np.arange(grid.n) * grid.spacing
    dist_axis = np.minimum(x, grid.box_length - x)
    for axis in range(grid.dim):
        present = mask.any(
            axis=tuple(a for a in range(grid.dim) if a != axis)
        )
        margin = min(margin, float(dist_axis[present].min()))
    return margin


# -- snapshot format ---------------------------------------------------------

_HEADER = struct.Struct("<8sIIII16sdd")


def save_snapshot(path, field, role: str, time: float = 0.0) -> None:
    """Write the binary snapshot: fixed header then C-order little-endian
    float64 payload, one block per component."""
    grid = field.grid
    comps = _component_list(field)
    role_b = role.encode("ascii")
    if len(role_b) > 16:
        raise FieldError(f"role string too long: {role!r}")
    header = _HEADER.pack(
        SNAPSHOT_MAGIC,
        SNAPSHOT_VERSION,
        grid.dim,
        grid.n,
        len(comps),
        role_b.ljust(16, b"\x00"),
        grid.box_length,
        time,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for comp in comps:
            fh.write(np.ascontiguousarray(comp, dtype="<f8").tobytes())


def load_snapshot(path):
    """Read a snapshot; returns (field, role, time). Component count 1 maps
    to ScalarField, dim components to VectorField."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise FieldError(f"snapshot {path} truncated in header")
        magic, version, dim, n, ncomp, role_b, length, time = _HEADER.unpack(raw)
        if magic != SNAPSHOT_MAGIC:
            raise FieldError(f"snapshot {path} has bad magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise FieldError(f"snapshot {path} has unsupported version {version}")
        grid = Grid(dim=dim, n=n, box_length=length)
        count = n**dim
        comps = []
        for _ in range(ncomp):
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise FieldError(f"snapshot {path} truncated in payload")
            comps.append(np.frombuffer(buf, dtype="<f8").reshape(grid.shape))
        if fh.read(1):
            raise FieldError(f"snapshot {path} has trailing bytes")
    role = role_b.rstrip(b"\x00").decode("ascii")
    # On a 1-d grid a single block could be either kind; the role settles it.
    if ncomp == dim and (ncomp > 1 or role == "velocity"):
        field = VectorField(grid, np.stack(comps))
    elif ncomp == 1:
        field = ScalarField(grid, comps[0])
    else:
        raise FieldError(f"snapshot {path} has {ncomp} components on a {dim}-d grid")
    return field, role, time
