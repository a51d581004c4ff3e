"""Spectral-field algebra: transforms, pseudospectral products, diagonal ops.

Coefficients are Bohr-Fourier amplitudes: the physical samples are
sum_h c_h exp(i k_h . x_j) on the embedding grid, so the forward transform
divides by the mode count and the coefficient-space dot product equals the
mean spatial inner product with no extra factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import hermitian_pair_mean, poly_eval
from .errors import GridMismatchError, NumericalError
from .lattice import IndexGrid, OperatorSymbol

__all__ = [
    "SpectralField",
    "PhysicalField",
    "zeros_field",
    "field_from_coeffs",
    "enforce_hermitian",
    "hermitian_violation",
    "project_mean",
    "mean_coefficient",
    "inner_ap",
    "norm_ap",
    "axpy",
    "to_physical",
    "to_spectral",
    "pointwise_poly",
    "pointwise_poly_mean",
    "apply_symbol",
    "resolvent_apply",
    "dump_field",
    "load_field",
]

_IMAG_TOL = 1e-12
DUMP_THRESHOLD = 1e-14


@dataclass(eq=False)
class SpectralField:
    """Complex coefficients on an index grid.  Treated as an immutable value;
    every operation returns a new field."""

    grid: IndexGrid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.sizes:
            c = c.reshape(self.grid.sizes)
        self.coeffs = c

    def _check(self, other: "SpectralField") -> None:
        if self.grid is not other.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs / float(scalar))

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())


@dataclass(eq=False)
class PhysicalField:
    """Real samples on the collocation points of the embedding grid."""

    grid: IndexGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.sizes:
            v = v.reshape(self.grid.sizes)
        self.values = v


def zeros_field(grid: IndexGrid) -> SpectralField:
    return SpectralField(grid, np.zeros(grid.sizes, dtype=np.complex128))


def field_from_coeffs(grid: IndexGrid, coeffs) -> SpectralField:
    return SpectralField(grid, np.array(coeffs, dtype=np.complex128))


def axpy(alpha: float, x: SpectralField, y: SpectralField) -> SpectralField:
    """alpha * x + y, componentwise."""
    x._check(y)
    return SpectralField(x.grid, alpha * x.coeffs + y.coeffs)


def enforce_hermitian(f: SpectralField) -> SpectralField:
    """Project onto conjugate-symmetric coefficients, (c_h + conj(c_-h)) / 2.

    Negation is taken mod N per axis, so the extreme -N/2 planes pair with
    themselves and are projected onto their real-symmetric part.  Modes whose
    mod-N mirror carries a different wavevector norm (asymmetric extreme
    planes of projected grids) cannot host real content compatibly with the
    diagonal symbols and are zeroed.
    """
    flat = np.ascontiguousarray(f.coeffs.ravel())
    out = hermitian_pair_mean(flat, f.grid.neg_flat).reshape(f.grid.sizes)
    if not f.grid.all_live:
        out = out * f.grid.live_mask
    return SpectralField(f.grid, out)


def hermitian_violation(f: SpectralField) -> float:
    flat = f.coeffs.ravel()
    return float(np.abs(flat - np.conj(flat[f.grid.neg_flat])).max())


def mean_coefficient(f: SpectralField) -> complex:
    """Zero-mode coefficient, i.e. the spatial mean of the field."""
    return complex(f.coeffs.ravel()[f.grid.zero_index])


def project_mean(f: SpectralField) -> SpectralField:
    """Return the field with its zero mode removed."""
    out = f.coeffs.copy()
    out.ravel()[f.grid.zero_index] = 0.0
    return SpectralField(f.grid, out)


def _coeff_inner(a: np.ndarray, b: np.ndarray) -> float:
    """sum_h a_h conj(b_h), asserting the imaginary residue is negligible."""
    s = np.vdot(b, a)  # vdot conjugates its first argument
    scale = np.linalg.norm(a.ravel()) * np.linalg.norm(b.ravel())
    if abs(s.imag) > _IMAG_TOL * (scale + 1e-300):
        raise NumericalError(
            f"inner product has non-negligible imaginary part {s.imag:.3e} "
            "(operands are not conjugate-symmetric)"
        )
    return float(s.real)


def inner_ap(f: SpectralField, g: SpectralField) -> float:
    """Mean spatial inner product of two fields, evaluated in coefficient space."""
    f._check(g)
    return _coeff_inner(f.coeffs, g.coeffs)


def norm_ap(f: SpectralField) -> float:
    return float(np.linalg.norm(f.coeffs.ravel()))


def to_physical(f: SpectralField) -> PhysicalField:
    """Inverse transform to collocation values; imaginary parts are asserted
    negligible and dropped."""
    vals = np.fft.ifftn(f.coeffs) * f.grid.total
    _assert_real(vals, f.coeffs)
    return PhysicalField(f.grid, np.ascontiguousarray(vals.real))


def to_spectral(p: PhysicalField) -> SpectralField:
    """Forward transform of collocation values to coefficients."""
    return SpectralField(p.grid, np.fft.fftn(p.values) / p.grid.total)


def _assert_real(vals: np.ndarray, coeffs: np.ndarray) -> None:
    imax = float(np.abs(vals.imag).max()) if vals.size else 0.0
    cmax = float(np.abs(coeffs).max()) if coeffs.size else 0.0
    if imax > max(_IMAG_TOL * cmax, 1e-15):
        raise NumericalError(
            f"physical samples have imaginary part {imax:.3e}; "
            "input coefficients are not conjugate-symmetric"
        )


# -- pseudospectral products -------------------------------------------------

def _embed_padded(coeffs: np.ndarray, sizes, factor: int) -> np.ndarray:
    """Zero-pad each axis by `factor`, splitting the self-paired extreme plane
    across +/- N/2 so the padded array stays conjugate-symmetric."""
    ndim = len(sizes)
    big = np.zeros(tuple(factor * nj for nj in sizes), dtype=np.complex128)
    idx = [
        np.where(np.arange(nj) < nj // 2, np.arange(nj), np.arange(nj) + (factor - 1) * nj)
        for nj in sizes
    ]
    big[np.ix_(*idx)] = coeffs
    for ax, nj in enumerate(sizes):
        lo = [slice(None)] * ndim
        hi = [slice(None)] * ndim
        lo[ax] = factor * nj - nj // 2  # mode -N/2
        hi[ax] = nj // 2                # mode +N/2, empty before the split
        big[tuple(hi)] = 0.5 * big[tuple(lo)]
        big[tuple(lo)] = big[tuple(hi)]
    return big


def _extract_truncated(big: np.ndarray, sizes, factor: int) -> np.ndarray:
    idx = [
        np.where(np.arange(nj) < nj // 2, np.arange(nj), np.arange(nj) + (factor - 1) * nj)
        for nj in sizes
    ]
    return np.ascontiguousarray(big[np.ix_(*idx)])


def _validate_terms(terms):
    exps = []
    cfs = []
    for p, c in terms:
        p = int(p)
        if p not in (1, 2, 3, 4):
            raise ValueError(f"exponents must be in 1..4, got {p}")
        exps.append(p)
        cfs.append(float(c))
    if not exps:
        raise ValueError("need at least one polynomial term")
    return np.asarray(exps, dtype=np.int64), np.asarray(cfs, dtype=float)


def _poly_physical(f: SpectralField, terms, dealias: bool, pad_factor: int):
    """Evaluate the polynomial pointwise in physical space.

    Returns (values, sizes, factor) where `values` lives on the (possibly
    padded) collocation grid.
    """
    exps, cfs = _validate_terms(terms)
    if dealias:
        big = _embed_padded(f.coeffs, f.grid.sizes, pad_factor)
        vals = np.fft.ifftn(big) * big.size
        _assert_real(vals, f.coeffs)
        v = np.ascontiguousarray(vals.real)
        factor = pad_factor
    else:
        v = to_physical(f).values
        factor = 1
    w = poly_eval(v.ravel(), exps, cfs).reshape(v.shape)
    return w, f.grid.sizes, factor


def pointwise_poly(
    f: SpectralField, terms, dealias: bool = False, pad_factor: int = 2
) -> SpectralField:
    """Polynomial of the field, evaluated pseudospectrally.

    `terms` is a sequence of (exponent, coefficient) pairs with exponents in
    1..4.  With `dealias` the product is formed on a grid padded by
    `pad_factor`, which makes results exact truncated convolutions for total
    degree up to pad_factor + 1.  The result is re-symmetrized.
    """
    w, sizes, factor = _poly_physical(f, terms, dealias, pad_factor)
    spec_big = np.fft.fftn(w) / w.size
    out = spec_big if factor == 1 else _extract_truncated(spec_big, sizes, factor)
    return enforce_hermitian(SpectralField(f.grid, out))


def pointwise_poly_mean(
    f: SpectralField, terms, dealias: bool = False, pad_factor: int = 2
) -> float:
    """Spatial mean of a pointwise polynomial of the field (its zero mode)."""
    w, _, _ = _poly_physical(f, terms, dealias, pad_factor)
    return float(w.mean())


# -- diagonal operators --------------------------------------------------------

def apply_symbol(f: SpectralField, symbol: OperatorSymbol, power: int = 1) -> SpectralField:
    """Multiply coefficients by the operator symbol (power 1) or its square."""
    if symbol.grid is not f.grid:
        raise GridMismatchError("symbol was built for a different grid")
    if power == 1:
        return SpectralField(f.grid, f.coeffs * symbol.g)
    if power == 2:
        return SpectralField(f.grid, f.coeffs * symbol.g2)
    raise ValueError("power must be 1 or 2")


def resolvent_apply(f: SpectralField, symbol: OperatorSymbol, tau: float) -> SpectralField:
    """Apply (I + tau/2 * G^2)^{-1}; the denominator is >= 1 for tau > 0."""
    if symbol.grid is not f.grid:
        raise GridMismatchError("symbol was built for a different grid")
    if tau <= 0:
        raise ValueError("tau must be positive")
    return SpectralField(f.grid, f.coeffs / (1.0 + 0.5 * tau * symbol.g2))


# -- portable dumps -------------------------------------------------------------

def dump_field(f: SpectralField, fileobj) -> None:
    """Write the portable text dump: a header line then one
    "h1 .. hn re im" line per coefficient above the drop threshold."""
    grid = f.grid
    sizes = ",".join(str(s) for s in grid.sizes)
    fileobj.write(f"ipfc-field v1 n={len(grid.sizes)} sizes={sizes}\n")
    flat = f.coeffs.ravel()
    keep = np.flatnonzero(np.abs(flat) > DUMP_THRESHOLD)
    for i in keep:
        h = " ".join(str(int(v)) for v in grid.h_matrix[i])
        c = flat[i]
        fileobj.write(f"{h} {c.real:.17g} {c.imag:.17g}\n")


def load_field(fileobj, grid: IndexGrid) -> SpectralField:
    """Read a portable dump back onto an existing grid (header must match)."""
    header = fileobj.readline().strip()
    parts = header.split()
    if len(parts) != 4 or parts[0] != "ipfc-field" or parts[1] != "v1":
        raise ValueError(f"unrecognized field dump header: {header!r}")
    n = int(parts[2].split("=", 1)[1])
    sizes = tuple(int(s) for s in parts[3].split("=", 1)[1].split(","))
    if n != len(grid.sizes) or sizes != grid.sizes:
        raise ValueError(f"dump grid {sizes} does not match target grid {grid.sizes}")
    out = zeros_field(grid)
    flat = out.coeffs.ravel()
    for line in fileobj:
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != n + 2:
            raise ValueError(f"malformed dump line: {line!r}")
        h = [int(t) for t in tokens[:n]]
        flat[grid.flat_index(h)] = complex(float(tokens[n]), float(tokens[n + 1]))
    return out
