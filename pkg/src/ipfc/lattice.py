"""Index grids, projected wavevectors, and multi-scale operator symbols.

A d-dimensional quasiperiodic field is represented by Fourier coefficients on
an n-dimensional integer lattice (n >= d); mode h carries the physical
wavevector k_h = P @ B @ h.  With d = n and P = B = I this reduces to a plain
periodic spectral grid, so periodic and quasiperiodic structures share one
code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import bohr_fourier_sum

__all__ = [
    "ProjectionSpec",
    "IndexGrid",
    "OperatorSymbol",
    "build_grid",
    "wavevector",
    "build_symbol",
    "sample_real_space",
]

_DET_FLOOR = 1e-12
INJECTIVITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ProjectionSpec:
    """Embedding of a d-dimensional structure into an n-dimensional lattice.

    P is the d x n projection matrix, B the invertible n x n matrix of the
    embedding lattice.  Immutable and shareable.
    """

    d: int
    n: int
    P: np.ndarray
    B: np.ndarray

    def __post_init__(self) -> None:
        if not (1 <= self.d <= self.n):
            raise ValueError(f"need 1 <= d <= n, got d={self.d}, n={self.n}")
        P = np.array(self.P, dtype=float)
        B = np.array(self.B, dtype=float)
        if P.shape != (self.d, self.n):
            raise ValueError(f"P must have shape ({self.d}, {self.n}), got {P.shape}")
        if B.shape != (self.n, self.n):
            raise ValueError(f"B must have shape ({self.n}, {self.n}), got {B.shape}")
        if abs(np.linalg.det(B)) <= _DET_FLOOR:
            raise ValueError("B is singular (|det B| below machine-zero threshold)")
        P.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "B", B)

    @property
    def projected_basis(self) -> np.ndarray:
        """The d x n matrix P @ B mapping integer modes to wavevectors."""
        return self.P @ self.B

    def wavevector(self, h) -> np.ndarray:
        return self.projected_basis @ np.asarray(h, dtype=float)

    @classmethod
    def identity(cls, d: int) -> "ProjectionSpec":
        """Periodic crystal: d = n and P = B = I."""
        return cls(d=d, n=d, P=np.eye(d), B=np.eye(d))


def wavevector(spec: ProjectionSpec, h) -> np.ndarray:
    """Projected wavevector k_h = P @ B @ h of the integer mode h."""
    return spec.wavevector(h)


@dataclass(eq=False)
class IndexGrid:
    """Truncated mode set with FFT-compatible ordering.

    Each axis j runs over h_j in -N_j/2 .. N_j/2 - 1, stored in FFT order
    (0 .. N_j/2 - 1, -N_j/2 .. -1).  The flat layout is row-major over the
    axes, so the zero mode h = 0 sits at flat index 0.  The extreme mode
    -N_j/2 has no positive partner and pairs with itself under negation
    mod N_j.
    """

    spec: ProjectionSpec
    sizes: tuple
    total: int
    axis_indices: tuple
    h_matrix: np.ndarray  # (total, n) integer modes, flat order
    kvec: np.ndarray      # (total, d) projected wavevectors
    ksq: np.ndarray       # |k_h|^2, shaped like the coefficient array
    neg_flat: np.ndarray  # flat position of -h (mod N), an involution
    live_mask: np.ndarray  # modes whose mod-N mirror carries the same |k|^2
    all_live: bool

    #: flat index of the zero mode
    zero_index: int = field(default=0)

    def flat_index(self, h) -> int:
        h = np.asarray(h, dtype=int)
        if h.shape != (len(self.sizes),):
            raise ValueError(f"multi-index must have length {len(self.sizes)}")
        pos = []
        for hj, nj in zip(h, self.sizes):
            if not (-nj // 2 <= hj <= nj // 2 - 1):
                raise ValueError(f"mode index {hj} outside -{nj // 2} .. {nj // 2 - 1}")
            pos.append(hj % nj)
        return int(np.ravel_multi_index(tuple(pos), self.sizes))

    def multi_index(self, flat: int) -> np.ndarray:
        return self.h_matrix[flat].copy()


@dataclass(eq=False)
class OperatorSymbol:
    """Diagonal symbol of the multi-length-scale operator and of its square.

    g[h] = prod_j (q_j^2 - |k_h|^2) is real by construction; g2 = g**2.
    """

    grid: IndexGrid
    q: tuple
    g: np.ndarray
    g2: np.ndarray


def _injectivity_violation(spec: ProjectionSpec, sizes, tol: float):
    """Search the difference lattice for a nonzero delta with P B delta ~ 0.

    Two modes h1, h2 collide iff their difference does, so scanning deltas
    covers every pair without the quadratic pairwise sweep.
    """
    mat = spec.projected_basis
    axes = [np.arange(-(nj - 1), nj) for nj in sizes]
    shape = tuple(len(a) for a in axes)
    ndim = len(sizes)
    dist_sq = np.zeros(shape)
    for row in mat:
        comp = np.zeros(shape)
        for j, ax in enumerate(axes):
            view = [1] * ndim
            view[j] = -1
            comp = comp + row[j] * ax.reshape(view)
        dist_sq += comp * comp
    center = tuple(nj - 1 for nj in sizes)
    dist_sq[center] = np.inf
    pos = np.unravel_index(int(np.argmin(dist_sq)), shape)
    best = float(dist_sq[pos])
    if best >= tol * tol:
        return None
    delta = np.array([p - (nj - 1) for p, nj in zip(pos, sizes)], dtype=int)
    h2 = np.array(
        [-nj // 2 if dj >= 0 else nj // 2 - 1 for dj, nj in zip(delta, sizes)], dtype=int
    )
    h1 = h2 + delta
    return h1, h2, float(np.sqrt(best))


def build_grid(spec: ProjectionSpec, sizes, injectivity_tol: float = INJECTIVITY_TOL) -> IndexGrid:
    """Build the truncated index grid and validate the projection on it.

    Rejects odd axis sizes and projection specs under which two distinct
    retained modes project to the same wavevector (within tolerance), which
    would silently alias them.
    """
    sizes = tuple(int(s) for s in np.atleast_1d(sizes))
    if len(sizes) != spec.n:
        raise ValueError(f"need {spec.n} axis sizes, got {len(sizes)}")
    for s in sizes:
        if s < 2 or s % 2 != 0:
            raise ValueError(f"axis sizes must be even and >= 2, got {s}")

    hit = _injectivity_violation(spec, sizes, injectivity_tol)
    if hit is not None:
        h1, h2, dist = hit
        raise ValueError(
            "projection is not injective on the grid: modes "
            f"{tuple(h1)} and {tuple(h2)} project {dist:.3e} apart"
        )

    axis_indices = tuple(
        np.concatenate([np.arange(0, nj // 2), np.arange(-(nj // 2), 0)]) for nj in sizes
    )
    mesh = np.meshgrid(*axis_indices, indexing="ij")
    h_matrix = np.stack([m.ravel() for m in mesh], axis=1).astype(np.int64)
    kvec = h_matrix @ spec.projected_basis.T
    kvec = np.ascontiguousarray(np.atleast_2d(kvec.reshape(-1, spec.d)), dtype=float)
    ksq = (kvec**2).sum(axis=1).reshape(sizes)

    neg_pos = [(-np.arange(nj)) % nj for nj in sizes]
    neg_mesh = np.meshgrid(*neg_pos, indexing="ij")
    neg_flat = np.ravel_multi_index(tuple(neg_mesh), sizes).ravel().astype(np.int64)

    # Realness pairs mode h with -h mod N.  On the unmatched -N_j/2 planes
    # the mod-N mirror is not the true mirror; when the projection makes
    # their |k|^2 differ, diagonal symbols would break conjugate symmetry,
    # so such modes carry no content.  (Interior modes negate exactly; plain
    # periodic grids keep every mode.)
    ksq_flat = ksq.ravel()
    live_mask = (ksq_flat == ksq_flat[neg_flat]).reshape(sizes)

    total = int(np.prod(sizes))
    return IndexGrid(
        spec=spec,
        sizes=sizes,
        total=total,
        axis_indices=axis_indices,
        h_matrix=h_matrix,
        kvec=kvec,
        ksq=ksq,
        neg_flat=neg_flat,
        live_mask=live_mask,
        all_live=bool(live_mask.all()),
    )


def build_symbol(spec: ProjectionSpec, grid: IndexGrid, q) -> OperatorSymbol:
    """Per-mode values of prod_j (q_j^2 - |k_h|^2) and its square."""
    q = tuple(float(v) for v in np.atleast_1d(q))
    if len(q) == 0:
        raise ValueError("need at least one length scale")
    if any(v <= 0 for v in q):
        raise ValueError("length scales must be positive")
    g = np.ones_like(grid.ksq)
    for qj in q:
        g = g * (qj * qj - grid.ksq)
    return OperatorSymbol(grid=grid, q=q, g=g, g2=g * g)


def sample_real_space(
    spec: ProjectionSpec,
    grid: IndexGrid,
    fld,
    window,
    resolution,
    amplitude_floor: float = 0.0,
) -> np.ndarray:
    """Evaluate the field on a raster in physical space by direct summation.

    The projected wavevectors are incommensurate with any d-dimensional
    lattice, so an inverse FFT is not applicable; the raster is filled with
    Re sum_h c_h exp(i k_h . r) over modes with |c_h| > amplitude_floor.
    Pure in its inputs; raster[i0, i1, ...] samples axis j at the inclusive
    linspace of window[j].
    """
    if fld.grid is not grid:
        raise ValueError("field does not live on the supplied grid")
    if amplitude_floor < 0:
        raise ValueError("amplitude_floor must be >= 0")
    window = [(float(lo), float(hi)) for lo, hi in np.reshape(window, (-1, 2))]
    resolution = tuple(int(r) for r in np.atleast_1d(resolution))
    if len(window) != spec.d or len(resolution) != spec.d:
        raise ValueError(f"window and resolution must each have {spec.d} axes")
    if any(r < 1 for r in resolution):
        raise ValueError("resolution entries must be >= 1")

    flat = fld.coeffs.ravel()
    mask = np.abs(flat) > amplitude_floor
    if not mask.any():
        return np.zeros(resolution)
    kv = np.ascontiguousarray(grid.kvec[mask])
    cre = np.ascontiguousarray(flat[mask].real)
    cim = np.ascontiguousarray(flat[mask].imag)

    axes = [np.linspace(lo, hi, r) for (lo, hi), r in zip(window, resolution)]
    pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    pts = np.ascontiguousarray(pts)
    out = bohr_fourier_sum(kv, cre, cim, pts)
    return out.reshape(resolution)
