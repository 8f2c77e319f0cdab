"""Dirichlet sine-spectral discretization of intervals and rectangles.

Fields are sampled on interior nodes ``x_i = i h`` (``i = 1..n``,
``h = l / (n + 1)``). Coefficients are taken against the L2-normalized
eigenfunctions ``e_k(x) = sqrt(2/l) sin(k pi x / l)``, so the discrete L2 norm
``sum |u_i|^2 h`` equals ``sum |u_k|^2`` exactly (Parseval). The type-I DST is
diagonal in this basis, which makes the Laplacian and the free Schrodinger
group exact on the grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft

MIN_NODES = 3

# worker count used by every transform; set through set_workers()
_WORKERS = 1


def set_workers(n):
    global _WORKERS
    _WORKERS = max(1, int(n))


@dataclass(frozen=True)
class RectDomain:
    lengths: tuple

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if len(lengths) not in (1, 2):
            raise ValueError(f"only 1D and 2D domains are supported, got dim={len(lengths)}")
        if any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise ValueError(f"domain lengths must be positive, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self):
        return len(self.lengths)

    @property
    def midpoint(self):
        return tuple(0.5 * v for v in self.lengths)

    def contains(self, point):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return point.shape == (self.dim,) and bool(
            np.all(point > 0) and np.all(point < np.asarray(self.lengths))
        )


@dataclass(frozen=True, eq=False)
class Grid:
    domain: RectDomain
    n: tuple

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if len(n) != self.domain.dim:
            raise ValueError(f"need {self.domain.dim} node counts, got {n}")
        for v in n:
            if v < MIN_NODES:
                raise ValueError(f"node counts must be >= {MIN_NODES}, got {n}")
            if fft.next_fast_len(v + 1) != v + 1:
                raise ValueError(
                    f"n + 1 = {v + 1} is not a fast transform size; try {fft.next_fast_len(v + 1) - 1}"
                )
        object.__setattr__(self, "n", n)

    @property
    def dim(self):
        return self.domain.dim

    @property
    def shape(self):
        return self.n

    @property
    def lengths(self):
        return self.domain.lengths

    @cached_property
    def spacing(self):
        return tuple(l / (m + 1) for l, m in zip(self.domain.lengths, self.n))

    @cached_property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self):
        """1D node coordinates along each axis."""
        return tuple(h * np.arange(1, m + 1) for h, m in zip(self.spacing, self.n))

    @cached_property
    def coords(self):
        """Meshgrid of node coordinates, one array per axis (ij indexing)."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def wavenumbers(self):
        """Per-axis symbols k pi / l, k = 1..n."""
        return tuple(np.pi * np.arange(1, m + 1) / l for m, l in zip(self.n, self.domain.lengths))

    @cached_property
    def eigenvalues(self):
        """mu_k = sum_j (k_j pi / l_j)^2 on the coefficient array layout."""
        mu = np.zeros(self.n)
        for j, kk in enumerate(self.wavenumbers):
            shape = [1] * self.dim
            shape[j] = -1
            mu = mu + (kk ** 2).reshape(shape)
        return mu

    @cached_property
    def _scale(self):
        return float(np.sqrt(self.cell_volume))

    def distance_from(self, point):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        r2 = np.zeros(self.n)
        for xj, cj in zip(self.coords, point):
            r2 = r2 + (xj - cj) ** 2
        return np.sqrt(r2)

    def zeros(self):
        return np.zeros(self.n, dtype=complex)

    # raw-array transforms; the typed wrappers below delegate here
    def to_coeffs(self, values):
        return self._scale * fft.dstn(values, type=1, norm="ortho", workers=_WORKERS)

    def to_values(self, coeffs):
        return fft.idstn(coeffs, type=1, norm="ortho", workers=_WORKERS) / self._scale

    def __repr__(self):
        return f"Grid(lengths={self.domain.lengths}, n={self.n})"


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {coeffs.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def eigenvalues(self):
        return self.grid.eigenvalues


def build_grid(domain, n):
    if not isinstance(domain, RectDomain):
        domain = RectDomain(tuple(np.atleast_1d(domain)))
    return Grid(domain, tuple(np.atleast_1d(n)))


def dst_forward(f):
    return SpectralCoeffs(f.grid, f.grid.to_coeffs(f.values))


def dst_inverse(c):
    return ComplexField(c.grid, c.grid.to_values(c.coeffs))


def apply_laplacian(c):
    return SpectralCoeffs(c.grid, -c.grid.eigenvalues * c.coeffs)


def linear_propagator(c, t):
    """Free Schrodinger group e^{it Delta}: coefficient k picks up e^{-i mu_k t}."""
    if not np.isfinite(t):
        raise ValueError("propagation time must be finite")
    return SpectralCoeffs(c.grid, np.exp(-1j * t * c.grid.eigenvalues) * c.coeffs)


def sobolev_norm_coeffs(coeffs, grid, s):
    if s not in (0, 1, 2):
        raise ValueError(f"unsupported Sobolev index s={s}; expected 0, 1 or 2")
    w = (1.0 + grid.eigenvalues) ** s
    return float(np.sqrt(np.sum(w * np.abs(coeffs) ** 2)))


def sobolev_norm(f, s):
    """Spectral H^s norm (sum (1 + mu_k)^s |u_k|^2)^(1/2), s in {0, 1, 2}."""
    if isinstance(f, SpectralCoeffs):
        return sobolev_norm_coeffs(f.coeffs, f.grid, s)
    return sobolev_norm_coeffs(f.grid.to_coeffs(f.values), f.grid, s)


def gradient_values(grid, coeffs):
    """Spectral partial derivatives in physical space, one complex array per axis.

    d/dx sin(k pi x / l) = (k pi / l) cos(k pi x / l); the cosine series is
    summed on the interior nodes directly with a DCT-I on the zero-padded
    coefficient vector.
    """
    out = []
    for j, kk in enumerate(grid.wavenumbers):
        shape = [1] * grid.dim
        shape[j] = -1
        weighted = coeffs * kk.reshape(shape)
        out.append(_cosine_synthesis(grid, weighted, axis=j))
    return out


def _cosine_synthesis(grid, coeffs, axis):
    # values of sum_k c_k sqrt(2/l) cos(k pi x_i / l) at interior nodes, then
    # the remaining axes are ordinary sine syntheses
    l = grid.lengths[axis]
    m = grid.n[axis]
    pad = [(0, 0)] * grid.dim
    pad[axis] = (1, 1)
    # DCT-I over nodes 0..m+1 with coefficients c_0 = c_{m+1} = 0
    full = np.pad(coeffs, pad)
    # unnormalized DCT-I: y_i = x_0 + (-1)^i x_{N-1} + 2 sum_{k=1}^{N-2} x_k cos(pi k i / (N-1))
    vals = fft.dct(full, type=1, axis=axis, workers=_WORKERS) * 0.5 * np.sqrt(2.0 / l)
    vals = np.take(vals, np.arange(1, m + 1), axis=axis)
    for j in range(grid.dim):
        if j == axis:
            continue
        lj = grid.lengths[j]
        mj = grid.n[j]
        # sine synthesis along axis j: sum_k c_k sqrt(2/l) sin(k pi i / (m+1))
        vals = fft.idst(vals, type=1, axis=j, norm="ortho", workers=_WORKERS) * np.sqrt(
            (mj + 1) / 2.0
        ) * np.sqrt(2.0 / lj)
    return vals
