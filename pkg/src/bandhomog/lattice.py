"""Lattice geometry and the truncated plane-wave basis.

The lattice is spanned by the columns of A; the dual basis is formed by the
columns of 2*pi*A^{-T}, so <b^l, a_j> = 2*pi*delta_j^l.  Points of the dual
torus are realized in the fundamental domain {sum t_l b^l : t in [0,1)^d};
neighborhood sweeps around a fixed quasimomentum use a box centered at that
point instead, so small balls never wrap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fourier import five_smooth, dict_to_grid, grid_to_coeff_array

_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class Lattice:
    dim: int
    basis: np.ndarray        # columns a_1..a_d
    dual: np.ndarray         # columns b^1..b^d = 2 pi A^{-T}
    cell_volume: float
    dual_volume: float
    condition_number: float

    def reduce(self, k, center=None) -> np.ndarray:
        """Reduce k modulo the dual lattice.

        With center=None the result lies in {sum t_l b^l : t in [0,1)^d};
        with a center c it lies in the box of fractional side 1 centered at
        c, so points already within half a dual spacing of c are returned
        unchanged.
        """
        k = np.atleast_1d(np.asarray(k, dtype=float))
        t = np.linalg.solve(self.dual, k)
        if center is None:
            t_red = t - np.floor(t)
            # land exact upper-boundary points back on the lower boundary
            t_red[t_red >= 1.0 - _BOUNDARY_TOL] = 0.0
        else:
            tc = np.linalg.solve(self.dual, np.atleast_1d(np.asarray(center, dtype=float)))
            t_red = t - np.floor(t - tc + 0.5)
        if np.allclose(t_red, t, rtol=0.0, atol=0.0):
            return k
        return self.dual @ t_red

    def min_dual_norm(self) -> float:
        """Norm of the shortest nonzero dual lattice vector."""
        best = np.inf
        for m in itertools.product(range(-2, 3), repeat=self.dim):
            if all(x == 0 for x in m):
                continue
            best = min(best, float(np.linalg.norm(self.dual @ np.array(m))))
        return best


def build_lattice(basis_vectors) -> Lattice:
    """Construct lattice data from the d x d matrix with columns a_1..a_d."""
    A = np.atleast_2d(np.asarray(basis_vectors, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ConfigError(f"lattice basis must be square, got shape {A.shape}")
    d = A.shape[0]
    if not 1 <= d <= 3:
        raise ConfigError(f"supported dimensions are 1..3, got {d}")
    det = np.linalg.det(A)
    if abs(det) < 1e-14 * max(1.0, np.abs(A).max()) ** d:
        raise ConfigError("lattice basis matrix is singular")
    B = 2.0 * np.pi * np.linalg.inv(A).T
    vol = abs(det)
    return Lattice(
        dim=d,
        basis=A,
        dual=B,
        cell_volume=vol,
        dual_volume=(2.0 * np.pi) ** d / vol,
        condition_number=float(np.linalg.cond(A)),
    )


@dataclass
class PlaneWaveBasis:
    """Truncated set of dual-lattice vectors |b| <= cutoff with its
    sampling grid.

    The mode list is ordered lexicographically by multi-index, contains the
    zero mode and is closed under negation.  Cell vectors are coefficient
    vectors in the orthonormalized plane waves |cell|^{-1/2} exp(i<b, x>),
    so Euclidean inner products of coefficient vectors equal L2(cell) inner
    products of the fields.
    """

    lattice: Lattice
    cutoff: float
    mindex: np.ndarray       # (nb, d) integer multi-indices
    bvecs: np.ndarray        # (nb, d) dual vectors B @ m
    grid_shape: tuple[int, ...]
    grid_factor: int
    _pos: dict = field(repr=False, default_factory=dict)
    _neg: np.ndarray | None = field(repr=False, default=None)
    _freq: list | None = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.mindex.shape[0]

    def index_of(self, m) -> int:
        return self._pos[tuple(int(x) for x in m)]

    @property
    def neg_index(self) -> np.ndarray:
        """Permutation mapping the flat index of b to the flat index of -b."""
        if self._neg is None:
            self._neg = np.array([self.index_of(-m) for m in self.mindex])
        return self._neg

    # -- fields on the sampling grid -------------------------------------

    def vec_to_dict(self, v) -> dict:
        root = np.sqrt(self.lattice.cell_volume)
        return {tuple(int(x) for x in m): v[i] / root for i, m in enumerate(self.mindex)}

    def vec_to_grid(self, v) -> np.ndarray:
        return dict_to_grid(self.vec_to_dict(np.asarray(v)), self.grid_shape)

    def grid_to_vec(self, samples) -> np.ndarray:
        coeff = grid_to_coeff_array(np.asarray(samples, dtype=complex))
        idx = tuple(np.mod(self.mindex[:, ax], self.grid_shape[ax]) for ax in range(self.lattice.dim))
        return coeff[idx] * np.sqrt(self.lattice.cell_volume)

    def integrate(self, samples) -> complex:
        """Trapezoid quadrature over the cell (exact below the Nyquist limit)."""
        return self.lattice.cell_volume * np.mean(samples)

    def dual_frequency_grids(self) -> list:
        """Arrays (one per space direction s) of the s-th component of the
        dual vector B m over the wrapped frequency grid; used as spectral
        derivative multipliers."""
        if self._freq is None:
            d = self.lattice.dim
            ints = np.meshgrid(
                *[np.fft.fftfreq(n, 1.0 / n) for n in self.grid_shape], indexing="ij"
            )
            self._freq = [
                sum(self.lattice.dual[s, l] * ints[l] for l in range(d)) for s in range(d)
            ]
        return self._freq

    def reference_order(self) -> list[int]:
        """Flat indices sorted by (|b|^2, multi-index); used to pick
        deterministic reference waves for gauge fixing."""
        norms = np.einsum("ij,ij->i", self.bvecs, self.bvecs)
        return sorted(range(self.size), key=lambda i: (norms[i], tuple(self.mindex[i])))


def build_basis(lattice: Lattice, cutoff: float, grid_factor: int = 4) -> PlaneWaveBasis:
    """Enumerate all dual vectors with |b| <= cutoff (boundary included)."""
    if cutoff < 0:
        raise ConfigError("cutoff must be nonnegative")
    d = lattice.dim
    # |m_l| = |<a_l, B m>| / (2 pi) <= |a_l| cutoff / (2 pi)
    caps = [
        int(np.floor(np.linalg.norm(lattice.basis[:, l]) * cutoff / (2.0 * np.pi) + _BOUNDARY_TOL))
        for l in range(d)
    ]
    limit = cutoff * (1.0 + 1e-12)
    modes = []
    for m in itertools.product(*[range(-c, c + 1) for c in caps]):
        if np.linalg.norm(lattice.dual @ np.array(m)) <= limit:
            modes.append(m)
    modes.sort()
    mindex = np.array(modes, dtype=int).reshape(len(modes), d)
    bvecs = mindex @ lattice.dual.T
    mmax = np.abs(mindex).max(axis=0)
    shape = tuple(five_smooth(max(grid_factor * (2 * int(mx) + 1), 8)) for mx in mmax)
    basis = PlaneWaveBasis(
        lattice=lattice,
        cutoff=float(cutoff),
        mindex=mindex,
        bvecs=bvecs,
        grid_shape=shape,
        grid_factor=grid_factor,
    )
    basis._pos = {tuple(int(x) for x in m): i for i, m in enumerate(mindex)}
    return basis


def default_cutoff(lattice: Lattice, modes: int = 8) -> float:
    """Isotropic cutoff covering `modes` dual spacings."""
    return modes * lattice.min_dual_norm()
