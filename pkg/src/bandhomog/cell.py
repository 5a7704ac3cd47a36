"""Periodic coefficient data, the ground-state factorization and assembly
of the Hermitian fiber matrix.

The metric g_check and the potential V are ingested as finite Fourier
series.  The positive weight w solves D* g_check D w + (V - shift) w = 0 on
the truncated basis, normalized by ||w||^2 = |cell|; the factorized metric
is g = w^2 g_check, formed by exact coefficient convolution.  The fiber
operator at quasimomentum k is realized on the truncated basis as

    M(k) = W* K(k) W,   K(k)_{b,b'} = (b+k)^t ghat(b-b') (b'+k),

where W is the convolution matrix of 1/w.  The same W and ghat feed every
downstream object (projections, cell problems, tensors), so the operator
algebra is exactly self-consistent on the truncated space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, GridEstimateWarning, ResolutionError
from .fourier import (
    FieldDict,
    conv_dicts,
    dict_to_grid,
    gather_offsets_array,
    gather_offsets_dict,
    grid_to_coeff_array,
    hermitian_defect,
)
from .lattice import PlaneWaveBasis


@dataclass
class PeriodicCoefficients:
    """Coefficient bundle tied to one plane-wave discretization."""

    basis: PlaneWaveBasis
    gcheck: list            # d x d nested list of coefficient dicts
    potential: FieldDict | None
    omega_dict: FieldDict
    omega_vec: np.ndarray | None
    shift: float
    g_dict: list            # d x d nested list, g = w^2 gcheck
    alpha0: float
    alpha1: float
    g_inf: float
    winv_inf: float
    omega_grid: np.ndarray = field(repr=False, default=None)
    winv_grid: np.ndarray = field(repr=False, default=None)
    winv_cgrid: np.ndarray = field(repr=False, default=None)
    _g_gather: list | None = field(repr=False, default=None)
    _w_gather: np.ndarray | None = field(repr=False, default=None)
    _g_grid: list | None = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.basis.lattice.dim

    def g_gather(self) -> list:
        """(nb, nb) convolution matrices of the entries of g (exact)."""
        if self._g_gather is None:
            mi = self.basis.mindex
            self._g_gather = [
                [gather_offsets_dict(self.g_dict[r][s], mi) for s in range(self.dim)]
                for r in range(self.dim)
            ]
        return self._g_gather

    def w_gather(self) -> np.ndarray:
        """Convolution matrix of 1/w, Hermitian-symmetrized."""
        if self._w_gather is None:
            W = gather_offsets_array(self.winv_cgrid, self.basis.mindex)
            self._w_gather = 0.5 * (W + W.conj().T)
        return self._w_gather

    def g_grid(self) -> list:
        """Samples of the entries of g on the quadrature grid (real)."""
        if self._g_grid is None:
            self._g_grid = [
                [
                    np.real(dict_to_grid(self.g_dict[r][s], self.basis.grid_shape))
                    for s in range(self.dim)
                ]
                for r in range(self.dim)
            ]
        return self._g_grid


@dataclass
class FiberMatrix:
    k: np.ndarray
    matrix: np.ndarray
    basis: PlaneWaveBasis


def _validate_field(name: str, coeffs: FieldDict, dim: int) -> FieldDict:
    out: FieldDict = {}
    for m, c in coeffs.items():
        m = tuple(int(x) for x in m)
        if len(m) != dim:
            raise ConfigError(f"{name}: multi-index {m} has wrong dimension")
        out[m] = complex(c)
    scale = max((abs(c) for c in out.values()), default=0.0)
    if hermitian_defect(out) > 1e-12 * max(1.0, scale):
        raise ConfigError(f"{name}: coefficients are not Hermitian-symmetric (field not real)")
    return out


def _dicts_close(a: FieldDict, b: FieldDict, tol: float) -> bool:
    keys = set(a) | set(b)
    return all(abs(a.get(m, 0.0) - b.get(m, 0.0)) <= tol for m in keys)


def ground_state(gcheck, potential, basis: PlaneWaveBasis):
    """Lowest eigenpair of the plane-wave discretization of D* gcheck D + V.

    Returns (w_vec, shift): after replacing V by V - shift the bottom of the
    spectrum sits at zero and w is the corresponding positive eigenvector,
    scaled so that ||w||^2_{L2(cell)} = |cell|.  A ground state that changes
    sign on the sampling grid is reported as a resolution failure.
    """
    d = basis.lattice.dim
    mi = basis.mindex
    b = basis.bvecs
    K0 = np.zeros((basis.size, basis.size), dtype=complex)
    for r in range(d):
        for s in range(d):
            G = gather_offsets_dict(gcheck[r][s], mi)
            K0 += b[:, r, None] * G * b[None, :, s]
    if potential:
        K0 += gather_offsets_dict(potential, mi)
    K0 = 0.5 * (K0 + K0.conj().T)
    evals, evecs = sla.eigh(K0)
    shift = float(evals[0])
    v = evecs[:, 0]

    # rotate the arbitrary eigensolver phase away, using the DC coefficient
    i0 = basis.index_of(np.zeros(d, dtype=int))
    anchor = v[i0] if abs(v[i0]) > 1e-12 else v[np.argmax(np.abs(v))]
    phase = anchor / abs(anchor)
    if phase != 1.0:
        v = v / phase
    # project onto real-valued fields: c(-m) = c(m)^*
    v = 0.5 * (v + np.conj(v[basis.neg_index]))
    nrm = np.linalg.norm(v)
    if nrm < 0.5:
        raise ResolutionError("ground-state eigenvector lost reality/normalization")
    root = np.sqrt(basis.lattice.cell_volume)
    if nrm != root:
        v = v * (root / nrm)

    samples = basis.vec_to_grid(v)
    if np.abs(samples.imag).max() > 1e-10 * max(1.0, np.abs(samples.real).max()):
        raise ResolutionError("ground state has a non-negligible imaginary part")
    w = samples.real
    if w.max() < 0:
        v, w = -v, -w
    if w.min() <= 0:
        raise ResolutionError(
            "ground state changes sign on the sampling grid; "
            "refine the cutoff or check the coefficients"
        )
    resid = np.linalg.norm(K0 @ v - shift * v)
    if resid > 1e-10 * (1.0 + abs(evals).max()) * np.linalg.norm(v):
        raise ResolutionError(f"ground-state residual too large: {resid:.3e}")
    return v, shift


def build_coefficients(
    basis: PlaneWaveBasis,
    gcheck,
    potential: FieldDict | None = None,
    omega: FieldDict | None = None,
) -> PeriodicCoefficients:
    """Validate coefficient data and derive the factorized metric.

    Either the potential V is given and the weight w is computed from the
    ground state, or w is supplied directly (the factorized form); both
    paths produce the same downstream objects when consistent.
    """
    d = basis.lattice.dim
    gc = [[_validate_field(f"gcheck[{r}][{s}]", gcheck[r][s], d) for s in range(d)] for r in range(d)]
    for r in range(d):
        for s in range(r + 1, d):
            if not _dicts_close(gc[r][s], gc[s][r], 1e-12):
                raise ConfigError(f"gcheck is not symmetric: entries ({r},{s}) vs ({s},{r})")
    pot = _validate_field("potential", potential, d) if potential else None

    # ellipticity bounds from per-sample eigenvalues
    shape = basis.grid_shape
    gc_samples = np.empty(shape + (d, d))
    for r in range(d):
        for s in range(d):
            samp = dict_to_grid(gc[r][s], shape)
            if np.abs(samp.imag).max() > 1e-10 * max(1.0, np.abs(samp.real).max()):
                raise ConfigError(f"gcheck[{r}][{s}] is not real on the grid")
            gc_samples[..., r, s] = samp.real
    eigs = np.linalg.eigvalsh(gc_samples)
    alpha0, alpha1 = float(eigs.min()), float(eigs.max())
    if alpha0 <= 0:
        raise ConfigError(f"metric is not positive definite on the grid (alpha0={alpha0:.3e})")

    if omega is not None:
        om = _validate_field("omega", omega, d)
        omega_vec = None
        shift = 0.0
    else:
        omega_vec, shift = ground_state(gc, pot, basis)
        om = basis.vec_to_dict(omega_vec)

    omega_grid_c = dict_to_grid(om, shape)
    omega_grid = omega_grid_c.real
    if np.abs(omega_grid_c.imag).max() > 1e-10 * max(1.0, np.abs(omega_grid).max()):
        raise ConfigError("weight w is not real on the grid")
    if omega_grid.min() <= 0:
        raise ResolutionError("weight w is not positive on the sampling grid")
    nrm2 = float(np.real(basis.integrate(omega_grid_c * omega_grid_c.conj())))
    scale2 = basis.lattice.cell_volume / nrm2
    if abs(scale2 - 1.0) > 1e-6:
        raise ConfigError(f"||w||^2 = {nrm2:.6e} differs from |cell|; normalize the weight")
    if scale2 != 1.0:
        root = np.sqrt(scale2)
        om = {m: c * root for m, c in om.items()}
        omega_grid = omega_grid * root
        if omega_vec is not None:
            omega_vec = omega_vec * root

    # factorized metric, exact coefficient convolution
    om2 = conv_dicts(om, om)
    g_dict = [[conv_dicts(om2, gc[r][s]) for s in range(d)] for r in range(d)]

    # 1/w: exact for a constant weight, otherwise FFT of the grid reciprocal
    winv_grid = 1.0 / omega_grid
    nonzero = {m: c for m, c in om.items() if c != 0.0}
    if len(nonzero) == 1 and set(nonzero) == {(0,) * d}:
        winv_cgrid = np.zeros(shape, dtype=complex)
        winv_cgrid[(0,) * d] = 1.0 / nonzero[(0,) * d]
    else:
        winv_cgrid = grid_to_coeff_array(winv_grid.astype(complex))

    g_samples = np.empty(shape + (d, d))
    for r in range(d):
        for s in range(d):
            g_samples[..., r, s] = np.real(dict_to_grid(g_dict[r][s], shape))
    g_eigs = np.linalg.eigvalsh(g_samples)
    g_inf = float(np.abs(g_eigs).max())
    winv_inf = float(winv_grid.max())
    warnings.warn(
        "sup-norms of g and 1/w are sampling-grid maxima and may slightly "
        "underestimate the true essential supremum",
        GridEstimateWarning,
        stacklevel=2,
    )

    return PeriodicCoefficients(
        basis=basis,
        gcheck=gc,
        potential=pot,
        omega_dict=om,
        omega_vec=omega_vec,
        shift=shift,
        g_dict=g_dict,
        alpha0=alpha0,
        alpha1=alpha1,
        g_inf=g_inf,
        winv_inf=winv_inf,
        omega_grid=omega_grid,
        winv_grid=winv_grid,
        winv_cgrid=winv_cgrid,
    )


def _kinetic(coeffs: PeriodicCoefficients, bk: np.ndarray, gathers) -> np.ndarray:
    d = coeffs.dim
    K = None
    for r in range(d):
        for s in range(d):
            term = bk[:, r, None] * gathers[r][s] * bk[None, :, s]
            K = term if K is None else K + term
    return K


def assemble_fiber(coeffs: PeriodicCoefficients, basis: PlaneWaveBasis, k, center=None) -> FiberMatrix:
    """Hermitian matrix of the fiber operator at quasimomentum k.

    k is reduced modulo the dual lattice before assembly; `center` selects
    the fundamental box (threshold sweeps pass the threshold point so small
    neighborhoods never wrap).  Fourier offsets of g outside the coefficient
    support are exact zeros (band-limited data), not an error.
    """
    if basis is not coeffs.basis:
        raise ConfigError("basis does not match the one the coefficients were built on")
    kr = basis.lattice.reduce(k, center=center)
    W = coeffs.w_gather()
    K = _kinetic(coeffs, basis.bvecs + kr[None, :], coeffs.g_gather())
    M = W.conj().T @ K @ W
    M = 0.5 * (M + M.conj().T)
    return FiberMatrix(k=kr, matrix=M, basis=basis)


def assemble_fiber_highprec(coeffs: PeriodicCoefficients, basis: PlaneWaveBasis, k, center=None) -> np.ndarray:
    """Extended-precision assembly of the same fiber matrix; used to refine
    eigenvalues before they are amplified by large phase factors.

    A longdouble k is used verbatim (the caller guarantees it lies in the
    centered fundamental box); anything else is reduced in double first.
    """
    k_arr = np.atleast_1d(np.asarray(k))
    if k_arr.dtype == np.longdouble:
        kr = k_arr
    else:
        kr = basis.lattice.reduce(k_arr.astype(float), center=center).astype(np.longdouble)
    W = coeffs.w_gather().astype(np.clongdouble)
    gathers = [
        [coeffs.g_gather()[r][s].astype(np.clongdouble) for s in range(coeffs.dim)]
        for r in range(coeffs.dim)
    ]
    bk = basis.bvecs.astype(np.longdouble) + kr[None, :]
    K = _kinetic(coeffs, bk, gathers)
    M = W.conj().T @ K @ W
    return 0.5 * (M + M.conj().T)


def derivative_matrices(coeffs: PeriodicCoefficients, k0):
    """First and second quasimomentum derivatives of M(k) at k0.

    M(k0 + dk) = M0 + sum_r dk_r M1[r] + sum_{r,q} dk_r dk_q M2[r][q]
    exactly (the family is quadratic in k).
    """
    basis = coeffs.basis
    d = coeffs.dim
    W = coeffs.w_gather()
    G = coeffs.g_gather()
    bk0 = basis.bvecs + np.atleast_1d(np.asarray(k0, dtype=float))[None, :]
    M1 = []
    for r in range(d):
        inner = None
        for s in range(d):
            term = G[r][s] * bk0[None, :, s] + bk0[:, s, None] * G[s][r]
            inner = term if inner is None else inner + term
        m = W.conj().T @ inner @ W
        M1.append(0.5 * (m + m.conj().T))
    M2 = [[W.conj().T @ G[r][q] @ W for q in range(d)] for r in range(d)]
    return M1, M2
