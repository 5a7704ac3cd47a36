"""Effective characteristics at the threshold point: first-order tensors,
cell problems, second-order tensors and the n x n effective symbol.

All cell integrals use the FFT sampling grid with the trapezoid rule
(exact for band-limited integrands below the Nyquist limit); 1/w enters
pointwise, so every tensor carries a grid-doubling consistency check
instead of an exactness claim.  Derivatives of grid fields are spectral.
The symbol

    g(dk) = lam0 I + <g1, dk> + <g2 dk, dk>

reproduces second-order perturbation theory of the fiber family exactly on
the truncated space, so for a simple band its eigenvalue matches the band
function to third order in dk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .cell import PeriodicCoefficients
from .errors import InternalConsistencyError, RefinementError
from .fourier import dict_to_grid, five_smooth, spectral_derivative
from .lattice import PlaneWaveBasis
from .spectral import ThresholdPoint
from .threshold import get_context, reduced_resolvent_apply


def _freq_grids(lattice, shape):
    ints = np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n) for n in shape], indexing="ij")
    return [sum(lattice.dual[s, l] * ints[l] for l in range(lattice.dim)) for s in range(lattice.dim)]


class _CellFields:
    """Sampled fields entering the tensor quadratures, on a given grid.

    Derivatives of band-limited factors (cluster vectors, correctors, the
    metric entries) are exact coefficient operations; only 1/w is
    differentiated spectrally through the grid.  Composite derivatives use
    the product rule, e.g.

        (d_s + i k_s)(w^{-1} sigma) = w^{-1} ((d_s + i k_s) sigma)
                                      + (d_s w^{-1}) sigma,

    which keeps the free-operator quadratures exact to the last bit.
    """

    def __init__(self, coeffs: PeriodicCoefficients, basis: PlaneWaveBasis, tp: ThresholdPoint, shape=None):
        self.shape = tuple(shape) if shape is not None else basis.grid_shape
        lat = basis.lattice
        self.lattice = lat
        self.basis = basis
        self.vol = lat.cell_volume
        d = lat.dim
        self.k0 = tp.k0
        self.freq = _freq_grids(lat, self.shape)
        omega = dict_to_grid(coeffs.omega_dict, self.shape).real
        self.winv = 1.0 / omega
        self.winv2 = self.winv**2
        self.dwinv = [spectral_derivative(self.winv.astype(complex), 1j * self.freq[s]) for s in range(d)]
        self.g_dict = coeffs.g_dict
        self.g = [
            [np.real(dict_to_grid(coeffs.g_dict[r][s], self.shape)) for s in range(d)]
            for r in range(d)
        ]
        self.dg = [
            [[self.dict_field(self._ddict(coeffs.g_dict[r][s], t)) for t in range(d)] for s in range(d)]
            for r in range(d)
        ]
        self.sig_dict = [basis.vec_to_dict(tp.vectors[:, p]) for p in range(tp.n)]
        self.sig = [dict_to_grid(sd, self.shape) for sd in self.sig_dict]
        self.dsig = [
            [self.dict_field(self._ddict(sd, s)) for s in range(d)] for sd in self.sig_dict
        ]
        self.u = [self.winv * s for s in self.sig]
        # (d/dx_s + i k0_s)(w^{-1} sigma_p) via the product rule
        self.du = [
            [
                self.winv * (self.dsig[p][s] + 1j * self.k0[s] * self.sig[p])
                + self.dwinv[s] * self.sig[p]
                for s in range(d)
            ]
            for p in range(tp.n)
        ]

    def _ddict(self, cdict, s):
        """Coefficients of the plain derivative d_s of a band-limited field."""
        B = self.lattice.dual
        return {
            m: 1j * sum(B[s, l] * m[l] for l in range(self.lattice.dim)) * c
            for m, c in cdict.items()
        }

    def dict_field(self, cdict):
        return dict_to_grid(cdict, self.shape)

    def integrate(self, samples):
        return self.vol * np.mean(samples)


def _g1_from_fields(fields: _CellFields, n: int, d: int):
    gt = np.zeros((n, n, d), dtype=complex)
    for l in range(n):
        for p in range(n):
            for r in range(d):
                acc = 0.0
                for s in range(d):
                    acc = acc + fields.integrate(
                        fields.g[r][s] * fields.winv * np.conj(fields.sig[l]) * fields.du[p][s]
                    )
                gt[l, p, r] = -acc
    g1 = np.zeros_like(gt)
    for l in range(n):
        for p in range(n):
            for r in range(d):
                g1[l, p, r] = 1j * (gt[l, p, r] - np.conj(gt[p, l, r]))
    return gt, g1


def g1_tensor(coeffs, basis, tp: ThresholdPoint, check_refinement: bool = True):
    """First-order tensors g1[l, p, r] (and the intermediate quadratures),
    by spectral quadrature of the defining cell integrals."""
    d, n = basis.lattice.dim, tp.n
    fields = _CellFields(coeffs, basis, tp)
    gt, g1 = _g1_from_fields(fields, n, d)
    if check_refinement:
        fine = _CellFields(coeffs, basis, tp, shape=tuple(five_smooth(2 * s) for s in fields.shape))
        _, g1f = _g1_from_fields(fine, n, d)
        defect = np.abs(g1 - g1f).max()
        if defect > 1e-9 * (1.0 + np.abs(g1).max()):
            raise RefinementError(f"g1 quadrature not converged: grid-doubling defect {defect:.3e}")
    return gt, g1


@dataclass
class CellSolutions:
    lam: np.ndarray          # (d, n, nb) solutions Lambda_r^p
    rhs: np.ndarray          # (d, n, nb) projected right-hand sides
    residuals: np.ndarray    # (d, n)
    ortho: np.ndarray        # (d, n) max |(Lambda, sigma_q)|


def solve_cell_problems(coeffs, basis, tp: ThresholdPoint) -> CellSolutions:
    """Solve (M0 - lam0) Lambda_r^p = P^perp RHS_r^p, Lambda_r^p orthogonal
    to the cluster, with the right-hand side assembled on the grid."""
    ctx = get_context(coeffs, basis, tp)
    d, n, nb = basis.lattice.dim, tp.n, basis.size
    fields = _CellFields(coeffs, basis, tp)
    lam = np.zeros((d, n, nb), dtype=complex)
    rhs = np.zeros((d, n, nb), dtype=complex)
    residuals = np.zeros((d, n))
    ortho = np.zeros((d, n))
    for p in range(n):
        for r in range(d):
            grid = np.zeros(fields.shape, dtype=complex)
            for s in range(d):
                grid = grid + fields.winv * fields.g[r][s] * fields.du[p][s]
                # w^{-1} (d_s + i k0_s)(g_sr w^{-1} sigma_p), product rule
                dinner = (
                    fields.dg[s][r][s] * fields.u[p]
                    + fields.g[s][r] * fields.dwinv[s] * fields.sig[p]
                    + fields.g[s][r] * fields.winv * (fields.dsig[p][s] + 1j * tp.k0[s] * fields.sig[p])
                )
                grid = grid + fields.winv * dinner
            y = basis.grid_to_vec(grid)
            x = reduced_resolvent_apply(coeffs, basis, tp, y)
            yperp = y - ctx.S @ (ctx.S.conj().T @ y)
            residuals[r, p] = np.linalg.norm(ctx.m0 @ x - tp.lam0 * x - yperp) / max(
                1.0, np.linalg.norm(y)
            )
            ortho[r, p] = np.abs(ctx.S.conj().T @ x).max()
            lam[r, p] = x
            rhs[r, p] = y
    return CellSolutions(lam=lam, rhs=rhs, residuals=residuals, ortho=ortho)


def _g2_from_fields(fields: _CellFields, basis, tp, cells: CellSolutions):
    d, n = basis.lattice.dim, tp.n
    k0 = tp.k0
    wl = [fields.u[l] for l in range(n)]
    # plain d_s(w^{-1} sigma_l), product rule
    dwl = [
        [fields.winv * fields.dsig[l][s] + fields.dwinv[s] * fields.sig[l] for s in range(d)]
        for l in range(n)
    ]
    lam_dict = [[basis.vec_to_dict(cells.lam[r, p]) for p in range(n)] for r in range(d)]
    lam_field = [[fields.dict_field(lam_dict[r][p]) for p in range(n)] for r in range(d)]
    wlam = [[fields.winv * lam_field[r][p] for p in range(n)] for r in range(d)]
    dwlam = [
        [
            [
                fields.winv * fields.dict_field(fields._ddict(lam_dict[r][p], s))
                + fields.dwinv[s] * lam_field[r][p]
                for s in range(d)
            ]
            for p in range(n)
        ]
        for r in range(d)
    ]
    g2 = np.zeros((n, n, d, d), dtype=complex)
    for l in range(n):
        for p in range(n):
            for r in range(d):
                for q in range(d):
                    acc = 0.0
                    for s in range(d):
                        acc = acc - fields.integrate(
                            fields.g[q][s]
                            * (
                                wlam[r][p] * np.conj(dwl[l][s])
                                - np.conj(wl[l]) * dwlam[r][p][s]
                            )
                        )
                        acc = acc + 2j * k0[s] * fields.integrate(
                            fields.g[q][s] * fields.winv2 * lam_field[r][p] * np.conj(fields.sig[l])
                        )
                    acc = acc + fields.integrate(
                        fields.g[q][r] * fields.winv2 * fields.sig[p] * np.conj(fields.sig[l])
                    )
                    g2[l, p, r, q] = acc
    return g2


def g2_tensor(coeffs, basis, tp: ThresholdPoint, cells: CellSolutions, check_refinement: bool = True):
    """Second-order tensors g2[l, p, r, q] from the three displayed cell
    integrals (corrector bilinear term, k0 cross term, metric term)."""
    fields = _CellFields(coeffs, basis, tp)
    g2 = _g2_from_fields(fields, basis, tp, cells)
    if check_refinement:
        fine = _CellFields(coeffs, basis, tp, shape=tuple(five_smooth(2 * s) for s in fields.shape))
        g2f = _g2_from_fields(fine, basis, tp, cells)
        defect = np.abs(g2 - g2f).max()
        if defect > 1e-9 * (1.0 + np.abs(g2).max()):
            raise RefinementError(f"g2 quadrature not converged: grid-doubling defect {defect:.3e}")
    return g2


@dataclass
class EffectiveTensors:
    k0: np.ndarray
    s: int
    lam0: float
    lam0_hi: np.longdouble
    n: int
    d0: float
    kappa: float
    g1: np.ndarray            # (n, n, d)
    g2: np.ndarray            # (n, n, d, d)
    gtilde1: np.ndarray
    vectors: np.ndarray       # gauge record: the cluster basis used
    sup_norms: np.ndarray
    provenance: dict = field(default_factory=dict)

    def symbol(self, dk) -> np.ndarray:
        return effective_symbol(self, dk)

    def symbol_shifted_hi(self, dk) -> np.ndarray:
        """g(dk) - lam0 I in extended precision; feeds phase arguments that
        are later multiplied by tau/eps^2."""
        dk = np.atleast_1d(np.asarray(dk)).astype(np.longdouble)
        g1 = self.g1.astype(np.clongdouble)
        g2 = self.g2.astype(np.clongdouble)
        sym = np.zeros((self.n, self.n), dtype=np.clongdouble)
        for r in range(dk.size):
            sym += g1[:, :, r] * dk[r]
            for q in range(dk.size):
                sym += g2[:, :, r, q] * dk[r] * dk[q]
        return 0.5 * (sym + sym.conj().T)

    def to_record(self) -> dict:
        def cpairs(arr):
            flat = np.asarray(arr).reshape(-1)
            return [[float(z.real), float(z.imag)] for z in flat]

        return {
            "k0": [float(x) for x in self.k0],
            "band": self.s,
            "lam0": self.lam0,
            "lam0_hi": str(np.longdouble(self.lam0_hi)),
            "multiplicity": self.n,
            "gap": self.d0,
            "kappa": self.kappa,
            "g1": cpairs(self.g1),
            "g2": cpairs(self.g2),
            "gtilde1": cpairs(self.gtilde1),
            "sup_norms": [float(x) for x in self.sup_norms],
            "basis": cpairs(self.vectors),
            "provenance": self.provenance,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "EffectiveTensors":
        def carr(pairs, shape):
            a = np.array([complex(re, im) for re, im in pairs])
            return a.reshape(shape)

        n = int(rec["multiplicity"])
        k0 = np.array(rec["k0"], dtype=float)
        d = k0.size
        nb = len(rec["basis"]) // n
        return cls(
            k0=k0,
            s=int(rec["band"]),
            lam0=float(rec["lam0"]),
            lam0_hi=np.longdouble(rec["lam0_hi"]),
            n=n,
            d0=float(rec["gap"]),
            kappa=float(rec["kappa"]),
            g1=carr(rec["g1"], (n, n, d)),
            g2=carr(rec["g2"], (n, n, d, d)),
            gtilde1=carr(rec["gtilde1"], (n, n, d)),
            vectors=carr(rec["basis"], (nb, n)),
            sup_norms=np.array(rec["sup_norms"], dtype=float),
            provenance=rec.get("provenance", {}),
        )


def compute_tensors(coeffs, basis, tp: ThresholdPoint, check_refinement: bool = True) -> EffectiveTensors:
    """Full tensor pipeline: first-order quadratures, cell problems,
    second-order quadratures."""
    gt, g1 = g1_tensor(coeffs, basis, tp, check_refinement=check_refinement)
    cells = solve_cell_problems(coeffs, basis, tp)
    g2 = g2_tensor(coeffs, basis, tp, cells, check_refinement=check_refinement)
    prov = {
        "cutoff": basis.cutoff,
        "grid_shape": list(basis.grid_shape),
        "grid_factor": basis.grid_factor,
        "cluster_tol": tp.cluster_tol,
        "certification": tp.certification,
        "cell_residual_max": float(cells.residuals.max()),
        "cell_ortho_max": float(cells.ortho.max()),
    }
    return EffectiveTensors(
        k0=tp.k0,
        s=tp.s,
        lam0=tp.lam0,
        lam0_hi=tp.lam0_hi,
        n=tp.n,
        d0=tp.d0,
        kappa=tp.kappa,
        g1=g1,
        g2=g2,
        gtilde1=gt,
        vectors=tp.vectors,
        sup_norms=tp.sup_norms,
        provenance=prov,
    )


def effective_symbol(tensors: EffectiveTensors, dk) -> np.ndarray:
    """Hermitian n x n matrix lam0 I + <g1, dk> + <g2 dk, dk>."""
    dk = np.atleast_1d(np.asarray(dk, dtype=float))
    sym = tensors.lam0 * np.eye(tensors.n, dtype=complex)
    sym = sym + np.einsum("lpr,r->lp", tensors.g1, dk)
    sym = sym + np.einsum("lprq,r,q->lp", tensors.g2, dk, dk)
    defect = np.abs(sym - sym.conj().T).max()
    if defect > 1e-10 * (1.0 + np.abs(sym).max()):
        raise InternalConsistencyError(f"effective symbol not Hermitian: defect {defect:.3e}")
    return 0.5 * (sym + sym.conj().T)


def reduced_evolution(tensors: EffectiveTensors, dk, tau: float, j: int) -> np.ndarray:
    """Coefficient vector exp(-i tau g(dk)) e_j (j is 1-based)."""
    if not 1 <= j <= tensors.n:
        raise ValueError(f"profile index {j} outside 1..{tensors.n}")
    sym = effective_symbol(tensors, dk)
    mu, q = sla.eigh(sym)
    e = np.zeros(tensors.n, dtype=complex)
    e[j - 1] = 1.0
    c = q @ (np.exp(-1j * tau * mu) * (q.conj().T @ e))
    nrm = np.linalg.norm(c)
    if abs(nrm - 1.0) > 1e-12:
        raise InternalConsistencyError(f"reduced evolution lost unitarity: |c|={nrm!r}")
    return c
