"""Eigensolves of fiber matrices, band structure over quasimomentum sets,
and detection of a threshold point with its cluster data.

A threshold point bundles the quasimomentum k0, the band index s, the
eigenvalue lam0 = E_s(k0), its multiplicity n, the gap d0 to the rest of
the spectrum at k0, a certified radius kappa, and a deterministically
gauge-fixed orthonormal basis of the cluster eigenspace.  The radius is
certified by a direction/radius scan with bisection: for every |dk| <=
kappa exactly n eigenvalues of the fiber at k0+dk lie in the inner third
of the gap window and none lie in the adjacent thirds.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .cell import PeriodicCoefficients, FiberMatrix, assemble_fiber, assemble_fiber_highprec
from .errors import CertificationError, EigensolverError
from .lattice import PlaneWaveBasis


def _workers(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("BANDHOMOG_WORKERS", "1")))


def eig_fiber(fm: FiberMatrix, m: int | None = None):
    """Lowest m eigenpairs of a fiber matrix, ascending, with a residual
    check against the eigensolver's own output."""
    M = fm.matrix
    if m is None:
        m = M.shape[0]
    if m > M.shape[0]:
        raise ValueError(f"requested {m} eigenpairs from a {M.shape[0]}-dim fiber")
    try:
        evals, evecs = sla.eigh(M)
    except sla.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverError(f"eigh failed at k={fm.k}: {exc}") from exc
    scale = max(1.0, float(np.abs(evals).max()))
    resid = np.linalg.norm(M @ evecs - evecs * evals[None, :], axis=0)
    if resid.max() > 1e-10 * scale:
        raise EigensolverError(f"eigenpair residual {resid.max():.3e} exceeds 1e-10*|M|")
    return evals[:m], evecs[:, :m]


def fiber_eigenvalues(coeffs, basis, k, center=None) -> np.ndarray:
    """Eigenvalues only (used by scans where vectors are not needed)."""
    fm = assemble_fiber(coeffs, basis, k, center=center)
    return np.linalg.eigvalsh(fm.matrix)


@dataclass
class BandStructure:
    kpoints: np.ndarray          # (nk, d)
    energies: np.ndarray         # (nk, m) ascending rows
    vectors: list | None = None


def band_structure(
    coeffs: PeriodicCoefficients,
    basis: PlaneWaveBasis,
    k_set,
    m: int,
    store_vectors: bool = False,
    workers: int | None = None,
) -> BandStructure:
    """Lowest m band functions over a quasimomentum set."""
    kpts = np.atleast_2d(np.asarray(k_set, dtype=float))
    if kpts.shape[0] == 0:
        raise ValueError("k_set must be nonempty")

    def solve(k):
        ev, vec = eig_fiber(assemble_fiber(coeffs, basis, k), m)
        return ev, (vec if store_vectors else None)

    nw = _workers(workers)
    if nw > 1:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(solve, kpts))
    else:
        results = [solve(k) for k in kpts]
    energies = np.array([r[0] for r in results])
    vectors = [r[1] for r in results] if store_vectors else None
    return BandStructure(kpoints=kpts, energies=energies, vectors=vectors)


@dataclass
class ThresholdPoint:
    k0: np.ndarray
    s: int
    lam0: float
    lam0_hi: np.longdouble
    n: int
    d0: float
    kappa: float
    vectors: np.ndarray          # (nb, n) gauge-fixed orthonormal cluster basis
    sup_norms: np.ndarray        # grid maxima of |sigma_p|
    cluster_tol: float
    certification: dict
    _ctx: object = field(repr=False, default=None, compare=False)

    @property
    def projector(self) -> np.ndarray:
        S = self.vectors
        return S @ S.conj().T

    def rotated(self, U: np.ndarray, basis: PlaneWaveBasis | None = None) -> "ThresholdPoint":
        """Same threshold point in the gauge sigma' = sigma U (U unitary).
        Passing the basis recomputes the grid sup-norms of the rotated
        vectors; otherwise the old values are kept (they only enter the
        kappa^{-1} term of the error bound, which is gauge-dependent)."""
        U = np.asarray(U)
        if not np.allclose(U.conj().T @ U, np.eye(self.n), atol=1e-12):
            raise ValueError("gauge rotation must be unitary")
        vectors = self.vectors @ U
        if basis is not None:
            sup = np.array([np.abs(basis.vec_to_grid(vectors[:, p])).max() for p in range(self.n)])
        else:
            sup = self.sup_norms.copy()
        return ThresholdPoint(
            k0=self.k0,
            s=self.s,
            lam0=self.lam0,
            lam0_hi=self.lam0_hi,
            n=self.n,
            d0=self.d0,
            kappa=self.kappa,
            vectors=vectors,
            sup_norms=sup,
            cluster_tol=self.cluster_tol,
            certification=dict(self.certification, gauge="rotated"),
        )

    def to_record(self) -> dict:
        return {
            "k0": [float(x) for x in self.k0],
            "band": self.s,
            "lam0": self.lam0,
            "multiplicity": self.n,
            "gap": self.d0,
            "kappa": self.kappa,
            "cluster_tol": self.cluster_tol,
            "sup_norms": [float(x) for x in self.sup_norms],
            "certification": self.certification,
            "basis_vectors": [
                [[float(z.real), float(z.imag)] for z in self.vectors[:, p]]
                for p in range(self.n)
            ],
        }


def _gauge_fix(S_raw: np.ndarray, basis: PlaneWaveBasis):
    """Deterministic gauge for the cluster basis.

    Rotate the raw orthonormal cluster so that its Gram matrix T_{qp} =
    (sigma_p, w_q) against the first n reference plane waves (ordered by
    |b|, then multi-index) is upper triangular with positive real diagonal.
    References nearly orthogonal to the cluster are skipped.  With S the
    column matrix of the raw cluster, the rows S[ref, :] form V^H where
    v_q are the cluster-frame coordinates of the projected references, and
    T = V^H G; an RQ factorization of V^H delivers the unitary G.
    """
    nb, n = S_raw.shape
    rows = []
    refs = []
    for idx in basis.reference_order():
        trial = rows + [S_raw[idx, :]]
        sv = np.linalg.svd(np.array(trial), compute_uv=False)
        if sv[-1] > 1e-6:
            rows = trial
            refs.append(idx)
        if len(rows) == n:
            break
    if len(rows) < n:
        raise CertificationError("could not select reference waves for gauge fixing")
    Vh = np.array(rows)
    R, Q = sla.rq(Vh)
    diag = np.diag(R)
    phase = np.where(np.abs(diag) > 0, np.conj(diag) / np.abs(diag), 1.0)
    G = Q.conj().T * phase[None, :]
    return S_raw @ G, refs


def _directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # Fibonacci sphere
    i = np.arange(count) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / count)
    golden = np.pi * (1.0 + np.sqrt(5.0))
    th = golden * i
    return np.stack(
        [np.sin(phi) * np.cos(th), np.sin(phi) * np.sin(th), np.cos(phi)], axis=1
    )


def _counts_ok(evals: np.ndarray, lam0: float, d0: float, n: int) -> bool:
    inner = np.count_nonzero(np.abs(evals - lam0) <= d0 / 3.0)
    guard = np.count_nonzero(
        (np.abs(evals - lam0) > d0 / 3.0) & (np.abs(evals - lam0) <= 2.0 * d0 / 3.0)
    )
    return inner == n and guard == 0


def detect_threshold(
    coeffs: PeriodicCoefficients,
    basis: PlaneWaveBasis,
    k0,
    s: int,
    cluster_tol: float | None = None,
    n_directions: int = 32,
    n_radii: int = 8,
    workers: int | None = None,
) -> ThresholdPoint:
    """Characterize the dispersion point (k0, E_s(k0)).

    s is 1-based.  The cluster is the set of eigenvalues within cluster_tol
    of E_s(k0); the certified radius kappa is additionally capped at a
    quarter of the shortest dual lattice vector so the ball never wraps
    around the dual torus.
    """
    lat = basis.lattice
    k0r = lat.reduce(k0)
    fm = assemble_fiber(coeffs, basis, k0r, center=k0r)
    evals, evecs = eig_fiber(fm)
    if not 1 <= s <= len(evals):
        raise ValueError(f"band index {s} outside computed range 1..{len(evals)}")
    lam0 = float(evals[s - 1])
    if cluster_tol is None:
        cluster_tol = 1e-8 * (1.0 + abs(lam0))
    if cluster_tol <= 0:
        raise ValueError("cluster_tol must be positive")
    mask = np.abs(evals - lam0) <= cluster_tol
    n = int(mask.sum())
    rest = evals[~mask]
    if rest.size == 0:
        raise CertificationError("entire computed spectrum lies in one cluster")
    d0 = float(np.min(np.abs(rest - lam0)))
    d0_floor = max(100.0 * cluster_tol, 1e-12)
    if d0 <= d0_floor:
        raise CertificationError(
            f"cluster is not isolated at this truncation: gap {d0:.3e} <= floor {d0_floor:.3e}"
        )

    S, refs = _gauge_fix(evecs[:, mask], basis)

    # extended-precision Rayleigh quotient of the cluster; the eigenvalue
    # itself later multiplies large phase factors tau/eps^2
    M_hi = assemble_fiber_highprec(coeffs, basis, k0r, center=k0r)
    S_hi = S.astype(np.clongdouble)
    rayleigh = np.einsum("bp,bp->p", S_hi.conj(), M_hi @ S_hi).real
    lam0_hi = np.longdouble(rayleigh.mean())

    cap = 0.25 * lat.min_dual_norm()
    dirs = _directions(lat.dim, n_directions)
    radii_frac = (np.arange(n_radii) + 1.0) / n_radii

    def certify(radius: float, u: np.ndarray) -> bool:
        for f in radii_frac:
            ev = fiber_eigenvalues(coeffs, basis, k0r + (radius * f) * u, center=k0r)
            if not _counts_ok(ev, lam0, d0, n):
                return False
        return True

    def direction_radius(u: np.ndarray) -> float:
        if certify(cap, u):
            return cap
        lo, hi = 0.0, cap
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if certify(mid, u):
                lo = mid
            else:
                hi = mid
        return lo * (1.0 - 1e-9)

    nw = _workers(workers)
    if nw > 1:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            per_dir = list(pool.map(direction_radius, dirs))
    else:
        per_dir = [direction_radius(u) for u in dirs]
    kappa = float(min(per_dir))

    for _ in range(5):
        if kappa <= 0:
            break
        if all(certify(kappa, u) for u in dirs):
            break
        kappa *= 0.99
    else:
        kappa = 0.0
    if kappa <= 0:
        raise CertificationError("no positive radius satisfies the separation condition")

    sup = np.array([np.abs(basis.vec_to_grid(S[:, p])).max() for p in range(n)])
    return ThresholdPoint(
        k0=k0r,
        s=s,
        lam0=lam0,
        lam0_hi=lam0_hi,
        n=n,
        d0=d0,
        kappa=kappa,
        vectors=S,
        sup_norms=sup,
        cluster_tol=float(cluster_tol),
        certification={
            "directions": int(dirs.shape[0]),
            "radii": int(n_radii),
            "cap": cap,
            "per_direction_radius": [float(r) for r in per_dir],
            "reference_waves": [int(r) for r in refs],
        },
    )
