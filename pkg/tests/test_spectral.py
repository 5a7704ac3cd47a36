import numpy as np
import pytest

from bandhomog import (
    CertificationError,
    assemble_fiber,
    band_structure,
    detect_threshold,
    eig_fiber,
)
from bandhomog.cell import FiberMatrix
from bandhomog.spectral import _counts_ok, fiber_eigenvalues
from oracles import charpoly_coefficients, fd_fiber_eigs, richardson


def _fm(matrix, basis=None):
    return FiberMatrix(k=np.zeros(1), matrix=np.asarray(matrix, dtype=complex), basis=basis)


def test_eig_fiber_diagonal():
    freqs = (2.0 * np.pi * np.arange(-3, 4)) ** 2
    evals, evecs = eig_fiber(_fm(np.diag(freqs)))
    assert np.array_equal(evals, np.sort(freqs))
    assert np.abs(np.abs(evecs).sum(axis=0) - 1.0).max() == 0.0


def test_eig_fiber_identity():
    evals, _ = eig_fiber(_fm(np.eye(5)), m=3)
    assert np.array_equal(evals, np.ones(3))


def test_eig_fiber_charpoly_oracle():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    H = A + A.conj().T
    evals, _ = eig_fiber(_fm(H))
    roots = np.sort(np.roots(charpoly_coefficients(H)).real)
    assert np.abs(evals - roots).max() < 1e-10


def test_eig_fiber_m_too_large():
    with pytest.raises(ValueError):
        eig_fiber(_fm(np.eye(3)), m=5)


def test_band_structure_free_exact(free1d):
    lat, basis, coeffs = free1d
    ks = np.linspace(-np.pi, np.pi, 101).reshape(-1, 1)
    bs = band_structure(coeffs, basis, ks, 3)
    exact = np.sort((ks + 2.0 * np.pi * np.arange(-8, 9)[None, :]) ** 2, axis=1)[:, :3]
    assert np.abs(bs.energies - exact).max() < 1e-12


def test_band_structure_spectrum_starts_at_zero(mathieu):
    lat, basis, coeffs = mathieu
    ks = np.linspace(0.0, np.pi, 41).reshape(-1, 1)
    bs = band_structure(coeffs, basis, ks, 1)
    lo, hi = bs.energies[:, 0].min(), bs.energies[:, 0].max()
    assert lo <= 0.0 <= hi or abs(lo) < 1e-10


def test_band_structure_empty_rejected(free1d):
    lat, basis, coeffs = free1d
    with pytest.raises(ValueError):
        band_structure(coeffs, basis, np.zeros((0, 1)), 2)


def test_band_structure_workers_deterministic(mathieu):
    lat, basis, coeffs = mathieu
    ks = np.linspace(-1.0, 1.0, 13).reshape(-1, 1)
    a = band_structure(coeffs, basis, ks, 4, workers=1)
    b = band_structure(coeffs, basis, ks, 4, workers=4)
    assert np.array_equal(a.energies, b.energies)


def test_mathieu_gap_opens_fd_oracle(mathieu):
    lat, basis, coeffs = mathieu
    fm = assemble_fiber(coeffs, basis, [np.pi])
    evals = np.linalg.eigvalsh(fm.matrix)
    gap = evals[1] - evals[0]
    assert gap > 0.5
    oracle = richardson(
        lambda n: fd_fiber_eigs(coeffs.g_dict[0][0], coeffs.omega_dict, np.pi, n_eigs=2, n_grid=n),
        3000,
    )
    assert gap == pytest.approx(oracle[1] - oracle[0], abs=1e-6)


def test_threshold_free_dirac(free1d, dirac_tp):
    tp = dirac_tp
    assert tp.n == 2
    assert tp.lam0 == pytest.approx(np.pi**2, rel=1e-12)
    assert tp.d0 == pytest.approx(8.0 * np.pi**2, rel=1e-12)
    assert tp.kappa > 0.3
    # gauge: exactly the two lowest-frequency plane waves of the cluster
    lat, basis, coeffs = free1d
    i0, im1 = basis.index_of([0]), basis.index_of([-1])
    assert tp.vectors[i0, 0] == 1.0 + 0.0j
    assert tp.vectors[im1, 1] == 1.0 + 0.0j


def test_threshold_free_bottom(free1d):
    lat, basis, coeffs = free1d
    tp = detect_threshold(coeffs, basis, [0.0], 1)
    assert tp.n == 1
    assert tp.lam0 == 0.0
    assert tp.d0 == pytest.approx(4.0 * np.pi**2, rel=1e-12)


def test_threshold_mathieu_simple(mathieu_tp_edge):
    assert mathieu_tp_edge.n == 1
    assert mathieu_tp_edge.d0 > 0.5
    assert mathieu_tp_edge.kappa > 0.01


def test_threshold_orthonormal_and_residual(mathieu, mathieu_tp_edge):
    lat, basis, coeffs = mathieu
    tp = mathieu_tp_edge
    S = tp.vectors
    gram = S.conj().T @ S
    assert np.abs(gram - np.eye(tp.n)).max() < 1e-12
    M = assemble_fiber(coeffs, basis, tp.k0, center=tp.k0).matrix
    resid = np.linalg.norm(M @ S - tp.lam0 * S, axis=0)
    assert resid.max() < 1e-10 * (1.0 + abs(tp.lam0))


def test_gauge_preserves_cluster_span(mathieu, free1d, dirac_tp):
    # the gauge-fixed basis spans the same subspace as the raw eigenvectors
    lat, basis, coeffs = free1d
    fm = assemble_fiber(coeffs, basis, dirac_tp.k0, center=dirac_tp.k0)
    evals, evecs = eig_fiber(fm)
    raw = evecs[:, np.abs(evals - dirac_tp.lam0) <= dirac_tp.d0 / 3.0]
    P_raw = raw @ raw.conj().T
    P_fix = dirac_tp.projector
    assert np.linalg.norm(P_raw - P_fix, 2) <= 1e-10


def test_threshold_relabel_within_cluster(free1d):
    lat, basis, coeffs = free1d
    a = detect_threshold(coeffs, basis, [np.pi], 1)
    b = detect_threshold(coeffs, basis, [np.pi], 2)
    assert a.lam0 == b.lam0 and a.n == b.n and a.d0 == b.d0


def test_threshold_band_out_of_range(free1d):
    lat, basis, coeffs = free1d
    with pytest.raises(ValueError):
        detect_threshold(coeffs, basis, [0.0], 999)


def test_kappa_certification_scan(free1d, dirac_tp):
    # sampled directions x radii inside the certified ball never violate
    # the eigenvalue-count condition
    lat, basis, coeffs = free1d
    tp = dirac_tp
    for u in (1.0, -1.0):
        for frac in (np.arange(8) + 1.0) / 8.0:
            ev = fiber_eigenvalues(coeffs, basis, tp.k0 + np.array([u * frac * tp.kappa]), center=tp.k0)
            assert _counts_ok(ev, tp.lam0, tp.d0, tp.n)


def test_kappa_capped_by_dual_spacing(dirac_tp, mathieu_tp_bottom):
    cap = 2.0 * np.pi / 4.0
    assert dirac_tp.kappa <= cap * (1 + 1e-12)
    assert mathieu_tp_bottom.kappa <= cap * (1 + 1e-12)


def test_threshold_record_roundtrip(mathieu_tp_edge):
    rec = mathieu_tp_edge.to_record()
    assert rec["multiplicity"] == 1
    assert rec["kappa"] == mathieu_tp_edge.kappa
    assert len(rec["basis_vectors"]) == 1
    import json

    json.dumps(rec)


def test_cluster_not_isolated_raises(free1d):
    lat, basis, coeffs = free1d
    # a cluster_tol so large that the "cluster" swallows the gap
    with pytest.raises(CertificationError):
        detect_threshold(coeffs, basis, [np.pi], 1, cluster_tol=1e3)
