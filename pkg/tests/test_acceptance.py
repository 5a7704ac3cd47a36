"""Acceptance suite: one test per criterion, each printing a pass/fail line
with the measured quantity and its stated tolerance."""

import time

import numpy as np

from bandhomog import (
    PacketSpec,
    assemble_error,
    band_structure,
    compute_tensors,
    constants_ledger,
    detect_threshold,
    effective_symbol,
    ledger_from_values,
    make_packet,
    propagate_effective,
    propagate_exact,
    spectral_projection,
    verify_exponential_bound,
)
from bandhomog.fourier import gather_offsets_dict
from bandhomog.harness import fit_slope, parse_config, run_convergence
from bandhomog.presets import mathieu_chain_config


def _report(num, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'}  criterion {num}: {detail}")
    assert ok, detail


def test_criterion_1_free_band_exactness(free1d):
    lat, basis, coeffs = free1d
    t0 = time.perf_counter()
    ks = np.linspace(-np.pi, np.pi, 201).reshape(-1, 1)
    bs = band_structure(coeffs, basis, ks, 6)
    ms = np.arange(-9, 10)
    exact = np.sort((ks + 2.0 * np.pi * ms[None, :]) ** 2, axis=1)[:, :6]
    err = float(np.abs(bs.energies - exact).max())
    elapsed = time.perf_counter() - t0
    _report(1, err <= 1e-10 and elapsed < 1.0,
            f"free bands max|E - (k+2pi m)^2| = {err:.2e} (tol 1e-10), runtime {elapsed:.2f}s (< 1s)")


def test_criterion_2_free_tensors_bottom(free1d, free2d):
    results = []
    for lat, basis, coeffs in (free1d, free2d):
        d = lat.dim
        tp = detect_threshold(coeffs, basis, [0.0] * d, 1)
        tensors = compute_tensors(coeffs, basis, tp)
        g1 = float(np.abs(tensors.g1).max())
        g2 = float(np.abs(tensors.g2[0, 0] - np.eye(d)).max())
        results.append((d, g1, g2))
    ok = all(g1 <= 1e-12 and g2 <= 1e-10 for _, g1, g2 in results)
    detail = "; ".join(
        f"d={d}: |g1|={g1:.2e} (tol 1e-12), |g2 - metric|={g2:.2e} (tol 1e-10)"
        for d, g1, g2 in results
    )
    _report(2, ok, detail)


def test_criterion_3_free_dirac_cone(free1d, dirac_tp):
    lat, basis, coeffs = free1d
    tp = dirac_tp
    ok = tp.n == 2
    ok &= abs(tp.lam0 - np.pi**2) <= 1e-8 * np.pi**2
    ok &= abs(tp.d0 - 8.0 * np.pi**2) <= 1e-8 * 8.0 * np.pi**2
    tensors = compute_tensors(coeffs, basis, tp)
    spec_err = 0.0
    for dk in (0.3, -0.3, 0.1, -0.1, 0.01, -0.01):
        mu = np.linalg.eigvalsh(effective_symbol(tensors, [dk]))
        ref = np.sort([np.pi**2 + 2 * np.pi * dk + dk**2, np.pi**2 - 2 * np.pi * dk + dk**2])
        spec_err = max(spec_err, float(np.abs(mu - ref).max()))
    ok &= spec_err <= 1e-10
    packet = make_packet(PacketSpec(kind="gaussian", dim=1, radius=3.0, nodes=33), 1)
    err_max = 0.0
    for eps in (0.1, 0.05):
        for tau in (1.0, 10.0):
            fib = propagate_exact(coeffs, basis, tp, packet, eps, tau)
            eff = propagate_effective(tensors, packet, eps, tau)
            err_max = max(err_max, assemble_error(fib, eff, tp, eps, tau,
                                                  cell_volume=lat.cell_volume))
    ok &= err_max <= 1e-12
    _report(3, ok,
            f"n={tp.n}, lam0-pi^2={tp.lam0 - np.pi**2:.1e}, d0-8pi^2={tp.d0 - 8 * np.pi**2:.1e} "
            f"(rel tol 1e-8); symbol spectrum err {spec_err:.2e} (tol 1e-10); "
            f"homogenization error {err_max:.2e} (tol 1e-12)")


def test_criterion_4_mathieu_fd_consistency(mathieu, mathieu_tp_bottom, mathieu_tp_edge):
    from oracles import fd_band_gradient, fd_band_hessian
    from bandhomog import assemble_fiber

    lat, basis, coeffs = mathieu
    lines = []
    ok = True
    for tp in (mathieu_tp_bottom, mathieu_tp_edge):
        def band(k, s=tp.s, c=tp.k0):
            return np.linalg.eigvalsh(assemble_fiber(coeffs, basis, [k], center=c).matrix)[s - 1]

        tensors = compute_tensors(coeffs, basis, tp)
        g1 = complex(tensors.g1[0, 0, 0])
        grad = fd_band_gradient(band, tp.k0[0])
        hess = fd_band_hessian(band, tp.k0[0])
        sym2 = float(np.real(tensors.g2[0, 0, 0, 0] + np.conj(tensors.g2[0, 0, 0, 0])))
        ok_grad = abs(g1) <= 1e-8 and abs(grad) <= 1e-8          # extremum: both vanish
        ok_hess = abs(sym2 - hess) <= 1e-6 * abs(hess)
        ok &= ok_grad and ok_hess
        lines.append(
            f"k0={tp.k0[0]:.4g}: |g1|={abs(g1):.1e}, |fd grad|={abs(grad):.1e} (tol 1e-8); "
            f"2 sym(g2)={sym2:.6f} vs fd hessian {hess:.6f} (rel {abs(sym2 - hess) / abs(hess):.1e}, tol 1e-6)"
        )
    _report(4, ok, "; ".join(lines))


def test_criterion_5_projection_bounds(mathieu, mathieu_tp_edge):
    lat, basis, coeffs = mathieu
    tp = mathieu_tp_edge
    ledger = constants_ledger(tp, coeffs)
    fracs = 10.0 ** np.linspace(-3, -1, 8)         # dyadic-style sweep of [1e-3, 1e-1] kappa
    first_ok = True
    pairs = []
    for frac in fracs:
        dk = float(frac * tp.kappa)
        proj = spectral_projection(coeffs, basis, tp, tp.k0 + np.array([dk]))
        first_ok &= proj.dist_p <= ledger.c7 * dk
        pairs.append((dk, proj.dist_p_f1))
    slope, _ = fit_slope(pairs)
    ok = first_ok and slope >= 1.9
    _report(5, ok,
            f"|F - P| <= C7|dk| at all {len(fracs)} samples: {first_ok}; "
            f"corrected-remainder fitted order {slope:.3f} (>= 1.9)")


def test_criterion_6_fiber_exponential_bound(mathieu, mathieu_tp_edge):
    lat, basis, coeffs = mathieu
    tp = mathieu_tp_edge
    t0 = time.perf_counter()
    tensors = compute_tensors(coeffs, basis, tp)
    ledger = constants_ledger(tp, coeffs)
    bound_ok = True
    slopes = {}
    for tau in (1.0, 10.0, 100.0):
        pairs = []
        for frac in (0.3, 0.1, 0.03):
            dk = frac * tp.kappa
            lhs, rhs = verify_exponential_bound(coeffs, basis, tp, tensors, [dk], tau, ledger)
            bound_ok &= lhs <= rhs
            pairs.append((dk, lhs))
        slopes[tau] = fit_slope(pairs)[0]
    # the lhs is first order with a concave correction; the log-log fit
    # approaches 1 from below, so 0.95 is the estimator allowance (the
    # parallel second/third-order criteria use 1.9 and 2.9)
    order_ok = all(s >= 0.95 for s in slopes.values())
    elapsed = time.perf_counter() - t0
    ok = bound_ok and order_ok and elapsed < 60.0
    _report(6, ok,
            f"lhs <= 3 C7|dk| + C11|tau||dk|^3 on the 3x3 grid: {bound_ok}; fitted orders "
            + ", ".join(f"tau={t:g}: {s:.4f}" for t, s in slopes.items())
            + f" (>= 1 with 0.95 fit allowance); runtime {elapsed:.1f}s (< 60s)")


def test_criterion_7_cauchy_convergence():
    t0 = time.perf_counter()
    doc = mathieu_chain_config(
        cutoff_modes=16,
        k0=0.0,
        epsilons=(0.1, 0.05, 0.025, 0.0125),
        taus=(1.0,),
        packet_radius=4.0,
        packet_nodes=64,
    )
    report = run_convergence(parse_config(doc))
    certified = all(r["certified"] for r in report.rows)
    bounds_ok = all(r["satisfied"] for r in report.rows)
    slope = report.slopes["tau=1"]["slope"]
    elapsed = time.perf_counter() - t0
    ok = certified and bounds_ok and 0.8 <= slope <= 1.3 and elapsed < 300.0
    _report(7, ok,
            f"certified={certified}, error <= explicit bound at all eps: {bounds_ok}, "
            f"slope {slope:.3f} in [0.8, 1.3]; runtime {elapsed:.1f}s (< 300s)")


def test_criterion_8_unitarity_and_normalization(mathieu, mathieu_tp_bottom):
    lat, basis, coeffs = mathieu
    tp = mathieu_tp_bottom
    tensors = compute_tensors(coeffs, basis, tp)
    packet = make_packet(PacketSpec(kind="gaussian", dim=1, radius=4.0, nodes=48), 1)
    drift_exact = 0.0
    drift_eff = 0.0
    for eps, tau in ((0.1, 1.0), (0.05, 10.0), (0.025, 3.7)):
        fib = propagate_exact(coeffs, basis, tp, packet, eps, tau)
        drift_exact = max(drift_exact,
                          abs(fib.total_norm(lat.cell_volume) - packet.l2_norm) / packet.l2_norm)
        eff = propagate_effective(tensors, packet, eps, tau)
        total_eff = float(np.sqrt(np.sum(packet.weights * np.einsum("il,il->i", eff.conj(), eff).real)
                                  / lat.cell_volume))
        drift_eff = max(drift_eff, abs(total_eff - packet.l2_norm) / packet.l2_norm)
    norm2 = float(basis.integrate(coeffs.omega_grid**2).real)
    norm_defect = abs(norm2 - lat.cell_volume)
    # residual of (D* gcheck D + V - shift) w on the truncated basis
    K0 = np.zeros((basis.size, basis.size), dtype=complex)
    for r in range(lat.dim):
        for s in range(lat.dim):
            G = gather_offsets_dict(coeffs.gcheck[r][s], basis.mindex)
            K0 += basis.bvecs[:, r, None] * G * basis.bvecs[None, :, s]
    K0 += gather_offsets_dict(coeffs.potential, basis.mindex)
    resid = float(np.linalg.norm(K0 @ coeffs.omega_vec - coeffs.shift * coeffs.omega_vec))
    ok = drift_exact <= 1e-12 and drift_eff <= 1e-12 and norm_defect <= 1e-10 and resid <= 1e-8
    _report(8, ok,
            f"norm drift exact {drift_exact:.1e}, effective {drift_eff:.1e} (tol 1e-12); "
            f"| |w|^2 - |cell| | = {norm_defect:.1e} (tol 1e-10); "
            f"ground-state residual {resid:.1e} (tol 1e-8)")


def test_criterion_9_gauge_covariance(free1d, dirac_tp):
    lat, basis, coeffs = free1d
    tp = dirac_tp
    base = compute_tensors(coeffs, basis, tp)
    packet = make_packet(PacketSpec(kind="gaussian", dim=1, radius=3.0, nodes=25), 1)
    eps, tau = 0.1, 1.0
    fib = propagate_exact(coeffs, basis, tp, packet, eps, tau)
    eff = propagate_effective(base, packet, eps, tau)
    err0 = assemble_error(fib, eff, tp, eps, tau, cell_volume=lat.cell_volume)
    rng = np.random.default_rng(2024)
    spec_dev = 0.0
    err_dev = 0.0
    for _ in range(20):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        U, _ = np.linalg.qr(a)
        tp_rot = tp.rotated(U, basis=basis)
        rot = compute_tensors(coeffs, basis, tp_rot, check_refinement=False)
        for dk in (0.25, -0.1):
            mu0 = np.linalg.eigvalsh(effective_symbol(base, [dk]))
            mu1 = np.linalg.eigvalsh(effective_symbol(rot, [dk]))
            spec_dev = max(spec_dev, float(np.abs(mu0 - mu1).max()))
        c0 = U.conj().T @ np.array([1.0, 0.0])
        fib_r = propagate_exact(coeffs, basis, tp_rot, packet, eps, tau, initial=c0)
        eff_r = propagate_effective(rot, packet, eps, tau, initial=c0)
        err_r = assemble_error(fib_r, eff_r, tp_rot, eps, tau, cell_volume=lat.cell_volume)
        err_dev = max(err_dev, abs(err_r - err0))
    ok = spec_dev <= 1e-10 and err_dev <= 1e-10
    _report(9, ok,
            f"20 random gauges: max symbol-spectrum deviation {spec_dev:.1e}, "
            f"max error deviation {err_dev:.1e} (tol 1e-10)")


def test_criterion_10_constants_hand_values():
    a = ledger_from_values(lam0=0.0, d0=3.0, kappa=0.1, g_inf=1.0, winv_inf=1.0)
    b = ledger_from_values(lam0=0.0, d0=24.0, kappa=0.1, g_inf=1.0, winv_inf=1.0)
    ok = (a.c1 == 2.0) and (b.c2 == 1.0) and (b.c3 == 4.0)
    _report(10, ok, f"C1={a.c1} (=2), C2={b.c2} (=1), C3={b.c3} (=4), exact")
