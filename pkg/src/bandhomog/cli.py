"""Command-line interface.

Subcommands: bands, threshold, effective, evolve, converge, selftest.
Exit codes: 0 all asserted bounds hold, 1 bound violation, 2 configuration
or numerical failure.  Report paths write CSV plus rendered figures into
the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .effective import EffectiveTensors, compute_tensors
from .errors import CertificationWarning, ConfigError, GridEstimateWarning
from .harness import (
    bands_csv_rows,
    build_problem,
    compute_threshold,
    load_config,
    run_convergence,
    truncation_check,
    verify_bound_sweep,
    write_csv,
)
from .propagator import (
    PacketSpec,
    assemble_error,
    error_bound,
    make_packet,
    propagate_effective,
    propagate_exact,
    reconstruct_physical,
)
from .spectral import band_structure
from .threshold import constants_ledger


def _outdir(args, config=None) -> Path:
    chosen = args.outdir or (config.output_dir if config is not None else None) or "out"
    out = Path(chosen)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _k_path(lat, args):
    d = lat.dim
    if args.path:
        frac = [np.array([float(x) for x in p.split(",")], dtype=float) for p in args.path]
        if any(f.size != d for f in frac):
            raise ConfigError(f"path points must have {d} fractional components")
    elif d == 1:
        frac = [np.array([-0.5]), np.array([0.5])]
    elif d == 2:
        frac = [np.array([0.0, 0.0]), np.array([0.5, 0.0]), np.array([0.5, 0.5]), np.array([0.0, 0.0])]
    else:
        frac = [np.zeros(3), np.array([0.5, 0.0, 0.0]), np.array([0.5, 0.5, 0.0]), np.zeros(3)]
    pts = []
    for a, b in zip(frac[:-1], frac[1:]):
        seg = np.linspace(0.0, 1.0, args.num, endpoint=False)
        for t in seg:
            pts.append(lat.dual @ (a + t * (b - a)))
    pts.append(lat.dual @ frac[-1])
    return np.array(pts)


def cmd_bands(args) -> int:
    config = load_config(args.config)
    out = _outdir(args, config)
    lat, basis, coeffs = build_problem(config)
    kpts = _k_path(lat, args)
    bs = band_structure(coeffs, basis, kpts, args.bands, workers=config.workers)
    header = [f"k_{i+1}" for i in range(lat.dim)] + [f"E_{m+1}" for m in range(args.bands)]
    write_csv(out / "bands.csv", header, bands_csv_rows(bs))
    if not args.no_figures:
        from .reports import save_band_figure

        save_band_figure(bs, out / "bands.png")
    print(f"wrote {out / 'bands.csv'}")
    return 0


def cmd_threshold(args) -> int:
    config = load_config(args.config)
    out = _outdir(args, config)
    lat, basis, coeffs, tp = compute_threshold(config)
    with open(out / "threshold.json", "w", encoding="utf-8") as fh:
        json.dump(tp.to_record(), fh, sort_keys=True, indent=2)
    print(f"threshold: lam0={tp.lam0:.12g} n={tp.n} d0={tp.d0:.12g} kappa={tp.kappa:.12g}")
    code = 0
    if args.verify:
        tensors = compute_tensors(coeffs, basis, tp)
        ledger = constants_ledger(tp, coeffs)
        deltas = [f * tp.kappa for f in args.deltas]
        rows = verify_bound_sweep(coeffs, basis, tp, tensors, ledger, deltas, args.taus)
        write_csv(
            out / "verify.csv",
            ["delta", "tau", "lhs", "rhs", "margin"],
            [[r["delta"], r["tau"], r["lhs"], r["rhs"], r["margin"]] for r in rows],
        )
        with open(out / "ledger.json", "w", encoding="utf-8") as fh:
            json.dump(ledger.as_dict(), fh, sort_keys=True, indent=2)
        if not args.no_figures:
            from .reports import save_verify_figure

            save_verify_figure(rows, out / "verify.png")
        bad = [r for r in rows if r["lhs"] > r["rhs"]]
        for r in rows:
            status = "ok" if r["lhs"] <= r["rhs"] else "VIOLATED"
            print(
                f"  |dk|={r['delta']:.6g} tau={r['tau']:g}: "
                f"lhs={r['lhs']:.6g} rhs={r['rhs']:.6g} [{status}]"
            )
        if args.check_truncation:
            tc = truncation_check(config, deltas, args.taus)
            write_csv(
                out / "verify_truncation.csv",
                ["delta", "tau", "lhs", "lhs_refined", "converged"],
                [[r["delta"], r["tau"], r["lhs"], r["lhs_refined"], r["converged"]] for r in tc],
            )
            if not all(r["converged"] for r in tc):
                print("truncation check: NOT converged at 1.5x cutoff")
                code = 1
        if bad:
            code = 1
    return code


def cmd_effective(args) -> int:
    config = load_config(args.config)
    out = _outdir(args, config)
    lat, basis, coeffs, tp = compute_threshold(config)
    tensors = compute_tensors(coeffs, basis, tp)
    with open(out / "tensors.json", "w", encoding="utf-8") as fh:
        json.dump(tensors.to_record(), fh, sort_keys=True, indent=2)
    print(f"wrote {out / 'tensors.json'} (n={tensors.n}, lam0={tensors.lam0:.12g})")
    return 0


def cmd_evolve(args) -> int:
    config = load_config(args.config)
    out = _outdir(args, config)
    lat, basis, coeffs, tp = compute_threshold(config)
    if args.tensors:
        with open(args.tensors, "r", encoding="utf-8") as fh:
            tensors = EffectiveTensors.from_record(json.load(fh))
    else:
        tensors = compute_tensors(coeffs, basis, tp)
    spec = config.packet
    if args.packet:
        with open(args.packet, "r", encoding="utf-8") as fh:
            pk = json.load(fh)
        spec = PacketSpec(
            kind=pk.get("kind", "gaussian"),
            dim=lat.dim,
            radius=float(pk.get("radius", 3.0)),
            nodes=int(pk.get("nodes", 65)),
            width=float(pk.get("width", 1.0)),
        )
    packet = make_packet(spec, config.profile_index)
    eps, tau = args.epsilon, args.tau
    fib = propagate_exact(coeffs, basis, tp, packet, eps, tau)
    eff = propagate_effective(tensors, packet, eps, tau)
    err = assemble_error(fib, eff, tp, eps, tau, cell_volume=lat.cell_volume)
    ledger = constants_ledger(tp, coeffs)
    bound = error_bound(tp, ledger, packet, eps, tau)

    header = [f"xi_{i+1}" for i in range(lat.dim)] + ["weight", "amp_re", "amp_im"]
    header += [f"c{l+1}_re" for l in range(tp.n)] + [f"c{l+1}_im" for l in range(tp.n)]
    rows = []
    for i in range(packet.xi.shape[0]):
        row = list(packet.xi[i]) + [packet.weights[i], packet.amplitudes[i].real, packet.amplitudes[i].imag]
        row += [eff[i, l].real for l in range(tp.n)] + [eff[i, l].imag for l in range(tp.n)]
        rows.append(row)
    write_csv(out / "fibers.csv", header, rows)

    print(f"error = {err:.12e}")
    print(f"bound = {bound['total']:.12e} (kappa term {bound['term_kappa']:.6e}, "
          f"theorem term {bound['term_theorem']:.6e})")
    print(f"certified = {fib.certified}")
    if args.grid:
        span = args.grid_span if args.grid_span else 6.0
        x = np.linspace(-span, span, args.grid).reshape(-1, 1)
        if lat.dim != 1:
            raise ConfigError("--grid snapshots are 1d only")
        u, ueff = reconstruct_physical(basis, tp, packet, fib, eff, eps, x)
        write_csv(
            out / "snapshot.csv",
            ["x", "u_re", "u_im", "ueff_re", "ueff_im"],
            [[x[i, 0], u[i].real, u[i].imag, ueff[i].real, ueff[i].imag] for i in range(x.shape[0])],
        )
        if not args.no_figures:
            from .reports import save_snapshot_figure

            save_snapshot_figure(x[:, 0], u, ueff, out / "snapshot.png")
    if fib.certified and err > bound["total"]:
        print("BOUND VIOLATED")
        return 1
    return 0


def cmd_converge(args) -> int:
    config = load_config(args.config)
    out = _outdir(args, config)
    report = run_convergence(config)
    with open(out / "convergence.json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    write_csv(
        out / "convergence.csv",
        ["eps", "tau", "error", "bound_kappa_term", "bound_theorem_term", "bound_total",
         "certified", "satisfied"],
        [
            [r["eps"], r["tau"], r["error"], r["bound_kappa_term"], r["bound_theorem_term"],
             r["bound_total"], r["certified"], r["satisfied"]]
            for r in report.rows
        ],
    )
    if not args.no_figures:
        from .reports import save_convergence_figure

        save_convergence_figure(report.rows, report.slopes, out / "convergence.png")
    for key, s in report.slopes.items():
        if s["slope"] is None:
            print(f"{key}: slope skipped ({s['note']})")
        else:
            print(f"{key}: slope = {s['slope']:.4f} (rms residual {s['residual']:.2e})")
    print(f"bounds satisfied: {report.passed}")
    return 0 if report.passed else 1


def cmd_selftest(args) -> int:
    """Free-operator exactness suite."""
    from .presets import free_chain
    from .spectral import detect_threshold

    ok = True

    def check(name, cond, detail=""):
        nonlocal ok
        print(f"{'PASS' if cond else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        ok = ok and bool(cond)

    lat, basis, coeffs = free_chain(cutoff_modes=8)
    ks = np.linspace(-np.pi, np.pi, 201).reshape(-1, 1)
    bs = band_structure(coeffs, basis, ks, 3)
    exact = np.sort((ks + 2.0 * np.pi * np.arange(-8, 9)[None, :]) ** 2, axis=1)[:, :3]
    err = np.abs(bs.energies - exact).max()
    check("free bands match (k + 2 pi m)^2", err <= 1e-10, f"max err {err:.2e}")

    tp0 = detect_threshold(coeffs, basis, [0.0], 1)
    tensors0 = compute_tensors(coeffs, basis, tp0)
    check("free k0=0: g1 = 0", abs(tensors0.g1).max() <= 1e-12)
    check("free k0=0: g2 = metric", abs(tensors0.g2 - 1.0).max() <= 1e-10)

    tpd = detect_threshold(coeffs, basis, [np.pi], 1)
    check("free k0=pi: Dirac cluster n=2", tpd.n == 2)
    tensd = compute_tensors(coeffs, basis, tpd)
    for dk in (0.3, -0.1, 0.01):
        mu = np.linalg.eigvalsh(tensd.symbol([dk]))
        ref = np.sort([np.pi**2 + 2 * np.pi * dk + dk**2, np.pi**2 - 2 * np.pi * dk + dk**2])
        check(f"free Dirac symbol spectrum at dk={dk}", np.abs(mu - ref).max() <= 1e-10)

    packet = make_packet(PacketSpec(kind="gaussian", dim=1, radius=3.0, nodes=33), 1)
    fib = propagate_exact(coeffs, basis, tpd, packet, 0.1, 1.0)
    eff = propagate_effective(tensd, packet, 0.1, 1.0)
    err = assemble_error(fib, eff, tpd, 0.1, 1.0, cell_volume=lat.cell_volume)
    check("free Dirac homogenization error = 0", err <= 1e-12, f"err {err:.2e}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bandhomog",
        description="band structure, threshold data, effective tensors and "
        "homogenization error verification for periodic Schrödinger operators",
    )
    parser.add_argument("--version", action="version", version=f"bandhomog {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--outdir", default=None,
                       help="output directory (default: config output.dir or ./out)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p = sub.add_parser("bands", help="band functions over a quasimomentum path (CSV + figure)")
    add_common(p)
    p.add_argument("--bands", type=int, default=6, help="number of bands")
    p.add_argument("--num", type=int, default=201, help="points per path segment")
    p.add_argument("--path", nargs="*", default=None,
                   help="fractional path points, e.g. 0,0 0.5,0 0.5,0.5")
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("threshold", help="threshold point record; --verify adds the fiber bound sweep")
    add_common(p)
    p.add_argument("--verify", action="store_true")
    p.add_argument("--deltas", type=float, nargs="*", default=[0.3, 0.1, 0.03],
                   help="|dk| values as fractions of kappa")
    p.add_argument("--taus", type=float, nargs="*", default=[1.0, 10.0, 100.0])
    p.add_argument("--check-truncation", action="store_true",
                   help="recompute the sweep at 1.5x cutoff and compare")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("effective", help="effective tensor record (JSON)")
    add_common(p)
    p.set_defaults(func=cmd_effective)

    p = sub.add_parser("evolve", help="propagate one (eps, tau) pair and report the L2 error")
    add_common(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--tensors", default=None, help="reuse a tensors.json record")
    p.add_argument("--packet", default=None, help="packet spec JSON overriding the config")
    p.add_argument("--grid", type=int, default=0, help="physical snapshot points (1d)")
    p.add_argument("--grid-span", type=float, default=0.0, help="snapshot half-width")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("converge", help="full convergence study against the explicit bound")
    add_common(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("selftest", help="free-operator exactness suite")
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=cmd_selftest)

    args = parser.parse_args(argv)
    warnings.simplefilter("ignore", GridEstimateWarning)
    warnings.simplefilter("default", CertificationWarning)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical failures carry exit code 2 as well
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
