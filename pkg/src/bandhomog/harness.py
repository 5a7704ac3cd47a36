"""Configuration parsing, pipeline orchestration, convergence studies and
result persistence.

A run configuration is a single JSON-compatible document; all physical
quantities are in the units induced by the lattice.  CSV output uses '.'
decimals and 17 significant digits; complex values appear as paired
columns.  Reports contain no timestamps and are byte-identical across
repeated runs with the same configuration on the same machine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .cell import build_coefficients
from .effective import compute_tensors
from .errors import ConfigError, PipelineError
from .lattice import build_basis, build_lattice, default_cutoff
from .propagator import (
    PacketSpec,
    assemble_error,
    error_bound,
    make_packet,
    propagate_effective,
    propagate_exact,
)
from .spectral import detect_threshold
from .threshold import constants_ledger, verify_exponential_bound


# -- configuration --------------------------------------------------------


@dataclass
class RunConfig:
    lattice: np.ndarray
    cutoff_modes: int | None
    cutoff_radius: float | None
    grid_factor: int
    gcheck: list
    potential: dict | None
    omega: dict | None
    k0: np.ndarray
    band: int
    cluster_tol: float | None
    packet: PacketSpec
    profile_index: int
    epsilons: list
    taus: list
    workers: int | None
    output_dir: str | None
    tolerances: dict
    raw: dict = field(repr=False, default_factory=dict)


def _parse_entries(name, entries, dim) -> dict:
    if entries is None:
        return None
    out = {}
    try:
        for m, re, im in entries:
            key = tuple(int(x) for x in m)
            if len(key) != dim:
                raise ConfigError(f"{name}: multi-index {key} has dimension {len(key)}, expected {dim}")
            out[key] = complex(float(re), float(im))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: entries must be [multi_index, re, im] triples: {exc}") from exc
    return out


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    for key in ("lattice", "coefficients", "threshold"):
        if key not in doc:
            raise ConfigError(f"configuration misses required key {key!r}")
    lattice = np.atleast_2d(np.asarray(doc["lattice"], dtype=float))
    dim = lattice.shape[0]

    coef = doc["coefficients"]
    if "g_check" not in coef:
        raise ConfigError("coefficients.g_check is required")
    gc_raw = coef["g_check"]
    if len(gc_raw) != dim or any(len(row) != dim for row in gc_raw):
        raise ConfigError(f"g_check must be a {dim}x{dim} table of entry lists")
    gcheck = [
        [_parse_entries(f"g_check[{r}][{s}]", gc_raw[r][s], dim) or {} for s in range(dim)]
        for r in range(dim)
    ]
    potential = _parse_entries("potential", coef.get("potential"), dim)
    omega = _parse_entries("omega", coef.get("omega"), dim)

    thr = doc["threshold"]
    k0 = np.asarray(thr.get("k0", [0.0] * dim), dtype=float)
    if k0.size != dim:
        raise ConfigError(f"threshold.k0 has dimension {k0.size}, expected {dim}")
    band = int(thr.get("band", 1))
    if band < 1:
        raise ConfigError("threshold.band must be >= 1")
    cluster_tol = thr.get("cluster_tol")
    if cluster_tol is not None:
        cluster_tol = float(cluster_tol)
        if cluster_tol <= 0:
            raise ConfigError("cluster_tol must be positive")

    pk = doc.get("packet", {})
    packet = PacketSpec(
        kind=pk.get("kind", "gaussian"),
        dim=dim,
        radius=float(pk.get("radius", 3.0)),
        nodes=int(pk.get("nodes", 65)),
        width=float(pk.get("width", 1.0)),
    )
    profile_index = int(pk.get("profile_index", 1))

    epsilons = [float(e) for e in doc.get("epsilons", [])]
    if any(e <= 0 for e in epsilons):
        raise ConfigError("epsilons must be positive")
    taus = [float(t) for t in doc.get("taus", [1.0])]

    cutoff_modes = doc.get("cutoff_modes")
    cutoff_radius = doc.get("cutoff_radius")
    if cutoff_modes is None and cutoff_radius is None:
        cutoff_modes = 8
    grid_factor = int(doc.get("grid_factor", 4))
    if grid_factor < 2:
        raise ConfigError("grid_factor must be at least 2 (alias-free products)")

    tolerances = dict(doc.get("tolerances", {}))
    for name, value in tolerances.items():
        if not isinstance(value, (int, float)) or value <= 0:
            raise ConfigError(f"tolerances.{name} must be positive")
    output_dir = doc.get("output", {}).get("dir") if isinstance(doc.get("output"), dict) else None

    return RunConfig(
        lattice=lattice,
        cutoff_modes=int(cutoff_modes) if cutoff_modes is not None else None,
        cutoff_radius=float(cutoff_radius) if cutoff_radius is not None else None,
        grid_factor=grid_factor,
        gcheck=gcheck,
        potential=potential,
        omega=omega,
        k0=k0,
        band=band,
        cluster_tol=cluster_tol,
        packet=packet,
        profile_index=profile_index,
        epsilons=epsilons,
        taus=taus,
        workers=doc.get("workers"),
        output_dir=output_dir,
        tolerances=tolerances,
        raw=doc,
    )


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(json.load(fh))


def build_problem(config: RunConfig, cutoff_scale: float = 1.0):
    lat = build_lattice(config.lattice)
    if config.cutoff_radius is not None:
        cutoff = config.cutoff_radius * cutoff_scale
    else:
        cutoff = default_cutoff(lat, config.cutoff_modes) * cutoff_scale
    basis = build_basis(lat, cutoff, config.grid_factor)
    coeffs = build_coefficients(basis, config.gcheck, potential=config.potential, omega=config.omega)
    return lat, basis, coeffs


def compute_threshold(config: RunConfig, cutoff_scale: float = 1.0):
    lat, basis, coeffs = build_problem(config, cutoff_scale)
    tp = detect_threshold(
        coeffs, basis, config.k0, config.band,
        cluster_tol=config.cluster_tol, workers=config.workers,
    )
    return lat, basis, coeffs, tp


# -- slope fitting ---------------------------------------------------------


def fit_slope(pairs) -> tuple[float, float]:
    """Least-squares slope of log(error) against log(eps); returns the
    slope and the RMS residual of the fit."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError("slope fitting needs at least 3 (eps, error) pairs")
    eps = np.array([p[0] for p in pairs], dtype=float)
    err = np.array([p[1] for p in pairs], dtype=float)
    if np.any(eps <= 0) or np.any(err <= 0):
        raise ValueError("slope fitting needs positive eps and error values")
    coef, res = np.polyfit(np.log(eps), np.log(err), 1, full=True)[:2]
    rms = float(np.sqrt(res[0] / len(pairs))) if len(res) else 0.0
    return float(coef[0]), rms


# -- verification sweeps ---------------------------------------------------


def verify_bound_sweep(coeffs, basis, tp, tensors, ledger, deltas, taus, directions=None):
    """Rows (|dk|, tau, lhs, rhs, margin) of the fiber exponential bound
    over a |dk| x tau grid, along the first dual direction by default."""
    if directions is None:
        u = basis.lattice.dual[:, 0]
        u = u / np.linalg.norm(u)
        directions = [u]
    rows = []
    for tau in taus:
        for delta in deltas:
            for u in directions:
                lhs, rhs = verify_exponential_bound(
                    coeffs, basis, tp, tensors, delta * np.asarray(u), tau, ledger=ledger
                )
                rows.append(
                    {"delta": float(delta), "tau": float(tau), "lhs": lhs, "rhs": rhs,
                     "margin": rhs - lhs}
                )
    return rows


def truncation_check(config: RunConfig, deltas, taus, factor: float = 1.5, rtol: float = 0.05):
    """Recompute the bound's left side at `factor` times the cutoff and
    require agreement within rtol at every sampled point."""
    _, basis, coeffs, tp = compute_threshold(config)
    tensors = compute_tensors(coeffs, basis, tp)
    ledger = constants_ledger(tp, coeffs)
    base = verify_bound_sweep(coeffs, basis, tp, tensors, ledger, deltas, taus)

    _, basis2, coeffs2, tp2 = compute_threshold(config, cutoff_scale=factor)
    tensors2 = compute_tensors(coeffs2, basis2, tp2)
    ledger2 = constants_ledger(tp2, coeffs2)
    refined = verify_bound_sweep(coeffs2, basis2, tp2, tensors2, ledger2, deltas, taus)

    rows = []
    for b, r in zip(base, refined):
        scale = max(abs(b["lhs"]), abs(r["lhs"]), 1e-14)
        ok = abs(b["lhs"] - r["lhs"]) <= rtol * scale
        rows.append({**b, "lhs_refined": r["lhs"], "converged": bool(ok)})
    return rows


# -- convergence study ------------------------------------------------------


NOISE_FLOOR = 1e-10


@dataclass
class ConvergenceReport:
    config: dict
    ledger: dict
    rows: list
    slopes: dict
    packet: dict
    violations: list
    provenance: dict

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "ledger": self.ledger,
            "rows": self.rows,
            "slopes": self.slopes,
            "packet": self.packet,
            "violations": self.violations,
            "provenance": self.provenance,
            "passed": self.passed,
        }
        return json.dumps(doc, sort_keys=True, indent=2)


def run_convergence(config: RunConfig) -> ConvergenceReport:
    """Full pipeline per (eps, tau): ground state, threshold, tensors,
    exact and effective propagation, L2 error against the explicit bound.
    Certified packets (eps * R_xi <= kappa) must satisfy the bound."""
    if len(config.epsilons) == 0:
        raise ConfigError("epsilon list is empty")
    if len(config.epsilons) >= 3:
        diffs = np.diff(config.epsilons)
        if not np.all(diffs < 0):
            raise ConfigError("epsilons must be strictly decreasing for slope fitting")

    noise_floor = float(config.tolerances.get("noise_floor", NOISE_FLOOR))

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc

    lat, basis, coeffs, tp = stage("ground-state/threshold", compute_threshold, config)
    tensors = stage("effective-tensors", compute_tensors, coeffs, basis, tp)
    ledger = stage("constants-ledger", constants_ledger, tp, coeffs)
    packet = stage("packet", make_packet, config.packet, config.profile_index)

    rows = []
    violations = []
    for tau in config.taus:
        for eps in config.epsilons:
            fib = stage("exact-propagation", propagate_exact,
                        coeffs, basis, tp, packet, eps, tau)
            eff = stage("effective-propagation", propagate_effective,
                        tensors, packet, eps, tau)
            err = stage("error-assembly", assemble_error,
                        fib, eff, tp, eps, tau, cell_volume=lat.cell_volume)
            bound = error_bound(tp, ledger, packet, eps, tau)
            satisfied = (not fib.certified) or err <= bound["total"]
            row = {
                "eps": eps,
                "tau": tau,
                "error": err,
                "bound_kappa_term": bound["term_kappa"],
                "bound_theorem_term": bound["term_theorem"],
                "bound_total": bound["total"],
                "certified": bool(fib.certified),
                "satisfied": bool(satisfied),
            }
            rows.append(row)
            if not satisfied:
                violations.append(row)

    slopes = {}
    for tau in config.taus:
        errs = [(r["eps"], r["error"]) for r in rows if r["tau"] == tau]
        key = f"tau={tau:.17g}"
        if len(errs) < 3:
            slopes[key] = {"slope": None, "residual": None, "note": "fewer than 3 epsilons"}
        elif max(e for _, e in errs) <= noise_floor:
            slopes[key] = {"slope": None, "residual": None, "note": "errors at noise floor"}
        else:
            slope, resid = fit_slope(errs)
            slopes[key] = {"slope": slope, "residual": resid, "note": ""}

    return ConvergenceReport(
        config=config.raw,
        ledger=ledger.as_dict(),
        rows=rows,
        slopes=slopes,
        packet={
            "j": packet.j,
            "r_xi": packet.r_xi,
            "l2_norm": packet.l2_norm,
            "h3_norm": packet.h3_norm,
            "nodes": int(packet.xi.shape[0]),
            "certified_for": [
                eps for eps in config.epsilons if eps * packet.r_xi <= tp.kappa * (1 + 1e-12)
            ],
        },
        violations=violations,
        provenance={
            "package": "bandhomog",
            "version": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "threshold": tp.to_record(),
        },
    )


# -- delimited output -------------------------------------------------------


def format_float(x) -> str:
    return f"{float(x):.17g}"


def write_csv(path, header, rows) -> None:
    """CSV with '.' decimals and full double precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for x in row:
                if isinstance(x, (bool, np.bool_)):
                    cells.append("1" if x else "0")
                elif isinstance(x, (int, np.integer)):
                    cells.append(str(int(x)))
                else:
                    cells.append(format_float(x))
            fh.write(",".join(cells) + "\n")


def bands_csv_rows(bs):
    rows = []
    for kp, en in zip(bs.kpoints, bs.energies):
        rows.append(list(kp) + list(en))
    return rows
