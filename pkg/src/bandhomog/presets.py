"""Standard test problems: the free chain/square and the cosine (Mathieu)
chain.  Used by the self-test command and throughout the test suite."""

from __future__ import annotations

import numpy as np

from .cell import build_coefficients
from .lattice import build_basis, build_lattice, default_cutoff


def free_chain(cutoff_modes: int = 8, grid_factor: int = 4):
    """d=1, integer lattice, g=1, V=0; bands are (k + 2 pi m)^2 exactly."""
    lat = build_lattice([[1.0]])
    basis = build_basis(lat, default_cutoff(lat, cutoff_modes), grid_factor)
    coeffs = build_coefficients(basis, [[{(0,): 1.0}]])
    return lat, basis, coeffs


def mathieu_chain(amplitude: float = 2.0, cutoff_modes: int = 8, grid_factor: int = 4):
    """d=1, integer lattice, g=1, V = amplitude * cos(2 pi x)."""
    lat = build_lattice([[1.0]])
    basis = build_basis(lat, default_cutoff(lat, cutoff_modes), grid_factor)
    pot = {(1,): amplitude / 2.0, (-1,): amplitude / 2.0}
    coeffs = build_coefficients(basis, [[{(0,): 1.0}]], potential=pot)
    return lat, basis, coeffs


def free_square(cutoff_modes: int = 4, grid_factor: int = 4):
    """d=2, integer lattice, g=I, V=0."""
    lat = build_lattice([[1.0, 0.0], [0.0, 1.0]])
    basis = build_basis(lat, default_cutoff(lat, cutoff_modes), grid_factor)
    zero = {(0, 0): 0.0}
    one = {(0, 0): 1.0}
    coeffs = build_coefficients(basis, [[one, dict(zero)], [dict(zero), dict(one)]])
    return lat, basis, coeffs


def _entries(coeffs: dict) -> list:
    return [[list(m), float(np.real(c)), float(np.imag(c))] for m, c in sorted(coeffs.items())]


def free_chain_config(cutoff_modes: int = 8, k0: float = 0.0) -> dict:
    return {
        "lattice": [[1.0]],
        "cutoff_modes": cutoff_modes,
        "coefficients": {"g_check": [[_entries({(0,): 1.0})]], "potential": None},
        "threshold": {"k0": [k0], "band": 1},
        "packet": {"kind": "gaussian", "radius": 3.0, "nodes": 33, "width": 1.0, "profile_index": 1},
        "epsilons": [0.1, 0.05, 0.025],
        "taus": [1.0],
    }


def mathieu_chain_config(
    amplitude: float = 2.0,
    cutoff_modes: int = 8,
    k0: float = 0.0,
    epsilons=(0.1, 0.05, 0.025, 0.0125),
    taus=(1.0,),
    packet_radius: float = 4.0,
    packet_nodes: int = 64,
) -> dict:
    return {
        "lattice": [[1.0]],
        "cutoff_modes": cutoff_modes,
        "coefficients": {
            "g_check": [[_entries({(0,): 1.0})]],
            "potential": _entries({(1,): amplitude / 2.0, (-1,): amplitude / 2.0}),
        },
        "threshold": {"k0": [k0], "band": 1},
        "packet": {
            "kind": "gaussian",
            "radius": packet_radius,
            "nodes": packet_nodes,
            "width": 1.0,
            "profile_index": 1,
        },
        "epsilons": list(epsilons),
        "taus": list(taus),
    }
