"""Fourier-series utilities on the unit cell.

Periodic fields appear in two representations:

* exact coefficient dictionaries ``{multi-index tuple: amplitude}`` for
  band-limited data, so products of such fields are exact finite
  convolutions and no FFT roundoff enters the operator assembly;
* samples on a uniform grid over the cell, used for quadrature and for
  fields that are not band-limited (reciprocals of positive fields).

A field F(x) = sum_m c_m exp(i<B m, x>) sampled at x = A n/N obeys the
standard multidimensional DFT pairing, because <B m, A n/N> = 2 pi <m, n/N>.
Grid sizes are restricted to 5-smooth numbers: for those, FFTs of constant
arrays produce exact zeros in all non-DC bins (equal summands cancel
exactly through every radix-2/3/5 butterfly), which keeps the free-operator
paths exact to the last bit.
"""

from __future__ import annotations

import numpy as np

FieldDict = dict[tuple[int, ...], complex]


def five_smooth(n: int) -> int:
    """Smallest integer >= n whose prime factors are all in {2, 3, 5}."""
    n = max(int(n), 1)
    while True:
        m = n
        for p in (2, 3, 5):
            while m % p == 0:
                m //= p
        if m == 1:
            return n
        n += 1


def conv_dicts(a: FieldDict, b: FieldDict) -> FieldDict:
    """Exact convolution of two coefficient dictionaries (pointwise product
    of the underlying fields)."""
    out: FieldDict = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = tuple(x + y for x, y in zip(ma, mb))
            out[m] = out.get(m, 0.0) + ca * cb
    return out


def conjugate_dict(a: FieldDict) -> FieldDict:
    """Coefficients of the complex conjugate field."""
    return {tuple(-x for x in m): np.conj(c) for m, c in a.items()}


def hermitian_defect(a: FieldDict) -> float:
    """Max |c(-m) - c(m)^*|; zero iff the field is real-valued."""
    defect = 0.0
    for m, c in a.items():
        mneg = tuple(-x for x in m)
        defect = max(defect, abs(np.conj(c) - a.get(mneg, 0.0)))
    return defect


def dict_to_grid(coeffs: FieldDict, shape: tuple[int, ...]) -> np.ndarray:
    """Evaluate a coefficient dictionary on the sampling grid.

    Direct separable evaluation, summed mode by mode in sorted order.  For a
    pure DC dictionary this returns an exactly constant array (no FFT
    twiddle roundoff), which the exactness tests of the free operator rely
    on.
    """
    d = len(shape)
    out = np.zeros(shape, dtype=complex)
    axes_cache: dict[tuple[int, int], np.ndarray] = {}

    def axis_phase(axis, m):
        key = (axis, m)
        if key not in axes_cache:
            n = shape[axis]
            if m == 0:
                v = np.ones(n, dtype=complex)
            else:
                v = np.exp(2j * np.pi * m * np.arange(n) / n)
            axes_cache[key] = v
        return axes_cache[key]

    for m in sorted(coeffs):
        term = np.asarray(coeffs[m], dtype=complex)
        factor = np.ones((), dtype=complex)
        for axis in range(d):
            phase = axis_phase(axis, m[axis])
            factor = np.multiply.outer(factor, phase)
        out += term * factor
    return out


def grid_to_coeff_array(samples: np.ndarray) -> np.ndarray:
    """Full DFT coefficient array c[m] (wrapped indexing) of grid samples."""
    return np.fft.fftn(samples) / samples.size


def coeff_array_to_grid(coeff: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(coeff) * coeff.size


def gather_offsets_dict(coeffs: FieldDict, mindex: np.ndarray) -> np.ndarray:
    """Matrix of coefficients at pairwise offsets m_i - m_j.

    This is the multiplication (convolution) matrix of the field in the
    orthonormalized plane-wave basis.  Offsets absent from the dictionary
    are exact zeros (band-limited data).
    """
    nb, d = mindex.shape
    lo = mindex.min(axis=0) - mindex.max(axis=0)
    hi = mindex.max(axis=0) - mindex.min(axis=0)
    table = np.zeros(tuple(hi - lo + 1), dtype=complex)
    for m, c in coeffs.items():
        idx = np.array(m) - lo
        if np.all(idx >= 0) and np.all(idx <= hi - lo):
            table[tuple(idx)] = c
    diff = mindex[:, None, :] - mindex[None, :, :] - lo
    return table[tuple(diff[..., ax] for ax in range(d))]


def gather_offsets_array(coeff: np.ndarray, mindex: np.ndarray) -> np.ndarray:
    """Same gather from a full (wrapped) DFT coefficient array."""
    d = mindex.shape[1]
    diff = mindex[:, None, :] - mindex[None, :, :]
    idx = tuple(np.mod(diff[..., ax], coeff.shape[ax]) for ax in range(d))
    return coeff[idx]


def spectral_derivative(samples: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """Apply a Fourier multiplier (an array over the wrapped frequency grid)
    to grid samples: ifft(multiplier * fft(samples))."""
    return np.fft.ifftn(multiplier * np.fft.fftn(samples))
