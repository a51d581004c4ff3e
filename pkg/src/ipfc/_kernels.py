"""Hot inner-loop kernels, numba-compiled when available.

Set IPFC_PURE_NUMPY=1 (or "true"/"yes"/"on") to force the plain numpy
implementations; the same fallback engages automatically when numba is not
importable.  ``benchmarks/kernel_bench.py`` times the two paths against
each other.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "USING_NUMBA",
    "IMPLEMENTATIONS",
    "poly_eval",
    "hermitian_pair_mean",
    "bohr_fourier_sum",
]


def _numba_disabled() -> bool:
    return os.environ.get("IPFC_PURE_NUMPY", "").strip().lower() in {"1", "true", "yes", "on"}


# -- vectorised numpy implementations ---------------------------------------

def _poly_eval_numpy(values: np.ndarray, exponents: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    for p, c in zip(exponents, coeffs):
        out += c * values ** int(p)
    return out


def _hermitian_pair_mean_numpy(flat: np.ndarray, neg_perm: np.ndarray) -> np.ndarray:
    return 0.5 * (flat + np.conj(flat[neg_perm]))


def _bohr_fourier_sum_numpy(
    kvecs: np.ndarray, coeff_re: np.ndarray, coeff_im: np.ndarray, points: np.ndarray
) -> np.ndarray:
    # Chunked so the (points x modes) phase matrix stays modest.
    out = np.empty(points.shape[0])
    chunk = 8192
    for start in range(0, points.shape[0], chunk):
        phase = points[start : start + chunk] @ kvecs.T
        out[start : start + chunk] = np.cos(phase) @ coeff_re - np.sin(phase) @ coeff_im
    return out


# -- explicit loops, the sources for numba compilation -----------------------

def _poly_eval_loop(values, exponents, coeffs):
    out = np.zeros_like(values)
    for i in range(values.shape[0]):
        v = values[i]
        acc = 0.0
        for t in range(exponents.shape[0]):
            acc += coeffs[t] * v ** exponents[t]
        out[i] = acc
    return out


def _hermitian_pair_mean_loop(flat, neg_perm):
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = 0.5 * (flat[i] + np.conj(flat[neg_perm[i]]))
    return out


def _bohr_fourier_sum_loop(kvecs, coeff_re, coeff_im, points):
    npts = points.shape[0]
    nmodes = kvecs.shape[0]
    ndim = kvecs.shape[1]
    out = np.empty(npts)
    for ip in range(npts):
        acc = 0.0
        for im in range(nmodes):
            phase = 0.0
            for j in range(ndim):
                phase += kvecs[im, j] * points[ip, j]
            acc += coeff_re[im] * np.cos(phase) - coeff_im[im] * np.sin(phase)
        out[ip] = acc
    return out


USING_NUMBA = False
_numba_impls = None
if not _numba_disabled():
    try:
        import numba
    except ImportError:
        numba = None
    if numba is not None:
        _jit = numba.njit(cache=True)
        _numba_impls = {
            "poly_eval": _jit(_poly_eval_loop),
            "hermitian_pair_mean": _jit(_hermitian_pair_mean_loop),
            "bohr_fourier_sum": _jit(_bohr_fourier_sum_loop),
        }
        USING_NUMBA = True

_numpy_impls = {
    "poly_eval": _poly_eval_numpy,
    "hermitian_pair_mean": _hermitian_pair_mean_numpy,
    "bohr_fourier_sum": _bohr_fourier_sum_numpy,
}

#: Both implementation families, for agreement tests and the benchmark.
IMPLEMENTATIONS = {"numpy": _numpy_impls, "numba": _numba_impls}

_active = _numba_impls if USING_NUMBA else _numpy_impls
poly_eval = _active["poly_eval"]
hermitian_pair_mean = _active["hermitian_pair_mean"]
bohr_fourier_sum = _active["bohr_fourier_sum"]
