"""Pointwise kernels with a compiled core and a NumPy fallback.

The compiled extension (cbfsim._kernels, built from Cython) is preferred when
importable; set CBFSIM_PURE_PYTHON=1 to force the NumPy path.  Both paths are
single-threaded and deterministic.
"""

import os

import numpy as np

if os.environ.get("CBFSIM_PURE_PYTHON"):
    _ext = None
else:
    try:
        from . import _kernels as _ext
    except ImportError:
        _ext = None

USING_COMPILED = _ext is not None


def backend_name() -> str:
    return "compiled" if USING_COMPILED else "numpy"


def absorption_products(u: np.ndarray, v: np.ndarray, r: float) -> np.ndarray:
    """|u|^{r-1} v pointwise; u, v are (3, ...) sample arrays.

    The compiled loop wins for the special-cased exponents; for generic r the
    vectorized NumPy power is faster than per-point libm pow, so it is used
    even when the extension is available.
    """
    if _ext is not None and r in (1.0, 2.0, 3.0):
        uf = np.ascontiguousarray(u.reshape(3, -1))
        vf = np.ascontiguousarray(v.reshape(3, -1))
        out = np.empty_like(vf)
        _ext.absorption_products(uf, vf, float(r), out)
        return out.reshape(v.shape)
    return _absorption_products_np(u, v, r)


def _absorption_products_np(u, v, r):
    if r == 1.0:
        return v.copy()
    mag2 = u[0] ** 2 + u[1] ** 2 + u[2] ** 2
    if r == 3.0:
        return mag2 * v
    if r == 2.0:
        return np.sqrt(mag2) * v
    return mag2 ** (0.5 * (r - 1.0)) * v


def convective_products(u: np.ndarray, grad_v: np.ndarray) -> np.ndarray:
    """(u . grad) v pointwise; u is (3, ...), grad_v is (3, 3, ...) with
    grad_v[m, l] = d_m v_l."""
    if _ext is not None:
        uf = np.ascontiguousarray(u.reshape(3, -1))
        gf = np.ascontiguousarray(grad_v.reshape(3, 3, -1))
        out = np.empty_like(uf)
        _ext.convective_products(uf, gf, out)
        return out.reshape(u.shape)
    return np.einsum("m...,ml...->l...", u, grad_v)


def vector_lp_sum(u: np.ndarray, p: float) -> float:
    """sum over samples of |u(x)|^p (Euclidean magnitude across components)."""
    if _ext is not None:
        uf = np.ascontiguousarray(u.reshape(3, -1))
        return float(_ext.vector_lp_sum(uf, float(p)))
    mag2 = u[0] ** 2 + u[1] ** 2 + u[2] ** 2
    if p == 2.0:
        return float(np.sum(mag2))
    return float(np.sum(mag2 ** (0.5 * p)))
