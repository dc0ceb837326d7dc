"""Per-trajectory reductions over padded leg arrays.

A batch of trajectories is a 2-D array ``legs`` of shape ``(R, L)`` plus an
integer vector ``counts``; row ``i`` holds ``counts[i]`` leg durations followed
by padding.  Each kernel reduces row ``i`` over columns ``start .. counts[i]-1``
(``start > 0`` drops the leading legs, which is how jump-back trajectories are
evaluated).

Two implementations exist for every kernel: a numba loop and a vectorised
numpy version.  :data:`BACKEND` names the one bound at import time; both are
importable as ``*_numba`` / ``*_numpy`` for benchmarking and cross-checks.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit

__all__ = [
    "BACKEND",
    "log_cosh",
    "row_log_cosh_sum",
    "row_log_sinh_sum",
    "row_cos_product",
]

LOG2 = math.log(2.0)
_SPLIT = 134217729.0  # 2**27 + 1, Dekker splitting constant


def log_cosh(x):
    """``log(cosh(x))`` without overflow or small-argument cancellation."""
    a = np.abs(x)
    small = np.sinh(0.5 * np.minimum(a, 1.0))
    return np.where(a < 1.0, np.log1p(2.0 * small * small), a + np.log1p(np.exp(-2.0 * a)) - LOG2)


def _log_sinh_np(x):
    # x >= 0; log(sinh(0)) = -inf
    with np.errstate(divide="ignore"):
        return x + np.log(-np.expm1(-2.0 * x)) - LOG2


# -- numpy -------------------------------------------------------------------

def _mask(counts, start, width):
    cols = np.arange(width)
    return (cols[None, :] >= start) & (cols[None, :] < counts[:, None])


def row_log_cosh_sum_numpy(legs, counts, c, start=0):
    m = _mask(counts, start, legs.shape[1])
    return np.where(m, log_cosh(c * legs), 0.0).sum(axis=1)


def row_log_sinh_sum_numpy(legs, counts, c, start=0):
    m = _mask(counts, start, legs.shape[1])
    return np.where(m, _log_sinh_np(np.maximum(c * legs, 0.0)), 0.0).sum(axis=1)


def _two_prod_np(a, b):
    p = a * b
    a1 = _SPLIT * a
    ah = a1 - (a1 - a)
    al = a - ah
    b1 = _SPLIT * b
    bh = b1 - (b1 - b)
    bl = b - bh
    err = al * bl - (((p - ah * bh) - al * bh) - ah * bl)
    return p, err


def row_cos_product_numpy(legs, counts, c, start=0):
    m = _mask(counts, start, legs.shape[1])
    f = np.where(m, np.cos(c * legs), 1.0)
    p = np.ones(legs.shape[0])
    e = np.zeros(legs.shape[0])
    for j in range(f.shape[1]):
        p, pi = _two_prod_np(p, f[:, j])
        e = e * f[:, j] + pi
    return p + e


# -- numba -------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _log_cosh_scalar(x):
    a = abs(x)
    if a < 1.0:
        h = math.sinh(0.5 * a)
        return math.log1p(2.0 * h * h)
    return a + math.log1p(math.exp(-2.0 * a)) - LOG2


@njit(cache=True, nogil=True)
def row_log_cosh_sum_numba(legs, counts, c, start=0):
    n = legs.shape[0]
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(start, counts[i]):
            s += _log_cosh_scalar(c * legs[i, j])
        out[i] = s
    return out


@njit(cache=True, nogil=True)
def row_log_sinh_sum_numba(legs, counts, c, start=0):
    n = legs.shape[0]
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(start, counts[i]):
            x = c * legs[i, j]
            if x <= 0.0:
                s = -np.inf
                break
            s += x + math.log(-math.expm1(-2.0 * x)) - LOG2
        out[i] = s
    return out


@njit(cache=True, nogil=True)
def row_cos_product_numba(legs, counts, c, start=0):
    # compensated product (TwoProduct by Dekker splitting)
    n = legs.shape[0]
    out = np.empty(n)
    for i in range(n):
        p = 1.0
        e = 0.0
        for j in range(start, counts[i]):
            f = math.cos(c * legs[i, j])
            q = p * f
            a1 = _SPLIT * p
            ah = a1 - (a1 - p)
            al = p - ah
            b1 = _SPLIT * f
            bh = b1 - (b1 - f)
            bl = f - bh
            err = al * bl - (((q - ah * bh) - al * bh) - ah * bl)
            e = e * f + err
            p = q
        out[i] = p + e
    return out


if HAVE_NUMBA:
    BACKEND = "numba"
    row_log_cosh_sum = row_log_cosh_sum_numba
    row_log_sinh_sum = row_log_sinh_sum_numba
    row_cos_product = row_cos_product_numba
else:
    BACKEND = "numpy"
    row_log_cosh_sum = row_log_cosh_sum_numpy
    row_log_sinh_sum = row_log_sinh_sum_numpy
    row_cos_product = row_cos_product_numpy
