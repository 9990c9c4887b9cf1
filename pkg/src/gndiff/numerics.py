"""Scalar/array helpers that work for both float64 and mpmath object arrays.

Extended precision is needed for the reference experiments: the regularised
system amplifies rounding by roughly ``exp((t1 - t0) / eps)`` and the tracked
charges are differences of products that reach ``1e10`` and beyond.  Arrays
of ``mpmath.mpf`` (numpy ``dtype=object``) flow through the same code paths as
float64 arrays; only transcendental functions and the dense LU need a
dispatch.
"""
from __future__ import annotations

import contextlib
import math

import mpmath
import numpy as np
import scipy.linalg

# cap used before calling exp on float64 data; beyond it the value is inf
EXP_OVERFLOW = 700.0


def is_mp(a) -> bool:
    if isinstance(a, np.ndarray):
        return a.dtype == object
    return isinstance(a, mpmath.mpf)


def to_mp(a) -> np.ndarray:
    arr = np.asarray(a)
    out = np.empty(arr.shape, dtype=object)
    flat = out.reshape(-1)
    for k, v in enumerate(arr.reshape(-1)):
        flat[k] = v if isinstance(v, mpmath.mpf) else mpmath.mpf(v)
    return out


def to_float(a) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype == object:
        return np.array([float(v) for v in arr.reshape(-1)], dtype=float).reshape(arr.shape)
    return arr.astype(float, copy=False)


def like(value, ref):
    """Convert a python/float scalar to the number type of ``ref``."""
    if is_mp(ref) and not isinstance(value, mpmath.mpf):
        return mpmath.mpf(value)
    return value


def asarray_like(a, ref) -> np.ndarray:
    return to_mp(a) if is_mp(ref) else np.asarray(a, dtype=float)


def zeros_like(ref, shape=None) -> np.ndarray:
    shape = np.shape(ref) if shape is None else shape
    if is_mp(ref):
        out = np.empty(shape, dtype=object)
        out.fill(mpmath.mpf(0))
        return out
    return np.zeros(shape)


def eye_like(n: int, ref) -> np.ndarray:
    out = zeros_like(ref, (n, n))
    one = like(1.0, ref)
    for i in range(n):
        out[i, i] = one
    return out


def _vec(fn):
    return np.vectorize(fn, otypes=[object])


_mp_exp = _vec(mpmath.exp)
_mp_log = _vec(mpmath.log)
_mp_tanh = _vec(mpmath.tanh)
_mp_log1p = _vec(mpmath.log1p)


def exp(a):
    if is_mp(a):
        return _mp_exp(a) if isinstance(a, np.ndarray) else mpmath.exp(a)
    return np.exp(a)


def log(a):
    if is_mp(a):
        return _mp_log(a) if isinstance(a, np.ndarray) else mpmath.log(a)
    return np.log(a)


def tanh(a):
    if is_mp(a):
        return _mp_tanh(a) if isinstance(a, np.ndarray) else mpmath.tanh(a)
    return np.tanh(a)


def log1p(a):
    if is_mp(a):
        return _mp_log1p(a) if isinstance(a, np.ndarray) else mpmath.log1p(a)
    return np.log1p(a)


def scalar_exp(x):
    """exp of a scalar; float inputs raise OverflowError instead of returning inf."""
    if isinstance(x, mpmath.mpf):
        return mpmath.exp(x)
    return math.exp(x)


def maxabs(a) -> float:
    arr = np.asarray(a)
    if arr.size == 0:
        return 0.0
    if arr.dtype == object:
        return float(max(abs(v) for v in arr.reshape(-1)))
    return float(np.max(np.abs(arr)))


@contextlib.contextmanager
def precision(dps: int | None):
    """Set mpmath working precision; a no-op when ``dps`` is None."""
    if dps is None:
        yield
    else:
        with mpmath.workdps(dps):
            yield


# --- dense LU -----------------------------------------------------------------

class LU:
    """LU factorisation with partial pivoting for float64 or mpf matrices.

    float64 goes through LAPACK (``getrf``/``getrs``/``gecon``); object arrays
    use a vectorised Doolittle elimination.
    """

    def __init__(self, A: np.ndarray):
        A = np.asarray(A)
        self.n = A.shape[0]
        self.mp = A.dtype == object
        if self.mp:
            self._factor_mp(A)
        else:
            self._lu, self._piv = scipy.linalg.lu_factor(A, check_finite=True)
            self.anorm = float(np.max(np.sum(np.abs(A), axis=0))) if A.size else 0.0

    def _factor_mp(self, A):
        n = self.n
        lu = A.copy()
        piv = np.arange(n)
        self.singular = False
        for k in range(n):
            col = [abs(v) for v in lu[k:, k]]
            p = k + int(np.argmax(col))
            if col[p - k] == 0:
                self.singular = True
                continue
            if p != k:
                lu[[k, p]] = lu[[p, k]]
                piv[[k, p]] = piv[[p, k]]
            lu[k + 1:, k] = lu[k + 1:, k] / lu[k, k]
            lu[k + 1:, k + 1:] = lu[k + 1:, k + 1:] - np.outer(lu[k + 1:, k], lu[k, k + 1:])
        self._lu = lu
        self._perm = piv
        self.anorm = max(sum(abs(v) for v in A[:, j]) for j in range(n)) if n else 0

    def solve(self, b: np.ndarray) -> np.ndarray:
        if not self.mp:
            return scipy.linalg.lu_solve((self._lu, self._piv), b)
        lu, n = self._lu, self.n
        x = np.asarray(b)[self._perm].copy()
        for i in range(1, n):
            x[i] = x[i] - lu[i, :i] @ x[:i]
        for i in range(n - 1, -1, -1):
            x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
        return x

    def condition(self) -> float:
        """1-norm condition number (estimate for float64, exact for mpf)."""
        if self.n == 0:
            return 1.0
        if not self.mp:
            if np.any(np.diag(self._lu) == 0):
                return math.inf
            rcond, info = scipy.linalg.lapack.dgecon(self._lu, self.anorm, norm="1")
            return math.inf if rcond == 0 else 1.0 / rcond
        if self.singular:
            return math.inf
        inv = self.solve(eye_like(self.n, self._lu))
        inorm = max(sum(abs(v) for v in inv[:, j]) for j in range(self.n))
        return float(self.anorm * inorm)
