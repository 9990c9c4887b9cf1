"""Rotation generators, the commutator criterion and charge evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .graph_model import CANONICAL, RESCALED, PhaseVector, momentum_scale


@dataclass(frozen=True, eq=False)
class SkewGenerator:
    """``R_{a,b}``: +1 at (row a, col b), -1 at (b, a), 1-based with b < a."""

    a: int
    b: int
    d: int

    def __post_init__(self):
        if not 1 <= self.b < self.a <= self.d:
            raise ValueError(f"need 1 <= b < a <= d, got a={self.a}, b={self.b}, d={self.d}")

    @property
    def matrix(self) -> np.ndarray:
        R = np.zeros((self.d, self.d))
        R[self.a - 1, self.b - 1] = 1.0
        R[self.b - 1, self.a - 1] = -1.0
        return R

    @property
    def label(self) -> str:
        return f"R_{self.a},{self.b}"


def skew_basis(d: int) -> list[SkewGenerator]:
    """The d(d-1)/2 generators ordered by ``b`` then ``a``.

    For d = 4: R_{2,1}, R_{3,1}, R_{4,1}, R_{3,2}, R_{4,2}, R_{4,3}.
    """
    if d < 2:
        raise ValueError(f"rotation generators need d >= 2, got {d}")
    return [SkewGenerator(a, b, d) for b in range(1, d) for a in range(b + 1, d + 1)]


def _matrix(R) -> np.ndarray:
    return R.matrix if isinstance(R, SkewGenerator) else np.asarray(R, dtype=float)


def commutes(W, R, tol: float = 1e-12) -> tuple[bool, float]:
    """``(||W R - R W||_max <= tol, residual)``."""
    W = np.asarray(nx.to_float(W))
    Rm = _matrix(R)
    if W.shape != Rm.shape:
        raise ValueError(f"W {W.shape} and R {Rm.shape} differ in shape")
    res = float(np.max(np.abs(W @ Rm - Rm @ W)))
    return res <= tol, res


def _pairing(m, R, x):
    """sum_i m_i^T R x_i."""
    Rm = nx.asarray_like(_matrix(R), x)
    return np.sum(m * (x @ Rm.T))


def charge_quadratic_form(y, R, n: int):
    """``-1/2 y^T (J (x) R) y`` for a stacked canonical vector."""
    y = np.asarray(y)
    d = _matrix(R).shape[0]
    nh = n * d
    x = y[:nh].reshape(n, d)
    p = y[nh:].reshape(n, d)
    Rm = nx.asarray_like(_matrix(R), y)
    # J (x) R = [[0, K], [-K, 0]] with K = I_n (x) R
    return -(np.sum(x * (p @ Rm.T)) - np.sum(p * (x @ Rm.T))) / 2


def charge_y(s: PhaseVector, R, check: bool = False):
    """``Q = sum_i p_i^T R x_i`` in the canonical chart.

    With ``check`` the quadratic form ``-1/2 y^T (J (x) R) y`` is evaluated
    as well and must agree to 1e-12 (relative to the size of the terms).
    """
    if s.chart != CANONICAL:
        raise ValueError("charge_y expects a canonical-y state")
    Q = _pairing(s.m, R, s.x)
    if check:
        Qf = charge_quadratic_form(s.stacked(), R, s.n)
        scale = 1.0 + float(nx.maxabs(s.x)) * float(nx.maxabs(s.m)) * s.n * s.d
        if abs(float(Q - Qf)) > 1e-12 * scale:
            raise AssertionError(f"charge pairing {Q} and quadratic form {Qf} disagree")
    return Q


def charge_Y(s: PhaseVector, R):
    """``Q = e^{-t/eps} sum_i P_i^T R x_i`` in the rescaled chart."""
    if s.chart != RESCALED:
        raise ValueError("charge_Y expects a rescaled-Y state")
    return momentum_scale(s.t, s.epsilon, -1) * _pairing(s.m, R, s.x)


@dataclass(frozen=True)
class ChargeReport:
    generator: SkewGenerator
    values: tuple  # ((t_k, Q_k), ...)
    drift: float


def charge_trace(states, R: SkewGenerator) -> ChargeReport:
    """Charge at every state of a trajectory and its maximal deviation from the start.

    A :class:`~gndiff.integrators.Trajectory` integrated in extended
    precision is evaluated at that precision.
    """
    dps = getattr(states, "dps", None)
    states = list(getattr(states, "states", states))
    if not states:
        raise ValueError("empty trajectory")
    vals = []
    with nx.precision(dps):
        for s in states:
            q = charge_y(s, R) if s.chart == CANONICAL else charge_Y(s, R)
            vals.append((s.t, q))
        q0 = vals[0][1]
        drift = max(abs(float(q - q0)) for _, q in vals)
    return ChargeReport(R, tuple(vals), drift)
