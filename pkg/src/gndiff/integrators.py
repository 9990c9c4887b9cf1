"""Time stepping on the canonical system ``y' = E(t, y) y``.

All schemes work on ``(x, p)`` pairs of shape (n, d).  Writing ``E`` at a
frozen argument as ``[[0, a I], [c C, 0]]`` with ``a c = -1/eps``, the
linear systems ``(I - s E) y = r`` of the implicit schemes reduce to one
n*d x n*d factorisation::

    (I - s E)^{-1} = (I_2 (x) M^{-1}) (I + s E),   M = I + (s^2/eps) C

(``s = h`` for backward Euler, ``s = h/2`` for the midpoint family).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

import mpmath
import numpy as np

from . import numerics as nx
from .dynamics import BlockMatrixC, Model
from .errors import GndiffError, NoConvergence, NonFiniteState, ShapeMismatch, SingularLinearSystem
from .graph_model import CANONICAL, PhaseVector, momentum_scale

METHODS = ("forward-euler", "backward-euler", "implicit-midpoint", "modified-midpoint")
METHOD_ALIASES = {
    "fe": ("forward-euler", "left"),
    "be": ("backward-euler", "left"),
    "im": ("implicit-midpoint", "midpoint"),
    "im-left": ("modified-midpoint", "left"),
}
ABS_FLOOR = 1e-14


@dataclass(frozen=True)
class GridSpec:
    t0: float
    t1: float
    N: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("grid needs t1 > t0")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError("N must be a non-negative integer")

    @property
    def h(self) -> float:
        return (self.t1 - self.t0) / self.N

    def time(self, k: int, mp: bool = False):
        """``t_k = t0 + k h``; exact rational arithmetic first, so ``t_N == t1``."""
        if k == self.N:
            t = Fraction(self.t1)
        else:
            t0, t1 = Fraction(self.t0), Fraction(self.t1)
            t = t0 + (t1 - t0) * k / self.N
        return mpmath.mpf(t.numerator) / t.denominator if mp else float(t)

    def step(self, mp: bool = False):
        h = (Fraction(self.t1) - Fraction(self.t0)) / self.N
        return mpmath.mpf(h.numerator) / h.denominator if mp else float(h)


@dataclass(frozen=True)
class SolverConfig:
    """Method choice and fixed-point controls.

    ``dps`` switches the whole integration to mpmath arithmetic with that
    many decimal digits.  ``max_condition`` caps the 1-norm condition number
    of ``I + (s^2/eps) C``; the default is 1e12 in double precision and
    ``10^(dps - 4)`` otherwise.
    """

    method: str = "implicit-midpoint"
    fp_tol: float = 1e-12
    fp_max_iters: int = 50
    xi_choice: str = "midpoint"
    dps: int | None = None
    max_condition: float | None = None

    def __post_init__(self):
        if self.method in METHOD_ALIASES:
            m, xi = METHOD_ALIASES[self.method]
            object.__setattr__(self, "method", m)
            if m != "implicit-midpoint":
                object.__setattr__(self, "xi_choice", xi)
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method == "modified-midpoint":
            object.__setattr__(self, "xi_choice", "left")
        if self.xi_choice not in ("left", "midpoint"):
            raise ValueError(f"xi_choice must be 'left' or 'midpoint', got {self.xi_choice!r}")
        if not self.fp_tol > 0:
            raise ValueError("fp_tol must be positive")
        if self.fp_max_iters < 1:
            raise ValueError("fp_max_iters must be at least 1")

    @property
    def condition_limit(self) -> float:
        if self.max_condition is not None:
            return self.max_condition
        return 1e12 if self.dps is None else 10.0 ** (self.dps - 4)


@dataclass(frozen=True)
class StepDiagnostics:
    iterations: int
    solve_residual: float
    condition: float


@dataclass
class Trajectory:
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    dps: int | None = None

    @property
    def times(self) -> list:
        return [s.t for s in self.states]

    def __len__(self):
        return len(self.states)


# --- frozen linear pieces -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FrozenE:
    """``E`` with its argument and time frozen: ``E y = (a p, c C x)``."""

    a: object
    c: object
    C: BlockMatrixC

    @classmethod
    def at(cls, model: Model, x, tau, epsilon) -> "FrozenE":
        a = momentum_scale(tau, epsilon, +1)
        c = -momentum_scale(tau, epsilon, -1) / epsilon
        return cls(a, c, model.C(x))

    def apply(self, x, p):
        return self.a * p, self.c * self.C.matvec(x)


def _inf(*arrays) -> float:
    return max(nx.maxabs(a) for a in arrays)


def solve_blockwise(E: FrozenE, s, rx, rp, epsilon, limit: float = 1e12):
    """Apply ``(I - s E)^{-1}`` to ``(rx, rp)`` through ``M = I + (s^2/eps) C``.

    Returns ``(x, p, StepDiagnostics)``; raises SingularLinearSystem when the
    condition number of ``M`` exceeds ``limit``.
    """
    rx, rp = np.asarray(rx), np.asarray(rp)
    n, d = rx.shape
    if s == 0:
        return rx.copy(), rp.copy(), StepDiagnostics(0, 0.0, 1.0)
    ux, up = E.apply(rx, rp)
    bx, bp = rx + s * ux, rp + s * up  # (I + s E) r
    Cd = E.C.dense()
    M = nx.eye_like(n * d, Cd) + (s * s / epsilon) * Cd
    lu = nx.LU(M)
    cond = lu.condition()
    if not cond <= limit:
        raise SingularLinearSystem(
            f"I + (s^2/eps) C has condition number {cond:.3g} > {limit:.3g}", condition=cond
        )
    x = lu.solve(bx.reshape(-1)).reshape(n, d)
    p = lu.solve(bp.reshape(-1)).reshape(n, d)
    # residual of the original 2n^ x 2n^ system
    ex, ep = E.apply(x, p)
    res = _inf(x - s * ex - rx, p - s * ep - rp)
    return x, p, StepDiagnostics(0, float(res), float(cond))


def solve_dense(E: FrozenE, s, rx, rp):
    """Oracle: the same solve with the full 2n^ x 2n^ matrix ``I - s E``."""
    rx, rp = np.asarray(rx), np.asarray(rp)
    n, d = rx.shape
    nh = n * d
    Cd = E.C.dense()
    A = nx.zeros_like(Cd, (2 * nh, 2 * nh))
    A[:nh, nh:] = E.a * nx.eye_like(nh, Cd)
    A[nh:, :nh] = E.c * Cd
    A = nx.eye_like(2 * nh, Cd) - s * A
    y = nx.LU(A).solve(np.concatenate([rx.reshape(-1), rp.reshape(-1)]))
    return y[:nh].reshape(n, d), y[nh:].reshape(n, d)


def flop_counts(nh: int) -> dict:
    """Leading-order flop counts of one ``(I - sE)^{-1} r`` application.

    ``blockwise``: LU of M (2/3 nh^3), two triangular solve pairs (4 nh^2)
    and the products with ``C`` and ``E`` (4 nh^2).
    ``dense``: LU of the 2nh system (2/3 (2nh)^3) and one solve pair (2 (2nh)^2).
    """
    blockwise = 2 * nh**3 / 3 + 4 * nh**2 + 4 * nh**2
    dense = 2 * (2 * nh) ** 3 / 3 + 2 * (2 * nh) ** 2
    return {"blockwise": blockwise, "dense": dense}


# --- steps ----------------------------------------------------------------------------

def _check(s: PhaseVector):
    if s.chart != CANONICAL:
        raise ValueError("integrators work in the canonical-y chart")


def _next(s: PhaseVector, x, p, h) -> PhaseVector:
    if not nx.is_mp(x) and not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
        raise NonFiniteState("state left the float64 range")
    return replace(s, x=x, m=p, t=s.t + h)


def step_forward_euler(s: PhaseVector, h, model: Model) -> PhaseVector:
    """``y_{k+1} = y_k + h E(t_k, y_k) y_k``."""
    _check(s)
    E = FrozenE.at(model, s.x, s.t, s.epsilon)
    ux, up = E.apply(s.x, s.p)
    return _next(s, s.x + h * ux, s.p + h * up, h)


def _converged(new, old, tol) -> bool:
    return _inf(*(a - b for a, b in zip(new, old))) <= max(tol * _inf(*new), ABS_FLOOR)


def step_backward_euler(s: PhaseVector, h, model: Model, cfg: SolverConfig = SolverConfig()):
    """Fixed-point iteration on ``(I - h E(t_{k+1}, y_m)) y_{m+1} = y_k``.

    Returns ``(state, StepDiagnostics)``.
    """
    _check(s)
    tau = s.t + h
    cur = (s.x, s.p)
    diag = StepDiagnostics(0, 0.0, 1.0)
    for it in range(1, cfg.fp_max_iters + 1):
        E = FrozenE.at(model, cur[0], tau, s.epsilon)
        x, p, diag = solve_blockwise(E, h, s.x, s.p, s.epsilon, cfg.condition_limit)
        done = _converged((x, p), cur, cfg.fp_tol)
        cur = (x, p)
        if done:
            return _next(s, x, p, h), replace(diag, iterations=it)
    raise NoConvergence(f"backward Euler did not converge in {cfg.fp_max_iters} iterations")


def step_midpoint(s: PhaseVector, h, model: Model, cfg: SolverConfig = SolverConfig(), return_z: bool = False):
    """Implicit midpoint step ``y_{k+1} = y_k + h E(z) (y_k + y_{k+1})/2``.

    ``xi_choice="midpoint"`` iterates ``z`` to the midpoint of the step with
    ``E``'s exponential factors at ``t_k + h/2``.  ``xi_choice="left"`` makes a
    single pass with ``z = y_k`` and factors at ``t_k``.

    Returns ``(state, StepDiagnostics)`` or, with ``return_z``,
    ``(state, StepDiagnostics, (z_x, z_p))`` where ``z`` is the argument at
    which ``E`` was frozen for the accepted update.
    """
    _check(s)
    half = h / 2
    if cfg.xi_choice == "left":
        E = FrozenE.at(model, s.x, s.t, s.epsilon)
        x, p, diag = _cayley(E, half, s, cfg)
        out = (_next(s, x, p, h), replace(diag, iterations=1))
        return out + ((s.x, s.p),) if return_z else out

    tau = s.t + half
    z = (s.x, s.p)
    for it in range(1, cfg.fp_max_iters + 1):
        E = FrozenE.at(model, z[0], tau, s.epsilon)
        x, p, diag = _cayley(E, half, s, cfg)
        z_new = ((x + s.x) / 2, (p + s.p) / 2)
        if _converged(z_new, z, cfg.fp_tol):
            # the accepted update used E(z); z_new agrees with z to fp_tol
            out = (_next(s, x, p, h), replace(diag, iterations=it))
            return out + (z,) if return_z else out
        z = z_new
    raise NoConvergence(f"implicit midpoint did not converge in {cfg.fp_max_iters} iterations")


def _cayley(E: FrozenE, half, s: PhaseVector, cfg: SolverConfig):
    """``(I - (h/2)E)^{-1} (I + (h/2)E) y_k``."""
    ux, up = E.apply(s.x, s.p)
    return solve_blockwise(E, half, s.x + half * ux, s.p + half * up, s.epsilon, cfg.condition_limit)


def step(s: PhaseVector, h, model: Model, cfg: SolverConfig):
    """Dispatch one step; returns ``(state, StepDiagnostics)``."""
    if cfg.method == "forward-euler":
        return step_forward_euler(s, h, model), StepDiagnostics(0, 0.0, 1.0)
    if cfg.method == "backward-euler":
        return step_backward_euler(s, h, model, cfg)
    return step_midpoint(s, h, model, cfg)


def prepare_state(s0: PhaseVector, grid: GridSpec, cfg: SolverConfig) -> PhaseVector:
    """Cast ``s0`` to the working number type and pin its time to ``grid.t0``."""
    mp = cfg.dps is not None
    with nx.precision(cfg.dps):
        if mp:
            x, m = nx.to_mp(s0.x), nx.to_mp(s0.m)
            eps = mpmath.mpf(s0.epsilon)
        else:
            x, m = nx.to_float(s0.x).copy(), nx.to_float(s0.m).copy()
            eps = float(s0.epsilon)
        return PhaseVector(x, m, grid.time(0, mp), eps, s0.chart)


def integrate(s0: PhaseVector, grid: GridSpec, cfg: SolverConfig, model: Model) -> Trajectory:
    """``N`` steps of the configured method on a uniform grid."""
    _check(s0)
    if s0.x.shape != (model.n, model.d):
        raise ShapeMismatch(f"state {s0.x.shape} does not match model ({model.n}, {model.d})")
    mp = cfg.dps is not None
    with nx.precision(cfg.dps):
        s = prepare_state(s0, grid, cfg)
        traj = Trajectory([s], [], cfg.dps)
        for k in range(grid.N):
            h = grid.step(mp)
            try:
                s, diag = step(s, h, model, cfg)
            except GndiffError as err:
                err.context.setdefault("step", k)
                err.context.setdefault("t", float(s.t))
                raise
            # pin the time stamp to the exact grid value
            s = replace(s, t=grid.time(k + 1, mp))
            traj.states.append(s)
            traj.diagnostics.append(diag)
    return traj


def composition_residual(s: PhaseVector, h, model: Model, cfg: SolverConfig) -> float:
    """Converged midpoint step versus BE(h/2) then FE(h/2) with ``E`` frozen at ``z``.

    Both substeps use the same frozen ``E(z)`` (including its time factors),
    so the composition is ``(I + h/2 E)(I - h/2 E)^{-1} y_k``.
    """
    cfg = replace(cfg, xi_choice="midpoint", method="implicit-midpoint")
    out, _, z = step_midpoint(s, h, model, cfg, return_z=True)
    E = FrozenE.at(model, z[0], s.t + h / 2, s.epsilon)
    bx, bp, _ = solve_blockwise(E, h / 2, s.x, s.p, s.epsilon, cfg.condition_limit)
    ux, up = E.apply(bx, bp)
    fx, fp = bx + h / 2 * ux, bp + h / 2 * up
    return _inf(fx - out.x, fp - out.p)
