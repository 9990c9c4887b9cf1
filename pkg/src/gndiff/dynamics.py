"""Block dynamics matrices, right-hand sides and Hamiltonian diagnostics.

Sign convention
---------------
With ``U(x) = -1/2 sum_ij G_ij ||x_i - x_j||^2`` the Euler-Lagrange equation
of the damped functional is ``x'' = (x' - C(x) x) / eps`` where
``(C x)_i = dU/dx_i``.  Hence

* canonical chart: ``x' = e^{t/eps} p``, ``p' = -(e^{-t/eps}/eps) C x``
* rescaled chart:  ``x' = P``, ``P' = (P - C x) / eps``
* eps -> 0 limit:  ``x' = C x`` (graph diffusion: ``C`` is a negative
  semi-definite Laplacian-like operator for small ``W``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .attention import pair_activation, similarity
from .errors import ShapeMismatch, UnsupportedVariant
from .graph_model import (
    CANONICAL,
    RESCALED,
    AttentionParams,
    Graph,
    PhaseVector,
    chart_convert,
    momentum_scale,
)


@dataclass(frozen=True)
class Model:
    graph: Graph
    params: AttentionParams

    def __post_init__(self):
        if self.params.variant != "scaled-dot":
            raise UnsupportedVariant(
                f"dynamics are only defined for scaled-dot similarity, not {self.params.variant!r}"
            )

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def d(self) -> int:
        return self.params.d

    def C(self, x) -> "BlockMatrixC":
        return build_C(x, self.graph, self.params)


@dataclass(frozen=True, eq=False)
class BlockMatrixC:
    """``C`` stored as ``alpha (x) I_d + beta (x) W``.

    Off-diagonal blocks are ``alpha_rs I + beta_rs W`` with ``alpha_rs = 2
    G_rs`` and ``beta_rs = -G'_rs ||x_r - x_s||^2``; diagonal blocks are
    ``alpha_rr I`` with ``alpha_rr = -2 sum_{i != r} G_ri``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    W: np.ndarray

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[0]

    def block(self, r: int, s: int) -> np.ndarray:
        eye = nx.eye_like(self.d, self.alpha)
        return self.alpha[r, s] * eye + self.beta[r, s] * self.W

    def dense(self) -> np.ndarray:
        eye = nx.eye_like(self.d, self.alpha)
        return np.kron(self.alpha, eye) + np.kron(self.beta, self.W)

    def matvec(self, x) -> np.ndarray:
        """``C x`` for features ``x`` of shape (n, d).

        Uses ``(alpha x)_r = sum_{s != r} alpha_rs (x_s - x_r)``, equal to the
        block product because the diagonal holds minus the off-diagonal row
        sum, and exactly zero for constant features.
        """
        x = np.asarray(x)
        off = self.alpha.copy()
        np.fill_diagonal(off, nx.like(0.0, self.alpha.flat[0]) if off.size else 0.0)
        diff = x[None, :, :] - x[:, None, :]  # diff[r, s] = x_s - x_r
        return np.sum(off[:, :, None] * diff, axis=1) + self.beta @ x @ self.W

    def symmetry_residual(self) -> float:
        return max(nx.maxabs(self.alpha - self.alpha.T), nx.maxabs(self.beta - self.beta.T))


def build_C(x, g: Graph, p: AttentionParams) -> BlockMatrixC:
    """Assemble the block matrix ``C(x)`` of the second-order system."""
    if p.variant != "scaled-dot":
        raise UnsupportedVariant(
            f"C(Y) is only derived for scaled-dot similarity, not {p.variant!r}"
        )
    x = np.asarray(x)
    if x.shape != (g.n, p.d):
        raise ShapeMismatch(f"features {x.shape} do not match (n, d) = ({g.n}, {p.d})")
    W = nx.asarray_like(p.W_sym, x)
    S = similarity(x, p, g)
    G, Gp = pair_activation(S, g, p.activation)
    diff2 = pairwise_sqdist(x)
    alpha = 2 * G
    beta = -Gp * diff2
    n = g.n
    for r in range(n):
        alpha[r, r] = -2 * sum(G[r, i] for i in range(n) if i != r)
        beta[r, r] = nx.like(0.0, x.flat[0]) if x.size else 0.0
    return BlockMatrixC(alpha, beta, W)


def pairwise_sqdist(x) -> np.ndarray:
    x = np.asarray(x)
    diff = x[:, None, :] - x[None, :, :]
    return np.sum(diff * diff, axis=2)


def dirichlet_sum(x, g: Graph, p: AttentionParams) -> object:
    """``sum_ij G_ij ||x_i - x_j||^2`` over ordered pairs."""
    G, _ = pair_activation(similarity(x, p, g), g, p.activation)
    return np.sum(G * pairwise_sqdist(x))


def potential_U(x, g: Graph, p: AttentionParams):
    return -dirichlet_sum(x, g, p) / 2


def gradient_check_C(x, g: Graph, p: AttentionParams, step: float = 1e-5) -> float:
    """max_i ||(C x)_i - dU/dx_i|| with the gradient by central differences.

    Meaningful for activations whose normalisation does not depend on the
    features (entrywise ones and the frozen softmax).
    """
    x = np.asarray(x, dtype=float)
    Cx = build_C(x, g, p).matvec(x)
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += step
        xm[idx] -= step
        grad[idx] = (potential_U(xp, g, p) - potential_U(xm, g, p)) / (2 * step)
    return float(np.max(np.linalg.norm(Cx - grad, axis=1)))


# --- right-hand sides ------------------------------------------------------------

def rhs_canonical(s: PhaseVector, g: Graph, p: AttentionParams):
    """``(dx/dt, dp/dt) = (e^{t/eps} p, -(e^{-t/eps}/eps) C x)``."""
    if s.chart != CANONICAL:
        raise ValueError("rhs_canonical expects a canonical-y state")
    a = momentum_scale(s.t, s.epsilon, +1)
    c = -momentum_scale(s.t, s.epsilon, -1) / s.epsilon
    Cx = build_C(s.x, g, p).matvec(s.x)
    return a * s.m, c * Cx


def rhs_rescaled(s: PhaseVector, g: Graph, p: AttentionParams):
    """``(dx/dt, dP/dt) = (P, (P - C x) / eps)``."""
    if s.chart != RESCALED:
        raise ValueError("rhs_rescaled expects a rescaled-Y state")
    Cx = build_C(s.x, g, p).matvec(s.x)
    return s.m.copy(), (s.m - Cx) / s.epsilon


def rhs_diffusion(x, g: Graph, p: AttentionParams) -> np.ndarray:
    """Zero-regularisation limit ``dx/dt = C(x) x``."""
    x = np.asarray(x)
    return build_C(x, g, p).matvec(x)


def hamiltonian(s: PhaseVector, g: Graph, p: AttentionParams):
    """Hamiltonian and its explicit time derivative.

    ``H = e^{-t/eps} (|P|^2/2 - S/(2 eps))`` and
    ``dH/dt = e^{-t/eps}/(2 eps) (|P|^2 + S/eps)`` with ``S`` the Dirichlet
    sum; a canonical-y state is converted first.
    """
    if s.chart != RESCALED:
        s = chart_convert(s, RESCALED)
    decay = momentum_scale(s.t, s.epsilon, -1)
    kinetic = np.sum(s.m * s.m)
    S = dirichlet_sum(s.x, g, p)
    eps = s.epsilon
    H = decay * (kinetic / 2 - S / (2 * eps))
    dH = decay / (2 * eps) * (kinetic + S / eps)
    return H, dH


# --- dense system matrices (diagnostics and identity checks) ------------------------

@dataclass(frozen=True, eq=False)
class SystemMatrixE:
    """``E = [[0, a I], [c C, 0]]`` with ``a = e^{t/eps}``, ``c = -e^{-t/eps}/eps``."""

    t: float
    epsilon: float
    C: BlockMatrixC

    @property
    def a(self):
        return momentum_scale(self.t, self.epsilon, +1)

    @property
    def c(self):
        return -momentum_scale(self.t, self.epsilon, -1) / self.epsilon

    def dense(self) -> np.ndarray:
        Cd = self.C.dense()
        nh = Cd.shape[0]
        out = nx.zeros_like(Cd, (2 * nh, 2 * nh))
        out[:nh, nh:] = self.a * nx.eye_like(nh, Cd)
        out[nh:, :nh] = self.c * Cd
        return out

    def matvec(self, y) -> np.ndarray:
        y = np.asarray(y)
        n, d = self.C.n, self.C.d
        nh = n * d
        x = y[:nh].reshape(n, d)
        return np.concatenate([self.a * y[nh:], (self.c * self.C.matvec(x)).reshape(-1)])


@dataclass(frozen=True, eq=False)
class SystemMatrixB:
    """``B = (1/eps) [[0, eps I], [-C, I]]`` (rescaled chart)."""

    epsilon: float
    C: BlockMatrixC

    def dense(self) -> np.ndarray:
        Cd = self.C.dense()
        nh = Cd.shape[0]
        eps = self.epsilon
        out = nx.zeros_like(Cd, (2 * nh, 2 * nh))
        out[:nh, nh:] = nx.eye_like(nh, Cd)
        out[nh:, :nh] = -Cd / eps
        out[nh:, nh:] = nx.eye_like(nh, Cd) / eps
        return out


def system_matrix_E(x, t, epsilon, model: Model) -> SystemMatrixE:
    return SystemMatrixE(t, epsilon, model.C(x))


def system_matrix_B(x, epsilon, model: Model) -> SystemMatrixB:
    return SystemMatrixB(epsilon, model.C(x))


def J_kron_R(n: int, R) -> np.ndarray:
    """``J (x) R`` with ``J = [[0, I_n], [-I_n, 0]]``."""
    R = np.asarray(R)
    J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    return np.kron(J, R)


def identity_residuals(E: SystemMatrixE, B: SystemMatrixB, R) -> dict:
    """Max-norm residuals of the structural identities behind charge conservation.

    ``eqprinc``     E^T JR + JR E = 0
    ``relmain``     B^T JR + JR B = JR / eps
    ``matimport``   E^T JR E = (1/eps) [[0, C], [C, 0]] JR   (as printed)
    ``matimport_blockdiag``  E^T JR E = (1/eps) (I_2 (x) C) JR
    """
    n = E.C.n
    Ed = np.asarray(nx.to_float(E.dense()))
    Bd = np.asarray(nx.to_float(B.dense()))
    Cd = np.asarray(nx.to_float(E.C.dense()))
    JR = J_kron_R(n, nx.to_float(R))
    eps = float(E.epsilon)
    nh = Cd.shape[0]
    Z = np.zeros((nh, nh))
    offdiag = np.block([[Z, Cd], [Cd, Z]])
    blockdiag = np.block([[Cd, Z], [Z, Cd]])
    ETJE = Ed.T @ JR @ Ed
    return {
        "eqprinc": float(np.max(np.abs(Ed.T @ JR + JR @ Ed))),
        "relmain": float(np.max(np.abs(Bd.T @ JR + JR @ Bd - JR / eps))),
        "matimport": float(np.max(np.abs(ETJE - offdiag @ JR / eps))),
        "matimport_blockdiag": float(np.max(np.abs(ETJE - blockdiag @ JR / eps))),
    }
