"""Graph topology, attention parameters and phase-space state containers.

Layout conventions
------------------
Features are stored row-major as an ``(n, d)`` array, node index first.
The stacked phase vectors used by the matrix formulation are ``(x_1, ...,
x_n, m_1, ..., m_n)`` where ``m`` is the momentum of the active chart; see
:meth:`PhaseVector.stacked`.

Two momentum charts are supported:

``canonical-y``
    ``p_i = exp(-t/eps) dx_i/dt`` (the chart the integrators work in)
``rescaled-Y``
    ``P_i = dx_i/dt``
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import numerics as nx
from .errors import (
    AsymmetricIncidence,
    GraphError,
    NonzeroDiagonal,
    ScaleOverflow,
    ShapeMismatch,
)

CANONICAL = "canonical-y"
RESCALED = "rescaled-Y"
Chart = Literal["canonical-y", "rescaled-Y"]

VARIANTS = ("scaled-dot", "cosine-similarity", "exponential-kernel")
ELEMENTWISE_TAGS = ("exp", "sigmoid", "tanh", "softplus", "identity")
SOFTMAX_TAGS = ("frozen-softmax", "softmax")
ACTIVATION_TAGS = ELEMENTWISE_TAGS + SOFTMAX_TAGS


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected self-avoiding graph given by its 0/1 incidence matrix."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(np.ones((n, n)) - np.eye(n))

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        w = np.zeros((n, n))
        for i, j in edges:
            w[i, j] = w[j, i] = 1.0
        return cls(w)

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.w[i])


def validate_graph(g: Graph) -> Graph:
    """Return ``g`` unchanged or raise the first violated invariant."""
    w = g.w
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
        raise GraphError(f"incidence matrix must be square and non-empty, got {w.shape}")
    if not np.all((w == 0) | (w == 1)):
        raise GraphError("incidence entries must be 0 or 1")
    if not np.array_equal(w, w.T):
        i, j = np.argwhere(w != w.T)[0]
        raise AsymmetricIncidence(f"w[{i}][{j}] != w[{j}][{i}]")
    if np.any(np.diag(w) != 0):
        i = int(np.flatnonzero(np.diag(w))[0])
        raise NonzeroDiagonal(f"w[{i}][{i}] = {w[i, i]:g}")
    return g


@dataclass(frozen=True, eq=False)
class ActivationFn:
    """Attention activation ``g`` together with its derivative.

    ``exp``, ``sigmoid``, ``tanh``, ``softplus`` and ``identity`` act entrywise.
    The two softmax flavours are pairwise scaled exponentials
    ``G_ij = exp(C_ij) / norm_ij`` whose normaliser is either the per-row sum
    over neighbours (``normalization="row"``) or the geometric mean of the
    two row sums (``"symmetric"``, keeps ``G`` symmetric):

    ``frozen-softmax``
        row sums fixed once (see :func:`gndiff.attention.freeze_softmax`);
        ``g' = g`` exactly.
    ``softmax``
        row sums recomputed from the current similarities; the derivative is
        the diagonal of the softmax Jacobian, ``G_ij (1 - (s_ij + s_ji)/2)``
        for symmetric normalisation (``G_ij (1 - s_ij)`` for row), with ``s``
        the row-stochastic softmax.

    ``clamp`` caps the exponent of ``exp``/``frozen-softmax`` (value and
    derivative are continued as constants above it).
    """

    tag: str
    log_denominators: np.ndarray | None = None
    normalization: Literal["row", "symmetric"] = "symmetric"
    clamp: float | None = None

    def __post_init__(self):
        if self.tag not in ACTIVATION_TAGS:
            raise ValueError(f"unknown activation {self.tag!r}; expected one of {ACTIVATION_TAGS}")
        if self.normalization not in ("row", "symmetric"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def elementwise(self) -> bool:
        return self.tag in ELEMENTWISE_TAGS

    @property
    def pair_symmetric(self) -> bool:
        """True when g(C_ij) as used for the pair (i, j) equals that for (j, i)."""
        return self.elementwise or self.normalization == "symmetric"

    @property
    def denominators(self) -> np.ndarray | None:
        if self.log_denominators is None:
            return None
        return nx.exp(self.log_denominators)


@dataclass(frozen=True, eq=False)
class AttentionParams:
    """Key/query projections, the similarity variant and the activation.

    ``W_sym`` lets a caller inject the symmetric matrix ``W_K^T W_Q + W_Q^T
    W_K`` directly when the projections themselves are not known.
    """

    W_K: np.ndarray | None = None
    W_Q: np.ndarray | None = None
    variant: str = "scaled-dot"
    activation: ActivationFn = field(default_factory=lambda: ActivationFn("identity"))
    sigma_scale: float = 1.0
    W_sym: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.sigma_scale <= 0:
            raise ValueError("sigma_scale must be positive")
        if self.W_sym is None and (self.W_K is None or self.W_Q is None):
            raise ValueError("need W_K and W_Q, or W_sym")
        if self.W_sym is None:
            object.__setattr__(self, "W_sym", assemble_W(self))
        else:
            W = np.asarray(self.W_sym)
            if W.ndim != 2 or W.shape[0] != W.shape[1]:
                raise ShapeMismatch(f"W must be square, got {W.shape}")
            if nx.maxabs(W - W.T) > 0:
                raise ShapeMismatch("W must be symmetric")

    @property
    def d(self) -> int:
        return np.asarray(self.W_sym).shape[0]

    @property
    def d_prime(self) -> int | None:
        return None if self.W_K is None else np.asarray(self.W_K).shape[0]

    def with_activation(self, activation: ActivationFn) -> "AttentionParams":
        return replace(self, activation=activation)


def assemble_W(p: AttentionParams) -> np.ndarray:
    """Symmetric bilinear form ``W_K^T W_Q + W_Q^T W_K``."""
    if p.W_K is None or p.W_Q is None:
        raise ShapeMismatch("W_K and W_Q are required to assemble W")
    K = np.asarray(p.W_K)
    Q = np.asarray(p.W_Q)
    if K.shape != Q.shape or K.ndim != 2:
        raise ShapeMismatch(f"W_K {K.shape} and W_Q {Q.shape} must have equal 2-d shapes")
    M = K.T @ Q
    return M + M.T


@dataclass(frozen=True, eq=False)
class PhaseVector:
    """Positions and momenta at time ``t`` for regularisation ``epsilon``."""

    x: np.ndarray
    m: np.ndarray
    t: float
    epsilon: float
    chart: Chart = CANONICAL

    def __post_init__(self):
        x, m = np.asarray(self.x), np.asarray(self.m)
        if x.ndim != 2 or x.shape != m.shape:
            raise ShapeMismatch(f"positions {x.shape} and momenta {m.shape} must be equal (n, d)")
        if self.chart not in (CANONICAL, RESCALED):
            raise ValueError(f"unknown chart {self.chart!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not nx.is_mp(x) and not (np.all(np.isfinite(x)) and np.all(np.isfinite(m))):
            raise ValueError("phase vector has non-finite entries")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def p(self) -> np.ndarray:
        if self.chart != CANONICAL:
            raise ValueError("p is the canonical-y momentum; convert the chart first")
        return self.m

    @property
    def P(self) -> np.ndarray:
        if self.chart != RESCALED:
            raise ValueError("P is the rescaled-Y momentum; convert the chart first")
        return self.m

    def stacked(self) -> np.ndarray:
        """``(x_1, ..., x_n, m_1, ..., m_n)`` as a flat 2*n*d vector."""
        return np.concatenate([np.asarray(self.x).reshape(-1), np.asarray(self.m).reshape(-1)])

    @classmethod
    def from_stacked(cls, y, n: int, d: int, t, epsilon, chart: Chart = CANONICAL) -> "PhaseVector":
        y = np.asarray(y)
        nh = n * d
        return cls(y[:nh].reshape(n, d), y[nh:].reshape(n, d), t, epsilon, chart)

    def evolve(self, y, t) -> "PhaseVector":
        return PhaseVector.from_stacked(y, self.n, self.d, t, self.epsilon, self.chart)


def momentum_scale(t, epsilon, sign: int):
    """``exp(sign * t / epsilon)``, refusing float64 overflow."""
    arg = sign * t / epsilon
    if not nx.is_mp(arg) and abs(arg) > nx.EXP_OVERFLOW:
        raise ScaleOverflow(f"|t/eps| = {abs(arg):.6g} exceeds {nx.EXP_OVERFLOW:g}", t=float(t))
    return nx.scalar_exp(arg)


def chart_convert(s: PhaseVector, target: Chart) -> PhaseVector:
    """Switch momentum chart; positions are untouched."""
    if target == s.chart:
        return s
    if target == RESCALED:
        m = s.m * momentum_scale(s.t, s.epsilon, +1)
    elif target == CANONICAL:
        m = s.m * momentum_scale(s.t, s.epsilon, -1)
    else:
        raise ValueError(f"unknown chart {target!r}")
    return replace(s, m=m, chart=target)
