"""Similarity matrices, activations and the masked attention matrix."""
from __future__ import annotations

import mpmath
import numpy as np
from scipy.special import expit

from . import numerics as nx
from .errors import MissingFrozenDenominators, ShapeMismatch, ZeroNormFeature
from .graph_model import ActivationFn, AttentionParams, Graph


def _check_shapes(x, p: AttentionParams, g: Graph):
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != g.n or x.shape[1] != p.d:
        raise ShapeMismatch(f"features {x.shape} do not match n={g.n}, d={p.d}")
    return x


def similarity(x, p: AttentionParams, g: Graph) -> np.ndarray:
    """Pre-activation similarity ``C`` (n x n) for the configured variant.

    scaled-dot gives ``x_i^T W x_j`` on every pair.  The cosine and
    exponential-kernel variants need the key/query projections and are only
    evaluated on graph edges (zero elsewhere).
    """
    x = _check_shapes(x, p, g)
    W = np.asarray(p.W_sym)
    if p.variant == "scaled-dot":
        return x @ W @ x.T

    if p.W_K is None or p.W_Q is None:
        raise ShapeMismatch(f"variant {p.variant!r} needs explicit W_K and W_Q")
    K = x @ nx.asarray_like(p.W_K, x).T          # row i: W_K x_i
    Q = x @ nx.asarray_like(p.W_Q, x).T
    M = K @ Q.T                                   # M_ij = (W_K x_i)^T (W_Q x_j)
    k2 = np.sum(K * K, axis=1)
    q2 = np.sum(Q * Q, axis=1)
    out = nx.zeros_like(M)
    rows, cols = np.nonzero(g.w)
    if p.variant == "cosine-similarity":
        for i, j in zip(rows, cols):
            if k2[i] == 0 or q2[j] == 0:
                raise ZeroNormFeature(f"zero key/query norm on edge ({i}, {j})")
            out[i, j] = M[i, j] / (_sqrt(k2[i]) * _sqrt(q2[j]))
    else:
        s2 = nx.like(p.sigma_scale, x) ** 2
        for i, j in zip(rows, cols):
            out[i, j] = nx.scalar_exp(-(k2[i] + q2[j] - M[i, j] - M[j, i]) / s2)
    return out


def _sqrt(v):
    return mpmath.sqrt(v) if nx.is_mp(v) else float(np.sqrt(v))


# --- activations ------------------------------------------------------------------

def _elementwise(tag: str, z, clamp):
    """Value and derivative of an entrywise activation on an array ``z``."""
    z = np.asarray(z)
    if tag == "identity":
        return z.copy(), nx.asarray_like(np.ones(z.shape), z)
    if tag == "exp":
        zc = z if clamp is None else np.minimum(z, nx.like(clamp, z.flat[0] if z.size else 0.0))
        v = nx.exp(zc)
        return v, v.copy()
    if tag == "sigmoid":
        v = 1 / (1 + nx.exp(-z)) if nx.is_mp(z) else expit(z)
        return v, v * (1 - v)
    if tag == "tanh":
        v = nx.tanh(z)
        return v, 1 - v * v
    if tag == "softplus":
        if nx.is_mp(z):
            v = nx.log1p(nx.exp(z))
            s = 1 / (1 + nx.exp(-z))
        else:
            v = np.logaddexp(0.0, z)
            s = expit(z)
        return v, s
    raise ValueError(f"{tag!r} is not an entrywise activation")


def activation_eval(f: ActivationFn, z, i: int | None = None, j: int | None = None):
    """``(g(z), g'(z))`` for a scalar ``z``.

    The frozen softmax needs the row ``i`` (and the column ``j`` under
    symmetric normalisation) to pick its normaliser.
    """
    if f.elementwise:
        v, dv = _elementwise(f.tag, np.array([z], dtype=object if nx.is_mp(z) else float), f.clamp)
        return v[0], dv[0]
    if f.tag == "frozen-softmax":
        if f.log_denominators is None:
            raise MissingFrozenDenominators("frozen-softmax has not been initialised")
        if i is None or (f.normalization == "symmetric" and j is None):
            raise ValueError("frozen-softmax needs the node indices of the pair")
        L = f.log_denominators
        norm = L[i] if f.normalization == "row" else (L[i] + L[j]) / 2
        zc = z if f.clamp is None else min(z, f.clamp)
        v = nx.scalar_exp(zc - norm)
        return v, v
    raise ValueError("the live softmax couples a whole row; use pair_activation")


def _masked_apply(C, w, fn):
    """Evaluate ``fn(values, rows, cols)`` on edge entries, zero elsewhere."""
    rows, cols = np.nonzero(w)
    G = nx.zeros_like(C)
    Gp = nx.zeros_like(C)
    if rows.size:
        v, dv = fn(C[rows, cols], rows, cols)
        G[rows, cols] = v
        Gp[rows, cols] = dv
    return G, Gp


def row_logsumexp(C, w) -> np.ndarray:
    """``log sum_{j: w_ij = 1} exp(C_ij)`` per row; 0 for isolated nodes."""
    C = np.asarray(C)
    n = C.shape[0]
    out = nx.zeros_like(C, (n,))
    for i in range(n):
        nb = np.flatnonzero(w[i])
        if nb.size == 0:
            continue
        vals = C[i, nb]
        if nx.is_mp(C):
            m = max(vals)
            out[i] = m + mpmath.log(sum(mpmath.exp(v - m) for v in vals))
        else:
            m = np.max(vals)
            out[i] = m + np.log(np.sum(np.exp(vals - m)))
    return out


def pair_activation(C, g: Graph, f: ActivationFn):
    """Masked attention ``G`` and the matching derivative matrix ``G'``.

    ``G_ij = w_ij g(C_ij)`` and ``G'_ij = w_ij g'(C_ij)``, where for the
    softmax flavours ``g`` also depends on the pair through its normaliser.
    """
    C = np.asarray(C)
    w = g.w
    if C.shape != w.shape:
        raise ShapeMismatch(f"similarity {C.shape} does not match graph {w.shape}")

    if f.elementwise:
        return _masked_apply(C, w, lambda z, r, c: _elementwise(f.tag, z, f.clamp))

    if f.tag == "frozen-softmax":
        if f.log_denominators is None:
            raise MissingFrozenDenominators("frozen-softmax has not been initialised")
        L = nx.asarray_like(f.log_denominators, C) if nx.is_mp(C) else np.asarray(f.log_denominators, float)

        def frozen(z, r, c):
            if f.clamp is not None:
                z = np.minimum(z, nx.like(f.clamp, z[0]))
            norm = L[r] if f.normalization == "row" else (L[r] + L[c]) / 2
            v = nx.exp(z - norm)
            return v, v.copy()

        return _masked_apply(C, w, frozen)

    # live softmax
    L = row_logsumexp(C, w)

    def live(z, r, c):
        s_rc = nx.exp(z - L[r])
        if f.normalization == "row":
            return s_rc, s_rc * (1 - s_rc)
        s_cr = nx.exp(z - L[c])
        v = nx.exp(z - (L[r] + L[c]) / 2)
        return v, v * (1 - (s_rc + s_cr) / 2)

    return _masked_apply(C, w, live)


def attention_matrix(C, g: Graph, f: ActivationFn) -> np.ndarray:
    """``G_ij = w_ij g(C_ij)``."""
    return pair_activation(C, g, f)[0]


def freeze_softmax(C, g: Graph, normalization: str = "symmetric", clamp: float | None = None) -> ActivationFn:
    """Softmax with neighbour-sum normalisers fixed from the similarities ``C``."""
    L = row_logsumexp(C, g.w)
    L = np.array(L, dtype=object) if nx.is_mp(L) else np.asarray(L, float)
    L.setflags(write=False)
    return ActivationFn("frozen-softmax", log_denominators=L, normalization=normalization, clamp=clamp)
