"""Randomised instances and the structural-identity suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import ortho_group

from .dynamics import Model, SystemMatrixB, SystemMatrixE, build_C, identity_residuals
from .graph_model import ELEMENTWISE_TAGS, ActivationFn, AttentionParams, Graph

IDENTITIES = ("eqprinc", "relmain", "matimport", "matimport_blockdiag")


@dataclass(frozen=True, eq=False)
class Instance:
    model: Model
    x: np.ndarray
    R: np.ndarray
    t: float
    epsilon: float


def random_graph(n: int, rng: np.random.Generator) -> Graph:
    upper = np.triu(rng.random((n, n)) < 0.7, 1).astype(float)
    return Graph(upper + upper.T)


def commuting_pair(d: int, rng: np.random.Generator, scale: float = 0.5):
    """Random symmetric ``W`` and skew ``R`` with ``[W, R] = 0``.

    Both are diagonal in the same rotated frame: ``R`` rotates 2-planes and
    ``W`` has one eigenvalue per plane (plus one for an odd leftover axis).
    """
    U = ortho_group.rvs(d, random_state=rng) if d > 1 else np.ones((1, 1))
    lam = np.empty(d)
    S = np.zeros((d, d))
    for k in range(d // 2):
        lam[2 * k: 2 * k + 2] = rng.uniform(-scale, scale)
        th = rng.uniform(0.5, 2.0)
        S[2 * k + 1, 2 * k], S[2 * k, 2 * k + 1] = th, -th
    if d % 2:
        lam[-1] = rng.uniform(-scale, scale)
    W = U @ np.diag(lam) @ U.T
    R = U @ S @ U.T
    return (W + W.T) / 2, (R - R.T) / 2


def random_instance(rng: np.random.Generator, n_max: int = 5, d_max: int = 6, tags=ELEMENTWISE_TAGS) -> Instance:
    n = int(rng.integers(2, n_max + 1))
    d = int(rng.integers(2, d_max + 1))
    W, R = commuting_pair(d, rng)
    tag = str(rng.choice(list(tags)))
    params = AttentionParams(W_sym=W, activation=ActivationFn(tag))
    x = rng.standard_normal((n, d))
    return Instance(Model(random_graph(n, rng), params), x, R, float(rng.uniform(0, 1)), float(rng.uniform(0.1, 1.0)))


def identity_suite(trials: int, seed: int = 0) -> dict:
    """Max residual of each identity over ``trials`` random instances."""
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(IDENTITIES, 0.0)
    csym = 0.0
    for _ in range(trials):
        inst = random_instance(rng)
        C = build_C(inst.x, inst.model.graph, inst.model.params)
        csym = max(csym, C.symmetry_residual())
        res = identity_residuals(SystemMatrixE(inst.t, inst.epsilon, C), SystemMatrixB(inst.epsilon, C), inst.R)
        for k in IDENTITIES:
            worst[k] = max(worst[k], res[k])
    worst["C_symmetry"] = csym
    return worst
