import mpmath
import numpy as np
import pytest

from conftest import W1, X0, frozen_model, softmax_model
from gndiff import numerics as nx
from gndiff.charges import charge_trace, skew_basis
from gndiff.checks import random_instance
from gndiff.dynamics import Model
from gndiff.errors import NoConvergence, ScaleOverflow, SingularLinearSystem
from gndiff.graph_model import ActivationFn, AttentionParams, Graph, PhaseVector
from gndiff.integrators import (
    FrozenE,
    GridSpec,
    SolverConfig,
    composition_residual,
    flop_counts,
    integrate,
    solve_blockwise,
    solve_dense,
    step_backward_euler,
    step_forward_euler,
    step_midpoint,
)


def _random_state(rng, inst, t=0.0):
    return PhaseVector(inst.x, rng.standard_normal(inst.x.shape), t, inst.epsilon)


def test_grid():
    g = GridSpec(0.0, 1.0, 50)
    assert g.h == 0.02
    assert g.time(50) == 1.0
    assert float(g.time(50, mp=True)) == 1.0
    assert g.time(25) == 0.5
    with pytest.raises(ValueError):
        GridSpec(1.0, 1.0, 3)


def test_config_aliases_and_validation():
    assert SolverConfig("im-left").method == "modified-midpoint"
    assert SolverConfig("im-left").xi_choice == "left"
    assert SolverConfig("im").xi_choice == "midpoint"
    assert SolverConfig("fe").method == "forward-euler"
    with pytest.raises(ValueError):
        SolverConfig("rk4")
    with pytest.raises(ValueError):
        SolverConfig(fp_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(fp_max_iters=0)


def test_zero_step_is_identity():
    m = softmax_model(W1)
    rng = np.random.default_rng(0)
    s = PhaseVector(X0, rng.standard_normal((3, 4)), 0.0, 0.1)
    out = step_forward_euler(s, 0.0, m)
    np.testing.assert_array_equal(out.x, s.x)
    np.testing.assert_array_equal(out.p, s.p)
    for xi in ("left", "midpoint"):
        out, _ = step_midpoint(s, 0.0, m, SolverConfig(xi_choice=xi))
        np.testing.assert_array_equal(out.x, s.x)
        np.testing.assert_array_equal(out.p, s.p)


def test_fixed_point_unchanged():
    m = softmax_model(W1)
    s = PhaseVector(np.ones((3, 4)), np.zeros((3, 4)), 0.0, 0.1)
    out = step_forward_euler(s, 0.02, m)
    np.testing.assert_array_equal(out.x, s.x)
    np.testing.assert_array_equal(out.p, s.p)
    # the implicit steps go through an LU of I + k C; M 1 = 1 holds to rounding
    out, diag = step_backward_euler(s, 0.02, m)
    np.testing.assert_allclose(out.x, s.x, rtol=0, atol=1e-15)
    np.testing.assert_allclose(out.p, 0.0, atol=1e-15)
    assert diag.iterations == 1
    out, _ = step_midpoint(s, 0.02, m, SolverConfig())
    np.testing.assert_allclose(out.x, s.x, rtol=0, atol=1e-15)


def test_backward_euler_linear_case_matches_direct_solve():
    # W = 0 makes G constant and the g' term vanish: E does not depend on y
    m = Model(Graph.complete(3), AttentionParams(W_sym=np.zeros((2, 2)), activation=ActivationFn("sigmoid")))
    rng = np.random.default_rng(1)
    s = PhaseVector(rng.standard_normal((3, 2)), rng.standard_normal((3, 2)), 0.1, 0.5)
    h = 0.05
    out, diag = step_backward_euler(s, h, m)
    # the first iterate is already the solution; the second one only confirms it
    assert diag.iterations <= 2
    E = FrozenE.at(m, s.x, s.t + h, s.epsilon)
    x, p = solve_dense(E, h, s.x, s.p)
    np.testing.assert_allclose(out.x, x, atol=1e-14)
    np.testing.assert_allclose(out.p, p, atol=1e-14)


def test_blockwise_empty_graph_is_I_plus_sE():
    m = Model(Graph(np.zeros((3, 3))), AttentionParams(W_sym=np.eye(2), activation=ActivationFn("exp")))
    rng = np.random.default_rng(2)
    rx, rp = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    E = FrozenE.at(m, rx, 0.3, 0.2)
    x, p, _ = solve_blockwise(E, 0.1, rx, rp, 0.2)
    np.testing.assert_array_equal(x, rx + 0.1 * (E.a * rp))
    np.testing.assert_array_equal(p, rp)


def test_blockwise_zero_step():
    inst = random_instance(np.random.default_rng(3))
    E = FrozenE.at(inst.model, inst.x, 0.0, 1.0)
    x, p, _ = solve_blockwise(E, 0.0, inst.x, -inst.x, 1.0)
    np.testing.assert_array_equal(x, inst.x)


def test_blockwise_small_random_matches_dense():
    rng = np.random.default_rng(4)
    g = Graph.complete(3)
    W = rng.standard_normal((2, 2))
    m = Model(g, AttentionParams(W_sym=W + W.T, activation=ActivationFn("tanh")))
    x, rx, rp = (rng.standard_normal((3, 2)) for _ in range(3))
    E = FrozenE.at(m, x, 0.2, 0.3)
    xb, pb, diag = solve_blockwise(E, 0.05, rx, rp, 0.3)
    xd, pd = solve_dense(E, 0.05, rx, rp)
    assert max(np.abs(xb - xd).max(), np.abs(pb - pd).max()) <= 1e-12
    assert diag.solve_residual <= 1e-12


def test_cayley_factor_orderings_agree():
    inst = random_instance(np.random.default_rng(5))
    E = FrozenE.at(inst.model, inst.x, inst.t, inst.epsilon)
    s = 0.01
    nh = inst.x.size
    Cd = E.C.dense()
    Ed = np.block([[np.zeros((nh, nh)), E.a * np.eye(nh)], [E.c * Cd, np.zeros((nh, nh))]])
    Minv = np.linalg.inv(np.eye(nh) + s * s / inst.epsilon * Cd)
    K = np.kron(np.eye(2), Minv)
    I2 = np.eye(2 * nh)
    cay = np.linalg.solve(I2 - s * Ed, I2 + s * Ed)
    np.testing.assert_allclose(K @ (I2 + s * Ed) @ (I2 + s * Ed), cay, atol=1e-10)
    np.testing.assert_allclose((I2 + s * Ed) @ (I2 + s * Ed) @ K, cay, atol=1e-10)


def test_singular_system_is_reported():
    # pick s so that I + (s^2/eps) C has an exactly singular direction
    m = Model(Graph.complete(2), AttentionParams(W_sym=np.zeros((1, 1)), activation=ActivationFn("sigmoid")))
    x = np.array([[1.0], [0.0]])
    E = FrozenE.at(m, x, 0.0, 1.0)
    lam = np.linalg.eigvalsh(E.C.dense()).min()  # -2 for this Laplacian
    s = np.sqrt(-1.0 / lam)
    with pytest.raises(SingularLinearSystem):
        solve_blockwise(E, s, x, x, 1.0)


def test_no_convergence():
    m = softmax_model(np.diag([1e-3, 1e-3, 1.0, 1.0]))
    s = PhaseVector(X0, np.random.default_rng(6).standard_normal((3, 4)), 0.0, 0.1)
    with pytest.raises(NoConvergence):
        step_midpoint(s, 0.02, m, SolverConfig(fp_max_iters=1))


def test_scale_overflow():
    m = softmax_model(W1)
    s = PhaseVector(X0, np.zeros((3, 4)), 71.0, 0.1)
    with pytest.raises(ScaleOverflow):
        step_forward_euler(s, 0.02, m)


def test_errors_are_annotated_with_step():
    m = frozen_model(W1)
    with pytest.raises(SingularLinearSystem) as info:
        integrate(PhaseVector(X0, np.zeros((3, 4)), 0.0, 0.1), GridSpec(0, 1, 50), SolverConfig("im-left"), m)
    assert info.value.context["step"] == 35


def test_zero_steps():
    m = softmax_model(W1)
    s0 = PhaseVector(X0, np.zeros((3, 4)), 0.0, 0.1)
    tr = integrate(s0, GridSpec(0, 1, 0), SolverConfig(), m)
    assert len(tr) == 1 and tr.diagnostics == []


def test_times_strictly_increasing_and_canonical():
    m = softmax_model(W1)
    tr = integrate(PhaseVector(X0, np.zeros((3, 4)), 0.0, 0.1), GridSpec(0, 1, 50), SolverConfig("im-left"), m)
    ts = tr.times
    assert all(b > a for a, b in zip(ts, ts[1:]))
    assert ts[-1] == 1.0
    assert all(s.chart == "canonical-y" for s in tr.states)


def test_bitwise_deterministic():
    m = softmax_model(W1)
    s0 = PhaseVector(X0, np.zeros((3, 4)), 0.0, 0.1)
    a = integrate(s0, GridSpec(0, 1, 50), SolverConfig("im"), m)
    b = integrate(s0, GridSpec(0, 1, 50), SolverConfig("im"), m)
    for u, v in zip(a.states, b.states):
        assert u.x.tobytes() == v.x.tobytes() and u.p.tobytes() == v.p.tobytes()


@pytest.mark.parametrize("method", ["fe", "be", "im", "im-left"])
def test_mp_agrees_with_float(method):
    m = softmax_model(W1)
    s0 = PhaseVector(X0, np.zeros((3, 4)), 0.0, 0.1)
    a = integrate(s0, GridSpec(0, 0.1, 5), SolverConfig(method), m)
    b = integrate(s0, GridSpec(0, 0.1, 5), SolverConfig(method, dps=30), m)
    assert isinstance(b.states[-1].x[0, 0], mpmath.mpf)
    np.testing.assert_allclose(nx.to_float(b.states[-1].x), a.states[-1].x, rtol=1e-11, atol=1e-13)


def test_mp_conserves_to_working_precision():
    m = softmax_model(W1)
    tr = integrate(PhaseVector(X0, np.zeros((3, 4)), 0.0, 0.1), GridSpec(0, 1, 50), SolverConfig("im-left", dps=40), m)
    assert max(charge_trace(tr, R).drift for R in skew_basis(4)) < 1e-30


@pytest.mark.parametrize("xi", ["left", "midpoint"])
def test_midpoint_conserves_on_reference_problem(xi):
    m = softmax_model(W1)
    tr = integrate(PhaseVector(X0, np.zeros((3, 4)), 0.0, 0.1), GridSpec(0, 1, 50), SolverConfig(xi_choice=xi), m)
    assert max(charge_trace(tr, R).drift for R in skew_basis(4)) <= 1e-10


def test_composition_small():
    inst = random_instance(np.random.default_rng(7))
    s = _random_state(np.random.default_rng(8), inst)
    assert composition_residual(s, 0.02, inst.model, SolverConfig()) <= 1e-12


def test_flop_counts_favour_blockwise():
    for nh in (4, 32, 128):
        f = flop_counts(nh)
        assert f["blockwise"] < f["dense"]
    assert flop_counts(32)["dense"] / flop_counts(32)["blockwise"] > 6


def _order(method, xi=None):
    g = Graph.complete(3)
    m = Model(g, AttentionParams(W_sym=0.2 * np.eye(2), activation=ActivationFn("sigmoid")))
    rng = np.random.default_rng(9)
    s0 = PhaseVector(rng.standard_normal((3, 2)), 0.3 * rng.standard_normal((3, 2)), 0.0, 1.0)
    T = 0.5
    ref = integrate(s0, GridSpec(0, T, 40 * 64), SolverConfig("im"), m).states[-1]
    cfg = SolverConfig(method, xi_choice=xi or "midpoint")
    errs = []
    for N in (20, 40):
        s = integrate(s0, GridSpec(0, T, N), cfg, m).states[-1]
        errs.append(max(np.abs(s.x - ref.x).max(), np.abs(s.p - ref.p).max()))
    return np.log2(errs[0] / errs[1])


@pytest.mark.parametrize("method,expected", [("fe", 1), ("be", 1), ("im-left", 1), ("im", 2)])
def test_convergence_order(method, expected):
    assert _order(method) == pytest.approx(expected, abs=0.2)
