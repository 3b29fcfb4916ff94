"""Mode distinguishability, invariant subspaces, and input construction."""

import numpy as np
import pytest

from switchscope.fixtures import fixture_path
from switchscope.location import (
    ExponentialInput,
    LocationUnobservable,
    appendix_blocks,
    augmented_pair,
    distinguishing_input,
    friend_gain,
    location_observability_test,
    loop_reset_condition,
    max_controlled_invariant,
    verify_distinguishing_input,
)
from switchscope.model import GUARD_FULL, Edge, LtiMode, SwitchingSystem, load_system
from switchscope.subspaces import Subspace, image, kernel, preimage

RNG = np.random.default_rng(20240813)
TOL = 1e-9


def _load(name):
    with open(fixture_path(name)) as fh:
        return load_system(fh.read())


def _random_pair(n_total=None, m=None):
    n1 = int(RNG.integers(1, 4))
    n2 = int(RNG.integers(1, 4)) if n_total is None else n_total - n1
    m = m or int(RNG.integers(1, 3))
    a = LtiMode("a", RNG.normal(size=(n1, n1)), RNG.normal(size=(n1, m)), RNG.normal(size=(1, n1)))
    b = LtiMode("b", RNG.normal(size=(n2, n2)), RNG.normal(size=(n2, m)), RNG.normal(size=(1, n2)))
    return augmented_pair(SwitchingSystem([a, b]), "a", "b")


def test_augmented_pair_assembly():
    six = _load("sixmode")
    p = augmented_pair(six, "3", "4")
    m3 = six.mode("3")
    assert np.allclose(p.A[:2, :2], m3.A)
    assert np.allclose(p.A[2:, 2:], six.mode("4").A)
    assert np.allclose(p.A[:2, 2:], 0.0) and np.allclose(p.A[2:, :2], 0.0)
    assert np.allclose(p.C, [[1.0, 0.0, -1.0]])
    assert np.allclose(p.B, np.vstack([m3.B, six.mode("4").B]))
    with pytest.raises(ValueError):
        augmented_pair(six, "3", "3")
    with pytest.raises(KeyError):
        augmented_pair(six, "3", "99")


def test_invariant_trivial_cases():
    # full-column-rank C_pair pins V to {0}
    a = LtiMode("a", [[2.0]], [[1.0]], [[1.0], [0.0]])
    b = LtiMode("b", [[-1.0]], [[1.0]], [[0.0], [1.0]])
    p = augmented_pair(SwitchingSystem([a, b]), "a", "b")
    assert np.linalg.matrix_rank(p.C) == p.dim
    assert max_controlled_invariant(p).dim == 0
    # C = 0 leaves everything invariant
    z = LtiMode("z", np.eye(2), np.ones((2, 1)), np.zeros((1, 2)))
    w = LtiMode("w", np.eye(2), np.ones((2, 1)), np.zeros((1, 2)))
    p0 = augmented_pair(SwitchingSystem([z, w]), "z", "w")
    assert max_controlled_invariant(p0).is_full()


def test_invariant_satisfies_both_inclusions():
    for _ in range(200):
        p = _random_pair()
        V = max_controlled_invariant(p, TOL)
        assert kernel(p.C, TOL).contains(V)
        if V.dim:
            AV = image(p.A @ V.basis, TOL)
            assert V.sum(image(p.B, TOL)).contains(AV)


def test_invariant_iteration_is_monotone():
    p = _random_pair()
    kerC = kernel(p.C, TOL)
    imB = image(p.B, TOL)
    V = kerC
    dims = [V.dim]
    for _ in range(p.dim + 1):
        V = kerC.intersect(preimage(p.A, V.sum(imB), TOL))
        dims.append(V.dim)
    assert all(d1 >= d2 for d1, d2 in zip(dims, dims[1:]))


def test_invariant_maximality_randomized_refutation():
    # no sampled strictly-larger subspace of ker(C) is controlled invariant
    for _ in range(20):
        p = _random_pair()
        V = max_controlled_invariant(p, TOL)
        kerC = kernel(p.C, TOL)
        if V.dim == kerC.dim:
            continue  # nothing strictly larger inside ker(C)
        imB = image(p.B, TOL)
        for _ in range(50):
            extra = kerC.basis @ RNG.normal(size=(kerC.dim, 1))
            W = Subspace.from_span(np.hstack([V.basis, extra]), TOL) if V.dim else Subspace.from_span(extra, TOL)
            if W.dim <= V.dim or not kerC.contains(W):
                continue
            AW = image(p.A @ W.basis, TOL)
            assert not W.sum(imB).contains(AW)


def test_friend_gain_keeps_invariant():
    zero_pair = _random_pair()
    assert np.allclose(friend_gain(zero_pair, Subspace.zero(zero_pair.dim)), 0.0)
    for _ in range(100):
        p = _random_pair()
        V = max_controlled_invariant(p, TOL)
        K = friend_gain(p, V, TOL)
        if V.dim == 0:
            assert np.allclose(K, 0.0)
            continue
        closed = (p.A + p.B @ K) @ V.basis
        for j in range(V.dim):
            assert V.distance(closed[:, j]) <= 1e-6 * max(1.0, np.linalg.norm(closed[:, j]))


def test_friend_gain_rejects_non_invariant_subspace():
    a = LtiMode("a", np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((2, 1)), np.zeros((1, 2)))
    b = LtiMode("b", np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    p = augmented_pair(SwitchingSystem([a, b]), "a", "b")
    # span{e1 of mode b ... } pick a direction A pushes outside span + im(B)=0
    W = Subspace.from_span(np.array([[0.0], [1.0], [0.0]]), TOL)
    with pytest.raises(ValueError):
        friend_gain(p, W, TOL)


def test_location_test_on_sixmode():
    six = _load("sixmode")
    loc = location_observability_test(six)
    assert loc.verdict
    assert len(loc.pairs) == 30  # ordered pairs of 6 modes
    assert all(c.witness_k is not None and c.witness_k <= 1 for c in loc.pairs.values())


def test_witness_index_is_symmetric():
    six = _load("sixmode")
    loc = location_observability_test(six)
    for (i, h), cert in loc.pairs.items():
        assert loc.pairs[(h, i)].witness_k == cert.witness_k


def test_identical_modes_are_indistinguishable():
    A = np.array([[0.0, 1.0], [-1.0, -1.0]])
    a = LtiMode("a", A, [[0.0], [1.0]], [[1.0, 0.0]])
    b = LtiMode("b", A, [[0.0], [1.0]], [[1.0, 0.0]])
    loc = location_observability_test(SwitchingSystem([a, b]))
    assert not loc.verdict
    assert loc.pairs[("a", "b")].witness_k is None


def test_single_mode_is_vacuously_location_observable():
    hs = _load("hidden_selfloop")
    loc = location_observability_test(hs)
    assert loc.verdict and loc.pairs == {}


def test_loop_reset_condition_fixtures():
    six = _load("sixmode")
    lrc = loop_reset_condition(six)
    assert lrc.holds
    assert set(lrc.per_edge) == {("3", "3")}
    assert lrc.per_edge[("3", "3")] == (True, 0)

    hs = _load("hidden_selfloop")
    bad = loop_reset_condition(hs)
    assert not bad.holds
    assert bad.per_edge[("1", "1")][0] is False
    assert bad.per_edge[("1", "1")][1] == 1

    two = _load("twomode_observable")
    assert loop_reset_condition(two).holds  # no self-loops at all
    assert loop_reset_condition(two).per_edge == {}


def test_loop_reset_geometry_on_sixmode_self_loop():
    six = _load("sixmode")
    e = six.edge("3", "3")
    diff = image(e.reset - np.eye(2), TOL)
    unobs = kernel(
        np.vstack([six.mode("3").C, six.mode("3").C @ six.mode("3").A]), TOL
    )
    assert diff.dim == 1 and unobs.dim == 1
    assert diff.intersect(unobs).dim == 0


def test_appendix_blocks_trivial_and_structure():
    p = _random_pair()
    K0 = np.zeros((p.input_dim, p.dim))
    M, F = appendix_blocks(p, K0, 3)
    assert np.allclose(M, 0.0)
    assert np.allclose(F, np.eye(p.input_dim * 4))
    K = RNG.normal(size=(p.input_dim, p.dim))
    M1, F1 = appendix_blocks(p, K, 0)
    assert np.allclose(M1, K)
    assert np.allclose(F1, np.eye(p.input_dim))
    M2, F2 = appendix_blocks(p, K, 4)
    # unit lower block-triangular: determinant exactly one
    assert abs(np.linalg.det(F2) - 1.0) < 1e-8
    Ahat = p.A + p.B @ K
    assert np.allclose(M2[p.input_dim : 2 * p.input_dim], K @ Ahat)


def test_exponential_input_values_and_derivatives():
    u = ExponentialInput(np.array([2.0, -1.0]), 0.5)
    assert np.allclose(u(0.0), [2.0, -1.0])
    assert np.allclose(u.derivative(1.0, 3), (0.5**3) * np.array([2.0, -1.0]) * np.exp(0.5))
    with pytest.raises(ValueError):
        ExponentialInput(np.array([]), 1.0)


def test_distinguishing_input_on_sixmode():
    six = _load("sixmode")
    u = distinguishing_input(six)
    assert u.z.shape == (1,)
    assert verify_distinguishing_input(six, u, horizon=2.0, dt=1e-3, tol=1e-6)


def test_distinguishing_input_requires_location_observability():
    A = np.array([[0.0, 1.0], [-1.0, -1.0]])
    a = LtiMode("a", A, [[0.0], [1.0]], [[1.0, 0.0]])
    b = LtiMode("b", A, [[0.0], [1.0]], [[1.0, 0.0]])
    with pytest.raises(LocationUnobservable):
        distinguishing_input(SwitchingSystem([a, b]))


def test_feedforward_set_is_proper_on_sixmode():
    # distinguishable pairs leave room in the input space
    six = _load("sixmode")
    loc = location_observability_test(six)
    m = six.input_dim
    for (i, h), cert in loc.pairs.items():
        p = augmented_pair(six, i, h)
        nu = preimage(p.B, cert.invariant, TOL).dim
        assert nu < m


def test_verify_rejects_silent_input():
    A = np.array([[0.0, 1.0], [-1.0, -1.0]])
    a = LtiMode("a", A, [[0.0], [1.0]], [[1.0, 0.0]])
    b = LtiMode("b", A, [[0.0], [1.0]], [[1.0, 0.0]])
    sys_ = SwitchingSystem([a, b])
    u = ExponentialInput(np.array([1.0]), 0.0)
    # identical modes: the difference system never speaks from the zero state
    assert not verify_distinguishing_input(sys_, u, horizon=0.5, dt=1e-3)


def test_forced_response_witness_from_zero_state():
    # CB differs across the two-mode fixture, so ydot(0) != 0 from x0 = 0
    two = _load("twomode_observable")
    u = ExponentialInput(np.array([1.0]), 0.0)
    assert verify_distinguishing_input(two, u, horizon=1.0, dt=1e-3, tol=1e-6)
