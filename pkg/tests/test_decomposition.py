"""Canonical form, unobservable core extraction, and graph condensation."""

import numpy as np
import pytest

from switchscope.decomposition import (
    build_abstractions,
    build_core,
    canonical_form,
    restrict,
    autonomous_part,
    scc_decomposition,
    unobservable_modes,
)
from switchscope.fixtures import fixture_path
from switchscope.model import (
    GUARD_FULL,
    Edge,
    LtiMode,
    SwitchingSystem,
    load_system,
    observability_matrix,
)
from switchscope.subspaces import kernel

RNG = np.random.default_rng(20240814)
TOL = 1e-9


def _load(name):
    with open(fixture_path(name)) as fh:
        return load_system(fh.read())


def test_canonical_form_observable_mode_is_identity():
    m = LtiMode("o", [[0.0, 1.0], [-2.0, -3.0]], [[0.0], [1.0]], [[1.0, 0.0]])
    cf = canonical_form(m)
    assert cf.d == 0
    assert np.allclose(cf.T, np.eye(2))
    assert np.allclose(cf.A11, m.A)
    assert cf.A22.shape == (0, 0)


def test_canonical_form_block_shape_and_round_trip():
    for _ in range(100):
        n = int(RNG.integers(2, 6))
        # build a mode with a deliberately unobservable direction: C rows
        # annihilate a random invariant subspace
        d = int(RNG.integers(1, n))
        Q, _ = np.linalg.qr(RNG.normal(size=(n, n)))
        A11 = RNG.normal(size=(n - d, n - d))
        A21 = RNG.normal(size=(d, n - d))
        A22 = RNG.normal(size=(d, d))
        A = Q @ np.block([[A11, np.zeros((n - d, d))], [A21, A22]]) @ Q.T
        C1 = RNG.normal(size=(1, n - d))
        C = np.hstack([C1, np.zeros((1, d))]) @ Q.T
        m = LtiMode("r", A, np.zeros((n, 1)), C)
        cf = canonical_form(m)
        if cf.d != d:
            continue  # random (A11, C1) can be unobservable itself; skip
        # T orthogonal and the transform reproduces the blocks
        assert np.allclose(cf.T @ cf.T.T, np.eye(n), atol=1e-9)
        At = cf.T @ A @ cf.T.T
        assert np.allclose(At[: n - d, n - d :], 0.0, atol=1e-7)
        assert np.allclose(At[: n - d, : n - d], cf.A11)
        assert np.allclose(At[n - d :, n - d :], cf.A22)
        Ct = C @ cf.T.T
        assert np.allclose(Ct[:, n - d :], 0.0, atol=1e-7)
        # eigenvalues split between the blocks
        eigs = sorted(np.linalg.eigvals(A), key=lambda z: (z.real, z.imag))
        split = sorted(
            list(np.linalg.eigvals(cf.A11)) + list(np.linalg.eigvals(cf.A22)),
            key=lambda z: (z.real, z.imag),
        )
        assert np.allclose(eigs, split, atol=1e-6)


def test_canonical_form_keeps_identity_for_already_canonical():
    # lower block-triangular A with C = (C1, 0): already in canonical shape
    A = np.array([[1.0, 0.0], [5.0, -2.0]])
    C = np.array([[3.0, 0.0]])
    m = LtiMode("c", A, np.zeros((2, 1)), C)
    cf = canonical_form(m)
    assert cf.d == 1
    assert np.allclose(cf.T, np.eye(2))
    assert np.allclose(cf.A22, [[-2.0]])
    assert np.allclose(cf.A21, [[5.0]])


def test_unobservable_modes_and_restrict_on_sixmode():
    six = _load("sixmode")
    qhat = unobservable_modes(six)
    assert qhat == ("1", "2", "3", "5", "6")
    sub = restrict(autonomous_part(six), qhat)
    assert sub.labels == qhat
    assert len(sub.edges) == 8
    assert all(np.allclose(m.B, 0.0) for m in sub.modes.values())
    with pytest.raises(ValueError):
        restrict(six, ["1", "zz"])
    with pytest.raises(ValueError):
        restrict(six, [])


def test_build_core_rejects_observable_modes():
    two = _load("twomode_observable")
    with pytest.raises(ValueError, match="observable"):
        build_core(two)


def test_core_blocks_on_sixmode():
    six = _load("sixmode")
    core = build_core(restrict(autonomous_part(six), unobservable_modes(six)))
    assert core.labels == ("1", "2", "3", "5", "6")
    assert np.allclose(core.modes["1"], [[-2.0, 1.0], [1.0, -2.0]])
    assert np.allclose(core.modes["2"], [[-1.0, 1.0], [1.0, -2.0]])
    assert np.allclose(core.modes["3"], [[-1.0]])
    assert np.allclose(core.modes["5"], [[-1.0, 0.0], [0.0, -2.0]])
    assert np.allclose(core.modes["6"], [[-3.0]])
    # the self-loop on 3 has a nonzero coupling: guard is {0}
    assert core.edge("3", "3").guard.dim == 0
    # every other edge keeps a positive-dimension guard
    for e in core.edges:
        if (e.source, e.target) != ("3", "3"):
            assert e.guard.dim > 0


def test_core_guard_matches_coupling_kernel():
    six = _load("sixmode")
    core = build_core(restrict(autonomous_part(six), unobservable_modes(six)))
    for e in core.edges:
        K = kernel(e.coupling, TOL)
        assert K.dim == e.guard.dim
        assert K.equals(e.guard)


def test_abstractions_drop_and_project():
    six = _load("sixmode")
    core = build_core(restrict(autonomous_part(six), unobservable_modes(six)))
    h1, h2 = build_abstractions(core)
    assert h1.is_guard_free() and h2.is_guard_free()
    for e in core.edges:
        e1 = h1.edge(e.source, e.target)
        e2 = h2.edge(e.source, e.target)
        assert np.allclose(e1.reset, e.reset)
        assert np.allclose(e2.reset, e.reset @ e.guard.projector())
    # H2 kills the (5,6) reset entirely: guard ker(R12) annihilates R22
    assert np.allclose(h2.edge("5", "6").reset, 0.0)
    assert not np.allclose(h1.edge("5", "6").reset, 0.0)


def test_scc_partition_and_order():
    comps = scc_decomposition(
        ["a", "b", "c", "d"],
        [("a", "b"), ("b", "a"), ("b", "c"), ("c", "d"), ("d", "c")],
    )
    assert [c.labels for c in comps] == [("a", "b"), ("c", "d")]
    assert all(not c.transient for c in comps)


def test_scc_transient_flags():
    comps = scc_decomposition(
        ["p", "q", "r"],
        [("p", "q"), ("q", "r"), ("r", "r")],
    )
    by_labels = {c.labels: c.transient for c in comps}
    assert by_labels[("p",)] is True
    assert by_labels[("q",)] is True
    assert by_labels[("r",)] is False  # self-loop keeps it recurrent
    # order respects reachability: p before q before r
    assert [c.labels for c in comps] == [("p",), ("q",), ("r",)]


def test_scc_on_sixmode_core():
    six = _load("sixmode")
    core = build_core(restrict(autonomous_part(six), unobservable_modes(six)))
    comps = scc_decomposition(core.labels, core.edge_pairs())
    assert [set(c.labels) for c in comps] == [{"1", "2"}, {"3"}, {"5", "6"}]
    assert all(not c.transient for c in comps)


def test_scc_partition_is_exhaustive_randomized():
    for _ in range(50):
        n = int(RNG.integers(1, 9))
        nodes = [str(k) for k in range(n)]
        pairs = set()
        for _ in range(int(RNG.integers(0, 2 * n + 1))):
            pairs.add((str(int(RNG.integers(n))), str(int(RNG.integers(n)))))
        comps = scc_decomposition(nodes, sorted(pairs))
        seen = [lab for c in comps for lab in c.labels]
        assert sorted(seen) == sorted(nodes)  # a partition
        # condensation acyclicity: edges only point from earlier to later
        pos = {lab: k for k, c in enumerate(comps) for lab in c.labels}
        for s, t in pairs:
            assert pos[s] <= pos[t]


def test_scc_rejects_unknown_nodes():
    with pytest.raises(ValueError):
        scc_decomposition(["a"], [("a", "zz")])


def test_core_to_dict_is_json_ready():
    import json

    six = _load("sixmode")
    core = build_core(restrict(autonomous_part(six), unobservable_modes(six)))
    doc = json.loads(json.dumps(core.to_dict()))
    assert set(doc["modes"]) == {"1", "2", "3", "5", "6"}
    assert len(doc["edges"]) == 8
    assert doc["modes"]["3"]["spectrum"] == [-1.0]
