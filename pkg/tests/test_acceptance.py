"""End-to-end acceptance checks, one test per numbered criterion.

Each test prints a single PASS line once its assertions hold, so running
``pytest tests/test_acceptance.py -v`` (or ``-s``) gives one line per
criterion; any assertion failure turns the corresponding line into a FAIL
within the pytest report.
"""

import math

import numpy as np
import pytest

from switchscope.decomposition import (
    autonomous_part,
    build_abstractions,
    build_core,
    restrict,
    scc_decomposition,
    unobservable_modes,
)
from switchscope.fixtures import fixture_path
from switchscope.location import (
    augmented_pair,
    distinguishing_input,
    location_observability_test,
    loop_reset_condition,
    max_controlled_invariant,
    verify_distinguishing_input,
)
from switchscope.model import LtiMode, SwitchingSystem, load_system, markov_parameter
from switchscope.observer import (
    ObserverConfig,
    exact_stacked_output,
    identify_mode,
    reconstruct_state,
    run_observer,
)
from switchscope.simulator import ExponentialInput, Schedule, simulate
from switchscope.stability import (
    DivergentWitness,
    detectability,
    guarded_stability,
    observability,
    replay_witness,
)
from switchscope.subspaces import kernel, image

RNG = np.random.default_rng(20240819)
TOL = 1e-9


def _load(name):
    with open(fixture_path(name)) as fh:
        return load_system(fh.read())


def _sixmode_core():
    six = _load("sixmode")
    return build_core(restrict(autonomous_part(six), unobservable_modes(six, TOL)), TOL)


def _ok(num, text):
    print(f"criterion {num:2d}: PASS - {text}")


def test_criterion_01_markov_parameter_table():
    six = _load("sixmode")
    table = {
        "1": lambda k: 1.0,
        "2": lambda k: 2.0**k,
        "3": lambda k: 0.0,
        "4": lambda k: 3.0**k,
        "5": lambda k: 4.0,
        "6": lambda k: 5.0**k,
    }
    for label, expect in table.items():
        mode = six.mode(label)
        for k in range(4):
            M = markov_parameter(mode, k)
            assert M.shape == (1, 1)
            assert abs(M[0, 0] - expect(k)) <= 1e-9, (label, k)
    _ok(1, "per-mode Markov parameters match the reference table for k = 0..3")


def test_criterion_02_location_observability_with_shallow_witnesses():
    res = location_observability_test(_load("sixmode"), TOL)
    assert res.verdict
    assert len(res.pairs) == 30
    assert all(c.distinguishable for c in res.pairs.values())
    assert max(c.witness_k for c in res.pairs.values()) <= 1
    _ok(2, "every ordered mode pair distinguished with witness order k <= 1")


def test_criterion_03_cycle_reset_condition_both_ways():
    good = loop_reset_condition(_load("sixmode"), TOL)
    assert good.holds
    assert set(good.per_edge) == {("3", "3")}
    holds, meet_dim = good.per_edge[("3", "3")]
    assert holds and meet_dim == 0

    bad = loop_reset_condition(_load("hidden_selfloop"), TOL)
    assert not bad.holds
    assert bad.per_edge[("1", "1")] == (False, 1)
    _ok(3, "self-loop reset condition holds on the six-mode system, fails on the planar counterexample")


def test_criterion_04_unobservable_modes_and_restricted_graph():
    six = _load("sixmode")
    qhat = unobservable_modes(six, TOL)
    assert qhat == ("1", "2", "3", "5", "6")
    sub = restrict(six, qhat)
    pairs = sorted(e.pair for e in sub.edges)
    assert pairs == [
        ("1", "2"), ("2", "1"), ("2", "3"), ("2", "5"),
        ("3", "3"), ("3", "6"), ("5", "6"), ("6", "5"),
    ]
    _ok(4, "unobservable modes {1,2,3,5,6} with the expected 8-edge restriction")


def test_criterion_05_core_blocks_entrywise():
    core = _sixmode_core()
    for label, cf in core.canonical.items():
        n = cf.T.shape[0]
        assert np.allclose(cf.T, np.eye(n), atol=1e-9), label

    a22 = {
        "1": [[-2.0, 1.0], [1.0, -2.0]],
        "2": [[-1.0, 1.0], [1.0, -2.0]],
        "3": [[-1.0]],
        "5": [[-1.0, 0.0], [0.0, -2.0]],
        "6": [[-3.0]],
    }
    for label, want in a22.items():
        assert np.allclose(core.modes[label], want, atol=1e-9), label

    coupling = {
        ("1", "2"): [[2.0, -3.0]],
        ("2", "1"): [[1.0, 0.0], [2.0, 0.0]],
        ("2", "3"): [[-1.0, 0.0]],
        ("2", "5"): [[0.0, 0.0]],
        ("3", "3"): [[1.0]],
        ("3", "6"): [[0.0]],
        ("5", "6"): [[1.0, 0.0]],
        ("6", "5"): [[0.0]],
    }
    resets = {
        ("1", "2"): [[1.0, 0.0], [0.0, 1.0]],
        ("2", "1"): [[1.0, 0.0], [0.0, 1.0]],
        ("2", "3"): [[1.0, 1.0]],
        ("2", "5"): [[1.0, 0.0], [0.0, 1.0]],
        ("3", "3"): [[10.0]],
        ("3", "6"): [[1.0]],
        ("5", "6"): [[10.0, 0.0]],
        ("6", "5"): [[10.0], [10.0]],
    }
    assert sorted(core.edge_pairs()) == sorted(coupling)
    for pair in coupling:
        e = core.edge(*pair)
        assert np.allclose(e.coupling, coupling[pair], atol=1e-9), pair
        assert np.allclose(e.reset, resets[pair], atol=1e-9), pair
    _ok(5, "canonical transforms are identities; all A22, coupling, and reset blocks match entrywise")


def test_criterion_06_core_strongly_connected_components():
    core = _sixmode_core()
    comps = scc_decomposition(core.labels, core.edge_pairs())
    assert [c.labels for c in comps] == [("1", "2"), ("3",), ("5", "6")]
    _ok(6, "core transition graph splits into components {1,2}, {3}, {5,6}")


def test_criterion_07_identity_lyapunov_certificate_with_replay():
    core = _sixmode_core()
    verdict = guarded_stability(core)
    cert = {cv.labels: cv.certificate for cv in verdict.components}[("1", "2")]
    assert cert.kind == "CommonLyapunov"
    assert np.allclose(cert.P, np.eye(2), atol=1e-9)
    # independent replay: A'P + PA = A + A' must be negative definite
    w1 = np.sort(np.linalg.eigvalsh(core.modes["1"] + core.modes["1"].T))
    w2 = np.sort(np.linalg.eigvalsh(core.modes["2"] + core.modes["2"].T))
    assert np.allclose(w1, [-6.0, -2.0], atol=1e-9)
    assert np.allclose(w2, [-3.0 - math.sqrt(5.0), -3.0 + math.sqrt(5.0)], atol=1e-9)
    assert np.all(w1 < 0) and np.all(w2 < 0)
    _ok(7, "P = I certifies component {1,2}; replayed eigenvalues are {-2,-6} and -3 +/- sqrt(5)")


def test_criterion_08_projected_abstraction_stable_dropped_abstraction_not():
    core = _sixmode_core()
    sub = core.subgraph(("5", "6"))
    h1, h2 = build_abstractions(sub)
    assert np.array_equal(h2.edge("5", "6").reset, np.array([[0.0, 0.0]]))
    assert guarded_stability(h2).status == "Stable"

    v1 = guarded_stability(h1)
    assert v1.status == "Unstable"
    assert v1.certificate.kind == "DivergentWitness"
    probe = DivergentWitness(("5", "6"), (0.1, 0.1), (("5", "6"), ("6", "5")), 0.0)
    rho = replay_witness(h1, probe)
    assert rho >= 50.0
    assert rho == pytest.approx(100.0 * math.exp(-0.4), rel=1e-2)
    _ok(8, "projected reset (0 0) gives a stable abstraction; guard dropping diverges at rate 100*exp(-0.4)")


def test_criterion_09_detectable_but_not_observable():
    six = _load("sixmode")
    assert detectability(six, tol=TOL).status == "Detectable"
    assert observability(six, TOL) is False
    _ok(9, "the six-mode system is detectable yet not observable")


def test_criterion_10_invariant_subspace_property_suite():
    checked = 0
    refuted = 0
    for _ in range(200):
        n1 = int(RNG.integers(1, 4))
        n2 = int(RNG.integers(1, 4))
        m = int(RNG.integers(1, 3))
        l = int(RNG.integers(1, 3))
        a = LtiMode("a", RNG.normal(size=(n1, n1)), RNG.normal(size=(n1, m)), RNG.normal(size=(l, n1)))
        b = LtiMode("b", RNG.normal(size=(n2, n2)), RNG.normal(size=(n2, m)), RNG.normal(size=(l, n2)))
        p = augmented_pair(SwitchingSystem([a, b]), "a", "b")
        V = max_controlled_invariant(p, TOL)
        kerC = kernel(p.C, TOL)

        # the two defining inclusions: V inside ker C, A V inside V + im B
        assert kerC.contains(V)
        if V.dim:
            AV = image(p.A @ V.basis, TOL)
            assert V.sum(image(p.B, TOL)).contains(AV)
        checked += 1

        if V.dim == kerC.dim:
            continue  # nothing strictly larger fits inside ker C

        # randomized maximality refutation: V + span{w} with w in ker C is
        # never controlled invariant.  A V already sits in V + im B, so the
        # candidate only survives if A w lands in (V + im B) + span{w},
        # i.e. if the off-(V+imB) parts of A w and w are parallel.
        VB = np.hstack([V.basis, p.B]) if V.dim else p.B
        Q, _ = np.linalg.qr(VB)
        offs = np.eye(p.dim) - Q @ Q.T
        W = kerC.basis @ RNG.normal(size=(kerC.dim, 1000))
        u_off = offs @ (p.A @ W)
        w_off = offs @ W
        for j in range(1000):
            w = W[:, j]
            if V.dim and V.distance(w) <= 1e-9 * np.linalg.norm(w):
                continue  # not strictly larger
            v = w_off[:, j]
            u = u_off[:, j]
            nv = float(np.linalg.norm(v))
            if nv > 1e-9:
                u = u - v * (float(v @ u) / nv**2)
            assert float(np.linalg.norm(u)) > 1e-7 * max(1.0, float(np.linalg.norm(w)))
            refuted += 1
    assert checked == 200
    # pairs where V already fills ker C admit no larger candidate and are
    # vacuous; the seed leaves dozens of non-vacuous pairs, 1000 draws each
    assert refuted > 25_000
    _ok(10, "ISA output satisfies both inclusions on 200 pairs; 1000-sample maximality refutation per pair")


def test_criterion_11_distinguishing_input_verified_on_every_pair():
    six = _load("sixmode")
    u = distinguishing_input(six, TOL)
    # the verifier integrates all 30 ordered pairs from mismatched initial
    # conditions and demands a visible output gap on each
    assert len(six.labels) == 6
    assert verify_distinguishing_input(six, u, horizon=2.0, dt=1e-3, tol=1e-6)
    _ok(11, "constructed exponential input separates all 30 ordered pairs within 2 time units")


def test_criterion_12_observer_exact_and_sampled_accuracy():
    two = _load("twomode_observable")
    a, b = two.labels
    u = ExponentialInput((1.0,), 0.0)
    run = simulate(
        two, a, [1.0, -0.5], input_signal=u,
        policy=Schedule(((0.25, (a, b)),)), horizon=0.5, dt=1e-3,
    )

    exact_cfg = ObserverConfig.for_system(two, residual_tol=1e-6)
    levels = exact_cfg.stack_levels
    tested = 0
    for iv in run.intervals:
        mode = two.mode(iv.mode)
        for idx in range(0, iv.t.shape[0], 10):
            Y, U = exact_stacked_output(mode, iv.x[idx], u, float(iv.t[idx]), levels)
            assert identify_mode(Y, U, two, exact_cfg) == (iv.mode,)
            est = reconstruct_state(iv.mode, Y, U, two, exact_cfg)
            assert float(np.linalg.norm(est.x - iv.x[idx])) <= 1e-9
            tested += 1
    assert tested >= 50

    fd = run_observer(two, run)
    assert fd.ambiguous == 0
    assert fd.mode_accuracy == 1.0
    assert all(err <= 1e-4 for err in fd.per_interval_max_error)
    _ok(12, "analytic stacks identify and reconstruct exactly; sampled stacks stay within 1e-4")


def test_criterion_13_integrator_accuracy_and_order():
    sys = SwitchingSystem((LtiMode("g", [[3.0]], [[0.0]], [[1.0]]),), (), name="growth")
    exact = math.exp(3.0)
    errs = []
    for dt in (1e-3, 5e-4):
        run = simulate(sys, "g", [1.0], horizon=1.0, dt=dt)
        errs.append(abs(run.final_state()[1][0] - exact) / exact)
    assert errs[0] <= 1e-9
    assert errs[0] / errs[1] >= 12.0
    _ok(13, "RK4 hits exp(3) to 1e-9 at dt = 1e-3 and gains at least 12x per step halving")
