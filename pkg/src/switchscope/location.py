"""Location observability: telling the active mode apart from outputs.

Two modes are distinguishable when some Markov parameter C A^k B differs
(k below the sum of the two state dimensions suffices).  When every ordered
pair is distinguishable, an input keeping every pairwise difference output
away from zero exists; it is constructed by steering clear, for each pair,
of the inputs that hold the difference system inside its maximal controlled
invariant subspace within ker(C_pair).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SwitchingSystem, markov_parameter, observability_matrix
from .subspaces import REL_TOL, Subspace, image, kernel, preimage

__all__ = [
    "LocationUnobservable",
    "NoWitnessFound",
    "AugmentedPair",
    "augmented_pair",
    "max_controlled_invariant",
    "friend_gain",
    "PairCertificate",
    "LocationObservability",
    "location_observability_test",
    "LoopResetCondition",
    "loop_reset_condition",
    "appendix_blocks",
    "ExponentialInput",
    "distinguishing_input",
    "verify_distinguishing_input",
]


class LocationUnobservable(ValueError):
    """Raised when an operation requires a location observable system."""


class NoWitnessFound(RuntimeError):
    """Search budget exhausted without a valid distinguishing input."""


@dataclass(frozen=True)
class AugmentedPair:
    """Difference system of two modes: block-diagonal dynamics, stacked
    input matrix, output C_i x_i - C_h x_h."""

    i: str
    h: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]


def augmented_pair(system: SwitchingSystem, i: str, h: str) -> AugmentedPair:
    if i == h:
        raise ValueError("augmented pair needs two distinct modes")
    mi, mh = system.mode(i), system.mode(h)
    ni, nh = mi.n, mh.n
    A = np.zeros((ni + nh, ni + nh))
    A[:ni, :ni] = mi.A
    A[ni:, ni:] = mh.A
    B = np.vstack([mi.B, mh.B])
    C = np.hstack([mi.C, -mh.C])
    return AugmentedPair(i, h, A, B, C)


def max_controlled_invariant(pair: AugmentedPair, tol: float = REL_TOL) -> Subspace:
    """Largest subspace V of ker(C) with A V contained in V + im(B).

    Computed by the standard shrinking iteration
    V0 = ker(C), V_{k+1} = ker(C) /\\ A^{-1}(V_k + im(B)),
    which reaches its fixed point in at most dim steps.
    """
    kerC = kernel(pair.C, tol)
    imB = image(pair.B, tol)
    V = kerC
    for _ in range(pair.dim + 1):
        Vnext = kerC.intersect(preimage(pair.A, V.sum(imB)))
        if Vnext.dim == V.dim:
            break
        V = Vnext
    else:  # pragma: no cover - the chain must stabilize within n steps
        raise RuntimeError("controlled-invariant iteration failed to stabilize")
    return V


def friend_gain(pair: AugmentedPair, V: Subspace, tol: float = REL_TOL) -> np.ndarray:
    """A feedback K with (A + B K) V inside V.

    For each basis vector v the decomposition A v = w + B u with w in V is
    solved by least squares (minimum-norm coefficients); K maps v to -u and
    annihilates the orthogonal complement of V.
    """
    m = pair.input_dim
    n = pair.dim
    if V.dim == 0:
        return np.zeros((m, n))
    if not V.sum(image(pair.B, tol)).contains(image(pair.A @ V.basis, tol)):
        raise ValueError("subspace is not controlled invariant")
    M = np.hstack([V.basis, pair.B])
    U = np.zeros((m, V.dim))
    for j in range(V.dim):
        coef, *_ = np.linalg.lstsq(M, pair.A @ V.basis[:, j], rcond=None)
        U[:, j] = coef[V.dim :]
    return -U @ V.basis.T


@dataclass(frozen=True)
class PairCertificate:
    """Distinguishability evidence for one ordered mode pair."""

    i: str
    h: str
    distinguishable: bool
    witness_k: int | None
    invariant: Subspace
    gain: np.ndarray | None = None


@dataclass(frozen=True)
class LocationObservability:
    verdict: bool
    pairs: dict[tuple[str, str], PairCertificate]


def location_observability_test(
    system: SwitchingSystem, tol: float = REL_TOL
) -> LocationObservability:
    """Check every ordered pair of distinct modes for a Markov witness.

    The witness index is the least k < n_i + n_h at which C_i A_i^k B_i and
    C_h A_h^k B_h differ beyond tol (scaled by the largest entry seen).
    """
    certificates: dict[tuple[str, str], PairCertificate] = {}
    labels = system.labels
    ok = True
    for i in labels:
        for h in labels:
            if i == h:
                continue
            mi, mh = system.mode(i), system.mode(h)
            kmax = mi.n + mh.n
            witness = None
            scale = 1.0
            for k in range(kmax):
                Mi = markov_parameter(mi, k)
                Mh = markov_parameter(mh, k)
                scale = max(scale, float(np.abs(Mi).max()), float(np.abs(Mh).max()))
                if float(np.abs(Mi - Mh).max()) > tol * scale:
                    witness = k
                    break
            pair = augmented_pair(system, i, h)
            V = max_controlled_invariant(pair, tol)
            certificates[(i, h)] = PairCertificate(i, h, witness is not None, witness, V)
            if witness is None:
                ok = False
    return LocationObservability(ok, certificates)


@dataclass(frozen=True)
class LoopResetCondition:
    """Per-edge and overall status of the hidden-reset test on cycles."""

    holds: bool
    per_edge: dict[tuple[str, str], tuple[bool, int]]  # (holds, intersection dim)


def loop_reset_condition(system: SwitchingSystem, tol: float = REL_TOL) -> LoopResetCondition:
    """For every self-loop edge, Im(R - I) must meet the mode's unobservable
    subspace only at 0.

    A self-loop changes the state without changing the output's mode label;
    if the jump displacement (R - I)x can hide inside ker(O), the loop can
    fire - even repeatedly - with no trace in the output, and the switching
    times are lost.  Cross-mode jumps are caught by location observability
    instead, so only (i, i) edges carry this condition.
    """
    per_edge: dict[tuple[str, str], tuple[bool, int]] = {}
    holds = True
    for e in system.self_loops():
        n = system.mode(e.source).n
        diff = image(e.reset - np.eye(n), tol)
        unobs = kernel(observability_matrix(system.mode(e.source)), tol)
        meet = diff.intersect(unobs)
        edge_ok = meet.dim == 0
        per_edge[e.pair] = (edge_ok, meet.dim)
        holds = holds and edge_ok
    return LoopResetCondition(holds, per_edge)


def appendix_blocks(
    pair: AugmentedPair, gain: np.ndarray, nbar: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked feedback observability block M and unit lower-triangular
    block-Toeplitz F for the closed loop Ahat = A + B K.

    M stacks K, K Ahat, ..., K Ahat^nbar; F has identity diagonal blocks
    and K Ahat^(r-c-1) B below it, so the stack of input derivatives along
    an output-nulling motion equals M z + F (v, vdot, ..., v^(nbar)).
    """
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    m, n = gain.shape
    Ahat = pair.A + pair.B @ gain
    rows = [gain]
    for _ in range(nbar):
        rows.append(rows[-1] @ Ahat)
    Mbar = np.vstack(rows)

    Fbar = np.eye(m * (nbar + 1))
    # sub[j] = K Ahat^j B fills the j+1-th sub-diagonal of blocks
    sub = []
    P = gain
    for _ in range(nbar):
        sub.append(P @ pair.B)
        P = P @ Ahat
    for r in range(nbar + 1):
        for c in range(r):
            Fbar[r * m : (r + 1) * m, c * m : (c + 1) * m] = sub[r - c - 1]
    return Mbar, Fbar


@dataclass(frozen=True)
class ExponentialInput:
    """Input u(t) = z exp(lam t); smooth, with closed-form derivatives."""

    z: np.ndarray
    lam: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).reshape(-1)
        if z.size == 0 or not np.all(np.isfinite(z)):
            raise ValueError("z must be a nonempty finite vector")
        z = z.copy()
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def input_dim(self) -> int:
        return self.z.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        return self.z * math.exp(self.lam * t)

    def derivative(self, t: float, order: int) -> np.ndarray:
        return (self.lam**order) * self.z * math.exp(self.lam * t)


@dataclass(frozen=True)
class _PairSearchData:
    i: str
    h: str
    nbar: int
    avoided: Subspace


def _avoided_subspace(
    pair: AugmentedPair, V: Subspace, gain: np.ndarray, nbar: int, tol: float
) -> Subspace:
    """Derivative stacks of inputs that can silence the pair forever."""
    Mbar, Fbar = appendix_blocks(pair, gain, nbar)
    gens = [Mbar @ V.basis] if V.dim else []
    Fset = preimage(pair.B, V, tol)  # admissible feedforward directions
    if Fset.dim:
        copies = np.kron(np.eye(nbar + 1), Fset.basis)
        gens.append(Fbar @ copies)
    if not gens:
        return Subspace.zero(Mbar.shape[0], tol)
    return image(np.hstack(gens), tol)


def _stacked_candidate(z: np.ndarray, lam: float, nbar: int) -> np.ndarray:
    return np.concatenate([(lam**j) * z for j in range(nbar + 1)])


def _lambda_sequence():
    yield 0.0
    k = 1
    while True:
        yield float(k)
        yield float(-k)
        k += 1


def distinguishing_input(
    system: SwitchingSystem,
    tol: float = REL_TOL,
    max_lambdas: int = 32,
    attempts_per_lambda: int = 64,
    separation: float = 1e-6,
    seed: int = 0,
) -> ExponentialInput:
    """Search for u(t) = z exp(lam t) whose derivative stack avoids, for
    every ordered pair, the subspace of silencing input stacks.

    lam is scanned over 0, 1, -1, 2, -2, ... and z over random unit
    vectors; a candidate passes when its stack keeps a relative distance
    above ``separation`` from every avoided subspace.  Raises
    LocationUnobservable when the precondition fails and NoWitnessFound
    when the budget runs out.
    """
    loc = location_observability_test(system, tol)
    if not loc.verdict:
        bad = sorted(p for p, c in loc.pairs.items() if not c.distinguishable)
        raise LocationUnobservable(f"indistinguishable mode pairs: {bad}")

    m = system.input_dim
    search: list[_PairSearchData] = []
    for (i, h), cert in loc.pairs.items():
        pair = augmented_pair(system, i, h)
        V = cert.invariant
        gain = friend_gain(pair, V, tol)
        Fset = preimage(pair.B, V, tol)
        nu = Fset.dim
        n = pair.dim
        if nu >= m:
            # cannot happen for a distinguishable pair; fail loudly
            raise RuntimeError(f"pair ({i},{h}): feedforward set fills the input space")
        nbar = int(math.floor(n / (m - nu) - 1.0)) + 1
        nbar = min(max(nbar, 0), n + 2)
        avoided = _avoided_subspace(pair, V, gain, nbar, tol)
        search.append(_PairSearchData(i, h, nbar, avoided))

    rng = np.random.default_rng(seed)
    lam_iter = _lambda_sequence()
    for _ in range(max_lambdas):
        lam = next(lam_iter)
        attempts = 1 if m == 1 else attempts_per_lambda
        for _ in range(attempts):
            if m == 1:
                z = np.ones(1)
            else:
                z = rng.standard_normal(m)
                z /= np.linalg.norm(z)
            ok = True
            for data in search:
                zz = _stacked_candidate(z, lam, data.nbar)
                nz = float(np.linalg.norm(zz))
                if nz == 0.0 or data.avoided.distance(zz) <= separation * nz:
                    ok = False
                    break
            if ok:
                return ExponentialInput(z, lam)
    raise NoWitnessFound(
        f"no distinguishing exponential found within {max_lambdas} rates"
    )


def verify_distinguishing_input(
    system: SwitchingSystem,
    u,
    horizon: float = 2.0,
    dt: float = 1e-3,
    tol: float = 1e-6,
) -> bool:
    """Check by simulation that ``u`` excites every pairwise difference.

    Each augmented pair is integrated (fixed-step RK4) from the zero state
    and from every canonical basis state; the input passes when every probe
    produces an output whose peak norm exceeds ``tol``.
    """
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    steps = int(round(horizon / dt))
    labels = system.labels
    for i in labels:
        for h in labels:
            if i == h:
                continue
            pair = augmented_pair(system, i, h)
            n = pair.dim
            X = np.hstack([np.eye(n), np.zeros((n, 1))])  # probes as columns
            peak = np.linalg.norm(pair.C @ X, axis=0)

            def rhs(t: float, Xc: np.ndarray) -> np.ndarray:
                return pair.A @ Xc + np.outer(pair.B @ np.asarray(u(t), dtype=float), np.ones(n + 1))

            t = 0.0
            for _ in range(steps):
                k1 = rhs(t, X)
                k2 = rhs(t + dt / 2, X + dt / 2 * k1)
                k3 = rhs(t + dt / 2, X + dt / 2 * k2)
                k4 = rhs(t + dt, X + dt * k3)
                X = X + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                t += dt
                peak = np.maximum(peak, np.linalg.norm(pair.C @ X, axis=0))
            if float(peak.min()) <= tol:
                return False
    return True
