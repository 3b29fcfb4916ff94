"""Certificate-based stability of guarded cores, and the detectability
and observability verdicts built on top of it.

The engine is a sound but incomplete search: Stable and Unstable verdicts
always carry a replayable certificate (a Lyapunov matrix, a structural
argument, or a divergent cycle witness) and Unknown is returned whenever
no certificate is found within budget.  Analysis runs per strongly
connected component of the core's transition graph.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .decomposition import (
    GuardedCore,
    SCComponent,
    autonomous_part,
    build_abstractions,
    build_core,
    restrict,
    scc_decomposition,
    unobservable_modes,
)
from .location import (
    LocationObservability,
    LoopResetCondition,
    location_observability_test,
    loop_reset_condition,
)
from .model import SwitchingSystem, is_mode_observable
from .simulator import flow_map
from .subspaces import REL_TOL

__all__ = [
    "StabilityConfig",
    "CommonLyapunov",
    "GuardAtOrigin",
    "ZeroResetCut",
    "AbstractionStable",
    "DivergentWitness",
    "EmptyCore",
    "TransientHurwitz",
    "ComponentVerdict",
    "StabilityVerdict",
    "hurwitz",
    "spectral_abscissa",
    "common_quadratic_lyapunov",
    "replay_lyapunov",
    "replay_witness",
    "guarded_stability",
    "DetectabilityResult",
    "detectability",
    "observability",
]

STABLE = "Stable"
UNSTABLE = "Unstable"
UNKNOWN = "Unknown"


@dataclass(frozen=True)
class StabilityConfig:
    tol: float = 1e-9
    dwell_grid: tuple[float, ...] = (0.05, 0.1, 0.2, 0.5, 1.0)
    max_cycle_len: int = 6
    max_witness_checks: int = 200_000
    lyap_max_iter: int = 400
    guard_tol: float = 1e-7


# -- certificates --------------------------------------------------------


@dataclass(frozen=True)
class CommonLyapunov:
    """Shared quadratic V = x'Px decreasing along every mode's flow, with
    resets satisfying R'PR <= P."""

    P: np.ndarray
    kind: str = "CommonLyapunov"


@dataclass(frozen=True)
class GuardAtOrigin:
    """Single mode whose in-loop jumps can only fire from the origin (or
    reset the guard content to zero), with Hurwitz flow."""

    edges: tuple[tuple[str, str], ...]
    kind: str = "GuardAtOrigin"


@dataclass(frozen=True)
class ZeroResetCut:
    """All modes Hurwitz and every cycle passes a zero reset, so any
    infinite run eventually holds the zero state."""

    zero_edges: tuple[tuple[str, str], ...]
    kind: str = "PerModeHurwitzWithZeroResetCycle"


@dataclass(frozen=True)
class AbstractionStable:
    """The guard-free over-approximation named by ``which`` is stable."""

    which: str  # "H1" | "H2"
    inner: object
    kind: str = "AbstractionStable"


@dataclass(frozen=True)
class DivergentWitness:
    """A cycle (or a single mode to dwell in) whose one-round linear map
    has spectral radius above one while respecting guards.

    ``edges`` lists the traversed transitions in order; it is empty for a
    stay-put witness that never jumps.
    """

    modes: tuple[str, ...]
    dwells: tuple[float, ...]
    edges: tuple[tuple[str, str], ...]
    growth: float
    kind: str = "DivergentWitness"


@dataclass(frozen=True)
class EmptyCore:
    """No unobservable coordinates at all; stability is vacuous."""

    kind: str = "EmptyCore"


@dataclass(frozen=True)
class TransientHurwitz:
    """Pass-through mode outside every cycle with Hurwitz flow."""

    label: str
    kind: str = "TransientHurwitz"


@dataclass(frozen=True)
class ComponentVerdict:
    labels: tuple[str, ...]
    transient: bool
    status: str
    certificate: object | None


@dataclass(frozen=True)
class StabilityVerdict:
    status: str
    components: tuple[ComponentVerdict, ...]

    @property
    def certificate(self):
        """The deciding certificate: a witness when Unstable, the tuple of
        per-component certificates when Stable, None when Unknown."""
        if self.status == UNSTABLE:
            for cv in self.components:
                if cv.status == UNSTABLE:
                    return cv.certificate
            return None
        if self.status == STABLE:
            return tuple(cv.certificate for cv in self.components)
        return None


# -- scalar building blocks ----------------------------------------------


def spectral_abscissa(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return -math.inf
    return float(np.max(np.real(np.linalg.eigvals(A))))


def hurwitz(A, tol: float = 1e-9) -> bool:
    """All eigenvalues strictly left of -tol; an empty matrix passes."""
    return spectral_abscissa(A) < -tol


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


def _lyap_feasible(P: np.ndarray, mats, tol: float) -> bool:
    if np.min(np.linalg.eigvalsh(_sym(P))) <= tol:
        return False
    for A in mats:
        Q = _sym(A.T @ P + P @ A)
        if np.max(np.linalg.eigvalsh(Q)) >= -tol:
            return False
    return True


def common_quadratic_lyapunov(
    mats, tol: float = 1e-9, max_iter: int = 400
) -> np.ndarray | None:
    """Search for P > tol*I with A'P + PA < -tol*I for every A.

    Tries P = I first, then alternates between clamping each Lyapunov image
    onto the strictly-negative cone (pulling back through the Lyapunov
    equation) and projecting P onto {P >= I}.  Returns None when the
    budget runs out; a None is inconclusive, not a disproof.
    """
    mats = [np.asarray(A, dtype=float) for A in mats]
    if not mats:
        raise ValueError("need at least one matrix")
    n = mats[0].shape[0]
    for A in mats:
        if A.shape != (n, n):
            raise ValueError("all matrices must share one square shape")
    if n == 0:
        return np.zeros((0, 0))
    if not all(hurwitz(A, tol) for A in mats):
        return None

    eye = np.eye(n)
    if _lyap_feasible(eye, mats, tol):
        return eye

    scale = max(1.0, max(float(np.linalg.norm(A, 2)) for A in mats))
    eps = max(1e-6 * scale, 100.0 * tol)

    # start from the average of the per-mode Lyapunov solutions
    P = _sym(
        sum(scipy.linalg.solve_continuous_lyapunov(A.T, -eye) for A in mats) / len(mats)
    )
    for _ in range(max_iter):
        pulled = []
        for A in mats:
            Q = _sym(A.T @ P + P @ A)
            w, V = np.linalg.eigh(Q)
            w_clamped = np.minimum(w, -eps)
            if np.allclose(w, w_clamped):
                pulled.append(P)
            else:
                Qneg = V @ np.diag(w_clamped) @ V.T
                pulled.append(_sym(scipy.linalg.solve_continuous_lyapunov(A.T, Qneg)))
        P = _sym(sum(pulled) / len(pulled))
        w, V = np.linalg.eigh(P)
        P = V @ np.diag(np.maximum(w, 1.0)) @ V.T
        if _lyap_feasible(P, mats, tol):
            return P
    return None


def replay_lyapunov(P, mats, resets=(), tol: float = 1e-9) -> bool:
    """Independent check of a CommonLyapunov certificate."""
    P = _sym(np.asarray(P, dtype=float))
    if not _lyap_feasible(P, [np.asarray(A, dtype=float) for A in mats], tol):
        return False
    for R in resets:
        R = np.asarray(R, dtype=float)
        J = _sym(R.T @ P @ R - P)
        if np.max(np.linalg.eigvalsh(J)) > 100.0 * tol * max(1.0, float(np.linalg.norm(P, 2))):
            return False
    return True


def replay_witness(core: GuardedCore, witness: DivergentWitness) -> float:
    """Spectral radius of the witness's one-round map, recomputed from the
    core via exact flow maps and resets."""
    M = np.eye(core.dim(witness.modes[0]))
    for j, label in enumerate(witness.modes):
        M = flow_map(core.modes[label], witness.dwells[j]) @ M
        if j < len(witness.edges):
            M = core.edge(*witness.edges[j]).reset @ M
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


# -- certificate search ----------------------------------------------------


def _reset_norm(R: np.ndarray) -> float:
    return float(np.linalg.norm(R, 2)) if R.size else 0.0


def _acyclic(labels, pairs) -> bool:
    comps = scc_decomposition(labels, pairs)
    return all(c.transient for c in comps)


def _try_guard_at_origin(sub: GuardedCore, cfg: StabilityConfig):
    if len(sub.labels) != 1:
        return None
    label = sub.labels[0]
    loops = [e for e in sub.edges if e.source == e.target == label]
    if not loops:
        return None
    for e in loops:
        neutral = e.guard.dim == 0 or _reset_norm(
            e.reset @ e.guard.projector()
        ) <= max(1e-10, 10 * cfg.tol)
        if not neutral:
            return None
    if not hurwitz(sub.modes[label], cfg.tol):
        return None
    return GuardAtOrigin(tuple((e.source, e.target) for e in loops))


def _try_common_lyapunov(sub: GuardedCore, cfg: StabilityConfig):
    dims = {A.shape[0] for A in sub.modes.values()}
    if len(dims) != 1:
        return None
    mats = list(sub.modes.values())
    if not all(hurwitz(A, cfg.tol) for A in mats):
        return None
    P = common_quadratic_lyapunov(mats, cfg.tol, cfg.lyap_max_iter)
    if P is None:
        return None
    scaleP = max(1.0, float(np.linalg.norm(P, 2)))
    for e in sub.edges:
        J = _sym(e.reset.T @ P @ e.reset - P)
        if J.size and np.max(np.linalg.eigvalsh(J)) > 100.0 * cfg.tol * scaleP:
            return None
    return CommonLyapunov(P)


def _try_zero_reset_cut(sub: GuardedCore, cfg: StabilityConfig):
    if not all(hurwitz(A, cfg.tol) for A in sub.modes.values()):
        return None
    zero_edges = [e for e in sub.edges if _reset_norm(e.reset) <= max(1e-10, 10 * cfg.tol)]
    if not zero_edges:
        return None
    zero_set = {(e.source, e.target) for e in zero_edges}
    remaining = [p for p in sub.edge_pairs() if p not in zero_set]
    if not _acyclic(sub.labels, remaining):
        return None
    return ZeroResetCut(tuple(sorted(zero_set)))


def _stable_certificate(sub: GuardedCore, cfg: StabilityConfig, allow_abstractions: bool):
    cert = _try_guard_at_origin(sub, cfg)
    if cert is not None:
        return cert
    cert = _try_common_lyapunov(sub, cfg)
    if cert is not None:
        return cert
    cert = _try_zero_reset_cut(sub, cfg)
    if cert is not None:
        return cert
    if allow_abstractions and not sub.is_guard_free():
        h1, h2 = build_abstractions(sub)
        for name, abstraction in (("H1", h1), ("H2", h2)):
            inner = _stable_certificate(abstraction, cfg, allow_abstractions=False)
            if inner is not None:
                return AbstractionStable(name, inner)
    return None


def _simple_cycles(labels, pairs, max_len):
    """Yield simple cycles as label tuples (first node is the smallest)."""
    order = sorted(labels)
    adj: dict[str, list[str]] = {v: [] for v in order}
    for s, t in pairs:
        adj[s].append(t)
    for v in adj:
        adj[v].sort()
    for start in order:
        stack = [(start, [start])]
        while stack:
            node, path = stack.pop()
            for nxt in adj[node]:
                if nxt == start:
                    yield tuple(path)
                elif nxt > start and nxt not in path and len(path) < max_len:
                    stack.append((nxt, path + [nxt]))


def _witness_admissible(sub: GuardedCore, cycle, dwells, M, cfg: StabilityConfig) -> bool:
    L = len(cycle)
    edges = [sub.edge(cycle[j], cycle[(j + 1) % L]) for j in range(L)]
    if all(e.guard.is_full() for e in edges):
        return True
    w, V = np.linalg.eig(M)
    idx = int(np.argmax(np.abs(w)))
    if abs(w[idx].imag) > 1e-9 * (abs(w[idx]) + 1.0):
        return False  # conservative: only real dominant directions checked
    v = np.real(V[:, idx])
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return False
    x = v / nv
    for j in range(L):
        pre = flow_map(sub.modes[cycle[j]], dwells[j]) @ x
        guard = edges[j].guard
        if not guard.is_full():
            npre = float(np.linalg.norm(pre))
            if npre > 1e-12 and guard.distance(pre) > cfg.guard_tol * npre:
                return False
        x = edges[j].reset @ pre
    return True


def _divergence_witness(sub: GuardedCore, cfg: StabilityConfig):
    # dwelling forever in one mode is always admissible
    for label, A in sub.modes.items():
        alpha = spectral_abscissa(A)
        if alpha > cfg.tol:
            return DivergentWitness((label,), (1.0,), (), float(math.exp(alpha)))

    flow_cache: dict[tuple[str, float], np.ndarray] = {}

    def cached_flow(label: str, tau: float) -> np.ndarray:
        key = (label, tau)
        if key not in flow_cache:
            flow_cache[key] = flow_map(sub.modes[label], tau)
        return flow_cache[key]

    budget = cfg.max_witness_checks
    pairs = sub.edge_pairs()
    for length in range(1, cfg.max_cycle_len + 1):
        for cycle in _simple_cycles(sub.labels, pairs, cfg.max_cycle_len):
            if len(cycle) != length:
                continue
            L = len(cycle)
            edges = [sub.edge(cycle[j], cycle[(j + 1) % L]) for j in range(L)]
            for dwells in itertools.product(cfg.dwell_grid, repeat=L):
                budget -= 1
                if budget < 0:
                    return None
                M = np.eye(sub.dim(cycle[0]))
                for j in range(L):
                    M = edges[j].reset @ (cached_flow(cycle[j], dwells[j]) @ M)
                if M.shape[0] == 0:
                    continue
                rho = float(np.max(np.abs(np.linalg.eigvals(M))))
                if rho > 1.0 + cfg.tol and _witness_admissible(sub, cycle, dwells, M, cfg):
                    cycle_edges = tuple(
                        (cycle[j], cycle[(j + 1) % L]) for j in range(L)
                    )
                    return DivergentWitness(cycle, dwells, cycle_edges, rho)
    return None


def guarded_stability(core: GuardedCore, config: StabilityConfig | None = None) -> StabilityVerdict:
    """Tri-state stability of a guarded core.

    Strongly connected components are analyzed separately (sources first)
    and combined conjunctively.  Transient singletons skip the certificate
    search but must still be Hurwitz, since an execution may dwell in any
    mode forever.
    """
    cfg = config or StabilityConfig()
    comps = scc_decomposition(core.labels, core.edge_pairs())
    verdicts: list[ComponentVerdict] = []
    for comp in comps:
        if comp.transient:
            label = comp.labels[0]
            alpha = spectral_abscissa(core.modes[label])
            if alpha < -cfg.tol:
                verdicts.append(
                    ComponentVerdict(comp.labels, True, STABLE, TransientHurwitz(label))
                )
            elif alpha > cfg.tol:
                witness = DivergentWitness((label,), (1.0,), (), float(math.exp(alpha)))
                verdicts.append(ComponentVerdict(comp.labels, True, UNSTABLE, witness))
            else:
                verdicts.append(ComponentVerdict(comp.labels, True, UNKNOWN, None))
            continue
        sub = core.subgraph(comp.labels)
        cert = _stable_certificate(sub, cfg, allow_abstractions=True)
        if cert is not None:
            verdicts.append(ComponentVerdict(comp.labels, False, STABLE, cert))
            continue
        witness = _divergence_witness(sub, cfg)
        if witness is not None:
            verdicts.append(ComponentVerdict(comp.labels, False, UNSTABLE, witness))
        else:
            verdicts.append(ComponentVerdict(comp.labels, False, UNKNOWN, None))

    statuses = {cv.status for cv in verdicts} or {STABLE}
    if UNSTABLE in statuses:
        overall = UNSTABLE
    elif statuses == {STABLE}:
        overall = STABLE
    else:
        overall = UNKNOWN
    return StabilityVerdict(overall, tuple(verdicts))


# -- top-level verdicts ----------------------------------------------------

DETECTABLE = "Detectable"
NOT_DETECTABLE = "NotDetectable"


@dataclass(frozen=True)
class DetectabilityResult:
    status: str  # Detectable | NotDetectable | Unknown
    location: LocationObservability
    loop_reset: LoopResetCondition
    stability: StabilityVerdict
    unobservable: tuple[str, ...]
    core: GuardedCore | None
    guard_free: bool
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def cond_i(self) -> bool:
        return self.location.verdict

    @property
    def cond_ii(self) -> bool:
        return self.loop_reset.holds

    @property
    def cond_iii(self) -> StabilityVerdict:
        return self.stability


def detectability(
    system: SwitchingSystem,
    config: StabilityConfig | None = None,
    tol: float = REL_TOL,
) -> DetectabilityResult:
    """Compose the three conditions into a detectability verdict.

    Detectable requires location observability, the cycle-reset condition,
    and a Stable core.  NotDetectable follows from a failed location test,
    or from an Unstable core on a guard-free system (with guards the
    instability of the core need not be reachable, so the verdict degrades
    to Unknown).  Everything else is Unknown.
    """
    cfg = config or StabilityConfig(tol=tol)
    loc = location_observability_test(system, tol)
    lrc = loop_reset_condition(system, tol)
    qhat = unobservable_modes(system, tol)
    notes: list[str] = []
    if qhat:
        core = build_core(restrict(autonomous_part(system), qhat), tol)
        stab = guarded_stability(core, cfg)
    else:
        core = None
        stab = StabilityVerdict(STABLE, (ComponentVerdict((), False, STABLE, EmptyCore()),))
        notes.append("every mode observable; core stability is vacuous")

    guard_free = system.is_guard_free()
    if loc.verdict and lrc.holds and stab.status == STABLE:
        status = DETECTABLE
    elif not loc.verdict:
        status = NOT_DETECTABLE
    elif stab.status == UNSTABLE and guard_free:
        status = NOT_DETECTABLE
    else:
        status = UNKNOWN
        if stab.status == UNSTABLE and not guard_free:
            notes.append(
                "core instability found, but guards may block the diverging runs; "
                "necessity only holds without guards"
            )
    return DetectabilityResult(
        status, loc, lrc, stab, qhat, core, guard_free, tuple(notes)
    )


def observability(system: SwitchingSystem, tol: float = REL_TOL) -> bool:
    """Location observability plus full-rank observability in every mode."""
    if not location_observability_test(system, tol).verdict:
        return False
    return all(is_mode_observable(m, tol) for m in system.modes.values())
