"""Observability canonical form and the guarded unobservable core.

Each mode is split into observable and unobservable coordinates by an
orthogonal change of basis T.  Restricting the autonomous system to its
unobservable modes and projecting every reset onto the split yields a
guarded core: the unobservable blocks A22 as dynamics, kernel(R12) as
guards, and R22 as resets.  Two guard-free abstractions derive from it,
one dropping guards and one composing each reset with the guard projector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Edge, LtiMode, SwitchingSystem, observability_matrix
from .subspaces import ABS_FLOOR, REL_TOL, Subspace, kernel

__all__ = [
    "CanonicalMode",
    "canonical_form",
    "autonomous_part",
    "restrict",
    "unobservable_modes",
    "CoreEdge",
    "GuardedCore",
    "build_core",
    "build_abstractions",
    "SCComponent",
    "scc_decomposition",
]


@dataclass(frozen=True)
class CanonicalMode:
    """Observability split of one mode.

    T is orthogonal with x_canonical = T x; the transformed matrices have
    the block shape A = [[A11, 0], [A21, A22]], C = [C1, 0] where the pair
    (A11, C1) is observable and A22 (d x d) drives the unobservable part.
    """

    label: str
    T: np.ndarray
    A11: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    C1: np.ndarray
    d: int


def canonical_form(mode: LtiMode, tol: float = REL_TOL) -> CanonicalMode:
    """Observability canonical form of a single mode.

    When the mode is already in canonical block shape the identity
    transform is returned; otherwise T comes from the right singular
    vectors of the observability matrix (descending singular values first,
    kernel directions last).
    """
    n = mode.n
    O = observability_matrix(mode)
    _, s, Vt = np.linalg.svd(O)
    thr = max(tol * (s[0] if s.size else 0.0), ABS_FLOOR)
    rank = int(np.sum(s > thr))
    d = n - rank

    if d == 0:
        T = np.eye(n)
        return CanonicalMode(
            mode.label, T, mode.A.copy(), np.zeros((0, n)), np.zeros((0, 0)),
            mode.C.copy(), 0,
        )

    split = n - d
    scale = max(1.0, float(np.abs(mode.A).max()), float(np.abs(mode.C).max()))
    atol = 10.0 * tol * scale
    already = (
        float(np.abs(mode.A[:split, split:]).max(initial=0.0)) <= atol
        and float(np.abs(mode.C[:, split:]).max(initial=0.0)) <= atol
    )
    T = np.eye(n) if already else Vt
    At = T @ mode.A @ T.T
    Ct = mode.C @ T.T
    # ker(O) is A-invariant, so the upper-right block must vanish.
    if float(np.abs(At[:split, split:]).max(initial=0.0)) > max(atol, 1e-8 * scale):
        raise RuntimeError(f"mode {mode.label}: canonical split failed to zero the coupling block")
    return CanonicalMode(
        mode.label,
        T,
        At[:split, :split],
        At[split:, :split],
        At[split:, split:],
        Ct[:, :split],
        d,
    )


def autonomous_part(system: SwitchingSystem) -> SwitchingSystem:
    """Copy of the system with every input matrix zeroed."""
    modes = [
        LtiMode(m.label, m.A, np.zeros_like(m.B), m.C) for m in system.modes.values()
    ]
    return SwitchingSystem(modes, system.edges, name=system.name)


def restrict(system: SwitchingSystem, labels) -> SwitchingSystem:
    """Sub-system on the given labels; keeps edges with both endpoints inside."""
    keep = set(labels)
    unknown = keep - set(system.labels)
    if unknown:
        raise ValueError(f"unknown mode labels {sorted(unknown)}")
    if not keep:
        raise ValueError("cannot restrict to an empty label set")
    modes = [m for lab, m in system.modes.items() if lab in keep]
    edges = [e for e in system.edges if e.source in keep and e.target in keep]
    return SwitchingSystem(modes, edges, name=system.name)


def unobservable_modes(system: SwitchingSystem, tol: float = REL_TOL) -> tuple[str, ...]:
    """Labels whose observability matrix is rank deficient, in system order."""
    out = []
    for label, mode in system.modes.items():
        if canonical_form(mode, tol).d > 0:
            out.append(label)
    return tuple(out)


@dataclass(frozen=True)
class CoreEdge:
    """Transition of the guarded core: z+ = reset z- allowed for z- in guard."""

    source: str
    target: str
    reset: np.ndarray
    guard: Subspace
    coupling: np.ndarray  # the R12 block whose kernel defines the guard


class GuardedCore:
    """Finite-state machine over the unobservable blocks."""

    def __init__(self, modes: dict[str, np.ndarray], edges, canonical=None, name: str = ""):
        self.modes: dict[str, np.ndarray] = {k: np.asarray(v, dtype=float) for k, v in modes.items()}
        self.edges: tuple[CoreEdge, ...] = tuple(edges)
        self.canonical: dict[str, CanonicalMode] = dict(canonical or {})
        self.name = name
        self._edge_map = {(e.source, e.target): e for e in self.edges}
        for e in self.edges:
            if e.source not in self.modes or e.target not in self.modes:
                raise ValueError(f"core edge {e.source}->{e.target} references unknown mode")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.modes)

    def dim(self, label: str) -> int:
        return self.modes[label].shape[0]

    def edge(self, source: str, target: str) -> CoreEdge:
        return self._edge_map[(source, target)]

    def edge_pairs(self) -> list[tuple[str, str]]:
        return [(e.source, e.target) for e in self.edges]

    def is_guard_free(self) -> bool:
        return all(e.guard.is_full() for e in self.edges)

    def subgraph(self, labels) -> "GuardedCore":
        keep = set(labels)
        return GuardedCore(
            {k: v for k, v in self.modes.items() if k in keep},
            [e for e in self.edges if e.source in keep and e.target in keep],
            {k: v for k, v in self.canonical.items() if k in keep},
            name=self.name,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "modes": {
                label: {
                    "A22": A.tolist(),
                    "spectrum": sorted(
                        [complex(z).real for z in np.linalg.eigvals(A)] if A.size else []
                    ),
                }
                for label, A in self.modes.items()
            },
            "edges": [
                {
                    "from": e.source,
                    "to": e.target,
                    "reset": e.reset.tolist(),
                    "coupling": e.coupling.tolist(),
                    "guard_dim": e.guard.dim,
                    "guard_full": e.guard.is_full(),
                }
                for e in self.edges
            ],
        }

    def __repr__(self) -> str:
        return f"GuardedCore({len(self.modes)} modes, {len(self.edges)} edges)"


def build_core(system: SwitchingSystem, tol: float = REL_TOL) -> GuardedCore:
    """Guarded core of a system whose modes are all unobservable.

    Raises ``ValueError`` naming the first fully observable mode, since an
    observable mode contributes no unobservable coordinates.
    """
    canon: dict[str, CanonicalMode] = {}
    for label, mode in system.modes.items():
        cf = canonical_form(mode, tol)
        if cf.d == 0:
            raise ValueError(f"mode {label} is observable; the core is defined on unobservable modes")
        canon[label] = cf

    core_modes = {label: cf.A22 for label, cf in canon.items()}
    core_edges = []
    for e in system.edges:
        cf_src = canon[e.source]
        cf_tgt = canon[e.target]
        Rt = cf_tgt.T @ e.reset @ cf_src.T.T
        rows_split = cf_tgt.T.shape[0] - cf_tgt.d
        cols_split = cf_src.T.shape[0] - cf_src.d
        R12 = Rt[:rows_split, cols_split:]
        R22 = Rt[rows_split:, cols_split:]
        guard = kernel(R12, tol) if R12.shape[0] else Subspace.full(cf_src.d, tol)
        core_edges.append(CoreEdge(e.source, e.target, R22, guard, R12))
    return GuardedCore(core_modes, core_edges, canon, name=system.name)


def build_abstractions(core: GuardedCore) -> tuple[GuardedCore, GuardedCore]:
    """Two guard-free over-approximations of a guarded core.

    The first drops every guard; the second additionally composes each
    reset with the orthogonal projector onto its guard, so that jumps act
    only on the part of the state the guard admits.  Stability of either
    one implies stability of the guarded core.
    """
    dropped = []
    projected = []
    for e in core.edges:
        full = Subspace.full(e.guard.ambient_dim, e.guard.tol)
        dropped.append(CoreEdge(e.source, e.target, e.reset, full, e.coupling))
        projected.append(
            CoreEdge(e.source, e.target, e.reset @ e.guard.projector(), full, e.coupling)
        )
    h1 = GuardedCore(core.modes, dropped, core.canonical, name=f"{core.name}:H1" if core.name else "H1")
    h2 = GuardedCore(core.modes, projected, core.canonical, name=f"{core.name}:H2" if core.name else "H2")
    return h1, h2


@dataclass(frozen=True)
class SCComponent:
    """One strongly connected component; transient = singleton without self-loop."""

    labels: tuple[str, ...]
    transient: bool


def scc_decomposition(nodes, edges) -> list[SCComponent]:
    """Strongly connected components in topological order (sources first).

    ``edges`` is an iterable of (source, target) label pairs.  Components
    are returned with sorted label tuples; a singleton component with no
    self-loop is flagged transient.
    """
    nodes = list(nodes)
    pairs = [(s, t) for s, t in edges]
    adj: dict[str, list[str]] = {v: [] for v in nodes}
    for s, t in pairs:
        if s not in adj or t not in adj:
            raise ValueError(f"edge ({s}, {t}) references unknown node")
        adj[s].append(t)

    index: dict[str, int] = {}
    low: dict[str, int] = {}
    stack: list[str] = []
    onstack: set[str] = set()
    comps: list[set[str]] = []
    counter = [0]

    def strongconnect(v: str) -> None:
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        onstack.add(v)
        for w in adj[v]:
            if w not in index:
                strongconnect(w)
                low[v] = min(low[v], low[w])
            elif w in onstack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = set()
            while True:
                w = stack.pop()
                onstack.discard(w)
                comp.add(w)
                if w == v:
                    break
            comps.append(comp)

    for v in nodes:
        if v not in index:
            strongconnect(v)

    # Tarjan emits components in reverse topological order; flip it and
    # break ties deterministically by smallest member label.
    comp_of = {}
    for k, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = k
    succ: dict[int, set[int]] = {k: set() for k in range(len(comps))}
    indeg = {k: 0 for k in range(len(comps))}
    for s, t in pairs:
        a, b = comp_of[s], comp_of[t]
        if a != b and b not in succ[a]:
            succ[a].add(b)
            indeg[b] += 1
    ready = sorted(
        (k for k in range(len(comps)) if indeg[k] == 0),
        key=lambda k: min(comps[k]),
    )
    ordered: list[int] = []
    while ready:
        k = ready.pop(0)
        ordered.append(k)
        grown = []
        for b in succ[k]:
            indeg[b] -= 1
            if indeg[b] == 0:
                grown.append(b)
        ready = sorted(ready + grown, key=lambda q: min(comps[q]))

    selfloops = {s for s, t in pairs if s == t}
    out = []
    for k in ordered:
        comp = comps[k]
        transient = len(comp) == 1 and next(iter(comp)) not in selfloops
        out.append(SCComponent(tuple(sorted(comp)), transient))
    return out
