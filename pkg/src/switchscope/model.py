"""Switching-system data model: modes, guarded edges, (de)serialization.

A system is a finite set of LTI modes (A_i, B_i, C_i) with shared input and
output dimensions, plus directed edges carrying a linear reset map and a
guard subspace.  Guard kind "full" marks the unconstrained case; systems in
which every guard is full are the purely time-driven ones, and several
verdicts are only two-sided for those.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .subspaces import REL_TOL, Subspace, as_matrix, image, kernel

__all__ = [
    "SystemFormatError",
    "InLoopIdentityReset",
    "LtiMode",
    "GuardSpec",
    "GUARD_FULL",
    "Edge",
    "SwitchingSystem",
    "load_system",
    "save_system",
    "observability_matrix",
    "markov_parameter",
    "is_mode_observable",
    "forced_response_matrix",
]


class SystemFormatError(ValueError):
    """Raised when a system document or its matrices are malformed."""


class InLoopIdentityReset(SystemFormatError):
    """A self-loop reset equal to the identity would be invisible."""


def _frozen(M: np.ndarray) -> np.ndarray:
    out = np.array(M, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LtiMode:
    """One discrete location with dynamics xdot = A x + B u, y = C x."""

    label: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, f"A[{self.label}]")
        B = as_matrix(self.B, f"B[{self.label}]")
        C = as_matrix(self.C, f"C[{self.label}]")
        n = A.shape[0]
        if A.shape != (n, n):
            raise SystemFormatError(f"mode {self.label}: A must be square, got {A.shape}")
        if n == 0:
            raise SystemFormatError(f"mode {self.label}: empty state space")
        if B.shape[0] != n:
            raise SystemFormatError(
                f"mode {self.label}: B has {B.shape[0]} rows, expected {n}"
            )
        if C.shape[1] != n:
            raise SystemFormatError(
                f"mode {self.label}: C has {C.shape[1]} columns, expected {n}"
            )
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    @property
    def output_dim(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class GuardSpec:
    """Guard subspace encoding: full space, kernel(M), or span of columns."""

    kind: str
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("full", "kernel", "span"):
            raise SystemFormatError(f"unknown guard kind {self.kind!r}")
        if self.kind == "full":
            if self.matrix is not None:
                raise SystemFormatError("full guard takes no matrix")
        else:
            if self.matrix is None:
                raise SystemFormatError(f"{self.kind} guard needs a matrix")
            object.__setattr__(self, "matrix", _frozen(as_matrix(self.matrix, "guard")))

    def is_full(self) -> bool:
        return self.kind == "full"

    def subspace(self, ambient_dim: int, tol: float = REL_TOL) -> Subspace:
        """Resolve to a concrete subspace of R^ambient_dim."""
        if self.kind == "full":
            return Subspace.full(ambient_dim, tol)
        M = self.matrix
        if self.kind == "kernel":
            if M.shape[1] != ambient_dim:
                raise SystemFormatError(
                    f"kernel guard has {M.shape[1]} columns, expected {ambient_dim}"
                )
            return kernel(M, tol)
        if M.shape[0] != ambient_dim:
            raise SystemFormatError(
                f"span guard has {M.shape[0]} rows, expected {ambient_dim}"
            )
        return image(M, tol)


GUARD_FULL = GuardSpec("full")


@dataclass(frozen=True)
class Edge:
    """Directed transition with linear reset x+ = R x- and a guard."""

    source: str
    target: str
    reset: np.ndarray
    guard: GuardSpec = GUARD_FULL

    def __post_init__(self):
        object.__setattr__(
            self, "reset", _frozen(as_matrix(self.reset, f"reset[{self.source}->{self.target}]"))
        )

    @property
    def pair(self) -> tuple[str, str]:
        return (self.source, self.target)


class SwitchingSystem:
    """Immutable collection of modes and guarded edges.

    Validates on construction: nonempty mode set, uniform input/output
    dimensions, edge endpoints exist, reset shapes are n_target x n_source,
    guards live in the source state space, at most one edge per ordered
    pair, and no self-loop carries an identity reset.
    """

    def __init__(self, modes, edges=(), name: str = ""):
        if isinstance(modes, dict):
            mode_list = list(modes.values())
        else:
            mode_list = list(modes)
        if not mode_list:
            raise SystemFormatError("a system needs at least one mode")
        self._modes: dict[str, LtiMode] = {}
        for mode in mode_list:
            if not isinstance(mode, LtiMode):
                raise SystemFormatError("modes must be LtiMode values")
            if mode.label in self._modes:
                raise SystemFormatError(f"duplicate mode label {mode.label!r}")
            self._modes[mode.label] = mode
        first = mode_list[0]
        for mode in mode_list:
            if mode.input_dim != first.input_dim:
                raise SystemFormatError("input dimension differs across modes")
            if mode.output_dim != first.output_dim:
                raise SystemFormatError("output dimension differs across modes")

        edge_list = list(edges)
        seen: set[tuple[str, str]] = set()
        for e in edge_list:
            if not isinstance(e, Edge):
                raise SystemFormatError("edges must be Edge values")
            if e.source not in self._modes or e.target not in self._modes:
                raise SystemFormatError(f"edge {e.source}->{e.target} references unknown mode")
            if e.pair in seen:
                raise SystemFormatError(f"duplicate edge {e.source}->{e.target}")
            seen.add(e.pair)
            n_src = self._modes[e.source].n
            n_tgt = self._modes[e.target].n
            if e.reset.shape != (n_tgt, n_src):
                raise SystemFormatError(
                    f"reset {e.source}->{e.target} has shape {e.reset.shape}, "
                    f"expected ({n_tgt}, {n_src})"
                )
            if not e.guard.is_full():
                e.guard.subspace(n_src)  # shape check
            if e.source == e.target and np.allclose(e.reset, np.eye(n_src)):
                raise InLoopIdentityReset(
                    f"self-loop on {e.source} with identity reset is unobservable by construction"
                )

        self.name = str(name)
        self.edges: tuple[Edge, ...] = tuple(edge_list)
        self._edge_map = {e.pair: e for e in self.edges}

    # -- queries ------------------------------------------------------

    @property
    def modes(self) -> dict[str, LtiMode]:
        return dict(self._modes)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._modes)

    def mode(self, label: str) -> LtiMode:
        try:
            return self._modes[label]
        except KeyError:
            raise KeyError(f"unknown mode {label!r}") from None

    def edge(self, source: str, target: str) -> Edge:
        return self._edge_map[(source, target)]

    def has_edge(self, source: str, target: str) -> bool:
        return (source, target) in self._edge_map

    def out_edges(self, source: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.source == source)

    def self_loops(self) -> tuple[Edge, ...]:
        """Edges that jump back into their own mode.

        These are the transitions no output can flag by a mode change, so
        they carry the extra reset condition for mode reconstruction.
        """
        return tuple(e for e in self.edges if e.source == e.target)

    @property
    def input_dim(self) -> int:
        return next(iter(self._modes.values())).input_dim

    @property
    def output_dim(self) -> int:
        return next(iter(self._modes.values())).output_dim

    def is_guard_free(self) -> bool:
        """True when every guard is the full space."""
        return all(e.guard.is_full() for e in self.edges)

    def __repr__(self) -> str:
        return (
            f"SwitchingSystem({self.name or 'unnamed'}: "
            f"{len(self._modes)} modes, {len(self.edges)} edges)"
        )


# -- serialization ----------------------------------------------------


def load_system(doc) -> SwitchingSystem:
    """Build a SwitchingSystem from a JSON text or an already-parsed dict.

    Expected shape::

        {"name": "...",
         "modes": {"1": {"A": [[...]], "B": [[...]], "C": [[...]]}, ...},
         "edges": [{"from": "1", "to": "2", "reset": [[...]],
                    "guard": {"kind": "full"}}, ...]}

    The guard field is optional and defaults to the full space; "kernel"
    and "span" guards carry a "matrix" entry.
    """
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SystemFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SystemFormatError("system document must be a JSON object")
    if "modes" not in doc or not isinstance(doc["modes"], dict) or not doc["modes"]:
        raise SystemFormatError('document needs a nonempty "modes" object')

    modes = []
    for label, entry in doc["modes"].items():
        if not isinstance(entry, dict):
            raise SystemFormatError(f"mode {label!r} must be an object")
        for key in ("A", "B", "C"):
            if key not in entry:
                raise SystemFormatError(f"mode {label!r} is missing {key!r}")
        try:
            modes.append(LtiMode(str(label), entry["A"], entry["B"], entry["C"]))
        except ValueError as exc:
            raise SystemFormatError(f"mode {label!r}: {exc}") from exc

    edges = []
    for k, entry in enumerate(doc.get("edges", [])):
        if not isinstance(entry, dict):
            raise SystemFormatError(f"edge #{k} must be an object")
        for key in ("from", "to", "reset"):
            if key not in entry:
                raise SystemFormatError(f"edge #{k} is missing {key!r}")
        guard_doc = entry.get("guard", {"kind": "full"})
        if not isinstance(guard_doc, dict) or "kind" not in guard_doc:
            raise SystemFormatError(f"edge #{k}: guard must be an object with a kind")
        try:
            guard = GuardSpec(guard_doc["kind"], guard_doc.get("matrix"))
            edges.append(
                Edge(str(entry["from"]), str(entry["to"]), entry["reset"], guard)
            )
        except ValueError as exc:
            raise SystemFormatError(f"edge #{k}: {exc}") from exc

    try:
        return SwitchingSystem(modes, edges, name=doc.get("name", ""))
    except SystemFormatError:
        raise
    except ValueError as exc:
        raise SystemFormatError(str(exc)) from exc


def save_system(system: SwitchingSystem) -> dict:
    """Serialize to the document shape accepted by load_system."""
    doc = {
        "name": system.name,
        "modes": {
            label: {
                "A": mode.A.tolist(),
                "B": mode.B.tolist(),
                "C": mode.C.tolist(),
            }
            for label, mode in system.modes.items()
        },
        "edges": [],
    }
    for e in system.edges:
        entry = {"from": e.source, "to": e.target, "reset": e.reset.tolist()}
        if e.guard.is_full():
            entry["guard"] = {"kind": "full"}
        else:
            entry["guard"] = {"kind": e.guard.kind, "matrix": e.guard.matrix.tolist()}
        doc["edges"].append(entry)
    return doc


# -- per-mode observability machinery ----------------------------------


def observability_matrix(mode: LtiMode, levels: int | None = None) -> np.ndarray:
    """Stack C, CA, ..., CA^(levels-1); shape (levels*l, n).

    ``levels`` defaults to n, the classical observability matrix.  Taller
    stacks add no rank (Cayley-Hamilton) but are what derivative-stack
    consistency tests compare against.
    """
    N = mode.n if levels is None else int(levels)
    if N < 1:
        raise ValueError("levels must be >= 1")
    blocks = []
    P = mode.C
    for _ in range(N):
        blocks.append(P)
        P = P @ mode.A
    return np.vstack(blocks)


def markov_parameter(mode: LtiMode, k: int) -> np.ndarray:
    """C A^k B (l x m); the k-th impulse-response coefficient."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return mode.C @ np.linalg.matrix_power(mode.A, k) @ mode.B


def is_mode_observable(mode: LtiMode, tol: float = REL_TOL) -> bool:
    """Rank test of the observability matrix at the shared tolerance."""
    O = observability_matrix(mode)
    s = np.linalg.svd(O, compute_uv=False)
    thr = max(tol * (s[0] if s.size else 0.0), 1e-12)
    return int(np.sum(s > thr)) == mode.n


def forced_response_matrix(mode: LtiMode, levels: int | None = None) -> np.ndarray:
    """Input-to-stacked-output map F (levels*l x levels*m).

    Block (r, c) is C A^(r-c-1) B for r > c and zero otherwise, so that the
    stack of y, ydot, ..., y^(N-1) equals O x + F (u, udot, ..., u^(N-1)).
    """
    N = mode.n if levels is None else int(levels)
    if N < 1:
        raise ValueError("levels must be >= 1")
    l, m = mode.output_dim, mode.input_dim
    F = np.zeros((N * l, N * m))
    # powers[j] = C A^j B
    powers = []
    Ak = np.eye(mode.n)
    for _ in range(N - 1):
        powers.append(mode.C @ Ak @ mode.B)
        Ak = Ak @ mode.A
    for r in range(N):
        for c in range(r):
            F[r * l : (r + 1) * l, c * m : (c + 1) * m] = powers[r - c - 1]
    return F
