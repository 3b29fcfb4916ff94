"""Fixed-step simulation of guarded switching systems.

Flows integrate with classical RK4 on a uniform grid; jumps land on grid
points, check guard membership of the pre-jump state, apply the reset, and
open a new interval.  An interval owns the samples in [t_j, t_{j+1}); the
pre-jump limit is stored on the transition record.  flow_map exposes the
exact matrix exponential for cross-checks and certificate replay.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .location import ExponentialInput
from .model import SwitchingSystem

__all__ = [
    "SimulationError",
    "GuardViolation",
    "UnknownEdge",
    "ZenoSchedule",
    "ZeroInput",
    "SampledInput",
    "ExponentialInput",
    "Schedule",
    "RandomDwell",
    "flow_map",
    "IntervalTrace",
    "Transition",
    "Execution",
    "simulate",
    "validate_execution",
    "export_trace",
    "load_trace",
]

GUARD_TOL = 1e-7


class SimulationError(RuntimeError):
    pass


class GuardViolation(SimulationError):
    """Scheduled jump whose pre-jump state is outside the guard."""


class UnknownEdge(SimulationError):
    """Scheduled jump along a pair that is not an edge of the system."""


class ZenoSchedule(SimulationError):
    """Two jumps closer than one integration step."""


# -- input signals -----------------------------------------------------


@dataclass(frozen=True)
class ZeroInput:
    """u(t) = 0 with the given number of channels."""

    input_dim: int = 1

    def __call__(self, t: float) -> np.ndarray:
        return np.zeros(self.input_dim)

    def derivative(self, t: float, order: int) -> np.ndarray:
        return np.zeros(self.input_dim)


@dataclass(frozen=True)
class SampledInput:
    """Piecewise-linear interpolation of sampled input values.

    ``times`` is a strictly increasing 1-D grid, ``values`` is (len(times),
    m).  Outside the grid the boundary value is held.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if t.size != v.shape[0] or t.size == 0:
            raise ValueError("times and values must align and be nonempty")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def input_dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, t: float) -> np.ndarray:
        return np.array(
            [np.interp(t, self.times, self.values[:, j]) for j in range(self.input_dim)]
        )


# -- switching policies -------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Preplanned jumps: a sequence of (time, (source, target)) entries."""

    jumps: tuple

    def __post_init__(self):
        jumps = tuple((float(t), (str(a), str(b))) for t, (a, b) in self.jumps)
        times = [t for t, _ in jumps]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("schedule times must be strictly increasing")
        object.__setattr__(self, "jumps", jumps)


@dataclass(frozen=True)
class RandomDwell:
    """Jump after a random dwell in [min_dwell, max_dwell]; the edge is
    drawn uniformly among outgoing edges whose guard admits the state."""

    min_dwell: float
    max_dwell: float
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.min_dwell <= self.max_dwell):
            raise ValueError("need 0 < min_dwell <= max_dwell")


# -- execution data ------------------------------------------------------


@dataclass(frozen=True)
class IntervalTrace:
    mode: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class Transition:
    edge: tuple[str, str]
    time: float
    pre_state: np.ndarray
    post_state: np.ndarray


@dataclass(frozen=True)
class Execution:
    system_name: str
    dt: float
    horizon: float
    initial_mode: str
    initial_state: np.ndarray
    intervals: tuple[IntervalTrace, ...]
    transitions: tuple[Transition, ...]

    @property
    def switch_times(self) -> tuple[float, ...]:
        return tuple(tr.time for tr in self.transitions)

    @property
    def mode_sequence(self) -> tuple[str, ...]:
        return tuple(iv.mode for iv in self.intervals)

    def final_state(self) -> tuple[str, np.ndarray]:
        last = self.intervals[-1]
        return last.mode, last.x[-1]


def flow_map(mode_or_matrix, tau: float) -> np.ndarray:
    """State transition matrix exp(A tau) of one mode (tau >= 0)."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    A = getattr(mode_or_matrix, "A", mode_or_matrix)
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((0, 0))
    return scipy.linalg.expm(A * tau)


def _rk4_interval(A, B, u, x0, t0, nsteps, dt):
    """Integrate xdot = A x + B u(t) over nsteps; returns samples at every
    grid point including both endpoints ((nsteps+1, n))."""
    n = x0.shape[0]
    out = np.empty((nsteps + 1, n))
    out[0] = x0
    x = x0
    t = t0
    for k in range(nsteps):
        k1 = A @ x + B @ u(t)
        k2 = A @ (x + dt / 2 * k1) + B @ u(t + dt / 2)
        k3 = A @ (x + dt / 2 * k2) + B @ u(t + dt / 2)
        k4 = A @ (x + dt * k3) + B @ u(t + dt)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (k + 1) * dt
        out[k + 1] = x
    return out


def _guard_admits(edge, system, x, guard_tol, tol) -> bool:
    if edge.guard.is_full():
        return True
    nx = float(np.linalg.norm(x))
    if nx <= 1e-12:
        return True  # the origin belongs to every guard
    G = edge.guard.subspace(system.mode(edge.source).n, tol)
    return G.distance(x) <= guard_tol * nx


def simulate(
    system: SwitchingSystem,
    initial_mode: str,
    initial_state,
    input_signal=None,
    policy=None,
    horizon: float = 1.0,
    dt: float = 1e-3,
    guard_tol: float = GUARD_TOL,
    tol: float = 1e-9,
) -> Execution:
    """Run one execution on the uniform grid.

    Jump times round to the nearest grid point; two jumps on the same or
    adjacent grid points raise ZenoSchedule.  A scheduled jump along a
    non-edge raises UnknownEdge; a pre-jump state outside the guard raises
    GuardViolation.  With ``policy=None`` the system flows in the initial
    mode for the whole horizon.
    """
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    mode = system.mode(initial_mode)
    x = np.asarray(initial_state, dtype=float).reshape(-1)
    if x.shape[0] != mode.n:
        raise ValueError(
            f"initial state has dim {x.shape[0]}, mode {initial_mode} needs {mode.n}"
        )
    u = input_signal if input_signal is not None else ZeroInput(system.input_dim)
    total_steps = int(round(horizon / dt))
    if total_steps < 1:
        raise ValueError("horizon shorter than one step")

    # Resolve the policy to grid-indexed jump decisions.
    scheduled: list[tuple[int, tuple[str, str] | None]] = []
    rng = None
    if isinstance(policy, Schedule):
        last_idx = 0
        for t_jump, pair in policy.jumps:
            idx = int(round(t_jump / dt))
            if idx <= 0 or idx >= total_steps:
                raise ValueError(f"jump at t={t_jump} falls outside the open horizon")
            if idx - last_idx < 1:
                raise ZenoSchedule(f"jumps closer than one step near t={t_jump}")
            if scheduled and idx == scheduled[-1][0]:
                raise ZenoSchedule(f"two jumps on the same grid point t={t_jump}")
            scheduled.append((idx, pair))
            last_idx = idx
    elif isinstance(policy, RandomDwell):
        rng = np.random.default_rng(policy.seed)
        t_next = rng.uniform(policy.min_dwell, policy.max_dwell)
        last_idx = 0
        while t_next < horizon:
            idx = int(round(t_next / dt))
            if 0 < idx < total_steps:
                if idx - last_idx < 1:
                    raise ZenoSchedule(f"random dwell produced jumps closer than one step at t={t_next}")
                scheduled.append((idx, None))  # edge picked at jump time
                last_idx = idx
            t_next += rng.uniform(policy.min_dwell, policy.max_dwell)
    elif policy is not None:
        raise TypeError("policy must be Schedule, RandomDwell, or None")

    intervals: list[IntervalTrace] = []
    transitions: list[Transition] = []
    current_label = initial_mode
    seg_start_idx = 0
    acc_t: list[np.ndarray] = []
    acc_x: list[np.ndarray] = []

    def close_interval(label: str) -> None:
        mode_ = system.mode(label)
        tseg = np.concatenate(acc_t)
        xseg = np.vstack(acc_x)
        yseg = xseg @ mode_.C.T
        useg = np.vstack([np.asarray(u(tv), dtype=float) for tv in tseg])
        intervals.append(IntervalTrace(label, tseg, xseg, yseg, useg))
        acc_t.clear()
        acc_x.clear()

    qi = 0
    while True:
        mode = system.mode(current_label)
        next_jump = scheduled[qi] if qi < len(scheduled) else None
        end_idx = next_jump[0] if next_jump is not None else total_steps
        nsteps = end_idx - seg_start_idx
        t0 = seg_start_idx * dt
        xs = _rk4_interval(mode.A, mode.B, u, x, t0, nsteps, dt)
        ts = t0 + dt * np.arange(nsteps + 1)

        if next_jump is None:
            # final interval keeps its right endpoint
            acc_t.append(ts)
            acc_x.append(xs)
            close_interval(current_label)
            break

        x_pre = xs[-1]
        t_jump = end_idx * dt
        pair = next_jump[1]
        if pair is None:
            # random policy: draw among admissible outgoing edges
            options = [
                e
                for e in system.out_edges(current_label)
                if _guard_admits(e, system, x_pre, guard_tol, tol)
            ]
            edge = options[int(rng.integers(len(options)))] if options else None
        else:
            if not system.has_edge(*pair):
                raise UnknownEdge(f"scheduled jump along missing edge {pair[0]}->{pair[1]}")
            edge = system.edge(*pair)
            if edge.source != current_label:
                raise UnknownEdge(
                    f"jump {pair[0]}->{pair[1]} scheduled while in mode {current_label}"
                )
            if not _guard_admits(edge, system, x_pre, guard_tol, tol):
                raise GuardViolation(
                    f"state at t={t_jump:.6g} violates guard of {pair[0]}->{pair[1]}"
                )

        if edge is None:
            # nothing can fire; keep flowing in the same mode, the sample at
            # the jump point opens the next segment
            acc_t.append(ts[:nsteps])
            acc_x.append(xs[:nsteps])
            x = x_pre
        else:
            # samples in [t0, t_jump) belong to the closing interval; the
            # pre-jump limit lives on the transition record
            acc_t.append(ts[:nsteps])
            acc_x.append(xs[:nsteps])
            close_interval(current_label)
            x_post = edge.reset @ x_pre
            transitions.append(Transition(edge.pair, t_jump, x_pre, x_post))
            current_label = edge.target
            x = x_post
        seg_start_idx = end_idx
        qi += 1

    return Execution(
        system_name=system.name,
        dt=dt,
        horizon=horizon,
        initial_mode=initial_mode,
        initial_state=np.asarray(initial_state, dtype=float).reshape(-1),
        intervals=tuple(intervals),
        transitions=tuple(transitions),
    )


def validate_execution(
    system: SwitchingSystem,
    execution: Execution,
    guard_tol: float = GUARD_TOL,
    tol: float = 1e-9,
) -> list[str]:
    """Replay the execution invariants; returns a list of violations.

    Checked: transition pairs are edges, guards admit pre-jump states,
    post = reset @ pre, output rows equal C x, interval modes chain along
    the transitions, and switch times strictly increase.
    """
    problems: list[str] = []
    times = [tr.time for tr in execution.transitions]
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        problems.append("switch times are not strictly increasing")
    if len(execution.intervals) != len(execution.transitions) + 1:
        problems.append("interval count does not match transition count")
        return problems
    for k, tr in enumerate(execution.transitions):
        if not system.has_edge(*tr.edge):
            problems.append(f"transition {k}: {tr.edge} is not an edge")
            continue
        edge = system.edge(*tr.edge)
        if execution.intervals[k].mode != edge.source or execution.intervals[k + 1].mode != edge.target:
            problems.append(f"transition {k}: interval modes do not chain through {tr.edge}")
        if not _guard_admits(edge, system, tr.pre_state, guard_tol, tol):
            problems.append(f"transition {k}: pre-jump state violates the guard")
        post = edge.reset @ tr.pre_state
        scale = max(1.0, float(np.linalg.norm(post)))
        if float(np.linalg.norm(post - tr.post_state)) > 1e-8 * scale:
            problems.append(f"transition {k}: post-state differs from reset @ pre-state")
    for k, iv in enumerate(execution.intervals):
        mode = system.mode(iv.mode)
        if iv.x.shape[1] != mode.n:
            problems.append(f"interval {k}: state dimension mismatch")
            continue
        yref = iv.x @ mode.C.T
        scale = max(1.0, float(np.abs(yref).max(initial=0.0)))
        if iv.y.shape != yref.shape or float(np.abs(iv.y - yref).max(initial=0.0)) > 1e-8 * scale:
            problems.append(f"interval {k}: output samples do not equal C x")
    return problems


# -- trace round-trip ----------------------------------------------------


def export_trace(execution: Execution, base_path) -> tuple[Path, Path]:
    """Write <base>.csv (samples) and <base>.json (header); returns paths."""
    base = Path(base_path)
    csv_path = base.with_suffix(".csv")
    json_path = base.with_suffix(".json")

    nmax = max(iv.x.shape[1] for iv in execution.intervals)
    l = execution.intervals[0].y.shape[1]
    m = execution.intervals[0].u.shape[1]
    header = (
        ["t", "mode"]
        + [f"x{j}" for j in range(nmax)]
        + [f"y{j}" for j in range(l)]
        + [f"u{j}" for j in range(m)]
    )
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for iv in execution.intervals:
            n = iv.x.shape[1]
            for r in range(iv.t.shape[0]):
                row = [repr(float(iv.t[r])), iv.mode]
                row += [repr(float(v)) for v in iv.x[r]] + [""] * (nmax - n)
                row += [repr(float(v)) for v in iv.y[r]]
                row += [repr(float(v)) for v in iv.u[r]]
                writer.writerow(row)

    head = {
        "system": execution.system_name,
        "dt": execution.dt,
        "horizon": execution.horizon,
        "initial": {
            "mode": execution.initial_mode,
            "state": execution.initial_state.tolist(),
        },
        "mode_sequence": list(execution.mode_sequence),
        "switch_times": list(execution.switch_times),
        "transitions": [
            {
                "edge": list(tr.edge),
                "time": tr.time,
                "pre_state": tr.pre_state.tolist(),
                "post_state": tr.post_state.tolist(),
            }
            for tr in execution.transitions
        ],
    }
    with open(json_path, "w") as fh:
        json.dump(head, fh, indent=1)
    return csv_path, json_path


def load_trace(base_path, system: SwitchingSystem) -> Execution:
    """Rebuild an Execution from export_trace output."""
    base = Path(base_path)
    csv_path = base.with_suffix(".csv")
    json_path = base.with_suffix(".json")
    with open(json_path) as fh:
        head = json.load(fh)

    expected_modes = list(head["mode_sequence"])
    switch_times = [float(t) for t in head["switch_times"]]
    dt = float(head["dt"])
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        all_rows = list(reader)

    # interval k owns samples with t in [t_k, t_{k+1}); split by time so
    # self-loop traces (mode label unchanged across a jump) round-trip too
    rows_by_interval: list[list[list[str]]] = [[] for _ in expected_modes]
    bounds = switch_times + [float("inf")]
    seg = 0
    for row in all_rows:
        t = float(row[0])
        while seg < len(expected_modes) - 1 and t >= bounds[seg] - dt / 4:
            seg += 1
        rows_by_interval[seg].append(row)
    if any(not rows for rows in rows_by_interval):
        raise SimulationError("trace is missing samples for some interval in the header")
    for mode_label, rows in zip(expected_modes, rows_by_interval):
        if any(r[1] != mode_label for r in rows):
            raise SimulationError("sample modes disagree with the header mode sequence")

    nmax = sum(1 for name in header if name.startswith("x"))
    l = sum(1 for name in header if name.startswith("y"))
    m = sum(1 for name in header if name.startswith("u"))
    intervals = []
    for mode_label, rows in zip(expected_modes, rows_by_interval):
        n = system.mode(mode_label).n
        t = np.array([float(r[0]) for r in rows])
        x = np.array([[float(v) for v in r[2 : 2 + n]] for r in rows])
        y = np.array([[float(v) for v in r[2 + nmax : 2 + nmax + l]] for r in rows])
        uu = np.array([[float(v) for v in r[2 + nmax + l : 2 + nmax + l + m]] for r in rows])
        intervals.append(IntervalTrace(mode_label, t, x, y, uu))

    transitions = tuple(
        Transition(
            tuple(tr["edge"]),
            float(tr["time"]),
            np.asarray(tr["pre_state"], dtype=float),
            np.asarray(tr["post_state"], dtype=float),
        )
        for tr in head["transitions"]
    )
    return Execution(
        system_name=head.get("system", ""),
        dt=float(head["dt"]),
        horizon=float(head["horizon"]),
        initial_mode=head["initial"]["mode"],
        initial_state=np.asarray(head["initial"]["state"], dtype=float),
        intervals=tuple(intervals),
        transitions=transitions,
    )
