"""Analysis report: one JSON-serializable summary per system.

The report is assembled from the analysis modules' results, never
recomputed: the location table, the cycle-reset check, the decomposition
blocks, per-component stability certificates, the detectability verdict,
and optionally a distinguishing input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import scc_decomposition
from .location import (
    ExponentialInput,
    NoWitnessFound,
    distinguishing_input,
    verify_distinguishing_input,
)
from .model import SwitchingSystem, is_mode_observable
from .stability import (
    AbstractionStable,
    CommonLyapunov,
    DetectabilityResult,
    DivergentWitness,
    EmptyCore,
    GuardAtOrigin,
    StabilityConfig,
    TransientHurwitz,
    ZeroResetCut,
    detectability,
    observability,
)
from .subspaces import REL_TOL

__all__ = ["AnalysisReport", "build_report", "certificate_to_dict"]


def certificate_to_dict(cert) -> dict | None:
    if cert is None:
        return None
    if isinstance(cert, CommonLyapunov):
        return {"kind": cert.kind, "P": np.asarray(cert.P).tolist()}
    if isinstance(cert, GuardAtOrigin):
        return {"kind": cert.kind, "edges": [list(e) for e in cert.edges]}
    if isinstance(cert, ZeroResetCut):
        return {"kind": cert.kind, "zero_edges": [list(e) for e in cert.zero_edges]}
    if isinstance(cert, AbstractionStable):
        return {
            "kind": cert.kind,
            "which": cert.which,
            "inner": certificate_to_dict(cert.inner),
        }
    if isinstance(cert, DivergentWitness):
        return {
            "kind": cert.kind,
            "modes": list(cert.modes),
            "dwells": list(cert.dwells),
            "edges": [list(e) for e in cert.edges],
            "growth": cert.growth,
        }
    if isinstance(cert, (EmptyCore, TransientHurwitz)):
        out = {"kind": cert.kind}
        if isinstance(cert, TransientHurwitz):
            out["label"] = cert.label
        return out
    if isinstance(cert, tuple):
        return {"kind": "PerComponent", "certificates": [certificate_to_dict(c) for c in cert]}
    return {"kind": str(type(cert).__name__)}


@dataclass(frozen=True)
class AnalysisReport:
    system: SwitchingSystem
    detectability: DetectabilityResult
    observable: bool
    input: ExponentialInput | None
    input_verified: bool | None
    input_error: str | None
    tol: float

    @property
    def exit_status(self) -> str:
        if self.observable:
            return "Observable"
        return self.detectability.status

    def to_dict(self) -> dict:
        det = self.detectability
        loc = det.location
        pairs = {
            f"{i}->{h}": {
                "distinguishable": cert.distinguishable,
                "witness_k": cert.witness_k,
                "invariant_dim": cert.invariant.dim,
            }
            for (i, h), cert in sorted(loc.pairs.items())
        }
        loops = {
            f"{a}->{b}": {"holds": ok, "intersection_dim": dim}
            for (a, b), (ok, dim) in sorted(det.loop_reset.per_edge.items())
        }
        core_doc = det.core.to_dict() if det.core is not None else None
        sccs = []
        if det.core is not None:
            for comp in scc_decomposition(det.core.labels, det.core.edge_pairs()):
                sccs.append({"labels": list(comp.labels), "transient": comp.transient})
        stability_doc = {
            "status": det.stability.status,
            "components": [
                {
                    "labels": list(cv.labels),
                    "transient": cv.transient,
                    "status": cv.status,
                    "certificate": certificate_to_dict(cv.certificate),
                }
                for cv in det.stability.components
            ],
            "method_note": (
                "Lyapunov certificates replay by direct negative definiteness of "
                "A'P + PA; divergence witnesses replay through exact flow maps."
            ),
        }
        doc = {
            "system": self.system.name,
            "tolerance": self.tol,
            "modes": {
                label: {
                    "n": m.n,
                    "observable": bool(is_mode_observable(m, self.tol)),
                }
                for label, m in self.system.modes.items()
            },
            "location_observability": {"verdict": loc.verdict, "pairs": pairs},
            "loop_reset_condition": {"holds": det.loop_reset.holds, "edges": loops},
            "unobservable_modes": list(det.unobservable),
            "core": core_doc,
            "sccs": sccs,
            "stability": stability_doc,
            "detectability": {
                "status": det.status,
                "cond_i": det.cond_i,
                "cond_ii": det.cond_ii,
                "cond_iii": det.stability.status,
                "guard_free": det.guard_free,
                "notes": list(det.notes),
            },
            "observable": self.observable,
            "verdict": self.exit_status,
        }
        if self.input is not None:
            doc["distinguishing_input"] = {
                "z": self.input.z.tolist(),
                "lambda": self.input.lam,
                "verified": self.input_verified,
            }
        elif self.input_error is not None:
            doc["distinguishing_input"] = {"error": self.input_error}
        return doc

    def to_text(self) -> str:
        det = self.detectability
        lines = [f"system: {self.system.name or '(unnamed)'}"]
        lines.append(
            f"location observability: {'yes' if det.cond_i else 'NO'}"
        )
        bad = [p for p, c in det.location.pairs.items() if not c.distinguishable]
        if bad:
            lines.append(f"  indistinguishable pairs: {sorted(bad)}")
        lines.append(f"cycle-reset condition: {'yes' if det.cond_ii else 'NO'}")
        lines.append(
            "unobservable modes: "
            + (", ".join(det.unobservable) if det.unobservable else "(none)")
        )
        lines.append(f"core stability: {det.stability.status}")
        for cv in det.stability.components:
            cert = certificate_to_dict(cv.certificate)
            kind = cert["kind"] if cert else "none"
            extra = " transient" if cv.transient else ""
            lines.append(
                f"  component {{{', '.join(cv.labels)}}}{extra}: {cv.status} [{kind}]"
            )
        for note in det.notes:
            lines.append(f"note: {note}")
        lines.append(f"observable: {'yes' if self.observable else 'no'}")
        if self.input is not None:
            z = np.array2string(self.input.z, precision=6)
            lines.append(
                f"distinguishing input: u(t) = z exp({self.input.lam:g} t), z = {z}"
                + (
                    ""
                    if self.input_verified is None
                    else f" (verified: {'yes' if self.input_verified else 'NO'})"
                )
            )
        elif self.input_error:
            lines.append(f"distinguishing input: {self.input_error}")
        lines.append(f"verdict: {self.exit_status}")
        return "\n".join(lines)


def build_report(
    system: SwitchingSystem,
    tol: float = REL_TOL,
    config: StabilityConfig | None = None,
    find_input: bool = False,
    verify_horizon: float = 2.0,
    verify_dt: float = 1e-3,
) -> AnalysisReport:
    det = detectability(system, config, tol)
    obs = observability(system, tol)
    u = None
    verified = None
    error = None
    if find_input:
        try:
            u = distinguishing_input(system, tol)
            verified = verify_distinguishing_input(system, u, verify_horizon, verify_dt)
        except (NoWitnessFound, ValueError, RuntimeError) as exc:
            error = str(exc)
    return AnalysisReport(system, det, obs, u, verified, error, tol)
