"""Observability, detectability, and observer tools for switching linear systems.

A system is a finite set of LTI modes joined by guarded reset edges.  The
package answers, for such a system: can the active mode always be told
apart from the output (location observability), can the continuous state
be reconstructed or at least asymptotically recovered (observability /
detectability), and how to build the distinguishing inputs and running
observers that do it.
"""

from .decomposition import (
    CanonicalMode,
    CoreEdge,
    GuardedCore,
    SCComponent,
    autonomous_part,
    build_abstractions,
    build_core,
    canonical_form,
    restrict,
    scc_decomposition,
    unobservable_modes,
)
from .location import (
    AugmentedPair,
    ExponentialInput,
    LocationObservability,
    LocationUnobservable,
    LoopResetCondition,
    NoWitnessFound,
    PairCertificate,
    augmented_pair,
    distinguishing_input,
    friend_gain,
    location_observability_test,
    loop_reset_condition,
    max_controlled_invariant,
    verify_distinguishing_input,
)
from .model import (
    GUARD_FULL,
    Edge,
    GuardSpec,
    InLoopIdentityReset,
    LtiMode,
    SwitchingSystem,
    SystemFormatError,
    forced_response_matrix,
    is_mode_observable,
    load_system,
    markov_parameter,
    observability_matrix,
    save_system,
)
from .observer import (
    HybridPoint,
    InsufficientSamples,
    ObserverConfig,
    ObserverReport,
    StateEstimate,
    hybrid_distance,
    identify_mode,
    reconstruct_state,
    run_observer,
    stacked_output,
)
from .report import AnalysisReport, build_report
from .simulator import (
    Execution,
    GuardViolation,
    RandomDwell,
    SampledInput,
    Schedule,
    SimulationError,
    ZenoSchedule,
    ZeroInput,
    export_trace,
    flow_map,
    load_trace,
    simulate,
    validate_execution,
)
from .stability import (
    AbstractionStable,
    CommonLyapunov,
    DetectabilityResult,
    DivergentWitness,
    EmptyCore,
    GuardAtOrigin,
    StabilityConfig,
    StabilityVerdict,
    TransientHurwitz,
    ZeroResetCut,
    common_quadratic_lyapunov,
    detectability,
    guarded_stability,
    hurwitz,
    observability,
    replay_lyapunov,
    replay_witness,
    spectral_abscissa,
)
from .subspaces import Subspace, image, kernel, preimage

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "LtiMode",
    "Edge",
    "GuardSpec",
    "GUARD_FULL",
    "SwitchingSystem",
    "SystemFormatError",
    "InLoopIdentityReset",
    "load_system",
    "save_system",
    "observability_matrix",
    "markov_parameter",
    "forced_response_matrix",
    "is_mode_observable",
    # subspaces
    "Subspace",
    "kernel",
    "image",
    "preimage",
    # location
    "AugmentedPair",
    "augmented_pair",
    "PairCertificate",
    "LocationObservability",
    "LocationUnobservable",
    "location_observability_test",
    "LoopResetCondition",
    "loop_reset_condition",
    "max_controlled_invariant",
    "friend_gain",
    "ExponentialInput",
    "NoWitnessFound",
    "distinguishing_input",
    "verify_distinguishing_input",
    # decomposition
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
    # stability / detectability
    "StabilityConfig",
    "CommonLyapunov",
    "GuardAtOrigin",
    "ZeroResetCut",
    "AbstractionStable",
    "DivergentWitness",
    "EmptyCore",
    "TransientHurwitz",
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
    # simulator
    "ZeroInput",
    "SampledInput",
    "Schedule",
    "RandomDwell",
    "Execution",
    "flow_map",
    "simulate",
    "validate_execution",
    "export_trace",
    "load_trace",
    "SimulationError",
    "GuardViolation",
    "ZenoSchedule",
    # observer
    "ObserverConfig",
    "HybridPoint",
    "hybrid_distance",
    "stacked_output",
    "identify_mode",
    "reconstruct_state",
    "StateEstimate",
    "InsufficientSamples",
    "ObserverReport",
    "run_observer",
    # report
    "AnalysisReport",
    "build_report",
]
