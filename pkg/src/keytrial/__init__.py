"""Keyboard dose-finding designs for phase I trials.

Core pieces: beta-posterior kernels (:mod:`keytrial.betaprob`), the key
partition and pre-tabulated transition boundaries (:mod:`keytrial.keys`),
matrix isotonic regression (:mod:`keytrial.isotonic`), random
partial-order scenario generation (:mod:`keytrial.scenarios`), the
combination-trial state machine (:mod:`keytrial.trial`), and the Monte
Carlo study engine (:mod:`keytrial.simulate`). ``keytrial.service``
exposes trial conduct over HTTP and ``keytrial.cli`` the command line.
"""

from .betaprob import (
    DoseData,
    posterior_exceed_prob,
    posterior_interval_prob,
    regularized_incomplete_beta,
)
from .isotonic import IsotonicConvergenceError, WeightedMatrix, matrix_isotonic
from .keys import (
    Decision,
    DecisionTable,
    DesignTables,
    KeyPartition,
    build_decision_table,
    build_keys,
    decide,
    decide_three_key,
    should_eliminate,
    strongest_key,
)
from .scenarios import (
    GeneratorConfig,
    ScenarioExhaustedError,
    ToxScenario,
    count_mtds,
    generate_scenario,
    generate_with_mtd_count,
)
from .simulate import (
    SimSpec,
    SpecValidationError,
    StudyMetrics,
    StudyResult,
    TrialRecord,
    run_study,
    simulate_trial,
    summary_csv,
)
from .trial import (
    MtdSelection,
    ScriptedDraws,
    TrialConfig,
    TrialEngine,
    TrialState,
    TrialStateError,
    TrialStatus,
    admissible_deescalation,
    admissible_escalation,
)

__version__ = "0.1.0"

__all__ = [
    "Decision",
    "DecisionTable",
    "DesignTables",
    "DoseData",
    "GeneratorConfig",
    "IsotonicConvergenceError",
    "KeyPartition",
    "MtdSelection",
    "ScenarioExhaustedError",
    "ScriptedDraws",
    "SimSpec",
    "SpecValidationError",
    "StudyMetrics",
    "StudyResult",
    "ToxScenario",
    "TrialConfig",
    "TrialEngine",
    "TrialRecord",
    "TrialState",
    "TrialStateError",
    "TrialStatus",
    "WeightedMatrix",
    "admissible_deescalation",
    "admissible_escalation",
    "build_decision_table",
    "build_keys",
    "count_mtds",
    "decide",
    "decide_three_key",
    "generate_scenario",
    "generate_with_mtd_count",
    "matrix_isotonic",
    "posterior_exceed_prob",
    "posterior_interval_prob",
    "regularized_incomplete_beta",
    "run_study",
    "should_eliminate",
    "simulate_trial",
    "strongest_key",
    "summary_csv",
]
