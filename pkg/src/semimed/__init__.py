"""Natural direct and indirect treatment effects on a terminal event in
semi-competing-risks data, under prevalence-controlling and
hazard-controlling decompositions."""

__version__ = "0.1.0"

from .decomposition import (
    EFFECTS,
    TARGETS,
    EffectEstimate,
    IncidenceSurface,
    build_surface,
    effects,
    incidence_haz,
    incidence_prev,
)
from .event_data import (
    DataValidationError,
    RiskSetPanel,
    SubjectRecord,
    build_panel,
    build_panels,
    read_csv,
    validate_and_load,
)
from .hazards import HazardCurve, PrevalenceCurve, nelson_aalen, prevalence
from .inference import (
    BootstrapResult,
    PartialVarianceError,
    VarianceCurve,
    bootstrap,
    ci_pointwise,
    var_haz,
    var_haz_effects,
    var_haz_incidence,
    var_prev_partial,
)
from .simulation import OracleCurves, ScenarioConfig, StudySummary, generate_dataset, oracle, run_study
from .stepfunction import StepFunction

__all__ = [
    "EFFECTS",
    "TARGETS",
    "BootstrapResult",
    "DataValidationError",
    "EffectEstimate",
    "HazardCurve",
    "IncidenceSurface",
    "OracleCurves",
    "PartialVarianceError",
    "PrevalenceCurve",
    "RiskSetPanel",
    "ScenarioConfig",
    "StepFunction",
    "StudySummary",
    "SubjectRecord",
    "VarianceCurve",
    "bootstrap",
    "build_panel",
    "build_panels",
    "build_surface",
    "ci_pointwise",
    "effects",
    "generate_dataset",
    "incidence_haz",
    "incidence_prev",
    "nelson_aalen",
    "oracle",
    "prevalence",
    "read_csv",
    "run_study",
    "validate_and_load",
    "var_haz",
    "var_haz_effects",
    "var_haz_incidence",
    "var_prev_partial",
]
