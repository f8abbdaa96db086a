"""Cross-validated shrinkage covariance estimation for MVDR beamforming."""

from .beamforming import (BeamformerWeights, SteeringVector, mvdr_weights, nmse, output_power,
                          sdr_loss, to_db)
from .errors import GenerationFailureError, InvalidInputError, NumericalFailureError
from .estimators import (HermitianEstimate, Provenance, ShrinkageTarget, SnapshotSet, SteConfig,
                         SteResult, TargetKind, nscm, relative_distance, scm, shrink,
                         ste_fixed_point)
from .scenarios import (ScenarioRealization, StapScenarioSpec, UlaScenarioSpec,
                        build_stap_scenario, build_ula_scenario, knowledge_target,
                        spacetime_steering, ula_steering)
from .tuning import (TuningGrid, TuningResult, ae_cost_gaussian, j_metric, loocv_cost_gaussian,
                     loocv_cost_gaussian_evd, oracle_s2cm, oracle_ste, rho_to_alpha,
                     ste_ae_cost, ste_cv1_cost, ste_cv2_cost, tune_s2cm_ae, tune_s2cm_cv,
                     tune_ste_ae, tune_ste_cv1, tune_ste_cv2)

__version__ = "0.1.0"

__all__ = [
    "BeamformerWeights", "GenerationFailureError", "HermitianEstimate", "InvalidInputError",
    "NumericalFailureError", "Provenance", "ScenarioRealization", "ShrinkageTarget",
    "SnapshotSet", "StapScenarioSpec", "SteConfig", "SteResult", "SteeringVector",
    "TargetKind", "TuningGrid", "TuningResult", "UlaScenarioSpec", "ae_cost_gaussian",
    "build_stap_scenario", "build_ula_scenario", "j_metric", "knowledge_target",
    "loocv_cost_gaussian", "loocv_cost_gaussian_evd", "mvdr_weights", "nmse", "nscm",
    "oracle_s2cm", "oracle_ste", "output_power", "relative_distance", "rho_to_alpha", "scm",
    "sdr_loss", "shrink", "spacetime_steering", "ste_ae_cost", "ste_cv1_cost", "ste_cv2_cost",
    "ste_fixed_point", "to_db", "tune_s2cm_ae", "tune_s2cm_cv", "tune_ste_ae", "tune_ste_cv1",
    "tune_ste_cv2", "ula_steering",
]
