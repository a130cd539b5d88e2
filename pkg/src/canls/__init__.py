"""
Two-step detection of multiple scatterers in SAR tomography.

A coarse successive-cancellation CFAR stage proposes narrow elevation
supports; an exhaustive nonlinear least-squares search over those supports,
followed by penalized model order selection, decides how many scatterers a
pixel holds and where. Reference detectors, closed-form performance
predictions and a Monte Carlo harness are included.
"""

__version__ = "0.1.0"

from .analytic import (
    TwoTargetScenario,
    analytic_pd,
    analytic_pd_phase_averaged,
    crlb_double,
    crlb_single,
    normalized_crlb,
    phase_slope,
    proposition1_statistic,
    vartheta,
)
from .baselines import (
    bpdn_solve,
    exhaustive_nls_detect,
    sglrtc_detect,
    sl1mmer_detect,
)
from .coarse import CoarseResult, calibrate_threshold, coarse_detect, false_alarm_rate
from .experiments import (
    ExperimentRecord,
    SceneSpec,
    build_scene,
    rmse,
    run_detection_sweep,
    run_layover_experiment,
    run_penalty_comparison,
    run_reconstruction,
    timing_benchmark,
)
from .fine import (
    Detection,
    ModelSelectionConfig,
    detect_pixel,
    detect_pixel_multi,
    model_order_select,
    nls_search,
    penalty,
)
from .signal_model import (
    Measurement,
    SceneTargets,
    SteeringMatrix,
    TomoGeometry,
    build_steering_matrix,
    make_rng,
    rayleigh_resolution,
    reference_geometry,
    steering_vectors,
    synthesize_pixel,
)
