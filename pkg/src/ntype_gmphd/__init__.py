"""Joint Gaussian-mixture PHD filtering of several target types whose detectors confuse one another."""
from .gaussian import GaussianComponent, NotPositiveDefiniteError, gaussian_pdf, kalman_gain, marginal_likelihood
from .metrics import OspaParams, hungarian, ospa
from .models import (
    BirthModel,
    ClutterModel,
    DetectionProfile,
    MeasurementModel,
    MotionModel,
    ParameterError,
    make_cv_motion,
    make_position_measurement,
)
from .ntype_phd import (
    FilterParams,
    FilterState,
    MeasurementFrame,
    NTypeGMPHDFilter,
    TypedIntensity,
    confusion_clutter,
    extract_states,
    predict,
    prune_and_merge,
    step,
    update,
)
from .sim import Scenario, build_quad_scenario, default_scenario, load_scenario, run_experiment, simulate

__version__ = "0.1.0"
