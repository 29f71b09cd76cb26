"""Odds-ratio estimation from survey samples with B-spline calibration.

Estimates the logistic-regression odds ratio with Horvitz-Thompson, linear
GREG or B-spline calibration weights, together with linearization variances
and confidence intervals. A Monte Carlo harness on synthetic finite
populations checks the variance estimators.
"""

from .bspline import BSplineBasis, KnotVector, basis_matrix, evaluate_basis, make_basis, place_knots
from .calibration import CalibrationWeights, Strategy, bspline_weights, linear_greg_weights, verify_constraints
from .design import SRSWOR, ht_total, ht_variance_estimate, ht_variance_population
from .errors import (
    DegenerateAuxiliary,
    DesignTooSmall,
    Diverged,
    MonteCarloAborted,
    NotConverged,
    OddsCalError,
    SingularGram,
    SingularJacobian,
    ZeroCell,
)
from .logistic import Beta, LogisticFit, fit
from .oddsratio import (
    ContingencyCounts,
    asymptotic_variance_comparison,
    ci_or,
    linearized,
    linearized_binary,
    or_contingency,
    or_from_beta,
    variance_beta1,
)
from .pipeline import AnalysisConfig, OrReport, SurveyDataset, run
from .simulate import PopulationSpec, generate_population, monte_carlo

__version__ = "0.1.0"
