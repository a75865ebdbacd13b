"""Partial-state feedback multivariable MRAC toolkit.

Design, simulate and analyze model-reference adaptive controllers that feed
back an observable linear functional y0 = C0 x of the plant state, spanning
the whole range from full-state feedback down to a single scalar signal.
"""

from .adaptive import (AdaptationGains, AdaptiveController, AdaptiveState,
                       NominalTruth, RegressorSnapshot, nominal_truth)
from .complexity import (ComplexityReport, complexity_report, count_integrators,
                         count_params, reduction_conditions)
from .errors import (AssumptionError, ConfigError, DimensionError,
                     DivergenceError, MatchingError)
from .interactor import (HighFrequencyGain, InteractorBundle, LDSDecomposition,
                         find_diagonal_interactor, high_freq_gain,
                         lds_decompose)
from .matching import (ControllerParams, FilterSpec, MatchSolution,
                       load_params, save_params, solve_matching,
                       verify_matching)
from .plant import (ObserverDesign, PartialStateSelector, StateSpace,
                    build_transform, check_observable, design_reduced_observer,
                    gtm_model, load_state_space, simulate_observer,
                    transmission_zeros)
from .polymatrix import (Polynomial, PolyMatrix, RationalMatrix, eval_rational,
                         faddeev_resolvent, poly_roots, polymat_mul)
from .simulate import (Metrics, ReferenceInput, Scenario, Trajectory,
                       case_presets, compute_metrics,
                       reference_model_realization, run_closed_loop,
                       trajectory_to_csv)

__version__ = "0.1.0"
