"""State estimation and statistical fault diagnosis for 1D wave systems.

The package reconstructs the full state of a semi-discretized nonlinear
wave equation from sparse noisy position sensors with a plain linear
Kalman filter (all nonlinearities ride in as known virtual inputs), and
monitors the weights of the equivalent scalar ARMAX model with the
local statistical approach: a global χ² change test plus sensitivity
and min-max isolation tests.
"""

from .armax import (ArmaxModel, REGRESSOR_LAYOUT, armax_predict, build_regressor,
                    kf_to_armax, nominal_weights, predictor_weights,
                    steady_state_gain, subsystem_discrete_model, subsystem_input)
from .config import (FdiConfig, FilterConfig, ScenarioConfig, WaveConfig,
                     config_from_dict, config_to_dict, load_config, save_config)
from .errors import (ConfigError, DegenerateStatisticsError, IntegrationDivergedError,
                     NotSteadyStateError, ObservabilityError, UnidentifiableSubsetError,
                     WaveFdiError)
from .fdi import (DEFAULT_SUBSETS, FdiReport, IsolationResult, ResidualBatch,
                  chi2_threshold, covariance_matrix, global_chi2_test, minmax_test,
                  normalized_residual, primary_residuals, run_fdi_pipeline,
                  sensitivity_matrix, sensitivity_test, subset_label)
from .kalman import (DiscreteModel, FilterState, check_observability, discretize,
                     kf_measurement_update, kf_time_update, observability_matrix,
                     riccati_steady_gain, run_filter, run_filter_with_inputs)
from .simulator import (FaultSpec, InitialProfile, SimConfig, Trajectory,
                        initial_state, integrate_step, measure, simulate,
                        trajectory_to_csv)
from .scenarios import (CalibrationResult, MonitorRun, ScenarioResult,
                        build_wave_model, monitor_residuals, multisine,
                        run_calibration, run_scenario, run_subsystem_monitor,
                        simulate_subsystem_plant, sliding_windows)
from .wave_model import (Nonlinearity, SineGordonParams, StateSpace, WaveModel,
                         build_state_space, laplacian_1d, sine_gordon_nonlinearity,
                         split_state, state_derivative, virtual_inputs,
                         zero_nonlinearity)

__version__ = "0.1.0"
