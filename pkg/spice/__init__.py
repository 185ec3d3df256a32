__version__ = '0.1.0'

from .exceptions import DataValidationError, NumericalError
from .graph import AdjacencyGraph, CarKind, MoranResult, PrecisionMatrix, build_graph, car_precision, lattice_graph, \
    leroux_logdet_fn, moran_test, morans_i, read_adjacency, read_edge_list, read_gal, sample_gmrf, write_edge_list
from .model import Approach, CountyObservation, GroupState, McmcSettings, ModelSpec, binomial_loglik_logit, \
    binomial_loglik_pointwise, inv_logit, linear_predictor, logit, observation_arrays, read_observations, \
    write_observations
from .mcmc import PosteriorDraws, draw_variance, fit_group, fit_ice_model, update_cluster_indicators, \
    update_ordered_intercepts, write_draws
from .ice import GroupMovement, IceSummary, Transition, bootstrap_ice, ice_from_proportions, posterior_ice, raw_ice, \
    sign_change_report
from .diagnostics import EvalMetrics, WaicResult, convergence_summary, evaluate_replicates, joint_waic, \
    metrics_table, waic
from .simulation import SCENARIOS, PRIOR_GRID, ExperimentConfig, ScenarioSpec, SimulatedDataset, generate, \
    run_experiment, sensitivity_analysis
