import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from tqdm import tqdm

from .diagnostics import EvalMetrics, evaluate_replicates, joint_waic, metrics_table
from .exceptions import DataValidationError, NumericalError
from .graph import AdjacencyGraph, CarKind, car_precision, sample_gmrf
from .ice import IceSummary, bootstrap_ice, posterior_ice
from .mcmc import fit_ice_model
from .model import Approach, CountyObservation, McmcSettings, ModelSpec, inv_logit
from .typing import FloatArray, Prior, SeedLike
from .utils import as_generator, fix_dataclass_init_docs, task_seed

logger = logging.getLogger(__name__)

# id: (mean1, mean2, variance, rho)
SCENARIOS: Dict[int, Tuple[float, float, float, float]] = {
    1: (-1.72, -1.72, 0.2, 0.2),
    2: (-1.72, -1.72, 0.2, 0.65),
    3: (-1.72, -0.4, 0.4, 0.2),
    4: (-1.72, -0.4, 0.4, 0.65),
}
POPULATIONS = (150, 500, 2000)
DEFAULT_MODELS = ('bootstrap', 'icar', 'bym', 'leroux', 'local2', 'local3')
PRIOR_GRID: Tuple[Prior, ...] = ((1, 0.01), (0.1, 0.1), (0.01, 0.01), (0.5, 0.0005))
MAX_REDRAWS = 10000
FAILURE_COLUMNS = ('scenario', 'population', 'model', 'replicate', 'error')


@fix_dataclass_init_docs
@dataclass(frozen=True)
class ScenarioSpec:
    """A simulation scenario: two independent proper-CAR logit surfaces observed through binomial counts.

    Attributes:
        id: Scenario id (1 to 4 for the registered scenarios).
        mean1: Logit-scale mean of the high-income White proportion.
        mean2: Logit-scale mean of the low-income Black proportion.
        variance: Conditional variance scale :math:`\\sigma^2` of the GMRF.
        rho: Proper-CAR spatial dependence :math:`\\rho`.
        population: Per-county denominator :math:`N`.
        replicates: Number of simulated data sets.

    """
    id: int
    mean1: float
    mean2: float
    variance: float
    rho: float
    population: int = 150
    replicates: int = 100

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError(f"Expected a non-negative variance but got {self.variance}.")
        if not 0 <= self.rho < 1:
            raise ValueError(f"Expected 0 <= rho < 1 for a proper CAR field but got {self.rho}.")
        if self.population < 1:
            raise ValueError(f"Expected a positive population but got {self.population}.")
        if self.replicates < 1:
            raise ValueError(f"Expected at least one replicate but got {self.replicates}.")

    @classmethod
    def from_id(cls, scenario_id: int, population: int = 150, replicates: int = 100) -> "ScenarioSpec":
        if scenario_id not in SCENARIOS:
            raise ValueError(f"Unknown scenario {scenario_id}; expected one of {sorted(SCENARIOS)}.")
        return cls(scenario_id, *SCENARIOS[scenario_id], population=population, replicates=replicates)


@fix_dataclass_init_docs
@dataclass
class SimulatedDataset:
    """One simulated data set with its true proportions.

    Attributes:
        scenario: The generating scenario.
        replicate: Replicate index.
        p_group1: True high-income White proportion per unit.
        p_group2: True low-income Black proportion per unit.
        observations: Simulated county observations.
        seed: Seed description of the generating stream.

    """
    scenario: ScenarioSpec
    replicate: int
    p_group1: FloatArray
    p_group2: FloatArray
    observations: List[CountyObservation]
    seed: str = ''

    @property
    def ice(self) -> FloatArray:
        return self.p_group1 - self.p_group2

    def truths_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'replicate': self.replicate, 'fips': [o.unit_id for o in self.observations],
                             'p_white_high': self.p_group1, 'p_black_low': self.p_group2, 'ice': self.ice})


def generate(scenario: ScenarioSpec, graph: AdjacencyGraph, rng: SeedLike, replicate: int = 0) -> SimulatedDataset:
    """Simulate one data set of a scenario on a graph.

    Each group's logit proportion is its mean plus an independent zero-mean GMRF with covariance
    :math:`\\sigma^2 (D - \\rho W)^{-1}`, and counts are :math:`\\text{Binomial}(N, p_i)`. A county whose two counts
    exceed :math:`N` together has both counts redrawn until they fit.

    Args:
        scenario: Scenario parameters.
        graph: Adjacency graph (every unit needs a neighbour).
        rng: Random generator or seed.
        replicate: Replicate index recorded on the data set.

    Returns:
        The simulated data set.

    """
    if graph.n < 2:
        raise ValueError(f"Expected a graph with at least two units but got {graph.n}.")
    seed = repr(rng) if isinstance(rng, np.random.SeedSequence) else str(rng)
    rng = as_generator(rng)
    precision = car_precision(graph, CarKind.PROPER, scenario.rho)
    fields = sample_gmrf(precision, scenario.variance, rng, size=2)
    p1 = inv_logit(scenario.mean1 + fields[0])
    p2 = inv_logit(scenario.mean2 + fields[1])
    big_n = scenario.population
    y1, y2 = rng.binomial(big_n, p1), rng.binomial(big_n, p2)
    for attempt in range(MAX_REDRAWS):
        over = np.flatnonzero(y1 + y2 > big_n)
        if not over.size:
            break
        logger.info(f"Scenario {scenario.id} replicate {replicate}: redrawing {over.size} counties with "
                    f"y1 + y2 > {big_n}")
        y1[over], y2[over] = rng.binomial(big_n, p1[over]), rng.binomial(big_n, p2[over])
    else:
        raise NumericalError(f"Could not draw counts with y1 + y2 <= {big_n} after {MAX_REDRAWS} attempts.")
    observations = [CountyObservation(unit, int(a), int(b), big_n) for unit, a, b in zip(graph.unit_ids, y1, y2)]
    return SimulatedDataset(scenario, replicate, p1, p2, observations, seed)


def fit_summary(observations: Sequence[CountyObservation], graph: AdjacencyGraph, spec: ModelSpec,
                seed: np.random.SeedSequence, progress: bool = False) -> Tuple[IceSummary, Optional[float]]:
    """Fit one model to observations and return its ICE summary with the joint WAIC (None for the bootstrap)."""
    if spec.approach == Approach.BOOTSTRAP:
        return bootstrap_ice(observations, spec.replicates, seed, progress=progress), None
    draws = fit_ice_model(observations, graph, spec, seeds=seed.spawn(2), progress=progress)
    names = [o.name for o in observations]
    return posterior_ice(*draws, names=names), joint_waic(draws[0].loglik, draws[1].loglik).waic


@fix_dataclass_init_docs
@dataclass(frozen=True)
class ExperimentConfig:
    """Simulation experiment settings, usually read from a YAML file.

    Attributes:
        scenarios: Scenario ids.
        populations: Per-county denominators :math:`N`.
        models: Model labels (:code:`bootstrap, icar, bym, leroux, local2, local3`).
        replicates: Simulated data sets per (scenario, N).
        seed: Root seed.
        iterations: MCMC sweeps per fit.
        burn_in: Burn-in sweeps per fit.
        thin: Thinning interval.
        bootstrap_replicates: Bootstrap replicates :math:`B`.
        prior_a: Inverse-Gamma shape.
        prior_b: Inverse-Gamma rate.
        output: Output directory.
        adjacency: Adjacency file; the rook-lattice fallback is used if omitted.
        threads: Worker processes.

    """
    scenarios: Tuple[int, ...] = tuple(SCENARIOS)
    populations: Tuple[int, ...] = POPULATIONS
    models: Tuple[str, ...] = DEFAULT_MODELS
    replicates: int = 100
    seed: int = 0
    iterations: int = 50000
    burn_in: int = 20000
    thin: int = 1
    bootstrap_replicates: int = 10000
    prior_a: float = 1
    prior_b: float = 0.01
    output: str = 'results'
    adjacency: Optional[str] = None
    threads: int = 1

    def __post_init__(self):
        for name in ('scenarios', 'populations', 'models'):
            value = getattr(self, name)
            object.__setattr__(self, name, tuple(value) if isinstance(value, (list, tuple)) else (value,))
        if not self.models:
            raise ValueError("Expected at least one model.")
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ValueError(f"Unknown scenario {s}; expected one of {sorted(SCENARIOS)}.")
        self.model_specs()

    @classmethod
    def from_yaml(cls, path: Union[str, Path], **overrides) -> "ExperimentConfig":
        with open(path) as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise DataValidationError(f"{path} is not valid YAML: {e}") from e
        if not isinstance(data, dict):
            raise DataValidationError(f"{path} must hold a mapping of settings.")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataValidationError(f"{path} has unknown settings {sorted(unknown)}.")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def scenario_specs(self) -> List[ScenarioSpec]:
        return [ScenarioSpec.from_id(s, population, self.replicates)
                for population in self.populations for s in self.scenarios]

    def model_specs(self) -> List[ModelSpec]:
        mcmc = McmcSettings(self.iterations, self.burn_in, self.thin, self.seed)
        return [ModelSpec.from_label(label, prior_shape=self.prior_a, prior_rate=self.prior_b, mcmc=mcmc,
                                     replicates=self.bootstrap_replicates) for label in self.models]


@fix_dataclass_init_docs
@dataclass
class ExperimentResult:
    """Aggregated experiment output.

    Attributes:
        metrics: One row per (scenario, N, model) cell.
        failures: One row per failed (scenario, N, model, replicate) fit with the error message.

    """
    metrics: List[EvalMetrics]
    failures: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(
        columns=list(FAILURE_COLUMNS)))

    def long_frame(self) -> pd.DataFrame:
        return pd.DataFrame([m.as_row() for m in self.metrics])

    def tables(self) -> Dict[int, pd.DataFrame]:
        """Metric tables (rows metric × scenario, columns M1 to M6) keyed by population size (None if unknown)."""
        populations = sorted({m.population for m in self.metrics}, key=lambda n: -1 if n is None else n)
        return {n: metrics_table([m for m in self.metrics if m.population == n]) for n in populations}

    def write(self, output: Union[str, Path]):
        output = Path(output)
        output.mkdir(parents=True, exist_ok=True)
        for population, table in self.tables().items():
            name = 'table.csv' if population is None else f'table_N{population}.csv'
            table.to_csv(output / name, float_format='%.6g')
        self.long_frame().to_csv(output / 'metrics_long.csv', index=False, float_format='%.6g')
        self.failures.to_csv(output / 'failures.csv', index=False)


def fit_replicate(observations: Sequence[CountyObservation], truth: FloatArray, models: Sequence[ModelSpec],
                  graph: AdjacencyGraph, seed: int, scenario: int, population: int, replicate: int) -> List[Dict]:
    """Fit every model to one data set and record its ICE estimates next to the truth.

    A fit that raises :code:`NumericalError` or :code:`ValueError` is logged and recorded with its error message.
    Model :code:`m` draws from the seed sequence keyed by :code:`(seed, scenario, population, replicate, m + 1)`.
    """
    records = []
    for index, spec in enumerate(models):
        record = {'scenario': scenario, 'population': population, 'model': spec.label, 'replicate': replicate}
        try:
            summary, waic = fit_summary(observations, graph, spec,
                                        task_seed(seed, scenario, population, replicate, index + 1))
            record.update(estimate=summary.estimate, lower=summary.lower, upper=summary.upper,
                          truth=np.asarray(truth, dtype=float), waic=waic)
        except (NumericalError, ValueError) as e:
            logger.warning(f"Scenario {scenario}, N={population}, replicate {replicate}, {spec.label} failed: {e}")
            record['error'] = str(e)
        records.append(record)
    return records


def collect_metrics(records: Sequence[Dict]) -> ExperimentResult:
    """Aggregate per-replicate records into one metrics row per (scenario, N, model) cell."""
    cells: Dict[Tuple, List[Dict]] = {}
    for record in records:
        cells.setdefault((record['scenario'], record['population'], record['model']), []).append(record)
    metrics, failures = [], []
    for (scenario, population, model), cell in cells.items():
        failed = [r for r in cell if 'error' in r]
        failures.extend({k: r[k] for k in FAILURE_COLUMNS} for r in failed)
        done = [r for r in cell if 'error' not in r]
        if not done:
            logger.error(f"Every replicate of {model} failed for scenario {scenario}, N={population}")
            continue
        waics = [r['waic'] for r in done if r['waic'] is not None]
        metrics.append(evaluate_replicates(
            [r['estimate'] for r in done], [r['lower'] for r in done], [r['upper'] for r in done],
            [r['truth'] for r in done], scenario=scenario, model=model, population=population,
            waic=float(np.mean(waics)) if waics else None, replicates=len(done), failures=len(failed)))
    return ExperimentResult(metrics, pd.DataFrame(failures, columns=list(FAILURE_COLUMNS)))


def _replicate_task(args) -> List[Dict]:
    scenario, replicate, models, graph, seed = args
    dataset = generate(scenario, graph, task_seed(seed, scenario.id, scenario.population, replicate), replicate)
    return fit_replicate(dataset.observations, dataset.ice, models, graph, seed, scenario.id, scenario.population,
                         replicate)


def _dataset_task(args) -> List[Dict]:
    return fit_replicate(*args)


def _map(fn, tasks: List, threads: int, progress: bool) -> List:
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(tqdm(pool.map(fn, tasks), total=len(tasks), disable=not progress))
    return [fn(task) for task in tqdm(tasks, disable=not progress)]


def run_experiment(scenarios: Sequence[ScenarioSpec], models: Sequence[ModelSpec], graph: AdjacencyGraph,
                   seed: int, threads: int = 1, progress: bool = False) -> ExperimentResult:
    """Simulate, fit and evaluate every (scenario, N, replicate) with every model.

    All models of one replicate are fitted to the same simulated data set. Each data set and each fit draws from its
    own seed sequence keyed by (scenario, N, replicate, model), so results do not depend on the thread count.

    Args:
        scenarios: Scenarios, each carrying its population size and replicate count.
        models: Model specs (their MCMC seeds are ignored in favour of the task seeds).
        graph: Adjacency graph.
        seed: Root seed.
        threads: Worker processes.
        progress: Show a progress bar over replicate tasks.

    Returns:
        Metrics per cell and a record of failed fits.

    """
    if not models:
        raise ValueError("Expected at least one model.")
    tasks = [(scenario, replicate, tuple(models), graph, seed)
             for scenario in scenarios for replicate in range(scenario.replicates)]
    logger.info(f"Running {len(tasks)} replicate tasks x {len(models)} models on {threads} worker(s)")
    outputs = _map(_replicate_task, tasks, threads, progress)
    return collect_metrics([record for output in outputs for record in output])


def evaluate_datasets(datasets: Sequence[Tuple[int, Sequence[CountyObservation], FloatArray]],
                      models: Sequence[ModelSpec], graph: AdjacencyGraph, seed: int, scenario: int = 0,
                      threads: int = 1, progress: bool = False) -> ExperimentResult:
    """Fit and evaluate models on data sets that were simulated earlier.

    Args:
        datasets: :code:`(replicate, observations, true ICE)` triples sharing one population size.
        models: Model specs.
        graph: Adjacency graph.
        seed: Root seed of the fits.
        scenario: Scenario id recorded on the metrics.
        threads: Worker processes.
        progress: Show a progress bar.

    Returns:
        Metrics per model and a record of failed fits.

    """
    if not models:
        raise ValueError("Expected at least one model.")
    tasks = [(observations, truth, tuple(models), graph, seed, scenario, observations[0].n_total, replicate)
             for replicate, observations, truth in datasets]
    outputs = _map(_dataset_task, tasks, threads, progress)
    return collect_metrics([record for output in outputs for record in output])


def sensitivity_analysis(observations: Sequence[CountyObservation], graph: AdjacencyGraph,
                         models: Sequence[ModelSpec], priors: Sequence[Prior] = PRIOR_GRID,
                         threads: int = 1) -> pd.DataFrame:
    """Statewide ICE of each Bayesian model under each Inverse-Gamma variance prior.

    Every (model, prior) fit reuses the model's MCMC seed, so differences between rows come from the prior alone.

    Args:
        observations: County observations.
        graph: Adjacency graph.
        models: Model specs; bootstrap specs are skipped (no variance prior).
        priors: :math:`(a, b)` pairs.
        threads: Worker processes.

    Returns:
        Table with columns :code:`model, prior_a, prior_b, estimate, lower, upper, waic`.

    """
    tasks = [(observations, graph, replace(spec, prior_shape=a, prior_rate=b))
             for spec in models if spec.approach != Approach.BOOTSTRAP for a, b in priors]
    rows = _map(_sensitivity_task, tasks, threads, False)
    return pd.DataFrame(rows, columns=['model', 'prior_a', 'prior_b', 'estimate', 'lower', 'upper', 'waic'])


def _sensitivity_task(args) -> Dict:
    observations, graph, spec = args
    summary, waic = fit_summary(observations, graph, spec, np.random.SeedSequence(spec.mcmc.seed))
    estimate, lower, upper = summary.statewide
    return {'model': spec.label, 'prior_a': spec.prior_shape, 'prior_b': spec.prior_rate, 'estimate': estimate,
            'lower': lower, 'upper': upper, 'waic': waic}
