import numpy as np
import pandas as pd
import pytest

from spice.diagnostics import EvalMetrics
from spice.exceptions import DataValidationError
from spice.graph import build_graph, lattice_graph, morans_i
from spice.model import Approach, CountyObservation, McmcSettings, ModelSpec, inv_logit, logit
from spice.simulation import ExperimentConfig, ExperimentResult, ScenarioSpec, collect_metrics, fit_replicate, \
    generate, run_experiment, sensitivity_analysis
from spice.utils import task_seed

GRID = lattice_graph(4, 5)
SHORT = McmcSettings(300, 100, 1, 11)
BOOTSTRAP = ModelSpec.from_label('bootstrap', replicates=200)


@pytest.mark.parametrize(
    "scenario_id, mean2, variance, rho",
    [
        [1, -1.72, 0.2, 0.2],
        [2, -1.72, 0.2, 0.65],
        [3, -0.4, 0.4, 0.2],
        [4, -0.4, 0.4, 0.65],
    ],
)
def test_scenario_bindings(scenario_id, mean2, variance, rho):
    scenario = ScenarioSpec.from_id(scenario_id, population=500)
    assert (scenario.mean1, scenario.mean2, scenario.variance, scenario.rho) == (-1.72, mean2, variance, rho)
    assert scenario.population == 500


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(variance=-0.1, rho=0.2),
        dict(variance=0.2, rho=1),
        dict(variance=0.2, rho=0.2, population=0),
    ],
)
def test_scenario_invalid(kwargs):
    with pytest.raises(ValueError):
        ScenarioSpec(1, -1.72, -1.72, **kwargs)
    with pytest.raises(ValueError):
        ScenarioSpec.from_id(5)


def test_generate_without_variance():
    dataset = generate(ScenarioSpec(0, -1.72, -0.4, 0, 0.2, population=100), GRID, 0)
    np.testing.assert_allclose(dataset.p_group1, inv_logit(-1.72))
    np.testing.assert_allclose(dataset.p_group2, inv_logit(-0.4))
    np.testing.assert_allclose(dataset.ice, inv_logit(-1.72) - inv_logit(-0.4))


def test_generate_scenario_one_mean():
    graph = lattice_graph()
    scenario = ScenarioSpec.from_id(1)
    means = [generate(scenario, graph, task_seed(0, 1, 150, r), r).p_group1.mean() for r in range(20)]
    assert np.mean(means) == pytest.approx(0.15, abs=0.02)


def test_generate_dependence_strength():
    graph = lattice_graph()
    weak, strong = ScenarioSpec.from_id(3), ScenarioSpec.from_id(4)
    moran_weak = np.mean([morans_i(logit(generate(weak, graph, r).p_group1), graph) for r in range(20)])
    moran_strong = np.mean([morans_i(logit(generate(strong, graph, r).p_group1), graph) for r in range(20)])
    assert moran_strong > moran_weak


def test_generate_is_reproducible():
    scenario = ScenarioSpec.from_id(2)
    first = generate(scenario, GRID, task_seed(3, 2, 150, 0))
    second = generate(scenario, GRID, task_seed(3, 2, 150, 0))
    assert first.observations == second.observations
    np.testing.assert_array_equal(first.p_group1, second.p_group1)
    assert generate(scenario, GRID, task_seed(3, 2, 150, 1)).observations != first.observations


def test_generate_counts_fit_population():
    scenario = ScenarioSpec(9, 0.5, 0.5, 0.4, 0.2, population=4)
    for r in range(10):
        dataset = generate(scenario, GRID, r, r)
        assert all(o.y_group1 + o.y_group2 <= 4 and o.n_total == 4 for o in dataset.observations)
        frame = dataset.truths_frame()
        assert list(frame.columns) == ['replicate', 'fips', 'p_white_high', 'p_black_low', 'ice']
        assert (frame['replicate'] == r).all()


def test_generate_requires_two_units():
    with pytest.raises(ValueError):
        generate(ScenarioSpec.from_id(1), build_graph([], ['a']), 0)


def test_run_experiment():
    scenarios = [ScenarioSpec.from_id(1, population=150, replicates=2)]
    models = [BOOTSTRAP, ModelSpec.from_label('bym', mcmc=SHORT)]
    result = run_experiment(scenarios, models, GRID, seed=5)
    assert result.failures.empty
    rows = {m.model: m for m in result.metrics}
    assert set(rows) == {'bootstrap', 'bym'}
    assert rows['bootstrap'].waic is None and np.isfinite(rows['bym'].waic)
    for m in result.metrics:
        assert m.scenario == 1 and m.population == 150 and m.replicates == 2
        assert 0 <= m.coverage <= 1 and m.rmse < 0.2
    table = result.tables()[150]
    assert list(table.columns) == ['M1', 'M3']


def test_run_experiment_independent_of_threads():
    scenarios = [ScenarioSpec.from_id(s, population=150, replicates=3) for s in (1, 3)]
    serial = run_experiment(scenarios, [BOOTSTRAP], GRID, seed=8)
    parallel = run_experiment(scenarios, [BOOTSTRAP], GRID, seed=8, threads=2)
    pd.testing.assert_frame_equal(serial.long_frame(), parallel.long_frame())


def test_failed_fits_are_recorded():
    graph = build_graph([('1', '2'), ('2', '3')], ['1', '2', '3', '4'])
    observations = [CountyObservation(str(i), 10 + i, 20, 100) for i in range(1, 5)]
    records = fit_replicate(observations, np.zeros(4), [BOOTSTRAP, ModelSpec.from_label('icar', mcmc=SHORT)],
                            graph, seed=1, scenario=1, population=100, replicate=0)
    assert 'error' not in records[0]
    assert 'isolated' in records[1]['error']
    result = collect_metrics(records)
    assert [m.model for m in result.metrics] == ['bootstrap']
    assert result.failures.to_dict(orient='records') == [
        {'scenario': 1, 'population': 100, 'model': 'icar', 'replicate': 0, 'error': records[1]['error']}]


def test_experiment_config(tmp_path):
    (tmp_path / 'config.yaml').write_text(
        'scenarios: [1, 3]\npopulations: [150, 500]\nmodels: [bootstrap, local2]\nreplicates: 4\n'
        'iterations: 1000\nburn_in: 400\nprior_a: 0.1\nprior_b: 0.1\nseed: 3\n')
    config = ExperimentConfig.from_yaml(tmp_path / 'config.yaml', seed=7, threads=None)
    assert config.seed == 7 and config.threads == 1
    assert [(s.id, s.population, s.replicates) for s in config.scenario_specs()] == [
        (1, 150, 4), (3, 150, 4), (1, 500, 4), (3, 500, 4)]
    bootstrap, local = config.model_specs()
    assert bootstrap.approach == Approach.BOOTSTRAP and bootstrap.replicates == 10000
    assert local.clusters == 2 and local.prior_shape == 0.1 and local.mcmc == McmcSettings(1000, 400, 1, 7)


@pytest.mark.parametrize(
    "text, error",
    [
        ['scenarios: [1]\nchains: 4\n', DataValidationError],
        ['- 1\n- 2\n', DataValidationError],
        ['scenarios: [7]\n', ValueError],
        ['models: [gaussian]\n', ValueError],
    ],
)
def test_experiment_config_invalid(tmp_path, text, error):
    (tmp_path / 'config.yaml').write_text(text)
    with pytest.raises(error):
        ExperimentConfig.from_yaml(tmp_path / 'config.yaml')


def test_experiment_result_write(tmp_path):
    metrics = [EvalMetrics(0.1, 0.9, 0.3, scenario=s, model='bootstrap', population=n)
               for s in (1, 2) for n in (150, 500)]
    ExperimentResult(metrics).write(tmp_path / 'results')
    written = sorted(p.name for p in (tmp_path / 'results').iterdir())
    assert written == ['failures.csv', 'metrics_long.csv', 'table_N150.csv', 'table_N500.csv']
    long = pd.read_csv(tmp_path / 'results' / 'metrics_long.csv')
    assert len(long) == 4
    ExperimentResult([EvalMetrics(0.1, 0.9, 0.3, scenario=0, model='model')]).write(tmp_path / 'plain')
    assert (tmp_path / 'plain' / 'table.csv').exists()


def test_sensitivity_analysis():
    observations = generate(ScenarioSpec.from_id(1), GRID, 4).observations
    models = [BOOTSTRAP, ModelSpec.from_label('bym', mcmc=SHORT)]
    priors = ((1, 0.01), (0.1, 0.1))
    table = sensitivity_analysis(observations, GRID, models, priors)
    assert list(table.columns) == ['model', 'prior_a', 'prior_b', 'estimate', 'lower', 'upper', 'waic']
    assert list(table['model']) == ['bym', 'bym']
    assert list(zip(table['prior_a'], table['prior_b'])) == list(priors)
    assert ((table['lower'] <= table['estimate']) & (table['estimate'] <= table['upper'])).all()
    again = sensitivity_analysis(observations, GRID, models, priors)
    pd.testing.assert_frame_equal(table, again)
