import json

import pandas as pd
import pytest
from click.testing import CliRunner

from spice import __version__
from spice.cli import MANIFEST, cli, main
from spice.graph import lattice_graph, write_edge_list
from spice.ice import IceSummary
from spice.model import write_observations
from spice.simulation import ScenarioSpec, generate

GRID = lattice_graph(4, 5)


@pytest.fixture
def county_data(tmp_path):
    data, adjacency = tmp_path / 'counties.csv', tmp_path / 'adjacency.csv'
    write_observations(generate(ScenarioSpec.from_id(3), GRID, 0).observations, data)
    write_edge_list(GRID, adjacency)
    return str(data), str(adjacency)


def test_version():
    result = CliRunner().invoke(cli, ['--version'])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_fit_bootstrap(tmp_path, county_data):
    data, _ = county_data
    out = tmp_path / 'out'
    result = CliRunner().invoke(cli, ['fit', '--data', data, '--model', 'bootstrap', '--b', '200', '--seed', '1',
                                      '--out', str(out)])
    assert result.exit_code == 0, result.output
    assert 'bootstrap: statewide ICE' in result.output
    summary = IceSummary.from_json(out / 'ice_summary.json')
    assert summary.n == 20 and summary.metadata['replicates'] == 200
    assert list(pd.read_csv(out / 'ice_counties.csv').columns) == ['fips', 'estimate', 'lower', 'upper', 'sign']
    manifest = json.loads((out / MANIFEST).read_text())
    assert manifest['command'] == 'fit' and manifest['seed'] == 1 and data in manifest['inputs']
    assert not (out / 'waic.json').exists()


def test_fit_bym(tmp_path, county_data):
    data, adjacency = county_data
    out = tmp_path / 'out'
    code = main(['fit', '--data', data, '--adjacency', adjacency, '--model', 'bym', '--iters', '300', '--burnin',
                 '100', '--seed', '2', '--out', str(out), '--dump-draws'])
    assert code == 0
    summary = IceSummary.from_json(out / 'ice_summary.json')
    assert summary.method == 'bym' and summary.metadata['draws'] == 200
    waic = json.loads((out / 'waic.json').read_text())
    assert waic['num_points'] == 40 and waic['group1']['num_points'] == 20
    convergence = pd.read_csv(out / 'convergence.csv')
    assert list(convergence.columns) == ['group', 'parameter', 'ess', 'rhat']
    assert set(convergence['group']) == {1, 2}
    assert (out / 'draws_group1.csv').exists() and (out / 'draws_group2.csv').exists()


def test_fit_is_byte_identical_across_threads(tmp_path, county_data):
    data, adjacency = county_data
    outputs = []
    for name, threads in (('a', '1'), ('b', '8'), ('c', '1')):
        out = tmp_path / name
        assert main(['fit', '--data', data, '--adjacency', adjacency, '--model', 'local', '--clusters', '2',
                     '--iters', '300', '--burnin', '100', '--seed', '6', '--threads', threads, '--out', str(out),
                     '--dump-draws']) == 0
        outputs.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != MANIFEST})
    assert len(outputs[0]) == 6
    assert outputs[0] == outputs[1] == outputs[2]


def test_fit_local_clusters(tmp_path, county_data):
    data, adjacency = county_data
    code = main(['fit', '--data', data, '--adjacency', adjacency, '--model', 'local', '--clusters', '2', '--iters',
                 '300', '--burnin', '100', '--seed', '2', '--out', str(tmp_path / 'out')])
    assert code == 0
    assert IceSummary.from_json(tmp_path / 'out' / 'ice_summary.json').method == 'local2'


@pytest.mark.parametrize(
    "args",
    [
        ['fit', '--model', 'icar', '--seed', '1'],
        ['fit', '--model', 'bym', '--clusters', '2', '--seed', '1'],
        ['fit', '--model', 'gaussian', '--seed', '1'],
        ['fit', '--model', 'bootstrap'],
    ],
)
def test_fit_usage_errors(tmp_path, county_data, args):
    data, _ = county_data
    assert main(args + ['--data', data, '--out', str(tmp_path / 'out')]) == 1


def test_fit_invalid_row(tmp_path, capsys):
    data = tmp_path / 'bad.csv'
    data.write_text('fips,name,n_total,y_white_high,y_black_low\n13001,A,100,30,20\n13003,B,50,60,0\n')
    code = main(['fit', '--data', str(data), '--model', 'bootstrap', '--seed', '1', '--out', str(tmp_path / 'out')])
    assert code == 2
    err = capsys.readouterr().err
    assert 'line 3' in err and '13003' in err


def test_fit_isolated_county(tmp_path, county_data):
    data, _ = county_data
    adjacency = tmp_path / 'sparse.csv'
    adjacency.write_text('src,dst\nR00C00,R00C01\n')
    code = main(['fit', '--data', data, '--adjacency', str(adjacency), '--model', 'icar', '--iters', '300',
                 '--burnin', '100', '--seed', '1', '--out', str(tmp_path / 'out')])
    assert code == 2


def test_simulate_is_reproducible(tmp_path):
    for name in ('a', 'b'):
        assert main(['simulate', '--scenario', '2', '--n', '150', '--replicates', '3', '--seed', '42', '--out',
                     str(tmp_path / name)]) == 0
    files = sorted(p.name for p in (tmp_path / 'a').iterdir())
    assert files == ['adjacency.csv', 'replicate_000.csv', 'replicate_001.csv', 'replicate_002.csv',
                     MANIFEST, 'truths.csv']
    for name in files:
        if name != MANIFEST:
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
    truths = pd.read_csv(tmp_path / 'a' / 'truths.csv')
    assert len(truths) == 3 * 156


def test_simulate_unknown_scenario(tmp_path):
    assert main(['simulate', '--scenario', '9', '--seed', '1', '--out', str(tmp_path / 'sim')]) == 1


def test_evaluate_sim_dir(tmp_path):
    sim, results = tmp_path / 'sim', tmp_path / 'results'
    assert main(['simulate', '--scenario', '3', '--replicates', '2', '--seed', '5', '--out', str(sim)]) == 0
    assert main(['evaluate', '--sim-dir', str(sim), '--models', 'bootstrap', '--b', '200', '--seed', '5', '--out',
                 str(results)]) == 0
    long = pd.read_csv(results / 'metrics_long.csv')
    assert list(long['model']) == ['bootstrap']
    assert long.loc[0, 'scenario'] == 3 and long.loc[0, 'replicates'] == 2 and long.loc[0, 'population'] == 150
    assert (results / 'table_N150.csv').exists()


@pytest.mark.parametrize(
    "args",
    [
        ['--models', ''],
        ['--models', 'bootstrap,gaussian'],
    ],
)
def test_evaluate_bad_models(tmp_path, args):
    sim = tmp_path / 'sim'
    assert main(['simulate', '--scenario', '1', '--replicates', '1', '--seed', '5', '--out', str(sim)]) == 0
    assert main(['evaluate', '--sim-dir', str(sim), '--seed', '1', '--out', str(tmp_path / 'r')] + args) == 1


def test_evaluate_needs_one_mode(tmp_path):
    assert main(['evaluate', '--out', str(tmp_path / 'r')]) == 1


def test_evaluate_estimates(tmp_path):
    estimates, truths = tmp_path / 'estimates.csv', tmp_path / 'truths.csv'
    estimates.write_text('replicate,fips,estimate,lower,upper\n0,01,0.1,0.0,0.2\n0,02,0.3,0.25,0.35\n')
    truths.write_text('replicate,fips,ice\n0,01,0.15\n0,02,0.2\n')
    assert main(['evaluate', '--estimates', str(estimates), '--truths', str(truths), '--out',
                 str(tmp_path / 'r')]) == 0
    long = pd.read_csv(tmp_path / 'r' / 'metrics_long.csv')
    assert long.loc[0, 'coverage'] == 0.5
    assert long.loc[0, 'rmse'] == pytest.approx(((0.05 ** 2 + 0.1 ** 2) / 2) ** 0.5)


def test_evaluate_estimates_missing_column(tmp_path, capsys):
    estimates, truths = tmp_path / 'estimates.csv', tmp_path / 'truths.csv'
    estimates.write_text('replicate,fips,estimate,upper\n0,01,0.1,0.2\n')
    truths.write_text('replicate,fips,ice\n0,01,0.15\n')
    assert main(['evaluate', '--estimates', str(estimates), '--truths', str(truths), '--out',
                 str(tmp_path / 'r')]) == 2
    assert 'lower' in capsys.readouterr().err


def test_evaluate_config(tmp_path):
    config = tmp_path / 'config.yaml'
    config.write_text('scenarios: [1]\npopulations: [150]\nmodels: [bootstrap]\nreplicates: 2\n'
                      'bootstrap_replicates: 200\nseed: 4\n')
    assert main(['evaluate', '--config', str(config), '--out', str(tmp_path / 'r')]) == 0
    assert (tmp_path / 'r' / 'table_N150.csv').exists()
    config.write_text('scenarios: [1]\nwindows: 3\n')
    assert main(['evaluate', '--config', str(config), '--out', str(tmp_path / 'r')]) == 2


def _fit(tmp_path, data, name):
    out = tmp_path / name
    assert main(['fit', '--data', data, '--model', 'bootstrap', '--b', '200', '--seed', '1', '--out', str(out)]) == 0
    return out / 'ice_summary.json'


def test_report(tmp_path, county_data):
    data, _ = county_data
    summary = _fit(tmp_path, data, 'fit')
    geojson = tmp_path / 'counties.geojson'
    geojson.write_text(json.dumps({'type': 'FeatureCollection', 'features': [
        {'type': 'Feature', 'properties': {'GEOID': unit}, 'geometry': None} for unit in GRID.unit_ids]}))
    out = tmp_path / 'report'
    result = CliRunner().invoke(cli, ['report', '--t1', str(summary), '--t2', str(summary), '--geojson',
                                      str(geojson), '--out', str(out)])
    assert result.exit_code == 0, result.output
    assert 'unchanged: 20' in result.output
    changes = pd.read_csv(out / 'sign_changes.csv')
    assert changes.empty
    assert list(changes.columns) == ['fips', 'name', 'ice_t1', 'ice_t2', 'transition', 'movement']
    annotated = json.loads((out / 'ice_annotated.geojson').read_text())
    assert {f['properties']['transition'] for f in annotated['features']} == {'unchanged'}


def test_report_mismatched_counties(tmp_path, county_data):
    data, _ = county_data
    summary = _fit(tmp_path, data, 'fit')
    other = tmp_path / 'other.csv'
    write_observations(generate(ScenarioSpec.from_id(3), lattice_graph(2, 2), 0).observations, other)
    assert main(['report', '--t1', str(summary), '--t2', str(_fit(tmp_path, str(other), 'other')), '--out',
                 str(tmp_path / 'report')]) == 2


def test_rerun(tmp_path):
    sim = tmp_path / 'sim'
    assert main(['simulate', '--scenario', '4', '--replicates', '2', '--seed', '9', '--out', str(sim)]) == 0
    first = (sim / 'replicate_001.csv').read_bytes()
    (sim / 'replicate_001.csv').unlink()
    assert main(['rerun', str(sim / MANIFEST)]) == 0
    assert (sim / 'replicate_001.csv').read_bytes() == first


def test_rerun_missing_input(tmp_path, county_data):
    data, _ = county_data
    summary = _fit(tmp_path, data, 'fit')
    manifest = summary.parent / MANIFEST
    (tmp_path / 'counties.csv').unlink()
    assert main(['rerun', str(manifest)]) == 2
