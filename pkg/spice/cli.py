import json
import logging
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd

from . import __version__
from .diagnostics import convergence_summary, evaluate_replicates, joint_waic, waic
from .exceptions import DataValidationError, NumericalError
from .graph import AdjacencyGraph, lattice_graph, read_adjacency, write_edge_list
from .ice import (IceSummary, annotate_geojson, bootstrap_ice, posterior_ice, read_geojson, sign_change_report,
                  sign_changes, transition_counts)
from .mcmc import fit_ice_model, write_draws
from .model import Approach, CountyObservation, McmcSettings, ModelSpec, read_observations, write_observations
from .simulation import (DEFAULT_MODELS, SCENARIOS, ExperimentConfig, ExperimentResult, ScenarioSpec,
                         evaluate_datasets, generate, run_experiment)
from .utils import file_digest, task_seed

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(levelname)s: %(message)s'
MANIFEST = 'run_manifest.json'
EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3
ESTIMATE_COLUMNS = ('replicate', 'fips', 'estimate', 'lower', 'upper')
TRUTH_COLUMNS = ('replicate', 'fips', 'ice')
REPLICATE_FILE = re.compile(r'replicate_(\d+)\.csv$')


def write_manifest(out: Path, command: str, params: Dict, inputs: Sequence[Optional[str]]) -> Path:
    """Record everything needed to re-execute a command: its parameters, input digests, seed and version."""
    manifest = {
        'command': command,
        'params': params,
        'inputs': {str(path): file_digest(path) for path in inputs if path},
        'seed': params.get('seed'),
        'version': __version__,
        'timestamp': datetime.now(timezone.utc).isoformat()
    }
    path = out / MANIFEST
    with open(path, 'w') as f:
        json.dump(manifest, f, indent=2)
    return path


def _write_json(path: Path, data: Dict):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_spec(model: str, clusters: Optional[int], iters: int, burnin: int, thin: int, seed: int, b: int,
                prior_a: float, prior_b: float) -> ModelSpec:
    try:
        approach = Approach(model)
        if approach != Approach.LOCAL and clusters not in (None, 1):
            raise ValueError(f"--clusters only applies to the local model, not {model}.")
        clusters = (3 if clusters is None else clusters) if approach == Approach.LOCAL else 1
        return ModelSpec(approach, clusters, prior_a, prior_b, McmcSettings(iters, burnin, thin, seed), b)
    except ValueError as e:
        raise click.UsageError(str(e))


def _parse_models(models: str, mcmc: McmcSettings, b: int, prior_a: float, prior_b: float) -> List[ModelSpec]:
    labels = [m.strip() for m in models.split(',') if m.strip()]
    if not labels:
        raise click.UsageError("The model list is empty.")
    try:
        return [ModelSpec.from_label(label, prior_shape=prior_a, prior_rate=prior_b, mcmc=mcmc, replicates=b)
                for label in labels]
    except ValueError as e:
        raise click.UsageError(str(e))


def _graph_for(observations: Sequence[CountyObservation], adjacency: Optional[str]) -> AdjacencyGraph:
    graph = read_adjacency(adjacency, [o.unit_id for o in observations])
    if graph.num_edges == 0:
        raise DataValidationError(f"{adjacency} does not connect any of the observed counties.")
    return graph


def _progress() -> bool:
    ctx = click.get_current_context()
    return bool(ctx.find_root().obj and ctx.find_root().obj.get('progress'))


mcmc_options = [
    click.option('--iters', default=50000, show_default=True, help='MCMC sweeps.'),
    click.option('--burnin', default=20000, show_default=True, help='Burn-in sweeps (adaptation stops here).'),
    click.option('--thin', default=1, show_default=True, help='Thinning interval.'),
    click.option('--b', 'b', default=10000, show_default=True, help='Bootstrap replicates.'),
    click.option('--prior-a', default=1.0, show_default=True, help='Inverse-Gamma shape of the variance priors.'),
    click.option('--prior-b', default=0.01, show_default=True, help='Inverse-Gamma rate of the variance priors.'),
    click.option('--threads', default=1, show_default=True, type=click.IntRange(min=1), help='Worker processes.'),
]


def with_options(options):
    def decorator(f):
        for option in reversed(options):
            f = option(f)
        return f
    return decorator


@click.group()
@click.option('-v', '--verbose', count=True, help='Log progress (-v) or debug output (-vv).')
@click.version_option(__version__, prog_name='spice')
@click.pass_context
def cli(ctx: click.Context, verbose: int):
    """Spatially smoothed Index of Concentration at the Extremes (ICE) for areal data."""
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger('spice').setLevel(level)
    ctx.ensure_object(dict)['progress'] = verbose > 0


@cli.command()
@click.option('--data', required=True, type=click.Path(exists=True, dir_okay=False),
              help='County observations CSV (fips,name,n_total,y_white_high,y_black_low).')
@click.option('--adjacency', type=click.Path(exists=True, dir_okay=False),
              help='Adjacency edge list (src,dst) or GAL file; required for the Bayesian models.')
@click.option('--model', required=True, type=click.Choice([a.value for a in Approach]), help='Estimation approach.')
@click.option('--clusters', type=click.IntRange(min=1), help='Ordered intercepts of the local model [default: 3].')
@with_options(mcmc_options)
@click.option('--seed', required=True, type=int, help='Root seed.')
@click.option('--out', default='out', show_default=True, type=click.Path(file_okay=False), help='Output directory.')
@click.option('--dump-draws', is_flag=True, help='Also write the posterior draws of both groups.')
def fit(**params):
    """Estimate the county and statewide ICE with one model."""
    spec = _model_spec(params['model'], params['clusters'], params['iters'], params['burnin'], params['thin'],
                       params['seed'], params['b'], params['prior_a'], params['prior_b'])
    observations = read_observations(params['data'])
    out = _out_dir(params['out'])
    metadata = {'model': spec.label, 'seed': params['seed']}
    if spec.approach == Approach.BOOTSTRAP:
        summary = bootstrap_ice(observations, spec.replicates, np.random.SeedSequence(params['seed']),
                                progress=_progress())
        metadata['replicates'] = spec.replicates
    else:
        if not params['adjacency']:
            raise click.UsageError(f"--adjacency is required for the {spec.label} model.")
        graph = _graph_for(observations, params['adjacency'])
        draws = fit_ice_model(observations, graph, spec, threads=params['threads'], progress=_progress())
        summary = posterior_ice(*draws, names=[o.name for o in observations])
        metadata.update(iterations=spec.mcmc.iterations, burn_in=spec.mcmc.burn_in, thin=spec.mcmc.thin,
                        prior=[spec.prior_shape, spec.prior_rate])
        result = joint_waic(draws[0].loglik, draws[1].loglik)
        _write_json(out / 'waic.json', {**result.to_dict(), 'group1': waic(draws[0].loglik).to_dict(),
                                        'group2': waic(draws[1].loglik).to_dict()})
        convergence = [convergence_summary([d]).assign(group=g) for g, d in enumerate(draws, 1)]
        pd.concat(convergence, ignore_index=True)[['group', 'parameter', 'ess', 'rhat']].to_csv(
            out / 'convergence.csv', index=False, float_format='%.6g')
        if params['dump_draws']:
            for g, d in enumerate(draws, 1):
                write_draws(d, out / f'draws_group{g}.csv')
    summary.metadata.update(metadata)
    summary.to_json(out / 'ice_summary.json')
    summary.to_csv(out / 'ice_counties.csv')
    estimate, lower, upper = summary.statewide
    click.echo(f"{spec.label}: statewide ICE {estimate:.4f} ({lower:.4f}, {upper:.4f})")
    write_manifest(out, 'fit', params, [params['data'], params['adjacency']])


@cli.command()
@click.option('--scenario', required=True, type=click.IntRange(min(SCENARIOS), max(SCENARIOS)), help='Scenario id.')
@click.option('--n', 'n', default=150, show_default=True, type=click.IntRange(min=1),
              help='Per-county denominator N.')
@click.option('--replicates', default=100, show_default=True, type=click.IntRange(min=1),
              help='Simulated data sets.')
@click.option('--adjacency', type=click.Path(exists=True, dir_okay=False),
              help='Adjacency edge list or GAL file [default: 12 x 13 rook lattice].')
@click.option('--seed', required=True, type=int, help='Root seed.')
@click.option('--out', default='sim', show_default=True, type=click.Path(file_okay=False), help='Output directory.')
def simulate(**params):
    """Simulate replicate data sets of a scenario."""
    graph = read_adjacency(params['adjacency']) if params['adjacency'] else lattice_graph()
    scenario = ScenarioSpec.from_id(params['scenario'], params['n'], params['replicates'])
    out = _out_dir(params['out'])
    truths = []
    for replicate in range(scenario.replicates):
        dataset = generate(scenario, graph, task_seed(params['seed'], scenario.id, scenario.population, replicate),
                           replicate)
        write_observations(dataset.observations, out / f'replicate_{replicate:03d}.csv')
        truths.append(dataset.truths_frame())
    pd.concat(truths, ignore_index=True).to_csv(out / 'truths.csv', index=False)
    write_edge_list(graph, out / 'adjacency.csv')
    click.echo(f"Wrote {scenario.replicates} replicate(s) of scenario {scenario.id} to {out}")
    write_manifest(out, 'simulate', params, [params['adjacency']])


def _require_columns(frame: pd.DataFrame, columns: Sequence[str], path: str):
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataValidationError(f"{path} is missing the column(s) {missing}.")


def _evaluate_estimates(estimates_path: str, truths_path: str) -> ExperimentResult:
    estimates = pd.read_csv(estimates_path, dtype={'fips': str})
    truths = pd.read_csv(truths_path, dtype={'fips': str})
    _require_columns(estimates, ESTIMATE_COLUMNS, estimates_path)
    _require_columns(truths, TRUTH_COLUMNS, truths_path)
    if 'model' not in estimates.columns:
        estimates = estimates.assign(model='model')
    merged = estimates.merge(truths[list(TRUTH_COLUMNS)], on=['replicate', 'fips'], how='left')
    if merged['ice'].isna().any():
        row = merged[merged['ice'].isna()].iloc[0]
        raise DataValidationError(f"{truths_path} has no truth for replicate {row['replicate']}, "
                                  f"fips {row['fips']}.")
    metrics = [evaluate_replicates(group['estimate'], group['lower'], group['upper'], group['ice'], scenario=0,
                                   model=model, replicates=group['replicate'].nunique())
               for model, group in merged.groupby('model', sort=False)]
    return ExperimentResult(metrics)


def _read_sim_dir(sim_dir: Path) -> Tuple[int, AdjacencyGraph, List[Tuple[int, List[CountyObservation], np.ndarray]]]:
    truths_path, adjacency_path = sim_dir / 'truths.csv', sim_dir / 'adjacency.csv'
    for path in (truths_path, adjacency_path):
        if not path.exists():
            raise DataValidationError(f"Simulation directory {sim_dir} has no {path.name}.")
    truths = pd.read_csv(truths_path, dtype={'fips': str})
    _require_columns(truths, TRUTH_COLUMNS, str(truths_path))
    files = sorted((int(m.group(1)), p) for p in sim_dir.iterdir() for m in [REPLICATE_FILE.search(p.name)] if m)
    if not files:
        raise DataValidationError(f"Simulation directory {sim_dir} has no replicate_XXX.csv files.")
    datasets = []
    for replicate, path in files:
        observations = read_observations(path)
        truth = truths[truths['replicate'] == replicate].set_index('fips')['ice']
        missing = [o.unit_id for o in observations if o.unit_id not in truth.index]
        if missing:
            raise DataValidationError(f"{truths_path} has no truth for replicate {replicate}, fips {missing[0]}.")
        datasets.append((replicate, observations, truth.loc[[o.unit_id for o in observations]].to_numpy()))
    graph = _graph_for(datasets[0][1], str(adjacency_path))
    scenario = 0
    if (sim_dir / MANIFEST).exists():
        with open(sim_dir / MANIFEST) as f:
            scenario = json.load(f).get('params', {}).get('scenario', 0)
    return scenario, graph, datasets


@cli.command()
@click.option('--config', type=click.Path(exists=True, dir_okay=False), help='Experiment YAML file.')
@click.option('--sim-dir', type=click.Path(exists=True, file_okay=False), help='Output directory of simulate.')
@click.option('--estimates', type=click.Path(exists=True, dir_okay=False),
              help='Precomputed estimates CSV (replicate,fips,estimate,lower,upper[,model]).')
@click.option('--truths', type=click.Path(exists=True, dir_okay=False),
              help='Truths CSV (replicate,fips,ice) for --estimates.')
@click.option('--models', default=','.join(DEFAULT_MODELS), show_default=True,
              help='Comma-separated model labels for --sim-dir.')
@with_options(mcmc_options)
@click.option('--seed', type=int, help='Root seed (required for --sim-dir; overrides the config seed).')
@click.option('--out', default='results', show_default=True, type=click.Path(file_okay=False),
              help='Output directory.')
def evaluate(**params):
    """Evaluate models against known truths and write the metric tables."""
    modes = [name for name in ('config', 'sim_dir', 'estimates') if params[name]]
    if len(modes) != 1:
        raise click.UsageError("Give exactly one of --config, --sim-dir or --estimates/--truths.")
    out = _out_dir(params['out'])
    inputs = [params['config'], params['estimates'], params['truths']]
    if params['config']:
        try:
            config = ExperimentConfig.from_yaml(params['config'], seed=params['seed'])
        except DataValidationError:
            raise
        except (TypeError, ValueError) as e:
            raise click.UsageError(f"{params['config']}: {e}")
        graph = read_adjacency(config.adjacency) if config.adjacency else lattice_graph()
        inputs.append(config.adjacency)
        threads = config.threads if params['threads'] == 1 else params['threads']
        result = run_experiment(config.scenario_specs(), config.model_specs(), graph, config.seed, threads,
                                _progress())
    elif params['sim_dir']:
        if params['seed'] is None:
            raise click.UsageError("--seed is required with --sim-dir.")
        mcmc = _model_spec('bym', None, params['iters'], params['burnin'], params['thin'], params['seed'],
                           params['b'], params['prior_a'], params['prior_b']).mcmc
        models = _parse_models(params['models'], mcmc, params['b'], params['prior_a'], params['prior_b'])
        scenario, graph, datasets = _read_sim_dir(Path(params['sim_dir']))
        inputs.extend(str(Path(params['sim_dir']) / name) for name in ('truths.csv', 'adjacency.csv'))
        result = evaluate_datasets(datasets, models, graph, params['seed'], scenario, params['threads'], _progress())
    else:
        if not params['truths']:
            raise click.UsageError("--estimates needs --truths.")
        result = _evaluate_estimates(params['estimates'], params['truths'])
    result.write(out)
    if not result.failures.empty:
        logger.warning(f"{len(result.failures)} fit(s) failed; see {out / 'failures.csv'}")
    click.echo(f"Wrote metrics for {len(result.metrics)} cell(s) to {out}")
    write_manifest(out, 'evaluate', params, inputs)


@cli.command()
@click.option('--t1', required=True, type=click.Path(exists=True, dir_okay=False),
              help='ICE summary JSON of the earlier period.')
@click.option('--t2', required=True, type=click.Path(exists=True, dir_okay=False),
              help='ICE summary JSON of the later period.')
@click.option('--geojson', type=click.Path(exists=True, dir_okay=False),
              help='County GeoJSON to annotate (joined on GEOID or fips).')
@click.option('--out', default='report', show_default=True, type=click.Path(file_okay=False),
              help='Output directory.')
def report(**params):
    """Report the counties whose ICE changed sign between two periods."""
    table = sign_change_report(IceSummary.from_json(params['t1']), IceSummary.from_json(params['t2']))
    out = _out_dir(params['out'])
    sign_changes(table).to_csv(out / 'sign_changes.csv', index=False, float_format='%.6g')
    if params['geojson']:
        _write_json(out / 'ice_annotated.geojson', annotate_geojson(read_geojson(params['geojson']), table))
    counts = ', '.join(f"{t.value}: {c}" for t, c in transition_counts(table).items())
    click.echo(f"Sign transitions ({counts})")
    write_manifest(out, 'report', params, [params['t1'], params['t2'], params['geojson']])


@cli.command()
@click.argument('manifest', type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def rerun(ctx: click.Context, manifest: str):
    """Re-execute the run recorded in a run manifest."""
    with open(manifest) as f:
        try:
            record = json.load(f)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"{manifest} is not valid JSON: {e}") from e
    command = cli.commands.get(record.get('command'))
    if command is None or command is rerun:
        raise DataValidationError(f"{manifest} does not record a rerunnable command.")
    for path, digest in record.get('inputs', {}).items():
        if not Path(path).exists():
            raise DataValidationError(f"Input {path} recorded in {manifest} no longer exists.")
        if file_digest(path) != digest:
            logger.warning(f"Input {path} changed since the recorded run")
    if record.get('version') != __version__:
        logger.warning(f"Run was recorded with spice {record.get('version')}, this is {__version__}")
    ctx.invoke(command, **record['params'])


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Console entry point; maps failures to exit codes (1 usage, 2 data validation, 3 numerical)."""
    try:
        result = cli.main(args=argv, prog_name='spice', standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        click.echo('Aborted!', err=True)
        return EXIT_USAGE
    except DataValidationError as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_DATA
    except NumericalError as e:
        click.echo(f"Numerical failure: {e}", err=True)
        return EXIT_NUMERICAL
    return result if isinstance(result, int) else 0
