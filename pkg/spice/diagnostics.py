import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Union

import arviz as az
import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .mcmc import PosteriorDraws
from .model import MODEL_TABLE
from .typing import FloatArray
from .utils import fix_dataclass_init_docs

logger = logging.getLogger(__name__)

MIN_CONVERGENCE_DRAWS = 100
METRICS = ('rmse', 'coverage', 'width', 'waic')


@fix_dataclass_init_docs
@dataclass(frozen=True)
class WaicResult:
    """Watanabe-Akaike information criterion of a fit.

    Attributes:
        waic: :math:`-2(\\text{lppd} - p_\\text{WAIC})`.
        lppd: Log pointwise predictive density.
        p_waic: Effective number of parameters.
        pointwise_lppd: Contribution of each point to :code:`lppd`.
        pointwise_p_waic: Contribution of each point to :code:`p_waic`.

    """
    waic: float
    lppd: float
    p_waic: float
    pointwise_lppd: FloatArray
    pointwise_p_waic: FloatArray

    def to_dict(self) -> Dict[str, float]:
        return {'waic': self.waic, 'lppd': self.lppd, 'p_waic': self.p_waic,
                'num_points': int(self.pointwise_lppd.size)}


def waic(pointwise_loglik: FloatArray) -> WaicResult:
    """WAIC from a draws × points matrix of pointwise log-likelihoods.

    The lppd of point :math:`j` is :math:`\\log \\frac{1}{S} \\sum_s e^{\\ell_{sj}}`, evaluated by log-sum-exp, and
    its effective-parameter contribution is the sample variance (divisor :math:`S - 1`) of :math:`\\ell_{\\cdot j}`.

    Args:
        pointwise_loglik: Log-likelihood matrix of shape :code:`(S, J)`.

    Returns:
        The WAIC result.

    """
    loglik = np.asarray(pointwise_loglik, dtype=float)
    if loglik.ndim != 2:
        raise ValueError(f"Expected a draws x points matrix but got shape {loglik.shape}.")
    num_draws, num_points = loglik.shape
    if num_draws < 2:
        raise ValueError(f"WAIC needs at least two draws, got {num_draws}.")
    if num_points < 1:
        raise ValueError("WAIC needs at least one point.")
    if not np.all(np.isfinite(loglik)):
        raise ValueError("Pointwise log-likelihood contains non-finite entries.")
    pointwise_lppd = logsumexp(loglik, axis=0) - np.log(num_draws)
    # shifted by the first draw so that constant columns give exactly zero
    pointwise_p_waic = np.var(loglik - loglik[:1], axis=0, ddof=1)
    lppd, p_waic = float(pointwise_lppd.sum()), float(pointwise_p_waic.sum())
    return WaicResult(-2 * (lppd - p_waic), lppd, p_waic, pointwise_lppd, pointwise_p_waic)


def joint_waic(loglik1: FloatArray, loglik2: FloatArray) -> WaicResult:
    """WAIC of an ICE model: the pointwise contributions of both groups are summed (:math:`2n` points)."""
    loglik1, loglik2 = np.asarray(loglik1), np.asarray(loglik2)
    if loglik1.shape[0] != loglik2.shape[0]:
        raise ValueError(f"Groups have different draw counts: {loglik1.shape[0]} and {loglik2.shape[0]}.")
    return waic(np.hstack((loglik1, loglik2)))


@fix_dataclass_init_docs
@dataclass(frozen=True)
class EvalMetrics:
    """Accuracy of ICE estimates against known truths, aggregated over replicates and counties.

    Attributes:
        rmse: Root mean squared error of the point estimates.
        coverage: Fraction of (replicate, county) pairs whose interval contains the truth.
        width: Mean interval width.
        scenario: Scenario id.
        model: Model label (e.g. :code:`bym`, :code:`local3`).
        population: Per-county denominator :math:`N`.
        waic: Mean joint WAIC over replicates (undefined for the bootstrap).
        replicates: Number of replicates evaluated.
        failures: Number of replicates that failed and were excluded.

    """
    rmse: float
    coverage: float
    width: float
    scenario: Optional[int] = None
    model: Optional[str] = None
    population: Optional[int] = None
    waic: Optional[float] = None
    replicates: int = 0
    failures: int = 0

    def __post_init__(self):
        if self.rmse < 0 or self.width < 0:
            raise ValueError(f"RMSE and width must be non-negative but got {self.rmse}, {self.width}.")
        if not 0 <= self.coverage <= 1:
            raise ValueError(f"Coverage must lie in [0, 1] but got {self.coverage}.")

    def as_row(self) -> Dict[str, Union[float, int, str, None]]:
        return asdict(self)


def evaluate_replicates(estimates: Sequence[FloatArray], lower: Sequence[FloatArray], upper: Sequence[FloatArray],
                        truths: Sequence[FloatArray], **keys) -> EvalMetrics:
    """RMSE, coverage and mean width of per-county estimates over replicates.

    Args:
        estimates: Point estimate per replicate and county, shape :code:`(R, n)` or a list of :code:`R` arrays.
        lower: Lower interval bounds, same shape.
        upper: Upper interval bounds, same shape.
        truths: True values, same shape.
        **keys: Grouping keys and extra fields passed on to :code:`EvalMetrics`.

    Returns:
        The aggregated metrics.

    """
    arrays = [np.asarray(a, dtype=float) for a in (estimates, lower, upper, truths)]
    if arrays[0].size == 0:
        raise ValueError("No replicates to evaluate.")
    if any(a.shape != arrays[0].shape for a in arrays):
        raise ValueError(f"Estimates, bounds and truths must align but got shapes {[a.shape for a in arrays]}.")
    estimates, lower, upper, truths = arrays
    rmse = float(np.sqrt(np.mean((estimates - truths) ** 2)))
    coverage = float(np.mean((lower <= truths) & (truths <= upper)))
    width = float(np.mean(upper - lower))
    keys.setdefault('replicates', estimates.shape[0] if estimates.ndim > 1 else 1)
    return EvalMetrics(rmse, coverage, width, **keys)


def metrics_table(rows: Sequence[EvalMetrics]) -> pd.DataFrame:
    """Tabulate metrics with one row per (metric, scenario) and one column per model (M1 to M6).

    WAIC rows are omitted when no model in the table has a WAIC.
    """
    frame = pd.DataFrame([row.as_row() for row in rows])
    if frame.empty:
        raise ValueError("No metrics to tabulate.")
    metrics = [m for m in METRICS if m != 'waic' or frame['waic'].notna().any()]
    long = frame.melt(id_vars=['scenario', 'model'], value_vars=metrics, var_name='metric')
    table = long.pivot_table(index=['metric', 'scenario'], columns='model', values='value', dropna=False)
    table = table.reindex(pd.MultiIndex.from_product([metrics, sorted(frame['scenario'].unique())],
                                                     names=['metric', 'scenario']))
    models = [m for m in MODEL_TABLE if m in table.columns] + [m for m in table.columns if m not in MODEL_TABLE]
    return table[models].rename(columns=MODEL_TABLE)


def convergence_table(samples: Dict[str, FloatArray]) -> pd.DataFrame:
    """Split :math:`\\hat{R}` and effective sample size per parameter.

    Args:
        samples: Parameter name to draws of shape :code:`(chains, draws)` (a 1D array is one chain).

    Returns:
        Table with columns :code:`parameter, ess, rhat`.

    """
    rows = []
    for name, values in samples.items():
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[1] < MIN_CONVERGENCE_DRAWS:
            raise ValueError(f"Convergence diagnostics need at least {MIN_CONVERGENCE_DRAWS} draws per chain, "
                             f"but {name} has {values.shape[1]}.")
        rows.append({'parameter': name, 'ess': float(az.ess(values, method='mean')),
                     'rhat': float(az.rhat(values, method='split'))})
    return pd.DataFrame(rows, columns=['parameter', 'ess', 'rhat'])


def convergence_summary(draws: Sequence[PosteriorDraws]) -> pd.DataFrame:
    """Advisory convergence diagnostics over one or more chains fitted with the same spec on the same data."""
    if not draws:
        raise ValueError("Expected at least one chain.")
    if len({d.num_draws for d in draws}) > 1:
        raise ValueError("Chains must retain the same number of draws.")
    chains = [d.parameter_chains() for d in draws]
    table = convergence_table({name: np.stack([c[name] for c in chains]) for name in chains[0]})
    flagged = table[table['rhat'] > 1.1]
    if not flagged.empty:
        logger.warning(f"{len(flagged)} parameters have split R-hat above 1.1 (worst "
                       f"{flagged['rhat'].max():.3f} for {flagged.loc[flagged['rhat'].idxmax(), 'parameter']})")
    return table
