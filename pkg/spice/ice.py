import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .exceptions import DataValidationError
from .mcmc import PosteriorDraws
from .model import CountyObservation, observation_arrays
from .typing import FloatArray, SeedLike, UnitId
from .utils import INTERVAL_LEVEL, as_generator, fix_dataclass_init_docs, percentile_interval

logger = logging.getLogger(__name__)

GEOJSON_KEYS = ('GEOID', 'fips')
SUMMARY_COLUMNS = ('fips', 'estimate', 'lower', 'upper', 'sign')


class Sign(str, Enum):
    PRIVILEGED = 'privileged'
    DEPRIVED = 'deprived'
    BALANCED = 'balanced'

    @classmethod
    def of(cls, value: float) -> "Sign":
        if value > 0:
            return cls.PRIVILEGED
        return cls.DEPRIVED if value < 0 else cls.BALANCED


class Transition(str, Enum):
    """Change in the sign of a county's ICE point estimate between two periods."""
    NEGATIVE_TO_POSITIVE = 'negative_to_positive'
    POSITIVE_TO_NEGATIVE = 'positive_to_negative'
    UNCHANGED = 'unchanged'


class GroupMovement(str, Enum):
    """Direction of both group proportions between two periods ("up" means strictly larger later)."""
    WHITE_UP_BLACK_DOWN = 'white_up_black_down'
    BOTH_UP = 'both_up'
    BOTH_DOWN = 'both_down'
    WHITE_DOWN_BLACK_UP = 'white_down_black_up'

    @classmethod
    def of(cls, white_up: bool, black_up: bool) -> "GroupMovement":
        if white_up:
            return cls.BOTH_UP if black_up else cls.WHITE_UP_BLACK_DOWN
        return cls.WHITE_DOWN_BLACK_UP if black_up else cls.BOTH_DOWN


@fix_dataclass_init_docs
@dataclass
class IceSummary:
    """Per-county and statewide ICE point estimates with central intervals.

    Attributes:
        method: The approach label that produced the summary (e.g. :code:`bootstrap`, :code:`local3`).
        unit_ids: County identifiers.
        estimate: Point estimate per county (raw proportion difference for the bootstrap, posterior median otherwise).
        lower: Lower interval bound per county.
        upper: Upper interval bound per county.
        statewide: Statewide (county-mean) point estimate and interval bounds.
        p_group1: Point estimate of the high-income White proportion per county.
        p_group2: Point estimate of the low-income Black proportion per county.
        names: County names (may be empty strings).
        level: Central coverage of the intervals.
        metadata: Free-form run information carried into the JSON export.

    """
    method: str
    unit_ids: Tuple[UnitId, ...]
    estimate: FloatArray
    lower: FloatArray
    upper: FloatArray
    statewide: Tuple[float, float, float]
    p_group1: FloatArray
    p_group2: FloatArray
    names: Tuple[str, ...] = ()
    level: float = INTERVAL_LEVEL
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.unit_ids = tuple(str(u) for u in self.unit_ids)
        m = len(self.unit_ids)
        if not self.names:
            self.names = ('',) * m
        for name in ('estimate', 'lower', 'upper', 'p_group1', 'p_group2'):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.shape != (m,):
                raise ValueError(f"Expected {name} of shape ({m},) but got {value.shape}.")
            setattr(self, name, value)
        if len(self.names) != m:
            raise ValueError(f"Expected {m} names but got {len(self.names)}.")
        self.statewide = tuple(float(s) for s in self.statewide)
        if np.any(np.abs(np.concatenate((self.lower, self.estimate, self.upper, self.statewide))) > 1):
            raise ValueError("ICE values must lie in [-1, 1].")
        mid, low, high = self.statewide
        if np.any(self.lower > self.estimate) or np.any(self.estimate > self.upper) or not low <= mid <= high:
            raise ValueError("Every interval must satisfy lower <= estimate <= upper.")

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    @property
    def signs(self) -> Tuple[Sign, ...]:
        return tuple(Sign.of(value) for value in self.estimate)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'fips': self.unit_ids, 'name': self.names, 'estimate': self.estimate,
                             'lower': self.lower, 'upper': self.upper,
                             'sign': [s.value for s in self.signs],
                             'p_white_high': self.p_group1, 'p_black_low': self.p_group2})

    def to_csv(self, path: Union[str, Path]):
        """Write :code:`fips,estimate,lower,upper,sign`, one row per county."""
        self.to_frame()[list(SUMMARY_COLUMNS)].to_csv(path, index=False)

    def to_dict(self) -> Dict:
        estimate, lower, upper = self.statewide
        return {
            'method': self.method,
            'level': self.level,
            'statewide': {'estimate': estimate, 'lower': lower, 'upper': upper},
            'counties': self.to_frame().to_dict(orient='records'),
            'metadata': self.metadata
        }

    def to_json(self, path: Union[str, Path]):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def from_dict(cls, data: Dict) -> "IceSummary":
        try:
            counties = pd.DataFrame(data['counties'])
            statewide = data['statewide']
            return cls(method=data['method'], unit_ids=tuple(counties['fips'].astype(str)),
                       estimate=counties['estimate'].to_numpy(), lower=counties['lower'].to_numpy(),
                       upper=counties['upper'].to_numpy(),
                       statewide=(statewide['estimate'], statewide['lower'], statewide['upper']),
                       p_group1=counties['p_white_high'].to_numpy(), p_group2=counties['p_black_low'].to_numpy(),
                       names=tuple(counties['name'].fillna('').astype(str)),
                       level=data.get('level', INTERVAL_LEVEL), metadata=data.get('metadata', {}))
        except KeyError as e:
            raise DataValidationError(f"ICE summary is missing the field {e}.") from e

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "IceSummary":
        with open(path) as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise DataValidationError(f"{path} is not valid JSON: {e}") from e
        return cls.from_dict(data)


def raw_ice(obs: CountyObservation) -> float:
    """Method-of-moments ICE :math:`y^{(1)} / n - y^{(2)} / n` of one county."""
    return (obs.y_group1 - obs.y_group2) / obs.n_total


def _summarize(method: str, ice: FloatArray, estimate: FloatArray, statewide_draws: FloatArray,
               statewide_estimate: float, p1: FloatArray, p2: FloatArray, unit_ids: Sequence[UnitId],
               names: Sequence[str], level: float) -> IceSummary:
    lower, upper = percentile_interval(ice, level, axis=0)
    state_lower, state_upper = percentile_interval(statewide_draws, level)
    # a fixed point estimate can sit outside the percentile interval of its own replicates
    lower, upper = np.minimum(lower, estimate), np.maximum(upper, estimate)
    state_lower, state_upper = min(state_lower, statewide_estimate), max(state_upper, statewide_estimate)
    return IceSummary(method, tuple(unit_ids), estimate, lower, upper,
                      (statewide_estimate, state_lower, state_upper), p1, p2, tuple(names), level)


def bootstrap_ice(observations: Sequence[CountyObservation], replicates: int, rng: SeedLike,
                  level: float = INTERVAL_LEVEL, progress: bool = False) -> IceSummary:
    """Nonparametric bootstrap of the county and statewide ICE.

    Each replicate redraws, for every county, its :math:`n` individuals with replacement from the county's empirical
    trinomial (high-income White, low-income Black, neither), so :math:`n` is preserved per county. The point estimate
    is the raw ICE of the original data and the statewide value is the unweighted mean over counties, in each replicate
    and for the point estimate alike.

    Args:
        observations: County observations.
        replicates: Number of bootstrap replicates :math:`B`.
        rng: Random generator or seed.
        level: Central coverage of the percentile intervals.
        progress: Show a progress bar over counties.

    Returns:
        The bootstrap ICE summary.

    """
    if replicates < 1:
        raise ValueError(f"Expected at least one bootstrap replicate but got {replicates}.")
    if not observations:
        raise DataValidationError("No observations to bootstrap.")
    rng = as_generator(rng)
    y1, y2, n = observation_arrays(observations)
    probs = np.stack((y1, y2, n - y1 - y2), axis=1) / n[:, np.newaxis]
    ice = np.empty((replicates, len(observations)))
    logger.info(f"Bootstrapping ICE over {len(observations)} counties with {replicates} replicates")
    for i in tqdm(range(len(observations)), disable=not progress, desc='bootstrap'):
        counts = rng.multinomial(n[i], probs[i], size=replicates)
        ice[:, i] = (counts[:, 0] - counts[:, 1]) / n[i]
    p1, p2 = y1 / n, y2 / n
    estimate = (y1 - y2) / n
    return _summarize('bootstrap', ice, estimate, ice.mean(axis=1), float(estimate.mean()), p1, p2,
                      [o.unit_id for o in observations], [o.name for o in observations], level)


def ice_from_proportions(p1: FloatArray, p2: FloatArray, unit_ids: Sequence[UnitId], method: str,
                         names: Sequence[str] = (), level: float = INTERVAL_LEVEL) -> IceSummary:
    """Summarize ICE draws built from aligned proportion draws of the two groups.

    Args:
        p1: High-income White proportion draws, shape :code:`(S, n)`.
        p2: Low-income Black proportion draws, same shape.
        unit_ids: County identifiers.
        method: Method label.
        names: County names.
        level: Central coverage of the credible intervals.

    Returns:
        Per-county posterior medians and percentile intervals; the statewide summary applies the county mean within
        each draw before summarizing across draws.

    """
    p1, p2 = np.atleast_2d(p1), np.atleast_2d(p2)
    if p1.shape != p2.shape:
        raise ValueError(f"Group draws must align but got shapes {p1.shape} and {p2.shape}.")
    if p1.shape[1] != len(unit_ids):
        raise ValueError(f"Expected draws for {len(unit_ids)} units but got {p1.shape[1]}.")
    ice = p1 - p2
    statewide = ice.mean(axis=1)
    return _summarize(method, ice, np.median(ice, axis=0), statewide, float(np.median(statewide)),
                      np.median(p1, axis=0), np.median(p2, axis=0), unit_ids, names, level)


def posterior_ice(draws1: PosteriorDraws, draws2: PosteriorDraws, names: Sequence[str] = (),
                  level: float = INTERVAL_LEVEL) -> IceSummary:
    """Posterior ICE :math:`p^{(1)}_i - p^{(2)}_i` per draw, summarized by medians and central intervals."""
    if draws1.num_draws != draws2.num_draws:
        raise ValueError(f"Groups have different retained draw counts: {draws1.num_draws} and {draws2.num_draws}.")
    if draws1.unit_ids != draws2.unit_ids:
        raise DataValidationError("Groups were fitted on different units.")
    summary = ice_from_proportions(draws1.p, draws2.p, draws1.unit_ids, draws1.spec.label, names, level)
    summary.metadata.update({'draws': draws1.num_draws, 'seed': draws1.seed})
    return summary


def sign_change_report(summary_t1: IceSummary, summary_t2: IceSummary) -> pd.DataFrame:
    """Per-county sign transitions and group movements between two periods.

    Args:
        summary_t1: Earlier period.
        summary_t2: Later period, over the same counties.

    Returns:
        Table with columns :code:`fips, name, ice_t1, ice_t2, transition, movement`, in the county order of
        :code:`summary_t1`.

    """
    if set(summary_t1.unit_ids) != set(summary_t2.unit_ids):
        only1 = sorted(set(summary_t1.unit_ids) - set(summary_t2.unit_ids))
        only2 = sorted(set(summary_t2.unit_ids) - set(summary_t1.unit_ids))
        raise DataValidationError(f"County sets differ: only in the first summary {only1[:10]}, "
                                  f"only in the second {only2[:10]}.")
    later = summary_t2.to_frame().set_index('fips').loc[list(summary_t1.unit_ids)]
    ice1, ice2 = summary_t1.estimate, later['estimate'].to_numpy()
    transition = np.full(summary_t1.n, Transition.UNCHANGED.value, dtype=object)
    transition[(ice1 < 0) & (ice2 > 0)] = Transition.NEGATIVE_TO_POSITIVE.value
    transition[(ice1 > 0) & (ice2 < 0)] = Transition.POSITIVE_TO_NEGATIVE.value
    white_up = later['p_white_high'].to_numpy() > summary_t1.p_group1
    black_up = later['p_black_low'].to_numpy() > summary_t1.p_group2
    movement = [GroupMovement.of(w, b).value for w, b in zip(white_up, black_up)]
    names = [a or b for a, b in zip(summary_t1.names, later['name'])]
    return pd.DataFrame({'fips': summary_t1.unit_ids, 'name': names, 'ice_t1': ice1, 'ice_t2': ice2,
                         'transition': transition, 'movement': movement})


def sign_changes(report: pd.DataFrame) -> pd.DataFrame:
    """Rows of a sign-change report whose transition is not :code:`unchanged`."""
    return report[report['transition'] != Transition.UNCHANGED.value].reset_index(drop=True)


def transition_counts(report: pd.DataFrame) -> Dict[Transition, int]:
    counts = report['transition'].value_counts()
    return {t: int(counts.get(t.value, 0)) for t in Transition}


def annotate_geojson(collection: Dict, report: pd.DataFrame) -> Dict:
    """Copy of a GeoJSON feature collection with :code:`ice_t1`, :code:`ice_t2` and :code:`transition` injected.

    Features are joined to the report through their :code:`GEOID` property, or :code:`fips` if there is none.

    Args:
        collection: Parsed GeoJSON :code:`FeatureCollection`.
        report: Output of :code:`sign_change_report`.

    Returns:
        The annotated collection (the input is left untouched).

    """
    if not isinstance(collection, dict) or collection.get('type') != 'FeatureCollection' or \
            not isinstance(collection.get('features'), list):
        raise DataValidationError("GeoJSON input must be a FeatureCollection with a list of features.")
    rows = report.set_index('fips')
    features = []
    for index, feature in enumerate(collection['features']):
        properties = feature.get('properties') if isinstance(feature, dict) else None
        if not isinstance(properties, dict):
            raise DataValidationError(f"GeoJSON feature {index} has no properties.")
        key = next((properties[k] for k in GEOJSON_KEYS if k in properties), None)
        if key is None:
            raise DataValidationError(f"GeoJSON feature {index} has neither a GEOID nor a fips property.")
        properties = dict(properties)
        if str(key) in rows.index:
            row = rows.loc[str(key)]
            properties.update({'ice_t1': float(row['ice_t1']), 'ice_t2': float(row['ice_t2']),
                               'transition': row['transition']})
        else:
            properties.update({'ice_t1': None, 'ice_t2': None, 'transition': None})
        features.append({**feature, 'properties': properties})
    return {**collection, 'features': features}


def read_geojson(path: Union[str, Path]) -> Dict:
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"{path} is not valid GeoJSON: {e}") from e

