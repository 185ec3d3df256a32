import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import expit, gammaln, logit as _logit, xlog1py, xlogy

from .exceptions import DataValidationError
from .graph import AdjacencyGraph
from .typing import FloatArray, IntArray, Prior, UnitId
from .utils import P_CEILING, P_FLOOR, fix_dataclass_init_docs

logger = logging.getLogger(__name__)

OBSERVATION_COLUMNS = ('fips', 'name', 'n_total', 'y_white_high', 'y_black_low')

DEFAULT_PRIOR: Prior = (1, 0.01)


@fix_dataclass_init_docs
@dataclass(frozen=True)
class CountyObservation:
    """Counts of the two extreme groups in one areal unit over a shared denominator.

    Attributes:
        unit_id: External identifier of the unit (e.g. the county FIPS code).
        y_group1: Number of privileged (high-income White) residents, :math:`A_i = Y_i^{(1)}`.
        y_group2: Number of deprived (low-income Black) residents, :math:`P_i = Y_i^{(2)}`.
        n_total: Number of residents with known income, :math:`T_i = N_i`.
        name: Optional display name of the unit.

    """
    unit_id: UnitId
    y_group1: int
    y_group2: int
    n_total: int
    name: str = ''

    def __post_init__(self):
        if self.n_total < 1:
            raise DataValidationError(f"Unit {self.unit_id}: n_total must be at least 1 but got {self.n_total}.")
        for label, y in (('y_group1', self.y_group1), ('y_group2', self.y_group2)):
            if not 0 <= y <= self.n_total:
                raise DataValidationError(f"Unit {self.unit_id}: expected 0 <= {label} <= n_total={self.n_total} "
                                          f"but got {y}.")
        if self.y_group1 + self.y_group2 > self.n_total:
            raise DataValidationError(f"Unit {self.unit_id}: the groups are disjoint subsets of n_total, but "
                                      f"{self.y_group1} + {self.y_group2} > {self.n_total}.")


def observation_arrays(observations: Sequence[CountyObservation]) -> Tuple[IntArray, IntArray, IntArray]:
    """Columnar :code:`(y1, y2, n)` integer arrays of a list of observations."""
    y1 = np.array([o.y_group1 for o in observations], dtype=np.int64)
    y2 = np.array([o.y_group2 for o in observations], dtype=np.int64)
    n = np.array([o.n_total for o in observations], dtype=np.int64)
    return y1, y2, n


def read_observations(path: Union[str, Path]) -> List[CountyObservation]:
    """Read the observation CSV (:code:`fips,name,n_total,y_white_high,y_black_low`).

    Args:
        path: Path to the CSV file.

    Returns:
        One observation per row, in file order.

    """
    frame = pd.read_csv(path, dtype={'fips': str, 'name': str}, keep_default_na=False)
    missing = [c for c in OBSERVATION_COLUMNS if c not in frame.columns]
    if missing:
        raise DataValidationError(f"{path}: missing column(s) {missing}.")
    observations = []
    for row, record in enumerate(frame.itertuples(index=False), start=2):
        try:
            counts = [int(getattr(record, c)) for c in ('y_white_high', 'y_black_low', 'n_total')]
            if any(float(getattr(record, c)) != k for c, k in zip(('y_white_high', 'y_black_low', 'n_total'),
                                                                  counts)):
                raise ValueError
        except (TypeError, ValueError):
            raise DataValidationError(f"{path}, line {row} (fips {record.fips}): counts must be integers.")
        try:
            observations.append(CountyObservation(record.fips, counts[0], counts[1], counts[2], record.name))
        except DataValidationError as e:
            raise DataValidationError(f"{path}, line {row} (fips {record.fips}): {e}")
    if len({o.unit_id for o in observations}) != len(observations):
        raise DataValidationError(f"{path}: duplicate fips codes.")
    _warn_boundary(observations)
    return observations


def write_observations(observations: Sequence[CountyObservation], path: Union[str, Path]):
    pd.DataFrame([(o.unit_id, o.name, o.n_total, o.y_group1, o.y_group2) for o in observations],
                 columns=OBSERVATION_COLUMNS).to_csv(path, index=False)


def _warn_boundary(observations: Sequence[CountyObservation]):
    y1, y2, n = observation_arrays(observations)
    for label, y in (('high-income White', y1), ('low-income Black', y2)):
        if np.all((y == 0) | (y == n)):
            logger.warning(f"Every unit has a boundary count (0 or n) for the {label} group; "
                           f"a flat intercept prior may give an improper posterior.")


class Approach(str, Enum):
    """Estimation approaches.

    Attributes:
        BOOTSTRAP: Method-of-moments proportions with a within-unit resampling interval.
        ICAR: Binomial-logit model with an intrinsic CAR random effect.
        BYM: ICAR effect plus an exchangeable unstructured effect.
        LEROUX: Leroux CAR random effect with an unknown mixing weight.
        LOCAL: Ordered clustered intercepts plus BYM effects (locally smooth).

    """
    BOOTSTRAP = 'bootstrap'
    ICAR = 'icar'
    BYM = 'bym'
    LEROUX = 'leroux'
    LOCAL = 'local'

    @property
    def has_unstructured(self) -> bool:
        return self in (Approach.BYM, Approach.LOCAL)

    @property
    def is_intrinsic(self) -> bool:
        return self in (Approach.ICAR, Approach.BYM, Approach.LOCAL)


@fix_dataclass_init_docs
@dataclass(frozen=True)
class McmcSettings:
    """Chain length and adaptation settings.

    Attributes:
        iterations: Total number of sweeps.
        burn_in: Sweeps discarded at the start; proposal adaptation is frozen when burn-in ends.
        thin: Keep every :code:`thin`-th post burn-in sweep.
        seed: Root seed of the fit.
        adapt: Robbins-Monro adaptation of the random-walk scales during burn-in.

    """
    iterations: int = 50000
    burn_in: int = 20000
    thin: int = 1
    seed: int = 0
    adapt: bool = True

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValueError(f"Expected iterations > burn_in >= 0 but got {self.iterations}, {self.burn_in}.")
        if self.thin < 1:
            raise ValueError(f"Expected thin >= 1 but got {self.thin}.")

    @property
    def retained(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))


@fix_dataclass_init_docs
@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to reproduce an ICE fit.

    Attributes:
        approach: Estimation approach.
        clusters: Number of ordered intercepts :math:`q` (local approach only).
        prior_shape: Shape :math:`a` of every Inverse-Gamma variance prior.
        prior_rate: Rate (scale) :math:`b` of every Inverse-Gamma variance prior.
        mcmc: Chain settings.
        replicates: Bootstrap replicates :math:`B`.
        fixed_variances: If set, :math:`(\\sigma^2_v, \\sigma^2_u)` are held at these values instead of sampled.

    """
    approach: Approach = Approach.BYM
    clusters: int = 1
    prior_shape: float = DEFAULT_PRIOR[0]
    prior_rate: float = DEFAULT_PRIOR[1]
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    replicates: int = 10000
    fixed_variances: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        object.__setattr__(self, 'approach', Approach(self.approach))
        if self.clusters < 1:
            raise ValueError(f"Expected clusters q >= 1 but got {self.clusters}.")
        if self.approach != Approach.LOCAL and self.clusters != 1:
            raise ValueError(f"Clustered intercepts are only available for the local approach, "
                             f"not {self.approach.value}.")
        if self.prior_shape <= 0 or self.prior_rate <= 0:
            raise ValueError(f"Expected a positive Inverse-Gamma prior but got ({self.prior_shape}, "
                             f"{self.prior_rate}).")
        if self.replicates < 1:
            raise ValueError(f"Expected at least one bootstrap replicate but got {self.replicates}.")
        if self.fixed_variances is not None and min(self.fixed_variances) <= 0:
            raise ValueError(f"Fixed variances must be positive but got {self.fixed_variances}.")

    @property
    def label(self) -> str:
        """Table label: M1 bootstrap, M2 ICAR, M3 BYM, M4 Leroux, M5/M6 local with two/three clusters."""
        if self.approach == Approach.LOCAL:
            return f"local{self.clusters}"
        return self.approach.value

    @classmethod
    def from_label(cls, label: str, **kwargs) -> "ModelSpec":
        """Model spec from a label such as :code:`bym` or :code:`local3`."""
        label = label.strip().lower()
        if label.startswith(Approach.LOCAL.value):
            suffix = label[len(Approach.LOCAL.value):]
            return cls(Approach.LOCAL, clusters=int(suffix) if suffix else 3, **kwargs)
        return cls(Approach(label), **kwargs)

    def with_seed(self, seed: int) -> "ModelSpec":
        return replace(self, mcmc=replace(self.mcmc, seed=int(seed)))


MODEL_TABLE = {'bootstrap': 'M1', 'icar': 'M2', 'bym': 'M3', 'leroux': 'M4', 'local2': 'M5', 'local3': 'M6'}


@dataclass
class GroupState:
    """Sampler state for one proportion group.

    Attributes:
        beta: Intercepts on the logit scale; one entry for global models, strictly increasing for the local model.
        v: Spatially structured effect per unit.
        u: Unstructured effect per unit (zero for ICAR and Leroux).
        sigma2_v: Variance of :code:`v`.
        sigma2_u: Variance of :code:`u`.
        rho: Leroux mixing weight (1 for intrinsic models).
        z: Cluster index per unit in :code:`{0, ..., q - 1}` (all zero for global models).

    """
    beta: FloatArray
    v: FloatArray
    u: FloatArray
    sigma2_v: float = 0.1
    sigma2_u: float = 0.1
    rho: float = 1
    z: IntArray = None

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if self.z is None:
            self.z = np.zeros(len(self.v), dtype=int)
        if np.any(np.diff(self.beta) <= 0):
            raise ValueError(f"Cluster intercepts must be strictly increasing but got {self.beta}.")
        if np.any((self.z < 0) | (self.z >= self.q)):
            raise ValueError(f"Cluster indices must lie in [0, {self.q}).")
        if self.sigma2_v <= 0 or self.sigma2_u <= 0:
            raise ValueError(f"Variances must be positive but got {self.sigma2_v}, {self.sigma2_u}.")
        if not 0 <= self.rho <= 1:
            raise ValueError(f"Expected 0 <= rho <= 1 but got {self.rho}.")

    @property
    def q(self) -> int:
        return self.beta.size

    @property
    def phi(self) -> FloatArray:
        return self.v + self.u


def logit(p: FloatArray) -> FloatArray:
    """Log-odds :math:`\\log(p / (1 - p))` for :math:`p` strictly inside :math:`(0, 1)`."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("logit requires probabilities strictly inside (0, 1).")
    return _logit(p)


def inv_logit(x: FloatArray) -> FloatArray:
    """Numerically stable inverse logit, clipped to stay strictly inside :math:`(0, 1)`."""
    return np.clip(expit(x), P_FLOOR, P_CEILING)


def linear_predictor(state: GroupState, graph: AdjacencyGraph) -> FloatArray:
    """Per-unit logit :math:`\\beta_{z_i} + v_i + u_i`.

    Args:
        state: Group state; global models carry a single intercept and :code:`z = 0`.
        graph: Adjacency graph the state is defined on.

    Returns:
        The linear predictor.

    """
    for name in ('v', 'u', 'z'):
        if len(getattr(state, name)) != graph.n:
            raise ValueError(f"State field {name} has length {len(getattr(state, name))}, "
                             f"but the graph has {graph.n} units.")
    return state.beta[state.z] + state.v + state.u


def log_binomial_coefficient(y: IntArray, n: IntArray) -> FloatArray:
    return gammaln(n + 1) - gammaln(y + 1) - gammaln(n - y + 1)


def binomial_loglik_pointwise(y: IntArray, n: IntArray, p: FloatArray) -> FloatArray:
    """Pointwise binomial log-likelihood, including the binomial coefficient.

    Args:
        y: Successes per unit.
        n: Trials per unit.
        p: Success probability per unit, strictly inside :math:`(0, 1)`.

    Returns:
        :math:`\\log \\binom{n_i}{y_i} + y_i \\log p_i + (n_i - y_i) \\log(1 - p_i)` per unit.

    """
    y, n, p = np.asarray(y), np.asarray(n), np.asarray(p, dtype=float)
    if np.any((y < 0) | (y > n)):
        raise ValueError("Binomial counts must satisfy 0 <= y <= n.")
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("Binomial probabilities must lie strictly inside (0, 1).")
    return log_binomial_coefficient(y, n) + xlogy(y, p) + xlog1py(n - y, -p)


def binomial_loglik_logit(y: IntArray, n: IntArray, eta: FloatArray, coefficient: bool = True) -> FloatArray:
    """Pointwise binomial log-likelihood parametrized by the logit :math:`\\eta`.

    Uses :math:`y \\eta - n \\log(1 + e^{\\eta})`, which stays finite for extreme :math:`\\eta` where the
    probability itself would round to 0 or 1.

    """
    value = y * eta - n * np.logaddexp(0, eta)
    return value + log_binomial_coefficient(y, n) if coefficient else value
