import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy import stats
from scipy.special import expit, logit, softmax
from tqdm import tqdm

from .exceptions import DataValidationError, NumericalError
from .graph import AdjacencyGraph, leroux_logdet_fn
from .model import (Approach, CountyObservation, GroupState, ModelSpec, binomial_loglik_logit, inv_logit,
                    linear_predictor, log_binomial_coefficient, observation_arrays)
from .typing import FloatArray, IntArray, SeedLike, UnitId
from .utils import ACCEPTANCE_BAND, ACCEPTANCE_TARGET, as_generator, fix_dataclass_init_docs

logger = logging.getLogger(__name__)

INITIAL_LOG_STEP = np.log(0.5)
INITIAL_INTERCEPT_STEP = 0.1


@fix_dataclass_init_docs
@dataclass
class PosteriorDraws:
    """Retained MCMC draws for one proportion group, stored column-wise (draws along the first axis).

    Attributes:
        spec: The model spec that produced the draws.
        unit_ids: Unit order of the per-unit columns.
        beta: Intercepts, shape :code:`(S, q)`.
        v: Structured effects, shape :code:`(S, n)`.
        u: Unstructured effects, shape :code:`(S, n)` (zero for ICAR and Leroux).
        sigma2_v: Structured variance per draw.
        sigma2_u: Unstructured variance per draw.
        rho: Leroux mixing weight per draw (1 for intrinsic models).
        z: Cluster index per unit, 0-based, shape :code:`(S, n)`.
        p: Proportion per unit, shape :code:`(S, n)`.
        loglik: Pointwise binomial log-likelihood, shape :code:`(S, n)`.
        acceptance: Post burn-in Metropolis acceptance rate per parameter block.
        seed: Root seed of the fit.

    """
    spec: ModelSpec
    unit_ids: Tuple[UnitId, ...]
    beta: FloatArray
    v: FloatArray
    u: FloatArray
    sigma2_v: FloatArray
    sigma2_u: FloatArray
    rho: FloatArray
    z: IntArray
    p: FloatArray
    loglik: FloatArray
    acceptance: Dict[str, float] = field(default_factory=dict)
    seed: int = 0

    @property
    def num_draws(self) -> int:
        return self.p.shape[0]

    @property
    def n(self) -> int:
        return self.p.shape[1]

    def state(self, s: int) -> GroupState:
        """Snapshot of draw :code:`s` as a :code:`GroupState`."""
        return GroupState(self.beta[s].copy(), self.v[s].copy(), self.u[s].copy(), float(self.sigma2_v[s]),
                          float(self.sigma2_u[s]), float(self.rho[s]), self.z[s].astype(int))

    def parameter_chains(self) -> Dict[str, FloatArray]:
        """Scalar parameter traces (intercepts, variances, mixing weight and every unit's proportion)."""
        chains = {f"beta[{k + 1}]": self.beta[:, k] for k in range(self.beta.shape[1])}
        chains['sigma2_v'] = self.sigma2_v
        if self.spec.approach.has_unstructured:
            chains['sigma2_u'] = self.sigma2_u
        if self.spec.approach == Approach.LEROUX:
            chains['rho'] = self.rho
        chains.update({f"p[{unit}]": self.p[:, i] for i, unit in enumerate(self.unit_ids)})
        return chains

    def to_frame(self) -> pd.DataFrame:
        """Long-format dump with columns :code:`parameter,unit,draw,value` (unit is empty for scalars)."""
        draws = np.arange(self.num_draws)
        frames = []
        for name, values in (('sigma2_v', self.sigma2_v), ('sigma2_u', self.sigma2_u), ('rho', self.rho)):
            frames.append(pd.DataFrame({'parameter': name, 'unit': '', 'draw': draws, 'value': values}))
        for k in range(self.beta.shape[1]):
            frames.append(pd.DataFrame({'parameter': f'beta[{k + 1}]', 'unit': '', 'draw': draws,
                                        'value': self.beta[:, k]}))
        for name, values in (('v', self.v), ('u', self.u), ('z', self.z + 1), ('p', self.p)):
            frames.append(pd.DataFrame({'parameter': name, 'unit': np.tile(self.unit_ids, self.num_draws),
                                        'draw': np.repeat(draws, self.n), 'value': values.ravel()}))
        return pd.concat(frames, ignore_index=True)


def write_draws(draws: PosteriorDraws, path: Union[str, Path]):
    draws.to_frame().to_csv(path, index=False)


def draw_variance(quad_form: float, rank: int, a: float, b: float, rng: np.random.Generator) -> float:
    """Conjugate Gibbs draw of a random-effect variance.

    With prior :math:`\\sigma^2 \\sim \\text{IG}(a, b)` and a Gaussian effect of precision :math:`Q / \\sigma^2`, the
    full conditional is :math:`\\text{IG}(a + \\text{rank}(Q) / 2, b + x^T Q x / 2)`.

    Args:
        quad_form: :math:`x^T Q x`.
        rank: Rank of :math:`Q`.
        a: Prior shape.
        b: Prior rate.
        rng: Random generator.

    Returns:
        The variance draw.

    """
    return float(stats.invgamma.rvs(a + rank / 2, scale=b + quad_form / 2, random_state=rng))


def update_cluster_indicators(state: GroupState, y: IntArray, n: IntArray, q: int,
                              rng: np.random.Generator) -> GroupState:
    """Gibbs update of every cluster index from its categorical full conditional.

    Under the uniform prior over clusters,
    :math:`P(z_i = k \\mid \\cdot) \\propto \\text{Binomial}(y_i \\mid n_i, \\text{logit}^{-1}(\\beta_k + \\phi_i))`.
    Indices are conditionally independent given the intercepts and effects, so all units are drawn at once.

    Args:
        state: Current state; :code:`state.beta` must be strictly increasing with :code:`q` entries.
        y: Successes per unit.
        n: Trials per unit.
        q: Number of clusters.
        rng: Random generator.

    Returns:
        The state with redrawn :code:`z`; other fields are shared with the input.

    """
    if q < 1:
        raise ValueError(f"Expected at least one cluster but got q={q}.")
    if state.beta.size != q:
        raise ValueError(f"State has {state.beta.size} intercepts but q={q}.")
    if np.any(np.diff(state.beta) <= 0):
        raise ValueError(f"Cluster intercepts must be strictly increasing but got {state.beta}.")
    if q == 1:
        return replace(state, z=np.zeros_like(state.z))
    eta = state.beta[np.newaxis, :] + state.phi[:, np.newaxis]
    log_weights = y[:, np.newaxis] * eta - n[:, np.newaxis] * np.logaddexp(0, eta)
    cumulative = np.cumsum(softmax(log_weights, axis=1), axis=1)
    z = np.sum(rng.random(len(y))[:, np.newaxis] > cumulative, axis=1)
    return replace(state, z=np.minimum(z, q - 1))


def update_ordered_intercepts(state: GroupState, y: IntArray, n: IntArray, rng: np.random.Generator,
                              step: Union[float, FloatArray] = INITIAL_INTERCEPT_STEP) -> GroupState:
    """Random-walk Metropolis update of each intercept under a flat prior restricted to the ordering.

    Intercept :math:`\\beta_j` is proposed as :math:`\\beta_j + \\epsilon`; proposals outside
    :math:`(\\beta_{j-1}, \\beta_{j+1})` are rejected, so the output is strictly increasing. With a single intercept
    the constraint is void and this is the global-model intercept update.

    Args:
        state: Current state.
        y: Successes per unit.
        n: Trials per unit.
        rng: Random generator.
        step: Proposal standard deviation (scalar or one per intercept).

    Returns:
        The state with updated intercepts.

    """
    beta = state.beta.copy()
    q = beta.size
    step = np.broadcast_to(np.asarray(step, dtype=float), (q,))
    offset = state.phi
    for j in range(q):
        proposal = beta[j] + step[j] * rng.standard_normal()
        log_u = np.log(rng.random())
        lower = beta[j - 1] if j > 0 else -np.inf
        upper = beta[j + 1] if j < q - 1 else np.inf
        if not lower < proposal < upper:
            continue
        members = state.z == j
        eta = beta[j] + offset[members]
        eta_prop = proposal + offset[members]
        log_ratio = np.sum(y[members] * (eta_prop - eta)
                           - n[members] * (np.logaddexp(0, eta_prop) - np.logaddexp(0, eta)))
        if log_u < log_ratio:
            beta[j] = proposal
    return replace(state, beta=beta)


def _initial_state(y: IntArray, n: IntArray, graph: AdjacencyGraph, spec: ModelSpec) -> GroupState:
    q = spec.clusters
    empirical = logit((y + 0.5) / (n + 1))
    if q == 1:
        beta = np.array([logit((y.sum() + 0.5) / (n.sum() + 1))])
    else:
        beta = np.quantile(empirical, (np.arange(q) + 0.5) / q)
        for k in range(1, q):
            beta[k] = max(beta[k], beta[k - 1] + 0.01)
    z = np.argmin(np.abs(empirical[:, np.newaxis] - beta[np.newaxis, :]), axis=1)
    residual = empirical - beta[z]
    share = 0.5 if spec.approach.has_unstructured else 1
    v = share * residual
    u = (1 - share) * residual
    if spec.approach.is_intrinsic:
        v = v - _component_means(v, graph.components)[graph.components]
    sigma2 = max(float(np.var(residual)), 0.01)
    sigma2_v, sigma2_u = (sigma2, sigma2) if spec.fixed_variances is None else spec.fixed_variances
    rho = 0.5 if spec.approach == Approach.LEROUX else 1
    return GroupState(beta, v, u, sigma2_v, sigma2_u, rho, z)


def _component_means(x: FloatArray, components: IntArray) -> FloatArray:
    return np.bincount(components, weights=x) / np.bincount(components)


class _GroupSampler:
    """Metropolis-within-Gibbs sampler for one proportion group.

    Units of one colour class of the adjacency graph share no edge, so their structured-effect full conditionals are
    independent given the remaining classes and each class is updated as a single vectorised block.

    An intrinsic structured effect on a graph with several connected components is constrained to mean zero within
    each component. A single intercept cannot absorb separate per-component shifts, so there the structured effect
    is instead moved in pairs :math:`(v_i + \\delta, v_j - \\delta)` within one component, which never leaves the
    constraint.
    """

    def __init__(self, y: IntArray, n: IntArray, graph: AdjacencyGraph, spec: ModelSpec,
                 rng: np.random.Generator):
        self.y, self.n, self.graph, self.spec, self.rng = y, n, graph, spec, rng
        self.approach = spec.approach
        if self.approach.is_intrinsic and graph.isolated.size:
            raise DataValidationError(f"The {self.approach.value} model needs every unit to have a neighbour, but "
                                      f"{[graph.unit_ids[i] for i in graph.isolated]} are isolated.")
        self.degree = graph.degree.astype(float)
        self.components = graph.components
        self.rank_v = graph.n - graph.num_components if self.approach.is_intrinsic else graph.n
        self.laplacian = sp.csr_matrix(sp.diags(self.degree) - graph.weights)
        self.blocks = graph.coloring
        self.block_weights = [graph.weights[block] for block in self.blocks]
        self.constrained = self.approach.is_intrinsic and graph.num_components > 1
        self.neighbors = graph.neighbors
        self.neighbor_index = [np.asarray(nbrs, dtype=int) for nbrs in graph.neighbors]
        self.members = [np.flatnonzero(self.components == k) for k in range(graph.num_components)]
        self.position = np.empty(graph.n, dtype=int)
        for members in self.members:
            self.position[members] = np.arange(members.size)
        self.logdet = leroux_logdet_fn(graph) if self.approach == Approach.LEROUX else None
        self.state = _initial_state(y, n, graph, spec)
        self.log_step_v = np.full(graph.n, INITIAL_LOG_STEP)
        self.log_step_u = np.full(graph.n, INITIAL_LOG_STEP)
        self.log_step_beta = np.full(spec.clusters, np.log(INITIAL_INTERCEPT_STEP))
        self.log_step_rho = INITIAL_LOG_STEP
        self.accepted = {'v': np.zeros(graph.n), 'u': np.zeros(graph.n), 'beta': np.zeros(spec.clusters),
                         'rho': np.zeros(1)}

    def _loglik_diff(self, idx: Union[slice, IntArray], eta: FloatArray, eta_prop: FloatArray) -> FloatArray:
        return self.y[idx] * (eta_prop - eta) - self.n[idx] * (np.logaddexp(0, eta_prop) - np.logaddexp(0, eta))

    def _metropolis(self, log_ratio: FloatArray) -> np.ndarray:
        return np.log(self.rng.random(log_ratio.shape)) < log_ratio

    def update_structured(self) -> np.ndarray:
        if self.constrained:
            return self.update_structured_pairs()
        st = self.state
        rho = st.rho
        offset = st.beta[st.z] + st.u
        accept = np.zeros(self.graph.n, dtype=bool)
        for block, weights in zip(self.blocks, self.block_weights):
            prec = rho * self.degree[block] + 1 - rho
            mean = rho * (weights @ st.v) / prec
            current = st.v[block]
            proposal = current + np.exp(self.log_step_v[block]) * self.rng.standard_normal(block.size)
            log_ratio = self._loglik_diff(block, offset[block] + current, offset[block] + proposal)
            log_ratio -= prec / (2 * st.sigma2_v) * ((proposal - mean) ** 2 - (current - mean) ** 2)
            acc = self._metropolis(log_ratio)
            st.v[block] = np.where(acc, proposal, current)
            accept[block] = acc
        return accept

    def update_structured_pairs(self) -> np.ndarray:
        """One pair move per unit: unit :code:`i` and a uniformly chosen partner of its component, in unit order.

        The move :math:`v_i \\mathrel{+}= \\delta, v_j \\mathrel{-}= \\delta` is symmetric and keeps every component
        sum fixed. With :math:`Q = \\rho(D - W) + (1 - \\rho)I`, the quadratic form changes by
        :math:`2\\delta((Qv)_i - (Qv)_j) + \\delta^2(Q_{ii} + Q_{jj} - 2Q_{ij})`.
        """
        st = self.state
        rho, v = st.rho, st.v
        y, n = self.y, self.n
        eta = st.beta[st.z] + st.u + v
        accept = np.zeros(self.graph.n, dtype=bool)
        deltas = np.exp(self.log_step_v) * self.rng.standard_normal(self.graph.n)
        partner_draws = self.rng.random(self.graph.n)
        log_u = np.log(self.rng.random(self.graph.n))
        for i in range(self.graph.n):
            members = self.members[self.components[i]]
            r = int(partner_draws[i] * (members.size - 1))
            j = members[r + (r >= self.position[i])]
            delta = deltas[i]
            eta_i, eta_j = eta[i] + delta, eta[j] - delta
            log_ratio = (y[i] * delta - n[i] * (np.logaddexp(0, eta_i) - np.logaddexp(0, eta[i]))
                         - y[j] * delta - n[j] * (np.logaddexp(0, eta_j) - np.logaddexp(0, eta[j])))
            qv_i = rho * (self.degree[i] * v[i] - v[self.neighbor_index[i]].sum()) + (1 - rho) * v[i]
            qv_j = rho * (self.degree[j] * v[j] - v[self.neighbor_index[j]].sum()) + (1 - rho) * v[j]
            q_ij = -rho if j in self.neighbors[i] else 0
            q_diag = rho * (self.degree[i] + self.degree[j]) + 2 * (1 - rho)
            log_ratio -= (2 * delta * (qv_i - qv_j) + delta ** 2 * (q_diag - 2 * q_ij)) / (2 * st.sigma2_v)
            if log_u[i] < log_ratio:
                v[i] += delta
                v[j] -= delta
                eta[i], eta[j] = eta_i, eta_j
                accept[i] = True
        return accept

    def update_unstructured(self) -> np.ndarray:
        st = self.state
        offset = st.beta[st.z] + st.v
        proposal = st.u + np.exp(self.log_step_u) * self.rng.standard_normal(self.graph.n)
        log_ratio = self._loglik_diff(slice(None), offset + st.u, offset + proposal)
        log_ratio -= (proposal ** 2 - st.u ** 2) / (2 * st.sigma2_u)
        acc = self._metropolis(log_ratio)
        st.u = np.where(acc, proposal, st.u)
        return acc

    def structured_quad_form(self, rho: float) -> float:
        v = self.state.v
        return float(rho * (v @ (self.laplacian @ v)) + (1 - rho) * (v @ v))

    def update_variances(self):
        if self.spec.fixed_variances is not None:
            return
        st = self.state
        a, b = self.spec.prior_shape, self.spec.prior_rate
        st.sigma2_v = draw_variance(self.structured_quad_form(st.rho), self.rank_v, a, b, self.rng)
        if self.approach.has_unstructured:
            st.sigma2_u = draw_variance(float(st.u @ st.u), self.graph.n, a, b, self.rng)

    def _log_rho_target(self, rho: float) -> float:
        # uniform prior on rho, random walk on logit(rho): the Jacobian is rho (1 - rho)
        return (0.5 * self.logdet(rho) - self.structured_quad_form(rho) / (2 * self.state.sigma2_v)
                + np.log(rho) + np.log1p(-rho))

    def update_rho(self) -> bool:
        st = self.state
        proposal = float(expit(logit(st.rho) + np.exp(self.log_step_rho) * self.rng.standard_normal()))
        if not 0 < proposal < 1:
            return False
        accept = np.log(self.rng.random()) < self._log_rho_target(proposal) - self._log_rho_target(st.rho)
        if accept:
            st.rho = proposal
        return bool(accept)

    def update_intercepts(self) -> np.ndarray:
        before = self.state.beta
        self.state = update_ordered_intercepts(self.state, self.y, self.n, self.rng, np.exp(self.log_step_beta))
        return self.state.beta != before

    def center(self):
        """Moves the mean of the structured effect into the intercepts; the linear predictor is unchanged."""
        st = self.state
        if self.constrained:
            # pair moves keep component sums; only rounding drift is removed
            st.v = st.v - _component_means(st.v, self.components)[self.components]
            return
        shift = st.v.mean()
        st.v = st.v - shift
        st.beta = st.beta + shift

    def sweep(self) -> Dict[str, np.ndarray]:
        accepted = {'v': self.update_structured()}
        if self.approach.has_unstructured:
            accepted['u'] = self.update_unstructured()
        self.update_variances()
        if self.approach == Approach.LEROUX:
            accepted['rho'] = np.array([self.update_rho()])
        accepted['beta'] = self.update_intercepts()
        if self.approach == Approach.LOCAL:
            self.state = update_cluster_indicators(self.state, self.y, self.n, self.spec.clusters, self.rng)
        if self.approach.is_intrinsic:
            self.center()
        return accepted

    def adapt(self, accepted: Dict[str, np.ndarray], t: int):
        gain = (t + 10) ** -0.6
        self.log_step_v += gain * (accepted['v'] - ACCEPTANCE_TARGET)
        self.log_step_beta += gain * (accepted['beta'] - ACCEPTANCE_TARGET)
        if 'u' in accepted:
            self.log_step_u += gain * (accepted['u'] - ACCEPTANCE_TARGET)
        if 'rho' in accepted:
            self.log_step_rho += gain * (float(accepted['rho'][0]) - ACCEPTANCE_TARGET)


def fit_group(y: IntArray, n: IntArray, graph: AdjacencyGraph, spec: ModelSpec, rng: SeedLike,
              progress: bool = False) -> PosteriorDraws:
    """Fit one binomial-logit proportion surface by Metropolis-within-Gibbs.

    Each sweep runs, in order: per-unit adaptive random-walk Metropolis on the structured effect (blocked by graph
    colour), the same on the unstructured effect (BYM, local), conjugate Inverse-Gamma draws of the variances,
    a logit-scale random walk on the Leroux :math:`\\rho`, random-walk updates of the ordered intercepts, Gibbs draws
    of the cluster indices (local) and finally the sum-to-zero centering of the structured effect (ICAR, BYM, local)
    with the shift absorbed into the intercepts, which leaves the linear predictor unchanged. On a disconnected graph
    the structured effect is updated by within-component pair moves instead, so each component keeps mean zero.
    The sampler state is checked after every sweep, burn-in included, and a non-finite value aborts the fit.

    Args:
        y: Successes per unit, aligned to :code:`graph.unit_ids`.
        n: Trials per unit.
        graph: Adjacency graph.
        spec: Model spec (any approach except bootstrap).
        rng: Random generator or seed.
        progress: Show a progress bar.

    Returns:
        The retained draws.

    """
    if spec.approach == Approach.BOOTSTRAP:
        raise ValueError("The bootstrap approach has no posterior; use ice.bootstrap_ice.")
    y, n = np.asarray(y, dtype=np.int64), np.asarray(n, dtype=np.int64)
    if y.shape != (graph.n,) or n.shape != (graph.n,):
        raise ValueError(f"Expected counts for {graph.n} units but got shapes {y.shape} and {n.shape}.")
    if np.any((y < 0) | (y > n)):
        raise DataValidationError("Counts must satisfy 0 <= y <= n.")
    mcmc = spec.mcmc
    sampler = _GroupSampler(y, n, graph, spec, as_generator(rng))
    log_coefficient = log_binomial_coefficient(y, n)
    num_draws = mcmc.retained
    q = spec.clusters
    out = {'beta': np.empty((num_draws, q)), 'v': np.empty((num_draws, graph.n)), 'u': np.empty((num_draws, graph.n)),
           'sigma2_v': np.empty(num_draws), 'sigma2_u': np.empty(num_draws), 'rho': np.empty(num_draws),
           'z': np.empty((num_draws, graph.n), dtype=np.int8 if q < 128 else int),
           'p': np.empty((num_draws, graph.n)), 'loglik': np.empty((num_draws, graph.n))}
    logger.info(f"Fitting {spec.label} to {graph.n} units: {mcmc.iterations} sweeps, burn-in {mcmc.burn_in}, "
                f"thin {mcmc.thin}")
    s = 0
    for t in tqdm(range(mcmc.iterations), disable=not progress, desc=spec.label):
        accepted = sampler.sweep()
        st = sampler.state
        eta = linear_predictor(st, graph)
        if not np.all(np.isfinite(eta)) or not np.isfinite(st.sigma2_v + st.sigma2_u + st.rho):
            bad = np.flatnonzero(~np.isfinite(eta))
            raise NumericalError(f"Non-finite sampler state at sweep {t} for units "
                                 f"{[graph.unit_ids[i] for i in bad[:5]]} (beta={st.beta}, "
                                 f"sigma2_v={st.sigma2_v:.3g}, sigma2_u={st.sigma2_u:.3g}, rho={st.rho:.3g}).")
        if t < mcmc.burn_in:
            if mcmc.adapt:
                sampler.adapt(accepted, t)
            continue
        for block, acc in accepted.items():
            sampler.accepted[block] += acc
        if (t - mcmc.burn_in) % mcmc.thin:
            continue
        loglik = log_coefficient + binomial_loglik_logit(y, n, eta, coefficient=False)
        out['beta'][s], out['v'][s], out['u'][s], out['z'][s] = st.beta, st.v, st.u, st.z
        out['sigma2_v'][s], out['sigma2_u'][s], out['rho'][s] = st.sigma2_v, st.sigma2_u, st.rho
        out['p'][s] = inv_logit(eta)
        out['loglik'][s] = loglik
        s += 1
    kept_sweeps = mcmc.iterations - mcmc.burn_in
    acceptance = {block: float(np.mean(count) / kept_sweeps) for block, count in sampler.accepted.items()
                  if block != 'u' or spec.approach.has_unstructured}
    if spec.approach != Approach.LEROUX:
        acceptance.pop('rho')
    _log_acceptance(spec, acceptance)
    return PosteriorDraws(spec, graph.unit_ids, acceptance=acceptance, seed=mcmc.seed, **out)


def _log_acceptance(spec: ModelSpec, acceptance: Dict[str, float]):
    low, high = ACCEPTANCE_BAND
    for block, rate in acceptance.items():
        if spec.mcmc.adapt and not low <= rate <= high:
            logger.warning(f"{spec.label}: acceptance rate of block {block} is {rate:.2f}, outside [{low}, {high}]")
        else:
            logger.info(f"{spec.label}: acceptance rate of block {block} is {rate:.2f}")


def _fit_group_task(args) -> PosteriorDraws:
    return fit_group(*args)


def fit_ice_model(observations: Sequence[CountyObservation], graph: AdjacencyGraph, spec: ModelSpec,
                  seeds: Optional[Sequence[SeedLike]] = None, threads: int = 1,
                  progress: bool = False) -> Tuple[PosteriorDraws, PosteriorDraws]:
    """Fit both proportion surfaces of the ICE independently.

    Args:
        observations: One observation per unit, in the unit order of :code:`graph`.
        graph: Adjacency graph.
        spec: Model spec.
        seeds: Seeds of the two groups' streams; by default two independent streams spawned from
            :code:`spec.mcmc.seed`.
        threads: Fit the two groups in parallel processes when at least 2.
        progress: Show progress bars (sequential fits only).

    Returns:
        Draws of the high-income White and the low-income Black proportions, index-aligned.

    """
    unit_ids = tuple(o.unit_id for o in observations)
    if unit_ids != graph.unit_ids:
        raise DataValidationError("Observation units do not match the adjacency graph units (same ids in the same "
                                  "order are required).")
    y1, y2, n = observation_arrays(observations)
    if seeds is None:
        seeds = np.random.SeedSequence(spec.mcmc.seed).spawn(2)
    tasks = [(y1, n, graph, spec, seeds[0]), (y2, n, graph, spec, seeds[1])]
    if threads >= 2:
        with ProcessPoolExecutor(max_workers=2) as pool:
            draws1, draws2 = pool.map(_fit_group_task, tasks)
    else:
        draws1, draws2 = (fit_group(*task, progress=progress) for task in tasks)
    return draws1, draws2
