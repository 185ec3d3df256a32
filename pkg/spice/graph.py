import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cholesky, eigvalsh, solve_triangular

from .exceptions import DataValidationError, NumericalError
from .typing import EdgeList, FloatArray, IntArray, SeedLike, UnitId
from .utils import as_generator, fix_dataclass_init_docs

logger = logging.getLogger(__name__)

LATTICE_SHAPE = (12, 13)


@fix_dataclass_init_docs
@dataclass(frozen=True)
class AdjacencyGraph:
    """Binary, symmetric neighbourhood structure :math:`W` over :math:`n` areal units.

    Unit :code:`i` of the graph is the unit named :code:`unit_ids[i]` (e.g. a county FIPS code), and :code:`w_ij = 1`
    if and only if :code:`j in neighbors[i]`. Instances are immutable and safe to share across threads or processes.

    Attributes:
        unit_ids: External identifiers aligned to the indices of the graph.
        neighbors: Sorted neighbour indices for each unit.

    """
    unit_ids: Tuple[UnitId, ...]
    neighbors: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.unit_ids) != len(self.neighbors):
            raise ValueError(f"Expected one neighbour list per unit, but got {len(self.neighbors)} lists "
                             f"for {len(self.unit_ids)} units.")
        n = len(self.unit_ids)
        for i, nbrs in enumerate(self.neighbors):
            if len(set(nbrs)) != len(nbrs):
                raise ValueError(f"Unit {self.unit_ids[i]} has duplicate neighbours {nbrs}.")
            for j in nbrs:
                if not 0 <= j < n:
                    raise ValueError(f"Neighbour index {j} of unit {self.unit_ids[i]} is outside [0, {n}).")
                if j == i:
                    raise ValueError(f"Unit {self.unit_ids[i]} is its own neighbour.")
                if i not in self.neighbors[j]:
                    raise ValueError(f"Asymmetric adjacency: {self.unit_ids[j]} is a neighbour of "
                                     f"{self.unit_ids[i]} but not vice versa.")

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    @property
    def degree(self) -> IntArray:
        return np.array([len(nbrs) for nbrs in self.neighbors], dtype=int)

    @property
    def num_edges(self) -> int:
        return int(self.degree.sum()) // 2

    @property
    def isolated(self) -> IntArray:
        """Indices of units without neighbours."""
        return np.flatnonzero(self.degree == 0)

    @property
    def edges(self) -> List[Tuple[int, int]]:
        """Each undirected edge once, as an index pair :code:`(i, j)` with :code:`i < j`."""
        return [(i, j) for i, nbrs in enumerate(self.neighbors) for j in nbrs if i < j]

    @cached_property
    def weights(self) -> sp.csr_matrix:
        """Sparse binary adjacency matrix :math:`W`."""
        rows = np.repeat(np.arange(self.n), self.degree)
        cols = np.array([j for nbrs in self.neighbors for j in nbrs], dtype=int)
        return sp.csr_matrix((np.ones(cols.size), (rows, cols)), shape=(self.n, self.n))

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges)
        return graph

    @cached_property
    def components(self) -> IntArray:
        """Connected component label of each unit; labels are ordered by the smallest unit index they contain."""
        labels = np.empty(self.n, dtype=int)
        comps = sorted(nx.connected_components(self.to_networkx()), key=min)
        for label, comp in enumerate(comps):
            labels[list(comp)] = label
        return labels

    @property
    def num_components(self) -> int:
        return int(self.components.max()) + 1 if self.n else 0

    @cached_property
    def coloring(self) -> List[IntArray]:
        """Colour classes of a greedy proper colouring of the graph.

        No two units of the same class are neighbours, so under any CAR prior their full conditionals are independent
        given the other classes and a whole class can be updated as one block.

        Returns:
            List of index arrays, one per colour.

        """
        colors = nx.greedy_color(self.to_networkx(), strategy='largest_first')
        num_colors = max(colors.values()) + 1 if colors else 0
        return [np.array(sorted(i for i, c in colors.items() if c == k), dtype=int) for k in range(num_colors)]

    def index(self, unit_id: UnitId) -> int:
        return self._lookup[unit_id]

    @cached_property
    def _lookup(self) -> Dict[UnitId, int]:
        return {u: i for i, u in enumerate(self.unit_ids)}


def build_graph(edges: EdgeList, unit_ids: Sequence[UnitId]) -> AdjacencyGraph:
    """Build a symmetric, deduplicated adjacency graph from unit-id pairs.

    Args:
        edges: Pairs of unit ids that share a border; either orientation (or both) may be given.
        unit_ids: Ordered unit ids; unit :code:`i` of the graph is :code:`unit_ids[i]`.

    Returns:
        The adjacency graph.

    """
    unit_ids = tuple(str(u) for u in unit_ids)
    if not unit_ids:
        raise DataValidationError("Cannot build an adjacency graph over an empty unit list.")
    lookup = {u: i for i, u in enumerate(unit_ids)}
    if len(lookup) != len(unit_ids):
        raise DataValidationError("Unit ids must be unique.")
    graph = nx.Graph()
    graph.add_nodes_from(range(len(unit_ids)))
    for a, b in edges:
        a, b = str(a), str(b)
        for u in (a, b):
            if u not in lookup:
                raise DataValidationError(f"Edge ({a}, {b}) references unknown unit id {u}.")
        if a == b:
            raise DataValidationError(f"Self-loop edge ({a}, {b}) is not allowed.")
        graph.add_edge(lookup[a], lookup[b])
    neighbors = tuple(tuple(sorted(graph.neighbors(i))) for i in range(len(unit_ids)))
    return AdjacencyGraph(unit_ids, neighbors)


def lattice_graph(rows: int = LATTICE_SHAPE[0], cols: int = LATTICE_SHAPE[1]) -> AdjacencyGraph:
    """Rook-adjacency lattice, the self-contained fallback study region (12 x 13 = 156 units by default).

    Args:
        rows: Number of lattice rows.
        cols: Number of lattice columns.

    Returns:
        The lattice graph with unit ids of the form :code:`R03C11`, in row-major order.

    """
    lattice = nx.grid_2d_graph(rows, cols)
    name = {(r, c): f"R{r:02d}C{c:02d}" for r in range(rows) for c in range(cols)}
    unit_ids = [name[(r, c)] for r in range(rows) for c in range(cols)]
    return build_graph([(name[a], name[b]) for a, b in lattice.edges], unit_ids)


def read_edge_list(path: Union[str, Path], unit_ids: Optional[Sequence[UnitId]] = None) -> AdjacencyGraph:
    """Read an edge-list CSV with header :code:`src,dst`.

    Args:
        path: Path to the CSV file.
        unit_ids: Unit order of the graph (normally the FIPS order of the observation file). If :code:`None`, the
            sorted set of ids appearing in the file is used, so units without any edge cannot be represented.

    Returns:
        The adjacency graph.

    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = {'src', 'dst'} - set(frame.columns)
    if missing:
        raise DataValidationError(f"Edge list {path} is missing column(s) {sorted(missing)}.")
    edges = list(zip(frame['src'].str.strip(), frame['dst'].str.strip()))
    if unit_ids is None:
        unit_ids = sorted({u for e in edges for u in e})
    graph = build_graph(edges, unit_ids)
    logger.info(f"Read {graph.n} units, {graph.num_edges} edges and {graph.num_components} component(s) from {path}")
    return graph


def write_edge_list(graph: AdjacencyGraph, path: Union[str, Path]):
    edges = [(graph.unit_ids[i], graph.unit_ids[j]) for i, j in graph.edges]
    pd.DataFrame(edges, columns=['src', 'dst']).to_csv(path, index=False)


def read_gal(path: Union[str, Path], unit_ids: Optional[Sequence[UnitId]] = None) -> AdjacencyGraph:
    """Read a GAL neighbour file.

    The first line holds either the unit count or :code:`0 n name key`; each unit then takes two lines, the first
    with the unit id and its neighbour count, the second with the neighbour ids.

    Args:
        path: Path to the GAL file.
        unit_ids: Unit order of the graph; defaults to the order the units appear in the file.

    Returns:
        The adjacency graph.

    """
    with open(path) as f:
        lines = [line.split() for line in f]
    if not lines or not lines[0]:
        raise DataValidationError(f"GAL file {path} has no header line.")
    header = lines[0]
    try:
        n = int(header[0]) if len(header) == 1 else int(header[1])
    except ValueError:
        raise DataValidationError(f"GAL file {path}: malformed header {' '.join(header)}.")
    order, edges = [], []
    cursor = 1
    for _ in range(n):
        if cursor >= len(lines) or len(lines[cursor]) < 2:
            raise DataValidationError(f"GAL file {path}, line {cursor + 1}: expected '<id> <count>'.")
        unit, count = lines[cursor][0], int(lines[cursor][1])
        nbrs = lines[cursor + 1] if count > 0 else []
        if len(nbrs) != count:
            raise DataValidationError(f"GAL file {path}, line {cursor + 2}: expected {count} neighbours "
                                      f"of {unit} but got {len(nbrs)}.")
        order.append(unit)
        edges.extend((unit, j) for j in nbrs)
        cursor += 2 if count > 0 or (cursor + 1 < len(lines) and not lines[cursor + 1]) else 1
    graph = build_graph(edges, order if unit_ids is None else unit_ids)
    logger.info(f"Read {graph.n} units, {graph.num_edges} edges and {graph.num_components} component(s) from {path}")
    return graph


def read_adjacency(path: Union[str, Path], unit_ids: Optional[Sequence[UnitId]] = None) -> AdjacencyGraph:
    """Read an adjacency file, choosing the GAL reader for :code:`.gal` files and the edge-list reader otherwise."""
    if Path(path).suffix.lower() == '.gal':
        return read_gal(path, unit_ids)
    return read_edge_list(path, unit_ids)


def morans_i(values: FloatArray, graph: AdjacencyGraph) -> float:
    """Global Moran's I of :code:`values` under the binary weights of :code:`graph`.

    .. math::
        I = \\frac{n}{S_0} \\frac{\\sum_{ij} w_{ij} (x_i - \\bar{x})(x_j - \\bar{x})}{\\sum_i (x_i - \\bar{x})^2},
        \\quad S_0 = \\sum_{ij} w_{ij}

    Args:
        values: One value per unit.
        graph: Adjacency graph.

    Returns:
        The statistic.

    """
    x = np.asarray(values, dtype=float)
    if x.shape != (graph.n,):
        raise ValueError(f"Expected {graph.n} values but got shape {x.shape}.")
    if graph.num_edges == 0:
        raise ValueError("Moran's I is undefined on a graph without edges.")
    if np.ptp(x) == 0:
        raise ValueError("Moran's I is undefined for a constant vector (zero variance).")
    z = x - x.mean()
    w = graph.weights
    return float(graph.n / w.sum() * (z @ (w @ z)) / (z @ z))


@dataclass(frozen=True)
class MoranResult:
    statistic: float
    expected: float
    p_value: float


def moran_test(values: FloatArray, graph: AdjacencyGraph, permutations: int = 999,
               rng: SeedLike = 0) -> MoranResult:
    """Moran's I with a one-sided Monte Carlo permutation p-value for positive autocorrelation.

    Args:
        values: One value per unit.
        graph: Adjacency graph.
        permutations: Number of random relabelings of the values.
        rng: Random generator or seed.

    Returns:
        Statistic, its expectation :math:`-1/(n-1)` under no autocorrelation, and
        :math:`p = (\\#\\{I_\\pi \\geq I\\} + 1) / (\\text{permutations} + 1)`.

    """
    if permutations < 1:
        raise ValueError(f"Expected at least one permutation but got {permutations}.")
    statistic = morans_i(values, graph)
    z = np.asarray(values, dtype=float)
    z = z - z.mean()
    w = graph.weights
    shuffled = as_generator(rng).permuted(np.tile(z, (permutations, 1)), axis=1)
    replicates = graph.n / w.sum() * np.sum(shuffled * (w @ shuffled.T).T, axis=1) / (z @ z)
    p_value = (np.sum(replicates >= statistic) + 1) / (permutations + 1)
    return MoranResult(statistic, -1 / (graph.n - 1), float(p_value))


class CarKind(str, Enum):
    """Conditional autoregressive precision families.

    Attributes:
        ICAR: Intrinsic CAR, :math:`D - W` (rank deficient by the number of connected components).
        PROPER: Proper CAR, :math:`D - \\rho W`.
        LEROUX: Leroux CAR, :math:`\\rho (D - W) + (1 - \\rho) I`.

    """
    ICAR = 'icar'
    PROPER = 'proper'
    LEROUX = 'leroux'


@fix_dataclass_init_docs
@dataclass(frozen=True, eq=False)
class PrecisionMatrix:
    """Sparse CAR precision :math:`Q` paired with a scale :math:`\\sigma^2` (covariance :math:`\\sigma^2 Q^{-1}`).

    Attributes:
        matrix: Sparse symmetric precision.
        kind: CAR family that produced the matrix.
        rho: Spatial mixing weight (ignored for ICAR).
        scale: Variance :math:`\\sigma^2` the precision is paired with.

    """
    matrix: sp.csr_matrix
    kind: CarKind
    rho: float = 1
    scale: float = 1

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def row_sums(self) -> FloatArray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    @cached_property
    def cholesky_factor(self) -> np.ndarray:
        """Dense lower Cholesky factor :math:`L` with :math:`Q = L L^T`, computed once per precision."""
        if self.kind == CarKind.ICAR:
            raise NumericalError("The ICAR precision is singular and has no Cholesky factor; "
                                 "use a proper or Leroux precision with rho < 1.")
        try:
            return cholesky(self.matrix.toarray(), lower=True)
        except LinAlgError:
            raise NumericalError(f"The {self.kind.value} precision with rho={self.rho} is not positive definite "
                                 f"(an isolated unit has a zero diagonal under rho-weighted degrees).")

    @property
    def logdet(self) -> float:
        return float(2 * np.sum(np.log(np.diag(self.cholesky_factor))))


def car_precision(graph: AdjacencyGraph, kind: Union[CarKind, str], rho: float = 1) -> PrecisionMatrix:
    """CAR precision matrix for :code:`graph`.

    Args:
        graph: Adjacency graph.
        kind: :code:`icar` (:math:`D - W`), :code:`proper` (:math:`D - \\rho W`) or :code:`leroux`
            (:math:`\\rho (D - W) + (1 - \\rho) I`).
        rho: Mixing weight in :math:`[0, 1]`; ignored for :code:`icar`.

    Returns:
        The precision matrix.

    """
    kind = CarKind(kind)
    d = sp.diags(graph.degree.astype(float))
    w = graph.weights
    if kind == CarKind.ICAR:
        if graph.isolated.size:
            raise DataValidationError(f"ICAR precision requires every unit to have a neighbour, but "
                                      f"{[graph.unit_ids[i] for i in graph.isolated]} are isolated.")
        return PrecisionMatrix(sp.csr_matrix(d - w), kind)
    if not 0 <= rho <= 1:
        raise ValueError(f"Expected 0 <= rho <= 1 but got {rho}.")
    if kind == CarKind.PROPER:
        return PrecisionMatrix(sp.csr_matrix(d - rho * w), kind, rho)
    return PrecisionMatrix(sp.csr_matrix(rho * (d - w) + (1 - rho) * sp.identity(graph.n)), kind, rho)


def leroux_logdet_fn(graph: AdjacencyGraph) -> Callable[[float], float]:
    """Log-determinant of the Leroux precision as a function of :math:`\\rho`.

    The eigenvalues :math:`\\lambda_k` of :math:`D - W` are computed once, after which
    :math:`\\log |\\rho (D - W) + (1 - \\rho) I| = \\sum_k \\log(\\rho \\lambda_k + 1 - \\rho)` costs :math:`O(n)`.

    Args:
        graph: Adjacency graph.

    Returns:
        Function mapping :math:`\\rho \\in [0, 1)` to the log-determinant.

    """
    laplacian = (sp.diags(graph.degree.astype(float)) - graph.weights).toarray()
    eigenvalues = np.clip(eigvalsh(laplacian), 0, None)

    def _logdet(rho: float) -> float:
        return float(np.sum(np.log(rho * eigenvalues + 1 - rho)))

    return _logdet


def sample_gmrf(precision: PrecisionMatrix, variance: float, rng: SeedLike,
                size: Optional[int] = None) -> FloatArray:
    """Draw :math:`x \\sim \\mathcal{N}(0, \\sigma^2 Q^{-1})` via the Cholesky factor of :math:`Q`.

    With :math:`Q = L L^T` and :math:`z \\sim \\mathcal{N}(0, I)`, the solution of :math:`L^T x = z` has covariance
    :math:`Q^{-1}`. The factor is cached on :code:`precision`, so repeated calls only pay for the triangular solve.

    Args:
        precision: Positive definite precision (proper, or Leroux with :math:`\\rho < 1`).
        variance: Scale :math:`\\sigma^2 \\geq 0`.
        rng: Random generator or seed.
        size: Number of independent fields; :code:`None` returns a single vector.

    Returns:
        Array of shape :code:`(n,)` or :code:`(size, n)`.

    """
    if variance < 0:
        raise ValueError(f"Expected a non-negative variance but got {variance}.")
    if precision.kind == CarKind.ICAR:
        raise NumericalError("Cannot sample from an ICAR precision: it is not positive definite.")
    shape = (precision.n,) if size is None else (size, precision.n)
    if variance == 0:
        return np.zeros(shape)
    rng = as_generator(rng)
    z = rng.standard_normal((precision.n, 1 if size is None else size))
    x = solve_triangular(precision.cholesky_factor.T, z, lower=False) * np.sqrt(variance)
    return x[:, 0] if size is None else x.T
