"""
Tensor and tensor-network data model.

A tensor of rank k and bond dimension d is a complex array of shape
(d,) * k whose first axis is port 0, i.e. entries are laid out row-major
over ascending port index. A network is a multigraph whose edges attach to
(vertex, port) endpoints, plus one tensor per vertex. Parallel edges and
self-loops are first-class, which the 2 x L tori need.

The reference contraction enumerates every edge labeling; it is the oracle
every faster path in the toolkit is checked against.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from errors import BudgetExceededError, NetworkFormatError
from rng import stream
from settings import Settings

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
GAUSSIAN_CONVENTION = 'unit total second moment: Re, Im independent with variance 1/2 each'
_BLOCK = 1 << 16


@dataclass(frozen=True, eq=False)
class Tensor:
    bond_dim: int
    data: np.ndarray

    def __post_init__(self):
        if self.bond_dim < 1:
            raise ValueError(f'bond dimension must be positive, got {self.bond_dim}')
        arr = np.array(self.data, dtype=complex)
        if arr.shape != (self.bond_dim,) * arr.ndim:
            raise ValueError(f'tensor shape {arr.shape} is not ({self.bond_dim},) * {arr.ndim}')
        arr.setflags(write=False)
        object.__setattr__(self, 'data', arr)

    @classmethod
    def from_entries(cls, entries, rank: int, bond_dim: int) -> 'Tensor':
        flat = np.asarray(entries, dtype=complex).reshape(-1)
        if flat.size != bond_dim ** rank:
            raise ValueError(f'expected {bond_dim ** rank} entries for rank {rank}, got {flat.size}')
        return cls(bond_dim, flat.reshape((bond_dim,) * rank))

    @classmethod
    def scalar(cls, value, bond_dim: int = 1) -> 'Tensor':
        return cls(bond_dim, np.asarray(value, dtype=complex))

    @classmethod
    def ones(cls, rank: int, bond_dim: int) -> 'Tensor':
        return cls(bond_dim, np.ones((bond_dim,) * rank, dtype=complex))

    @property
    def rank(self) -> int:
        return self.data.ndim

    @property
    def entries(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __add__(self, other: 'Tensor') -> 'Tensor':
        return Tensor(self.bond_dim, self.data + other.data)

    def scaled(self, factor) -> 'Tensor':
        return Tensor(self.bond_dim, self.data * factor)


def tensor_product(t1: Tensor, t2: Tensor) -> Tensor:
    """Outer product; ports of `t1` come first, then those of `t2`."""
    if t1.bond_dim != t2.bond_dim:
        raise ValueError(f'bond dimension mismatch: {t1.bond_dim} vs {t2.bond_dim}')
    return Tensor(t1.bond_dim, np.multiply.outer(t1.data, t2.data))


def contract_pairs(t: Tensor, pairs) -> Tensor:
    """Sum over each pair of matched ports; surviving ports keep their order.

    Pairs are canonicalised before summation, so any permutation of the
    pair list (or of the ports within a pair) yields bitwise identical data.
    """
    canonical = sorted(tuple(sorted((int(p), int(q)))) for p, q in pairs)
    seen = set()
    for p, q in canonical:
        for port in (p, q):
            if not 0 <= port < t.rank:
                raise ValueError(f'port {port} out of range for rank {t.rank}')
            if port in seen:
                raise ValueError(f'port {port} appears in more than one pair')
            seen.add(port)
    if not canonical:
        return t
    labels = list(range(t.rank))
    for p, q in canonical:
        labels[q] = labels[p]
    survivors = [port for port in range(t.rank) if port not in seen]
    return Tensor(t.bond_dim, np.einsum(t.data, labels, survivors))


# Graphs

@dataclass(frozen=True)
class Edge:
    u: tuple
    w: tuple

    @property
    def is_loop(self) -> bool:
        return self.u[0] == self.w[0]

    @property
    def vertices(self) -> tuple:
        return self.u[0], self.w[0]


@dataclass(frozen=True)
class Graph:
    """Multigraph with port-attached edges; edge id = position in `edges`."""

    num_vertices: int
    edges: tuple
    incidence: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_vertices < 1:
            raise ValueError('a graph needs at least one vertex')
        edges = tuple(e if isinstance(e, Edge) else Edge(tuple(e[0]), tuple(e[1])) for e in self.edges)
        object.__setattr__(self, 'edges', edges)
        slots = [dict() for _ in range(self.num_vertices)]
        for eid, edge in enumerate(edges):
            for v, p in (edge.u, edge.w):
                if not 0 <= v < self.num_vertices:
                    raise ValueError(f'edge {eid} references vertex {v} outside 0..{self.num_vertices - 1}')
                if p in slots[v]:
                    raise ValueError(f'port {p} of vertex {v} is used by edges {slots[v][p]} and {eid}')
                slots[v][p] = eid
        incidence = []
        for v, ports in enumerate(slots):
            if sorted(ports) != list(range(len(ports))):
                raise ValueError(f'ports of vertex {v} are not contiguous from 0: {sorted(ports)}')
            incidence.append(tuple(ports[p] for p in range(len(ports))))
        object.__setattr__(self, 'incidence', tuple(incidence))

    @property
    def degrees(self) -> tuple:
        return tuple(len(ports) for ports in self.incidence)

    @property
    def num_edges(self) -> int:
        return len(self.edges)


def build_torus(L1: int, L2: int) -> Graph:
    """Periodic L1 x L2 lattice.

    Vertex (i, j) has id i * L2 + j. Ports 0/1 point to the -/+ neighbour
    along axis 1 and ports 2/3 along axis 2. With a side of length 2 the
    wrap-around gives two distinct parallel edges between the same pair.
    """
    if L1 * L2 == 0:
        raise ValueError(f'torus {L1} x {L2} has no vertices')
    if L1 < 2 or L2 < 2:
        raise ValueError(f'degenerate torus {L1} x {L2}: both sides must be at least 2')
    edges = []
    for i in range(L1):
        for j in range(L2):
            v = i * L2 + j
            edges.append(Edge((v, 1), (((i + 1) % L1) * L2 + j, 0)))
            edges.append(Edge((v, 3), (i * L2 + (j + 1) % L2, 2)))
    return Graph(L1 * L2, tuple(edges))


def row_major_order(L1: int, L2: int) -> list:
    return list(range(L1 * L2))


def column_major_order(L1: int, L2: int) -> list:
    return [i * L2 + j for j in range(L2) for i in range(L1)]


def load_order(path, num_vertices: int) -> list:
    """Vertex order from a JSON list or whitespace separated ids."""
    text = Path(path).read_text()
    try:
        order = json.loads(text)
    except json.JSONDecodeError:
        order = [int(tok) for tok in text.split()]
    if sorted(order) != list(range(num_vertices)):
        raise ValueError(f'order in {path} is not a permutation of 0..{num_vertices - 1}')
    return [int(v) for v in order]


# Networks

@dataclass(frozen=True, eq=False)
class TensorNetwork:
    graph: Graph
    tensors: tuple
    bond_dim: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        tensors = tuple(self.tensors)
        object.__setattr__(self, 'tensors', tensors)
        if len(tensors) != self.graph.num_vertices:
            raise ValueError(f'{len(tensors)} tensors for {self.graph.num_vertices} vertices')
        for v, (t, deg) in enumerate(zip(tensors, self.graph.degrees)):
            if t.bond_dim != self.bond_dim:
                raise ValueError(f'tensor at vertex {v} has bond dimension {t.bond_dim}, network has {self.bond_dim}')
            if t.rank != deg:
                raise ValueError(f'tensor at vertex {v} has rank {t.rank} but the vertex has degree {deg}')

    @property
    def num_vertices(self) -> int:
        return self.graph.num_vertices

    @property
    def edges(self) -> tuple:
        return self.graph.edges

    def with_tensors(self, tensors) -> 'TensorNetwork':
        return TensorNetwork(self.graph, tuple(tensors), self.bond_dim, dict(self.metadata))

    def is_nonnegative(self) -> bool:
        return all(np.all(t.data.imag == 0) and np.all(t.data.real >= 0) for t in self.tensors)


def all_ones_network(graph: Graph, bond_dim: int) -> TensorNetwork:
    return TensorNetwork(graph, tuple(Tensor.ones(deg, bond_dim) for deg in graph.degrees), bond_dim)


def _block_sum(tn, start, stop):
    d = tn.bond_dim
    num_edges = tn.graph.num_edges
    idx = np.arange(start, stop, dtype=np.int64)
    colors = np.empty((num_edges, idx.size), dtype=np.int64)
    for e in range(num_edges):
        colors[e] = (idx // d ** (num_edges - 1 - e)) % d
    value = np.ones(idx.size, dtype=complex)
    for t, ports in zip(tn.tensors, tn.graph.incidence):
        flat = np.zeros(idx.size, dtype=np.int64)
        for p, eid in enumerate(ports):
            flat += colors[eid] * d ** (t.rank - 1 - p)
        value *= t.entries[flat]
    return value.sum()


def contract_reference(tn: TensorNetwork, budget=None, workers=None) -> complex:
    """chi(T) by enumerating all d^|E| edge labelings.

    Labelings are visited in ascending index order (edge 0 most significant)
    in fixed-size blocks; block sums are reduced in block order whatever the
    worker count.
    """
    budget = Settings.enumeration_budget() if budget is None else budget
    workers = Settings.workers() if workers is None else workers
    total = tn.bond_dim ** tn.graph.num_edges
    if total > budget:
        raise BudgetExceededError('reference enumeration', total, budget)
    starts = range(0, total, _BLOCK)
    logger.debug(f'Enumerating {total} labelings in {len(starts)} blocks')
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda s: _block_sum(tn, s, min(s + _BLOCK, total)), starts))
    else:
        partials = [_block_sum(tn, s, min(s + _BLOCK, total)) for s in starts]
    chi = 0j
    for part in partials:
        chi += part
    return complex(chi)


# Random ensembles

@dataclass(frozen=True)
class GaussianEnsembleSpec:
    mean: complex
    L1: int
    L2: int
    bond_dim: int
    seed: int
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f'sigma must be nonnegative, got {self.sigma}')
        if self.L1 < 2 or self.L2 < 2:
            raise ValueError(f'lattice {self.L1} x {self.L2} is degenerate')
        if self.L2 % 2:
            raise ValueError(f'L2 must be even, got {self.L2}')
        if self.bond_dim < 1:
            raise ValueError(f'bond dimension must be positive, got {self.bond_dim}')
        if self.seed < 0:
            raise ValueError(f'seed must be nonnegative, got {self.seed}')

    @property
    def n(self) -> int:
        return self.L1 * self.L2


def complex_gaussian(gen: np.random.Generator, mean, shape, sigma: float = 1.0) -> np.ndarray:
    """Samples with E[X] = mean and E|X - mean|^2 = sigma^2."""
    scale = sigma * math.sqrt(0.5)
    return mean + scale * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape))


def _vertex_streams(seed, sample, graph):
    # sample k of an ensemble owns stream indices k*n .. k*n + n - 1
    n = graph.num_vertices
    return [stream(seed, sample * n + v) for v in range(n)]


def sample_gaussian_tn(spec: GaussianEnsembleSpec, sample: int = 0) -> TensorNetwork:
    """2D Gaussian network: every entry iid complex Gaussian around `spec.mean`."""
    graph = build_torus(spec.L1, spec.L2)
    d = spec.bond_dim
    tensors = tuple(
        Tensor(d, complex_gaussian(gen, spec.mean, (d,) * deg, spec.sigma))
        for gen, deg in zip(_vertex_streams(spec.seed, sample, graph), graph.degrees)
    )
    metadata = {
        'ensemble': 'gaussian',
        'lattice': [spec.L1, spec.L2],
        'mean': [float(np.real(spec.mean)), float(np.imag(spec.mean))],
        'seed': spec.seed,
        'sample': sample,
        'sigma': spec.sigma,
        'convention': GAUSSIAN_CONVENTION,
    }
    return TensorNetwork(graph, tensors, d, metadata)


def sample_perturbations(L1: int, L2: int, bond_dim: int, seed: int, sigma: float = 1.0, sample: int = 0) -> tuple:
    """Zero-mean perturbation tensors A; sigma = 0 gives A = 0."""
    graph = build_torus(L1, L2)
    return tuple(
        Tensor(bond_dim, complex_gaussian(gen, 0.0, (bond_dim,) * deg, sigma))
        for gen, deg in zip(_vertex_streams(seed, sample, graph), graph.degrees)
    )


def sample_shifted_gaussian_tn(L1: int, L2: int, bond_dim: int, z, seed: int, sigma: float = 1.0,
                               sample: int = 0) -> TensorNetwork:
    """Network with tensors J + z * A, J all ones."""
    graph = build_torus(L1, L2)
    perturbations = sample_perturbations(L1, L2, bond_dim, seed, sigma, sample)
    tensors = tuple(
        Tensor.ones(deg, bond_dim) + a.scaled(z) for deg, a in zip(graph.degrees, perturbations)
    )
    metadata = {
        'ensemble': 'shifted-gaussian',
        'lattice': [L1, L2],
        'z': [float(np.real(z)), float(np.imag(z))],
        'seed': seed,
        'sample': sample,
        'sigma': sigma,
        'convention': GAUSSIAN_CONVENTION,
    }
    return TensorNetwork(graph, tensors, bond_dim, metadata)


# Network documents

def network_to_document(tn: TensorNetwork) -> dict:
    doc = {
        'version': FORMAT_VERSION,
        'bond_dim': tn.bond_dim,
        'num_vertices': tn.num_vertices,
        'edges': [[e.u[0], e.u[1], e.w[0], e.w[1]] for e in tn.edges],
        'tensors': [
            {'vertex': v, 'entries': [[float(x.real), float(x.imag)] for x in t.entries]}
            for v, t in enumerate(tn.tensors)
        ],
    }
    if tn.metadata:
        doc['metadata'] = tn.metadata
    return doc


def dumps_network(tn: TensorNetwork) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(network_to_document(tn), separators=(',', ':')) + '\n'


def save_tn(tn: TensorNetwork, path) -> None:
    Path(path).write_text(dumps_network(tn))
    logger.info(f'Saved network with {tn.num_vertices} vertices and {tn.graph.num_edges} edges to {path}')


def _require_int(value, location, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise NetworkFormatError(location, f'expected an integer >= {minimum}, got {value!r}')
    return value


def network_from_document(doc) -> TensorNetwork:
    if not isinstance(doc, dict):
        raise NetworkFormatError('$', 'document must be a JSON object')
    for key in ('version', 'bond_dim', 'num_vertices', 'edges', 'tensors'):
        if key not in doc:
            raise NetworkFormatError(key, 'required field is missing')
    if doc['version'] != FORMAT_VERSION:
        raise NetworkFormatError('version', f'unsupported version {doc["version"]!r}')
    d = _require_int(doc['bond_dim'], 'bond_dim', 1)
    n = _require_int(doc['num_vertices'], 'num_vertices', 1)

    if not isinstance(doc['edges'], list):
        raise NetworkFormatError('edges', 'expected a list')
    edges = []
    used = {}
    for i, raw in enumerate(doc['edges']):
        loc = f'edges[{i}]'
        if not isinstance(raw, list) or len(raw) != 4:
            raise NetworkFormatError(loc, 'expected [vertex, port, vertex, port]')
        v, p, w, q = (_require_int(x, f'{loc}[{k}]') for k, x in enumerate(raw))
        for vertex, port in ((v, p), (w, q)):
            if vertex >= n:
                raise NetworkFormatError(loc, f'vertex {vertex} out of range 0..{n - 1}')
            if (vertex, port) in used:
                raise NetworkFormatError(loc, f'port {port} of vertex {vertex} already used by edges[{used[vertex, port]}]')
            used[vertex, port] = i
        edges.append(Edge((v, p), (w, q)))
    degrees = [0] * n
    for vertex, _ in used:
        degrees[vertex] += 1
    for vertex, port in used:
        if port >= degrees[vertex]:
            raise NetworkFormatError(f'edges[{used[vertex, port]}]',
                                     f'port {port} of vertex {vertex} leaves a gap (degree {degrees[vertex]})')

    if not isinstance(doc['tensors'], list):
        raise NetworkFormatError('tensors', 'expected a list')
    by_vertex = {}
    for i, raw in enumerate(doc['tensors']):
        loc = f'tensors[{i}]'
        if not isinstance(raw, dict) or 'vertex' not in raw or 'entries' not in raw:
            raise NetworkFormatError(loc, 'expected {"vertex": int, "entries": [[re, im], ...]}')
        v = _require_int(raw['vertex'], f'{loc}.vertex')
        if v >= n:
            raise NetworkFormatError(f'{loc}.vertex', f'vertex {v} out of range 0..{n - 1}')
        if v in by_vertex:
            raise NetworkFormatError(f'{loc}.vertex', f'second tensor for vertex {v}')
        entries = raw['entries']
        expected = d ** degrees[v]
        if not isinstance(entries, list) or len(entries) != expected:
            raise NetworkFormatError(f'{loc}.entries', f'expected {expected} entries for degree {degrees[v]}')
        values = np.empty(expected, dtype=complex)
        for k, pair in enumerate(entries):
            if (not isinstance(pair, list) or len(pair) != 2
                    or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in pair)):
                raise NetworkFormatError(f'{loc}.entries[{k}]', 'expected [re, im]')
            values[k] = complex(pair[0], pair[1])
        by_vertex[v] = Tensor.from_entries(values, degrees[v], d)
    missing = [v for v in range(n) if v not in by_vertex]
    if missing:
        raise NetworkFormatError('tensors', f'missing tensor for vertex {missing[0]}')

    metadata = doc.get('metadata', {})
    if not isinstance(metadata, dict):
        raise NetworkFormatError('metadata', 'expected an object')
    graph = Graph(n, tuple(edges))
    return TensorNetwork(graph, tuple(by_vertex[v] for v in range(n)), d, metadata)


def load_tn(path) -> TensorNetwork:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkFormatError('$', f'not valid JSON: {exc}') from exc
    tn = network_from_document(doc)
    logger.info(f'Loaded network with {tn.num_vertices} vertices, {tn.graph.num_edges} edges, d={tn.bond_dim} from {path}')
    return tn
