"""
Multiplicative approximation of chi(T) by polynomial interpolation.

Each vertex tensor is written as mu_v * (J + z_end * A_v) with J all ones, so
g(z) = chi(T_A(z)) is a degree-n polynomial with g(0) = d^|E| and
chi(T) = prod(mu_v) * g(z_end). The estimator expands ln G(phi(z)), where
G(z) = g(z * z_end) and phi maps a disk of radius beta > 1 into a thin strip
around [0, 1], to order m at z = 0 and exponentiates the truncated series
at z = 1. The estimate is only guaranteed when G has no roots in that strip;
certification lives in `roots`.

Series are handled as Taylor coefficients (derivatives divided by k!)
internally. The derivative-valued wrappers exist for callers who think in
derivatives and for exact rational checks.
"""

from __future__ import annotations

import cmath
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import mpmath
import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from contract_exact import swallow_contract
from errors import BudgetExceededError
from settings import Settings
from tn_core import Edge, Graph, Tensor, TensorNetwork

logger = logging.getLogger(__name__)

_MAX_PHI_DEGREE = 10_000_000
_EINSUM_LABELS = 52


# Interpolation family

@dataclass(frozen=True, eq=False)
class InterpolationFamily:
    network: TensorNetwork
    means: tuple
    z_end: complex
    perturbations: tuple

    @property
    def graph(self) -> Graph:
        return self.network.graph

    @property
    def bond_dim(self) -> int:
        return self.network.bond_dim

    @property
    def num_vertices(self) -> int:
        return self.network.num_vertices

    @cached_property
    def prefactor(self) -> complex:
        out = 1 + 0j
        for mu in self.means:
            out *= mu
        return out

    def network_at(self, z) -> TensorNetwork:
        """T_A(z): vertex tensors J + z * A."""
        return self.network.with_tensors(
            Tensor.ones(a.rank, a.bond_dim) + a.scaled(z) for a in self.perturbations
        )

    def rotated(self, angle: float) -> 'InterpolationFamily':
        """Same family with every A multiplied by e^{i angle}."""
        phase = cmath.exp(1j * angle)
        return family_from_perturbations(self.network, [a.scaled(phase) for a in self.perturbations],
                                         self.z_end, self.means)


def make_family(network: TensorNetwork, means=None, z_end=1.0) -> InterpolationFamily:
    """Split every M_v as mu_v * (J + z_end * A_v).

    `means` defaults to the empirical mean of each tensor's entries; a
    scalar applies to every vertex.
    """
    if z_end == 0:
        raise ValueError('z_end must be nonzero')
    if means is None or (isinstance(means, str) and means == 'auto'):
        means = [complex(np.mean(t.entries)) for t in network.tensors]
    elif np.isscalar(means):
        means = [complex(means)] * network.num_vertices
    means = tuple(complex(mu) for mu in means)
    if len(means) != network.num_vertices:
        raise ValueError(f'{len(means)} means for {network.num_vertices} vertices')
    for v, mu in enumerate(means):
        if mu == 0:
            raise ValueError(f'mean normalizer at vertex {v} is zero')
    perturbations = tuple(
        Tensor(t.bond_dim, (t.data / mu - 1.0) / z_end) for t, mu in zip(network.tensors, means)
    )
    return InterpolationFamily(network, means, complex(z_end), perturbations)


def family_from_perturbations(network, perturbations, z_end, means=None) -> InterpolationFamily:
    """Family with prescribed A tensors on the topology of `network` (or a Graph)."""
    if z_end == 0:
        raise ValueError('z_end must be nonzero')
    graph = network.graph if isinstance(network, TensorNetwork) else network
    perturbations = tuple(perturbations)
    bond_dim = perturbations[0].bond_dim
    means = (1.0,) * graph.num_vertices if means is None else tuple(means)
    if len(means) != graph.num_vertices or any(mu == 0 for mu in means):
        raise ValueError('need one nonzero mean per vertex')
    tensors = tuple(
        (Tensor.ones(a.rank, bond_dim) + a.scaled(z_end)).scaled(mu) for a, mu in zip(perturbations, means)
    )
    base = TensorNetwork(graph, tensors, bond_dim)
    return InterpolationFamily(base, tuple(complex(mu) for mu in means), complex(z_end), perturbations)


def gaussian_reduction(network: TensorNetwork, mu) -> InterpolationFamily:
    """A (mu, n, d)-Gaussian network as the shifted family at z_end = 1/mu.

    chi(T) = mu^n * chi(T_A(1/mu)) with A = M - mu * J.
    """
    if mu == 0:
        raise ValueError('mean mu = 0 has no reduction to z_end = 1/mu')
    return make_family(network, means=mu, z_end=1.0 / mu)


# Derivatives of g

def _component_value(family: InterpolationFamily, component) -> complex:
    """chi of the A tensors on `component`, every edge leaving it summed against ones."""
    graph = family.graph
    members = sorted(component)
    inside = set(members)
    local = {v: i for i, v in enumerate(members)}
    tensors, kept_ports = [], []
    for v in members:
        ports = graph.incidence[v]
        external = tuple(p for p, eid in enumerate(ports)
                         if not all(x in inside for x in graph.edges[eid].vertices))
        data = family.perturbations[v].data
        tensors.append(data.sum(axis=external) if external else data)
        kept_ports.append([p for p in range(len(ports)) if p not in external])

    internal = sorted({graph.incidence[v][p] for v, kept in zip(members, kept_ports) for p in kept})
    if len(internal) <= _EINSUM_LABELS:
        label = {eid: k for k, eid in enumerate(internal)}
        operands = []
        for v, data, kept in zip(members, tensors, kept_ports):
            operands += [data, [label[graph.incidence[v][p]] for p in kept]]
        return complex(np.einsum(*operands, [], optimize='greedy'))

    # too many indices for einsum: swallow the reduced sub-network instead
    new_port = [{p: i for i, p in enumerate(kept)} for kept in kept_ports]
    edges = []
    for eid in internal:
        (a, p), (b, q) = graph.edges[eid].u, graph.edges[eid].w
        edges.append(Edge((local[a], new_port[local[a]][p]), (local[b], new_port[local[b]][q])))
    sub = TensorNetwork(Graph(len(members), tuple(edges)),
                        tuple(Tensor(family.bond_dim, t) for t in tensors), family.bond_dim)
    return swallow_contract(sub)


def _subset_value(family, subset, cache) -> complex:
    graph = family.graph
    d = family.bond_dim
    chosen = set(subset)
    untouched = sum(1 for e in graph.edges if not (set(e.vertices) & chosen))
    components = DisjointSet(subset)
    for e in graph.edges:
        a, b = e.vertices
        if a != b and a in chosen and b in chosen:
            components.merge(a, b)
    value = complex(d ** untouched)
    for comp in components.subsets():
        key = frozenset(comp)
        if key not in cache:
            cache[key] = _component_value(family, key)
        value *= cache[key]
    return value


def arithmetic_cost(family: InterpolationFamily, top: int) -> int:
    """sum_{k <= top} C(n, k) * d^(D k), D the largest vertex degree (d^4k on a torus)."""
    n = family.num_vertices
    width = family.bond_dim ** max(family.graph.degrees, default=0)
    return sum(math.comb(n, k) * width ** k for k in range(top + 1))


def taylor_coefficients(family: InterpolationFamily, m: int, budget=None, workers=None,
                        compensated=False, arithmetic_budget=None) -> np.ndarray:
    """g_k = g^(k)(0) / k! for k = 0..m; g_k = sum over |S| = k of chi(dT/dS).

    `compensated` sums each order with math.fsum on the real and imaginary
    parts instead of left to right.
    """
    if m < 0:
        raise ValueError(f'order must be nonnegative, got {m}')
    n = family.num_vertices
    top = min(m, n)
    needed = sum(math.comb(n, k) for k in range(top + 1))
    budget = Settings.subset_budget() if budget is None else budget
    if needed > budget:
        raise BudgetExceededError(f'derivatives up to order {top}', needed, budget)
    arithmetic_budget = Settings.arithmetic_budget() if arithmetic_budget is None else arithmetic_budget
    work = arithmetic_cost(family, top)
    if work > arithmetic_budget:
        raise BudgetExceededError(f'arithmetic for derivatives up to order {top}', work, arithmetic_budget)
    workers = Settings.workers() if workers is None else workers

    cache = {}
    coeffs = np.zeros(m + 1, dtype=complex)
    for k in range(top + 1):
        subsets = list(itertools.combinations(range(n), k))
        if workers > 1 and len(subsets) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                values = list(pool.map(lambda s: _subset_value(family, s, cache), subsets))
        else:
            values = [_subset_value(family, s, cache) for s in subsets]
        if compensated:
            coeffs[k] = complex(math.fsum(v.real for v in values), math.fsum(v.imag for v in values))
        else:
            total = 0j
            for value in values:
                total += value
            coeffs[k] = total
    logger.debug(f'Computed {top + 1} Taylor coefficients from {needed} subsets ({len(cache)} components)')
    return coeffs


def g_derivatives(family: InterpolationFamily, m: int, budget=None, compensated=False) -> list:
    """[g(0), g'(0), ..., g^(m)(0)]; orders above n are zero."""
    coeffs = taylor_coefficients(family, m, budget, compensated=compensated)
    return [complex(c) * math.factorial(k) for k, c in enumerate(coeffs)]


# Series arithmetic

def _log0(value) -> complex:
    value = complex(value)
    if value.imag == 0 and value.real > 0:
        return complex(math.log(value.real))
    return cmath.log(value)


def log_series(coeffs) -> list:
    """Taylor coefficients of ln G from those of G (G(0) != 0).

    From k g_k = sum_{j=1..k} j f_j g_{k-j}. The constant term is real when
    G(0) > 0, otherwise the principal branch.
    """
    coeffs = list(coeffs)
    g0 = coeffs[0]
    if g0 == 0:
        raise ValueError('G(0) = 0: ln G has no expansion at 0')
    f = [_log0(g0)] + [0] * (len(coeffs) - 1)
    for k in range(1, len(coeffs)):
        acc = k * coeffs[k]
        for j in range(1, k):
            acc -= j * f[j] * coeffs[k - j]
        f[k] = acc / (k * g0)
    return f


def log_derivatives(derivs) -> list:
    """Derivatives of F = ln G at 0 from derivatives of G.

    G^(k) = sum_{j=1..k} C(k-1, j-1) F^(j) G^(k-j), solved for F^(k).
    """
    derivs = list(derivs)
    g0 = derivs[0]
    if g0 == 0:
        raise ValueError('G(0) = 0: ln G has no expansion at 0')
    out = [_log0(g0)] + [0] * (len(derivs) - 1)
    for k in range(1, len(derivs)):
        acc = derivs[k]
        for j in range(1, k):
            acc -= math.comb(k - 1, j - 1) * out[j] * derivs[k - j]
        out[k] = acc / g0
    return out


def ordinary_bell_table(y, kmax: int, rmax: int) -> list:
    """table[k][r] = B^_{k,r}(y_1, ...) = [z^k] (sum_i y_i z^i)^r.

    B^_{k,r} = sum_i y_i B^_{k-i, r-1}, B^_{0,0} = 1.
    """
    zero = y[1] * 0 if len(y) > 1 else 0
    table = [[zero] * (rmax + 1) for _ in range(kmax + 1)]
    table[0][0] = zero + 1
    for r in range(1, rmax + 1):
        for k in range(r, kmax + 1):
            acc = zero
            for i in range(1, k - r + 2):
                if i < len(y):
                    acc += y[i] * table[k - i][r - 1]
            table[k][r] = acc
    return table


def _is_exact(value) -> bool:
    return isinstance(value, (Fraction, int)) and not isinstance(value, bool)


def _factorials(exact: bool):
    return (lambda k: Fraction(math.factorial(k))) if exact else math.factorial


def bell_polynomial(k: int, r: int, x):
    """Exponential partial Bell polynomial B_{k,r}(x_1, ..., x_{k-r+1}); x[0] is x_1.

    Exact when every x is an int or Fraction.
    """
    fact = _factorials(all(_is_exact(v) for v in x))
    y = [0] + [x[i - 1] / fact(i) for i in range(1, len(x) + 1)]
    return ordinary_bell_table(y, k, r)[k][r] * fact(k) / fact(r)


def compose_series(outer, inner, m: int) -> list:
    """Coefficients of (G o phi) up to z^m; inner[0] must be 0."""
    outer = list(outer)
    inner = list(inner)
    if inner and inner[0] != 0:
        raise ValueError('inner series must vanish at 0')
    y = (inner + [0] * (m + 1))[:m + 1]
    rmax = min(m, len(outer) - 1)
    table = ordinary_bell_table(y, m, rmax)
    out = [outer[0]] + [0] * m
    for k in range(1, m + 1):
        acc = outer[0] * 0
        for r in range(1, min(k, rmax) + 1):
            acc += outer[r] * table[k][r]
        out[k] = acc
    return out


def compose_derivatives(outer_derivs, inner_derivs, m: int) -> list:
    """Derivatives of G(phi(z)) at 0 by Faa di Bruno with partial Bell polynomials."""
    outer_derivs = list(outer_derivs)
    inner_derivs = list(inner_derivs)
    if inner_derivs and inner_derivs[0] != 0:
        raise ValueError('phi(0) must be 0')
    fact = _factorials(all(_is_exact(x) for x in outer_derivs + inner_derivs))
    y = [0] * (m + 1)
    for i in range(1, min(m, len(inner_derivs) - 1) + 1):
        y[i] = inner_derivs[i] / fact(i)
    rmax = min(m, len(outer_derivs) - 1)
    table = ordinary_bell_table(y, m, rmax)
    out = [outer_derivs[0]] + [0] * m
    for k in range(1, m + 1):
        acc = 0
        for r in range(1, min(k, rmax) + 1):
            # B_{k,r} = k!/r! * B^_{k,r}
            acc += outer_derivs[r] * table[k][r] * fact(k) / fact(r)
        out[k] = acc
    return out


# Disk-to-strip embedding

@dataclass(frozen=True)
class PhiEmbedding:
    """phi(z) = (1/sigma) sum_{k=1..K} (alpha z)^k / k maps |z| <= beta into the strip of width 2 rho."""

    rho: float

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f'rho must lie in (0, 1), got {self.rho}')

    @cached_property
    def alpha(self) -> float:
        return -math.expm1(-1.0 / self.rho)

    @cached_property
    def beta(self) -> float:
        return -math.expm1(-1.0 - 1.0 / self.rho) / self.alpha

    @cached_property
    def K(self) -> int:
        t = 1.0 + 1.0 / self.rho
        if t > 700:
            raise ValueError(f'rho = {self.rho} makes the degree of phi unrepresentable')
        x = t * math.exp(t)
        if abs(x - round(x)) <= 1e-12 * x:
            # too close to an integer for the floor to be trusted in double precision
            with mpmath.workdps(50):
                rho = mpmath.mpf(self.rho)
                tt = 1 + 1 / rho
                return int(mpmath.floor(tt * mpmath.exp(tt)))
        return int(math.floor(x))

    @cached_property
    def sigma(self) -> float:
        K = self._checked_degree()
        k = np.arange(1, K + 1, dtype=float)
        return float(np.sum(np.exp(k * math.log(self.alpha)) / k))

    def _checked_degree(self) -> int:
        if self.K > _MAX_PHI_DEGREE:
            raise ValueError(f'phi has degree {self.K} for rho = {self.rho}; choose a larger rho')
        return self.K

    def coefficients(self, order=None) -> np.ndarray:
        """[phi_0, ..., phi_top] with top = min(order, K)."""
        K = self._checked_degree()
        top = K if order is None else min(order, K)
        k = np.arange(1, top + 1, dtype=float)
        return np.concatenate([[0.0], np.exp(k * math.log(self.alpha)) / (k * self.sigma)])

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coefficients())


@dataclass(frozen=True)
class BarvinokParams:
    rho: float
    z_end: complex
    m: int
    eps: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f'Taylor order must be at least 1, got {self.m}')
        if not 0 < self.eps <= 1:
            raise ValueError(f'precision must lie in (0, 1], got {self.eps}')
        if not 0 < self.rho < 1:
            raise ValueError(f'rho must lie in (0, 1), got {self.rho}')
        if self.z_end == 0:
            raise ValueError('z_end must be nonzero')

    @property
    def strip_width(self) -> float:
        return 2 * self.rho


@dataclass(frozen=True)
class RegimeParams:
    """Parameters of the random-network regime: lam small, d >= n / c."""

    lam: float
    c: float
    bond_dim: int

    def __post_init__(self):
        limit = min(1 / 80, math.exp(-3 * self.c) / 80)
        if not 0 < self.lam <= limit:
            raise ValueError(f'lambda must lie in (0, {limit:.3g}] for c = {self.c}, got {self.lam}')
        if self.bond_dim < 1:
            raise ValueError('bond dimension must be positive')

    @property
    def z_end(self) -> float:
        return self.bond_dim * (1 - 2 * self.lam)

    @property
    def rho(self) -> float:
        return math.pi * self.lam ** 4 / (4 * (1 - 2 * self.lam))

    @property
    def mu_threshold(self) -> float:
        return 1.0 / (self.bond_dim * (1 - 2 * self.lam))

    def admits(self, n: int) -> bool:
        return self.bond_dim >= n / self.c


def taylor_tail_bound(n: int, m: int, beta: float, K: int = 1) -> float:
    """nK / ((m+1) beta^m (beta-1)); K = 1 is the root-free disk case."""
    return n * K / ((m + 1) * beta ** m * (beta - 1))


def choose_m(n: int, eps: float, rho: float) -> int:
    if not 0 < eps <= 1:
        raise ValueError(f'precision must lie in (0, 1], got {eps}')
    phi = PhiEmbedding(rho)
    K, beta = phi.K, phi.beta
    m = (math.log(math.e * n * K / eps) - math.log(beta - 1)) / math.log(beta)
    return max(1, math.ceil(m))


@dataclass(frozen=True)
class BarvinokResult:
    chi_hat: complex
    m: int
    K: int
    beta: float
    taylor_tail_bound: float
    per_order_estimates: list = field(default_factory=list)
    log_coefficients: list = field(default_factory=list)
    embedding: str = 'strip'


def barvinok_estimate(family: InterpolationFamily, params: BarvinokParams, embedding: str = 'strip',
                      budget=None, disk_radius=None, compensated=False) -> BarvinokResult:
    """chi_hat = prod(mu_v) * exp(P_m(1)); per-order estimates for orders 1..m.

    With embedding='disk' the series of ln G is taken directly and the tail
    bound assumes G has no roots in the disk of radius `disk_radius`
    (default phi's beta(rho)).
    """
    if embedding not in ('strip', 'disk'):
        raise ValueError(f'unknown embedding {embedding!r}')
    if disk_radius is not None and (embedding != 'disk' or not disk_radius > 1):
        raise ValueError(f'disk_radius needs embedding=disk and a value > 1, got {disk_radius!r}')
    n = family.num_vertices
    m = params.m
    g = taylor_coefficients(family, min(m, n), budget, compensated=compensated)
    # G(z) = g(z * z_end); normalise by G(0) = d^|E| > 0
    G = [complex(g[k]) * family.z_end ** k for k in range(len(g))]
    log_g0 = math.log(G[0].real)
    G = [c / G[0] for c in G]

    phi = PhiEmbedding(params.rho)
    if embedding == 'strip':
        inner = [complex(c) for c in phi.coefficients(m)]
        H = compose_series(G, inner, m)
        K = phi.K
        radius = phi.beta
    else:
        H = (G + [0j] * (m + 1))[:m + 1]
        K = 1
        radius = phi.beta if disk_radius is None else float(disk_radius)
    f = log_series(H)

    partial = log_g0 + f[0]
    estimates = []
    for k in range(1, m + 1):
        partial += f[k]
        estimates.append(family.prefactor * cmath.exp(partial))
    bound = taylor_tail_bound(n, m, radius, K)
    logger.info(f'Barvinok order {m} ({embedding}): chi_hat={estimates[-1]:.6g}, tail bound {bound:.3g}')
    return BarvinokResult(estimates[-1], m, K, radius, bound, estimates, [complex(x) for x in f], embedding)
