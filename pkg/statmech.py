"""
2D Ising oracles and the second-moment correspondence.

For the shifted Gaussian family h_A(z) = chi(T_A(zd)) on an L1 x L2 torus,
E_A |h_A(z)|^2 is a sum over spin configurations s of R(s) |z|^(2|s|), where
|s| counts the -1 spins and R(s) is a product over edges of d^2 (aligned)
or d^(3/2) (anti-aligned). That is d^(7n/2) |z|^n times the Ising partition
function at beta J = ln(d)/4 and beta h = ln|z|.

All enumerations work in log space and reduce block partials in block order.
"""

from __future__ import annotations

import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from contract_exact import plan_swallowing, swallow_contract
from errors import BudgetExceededError, ConsistencyError
from rng import stream
from settings import Settings
from tn_core import all_ones_network, build_torus, complex_gaussian, sample_perturbations

logger = logging.getLogger(__name__)

_BLOCK = 1 << 16
_DUAL_TOL = 1e-9
_LOG_FLOAT_MAX = math.log(sys.float_info.max)


@dataclass(frozen=True)
class IsingSpec:
    L1: int
    L2: int
    beta_j: float
    beta_h: float = 0.0

    def __post_init__(self):
        if self.L1 < 2 or self.L2 < 2:
            raise ValueError(f'lattice {self.L1} x {self.L2} is degenerate')
        if self.L2 % 2:
            raise ValueError(f'L2 must be even, got {self.L2}')
        if not (math.isfinite(self.beta_j) and math.isfinite(self.beta_h)):
            raise ValueError('couplings must be finite')

    @property
    def n(self) -> int:
        return self.L1 * self.L2


def exp_or_inf(log_value: float) -> float:
    """exp(log_value), or inf once it leaves the double range."""
    return math.exp(log_value) if log_value < _LOG_FLOAT_MAX else math.inf


def _endpoints(L1, L2):
    graph = build_torus(L1, L2)
    u = np.array([e.u[0] for e in graph.edges])
    w = np.array([e.w[0] for e in graph.edges])
    return graph.num_vertices, u, w


def _spins(start, stop, n):
    """Configurations start..stop-1; bit v of the index set means s_v = -1."""
    idx = np.arange(start, stop, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def _log_enumerate(n, log_weight, budget=None, workers=None) -> float:
    """ln of sum over all 2^n configurations of exp(log_weight(spins))."""
    budget = Settings.spin_budget() if budget is None else budget
    if n > budget:
        raise BudgetExceededError('spin enumeration', 2 ** n, 2 ** budget)
    workers = Settings.workers() if workers is None else workers
    total = 1 << n
    starts = range(0, total, _BLOCK)

    def part(start):
        return logsumexp(log_weight(_spins(start, min(start + _BLOCK, total), n)))

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(part, starts))
    else:
        partials = [part(s) for s in starts]
    return float(logsumexp(partials))


def ising_log_bruteforce(spec: IsingSpec, budget=None, workers=None) -> float:
    n, u, w = _endpoints(spec.L1, spec.L2)

    def log_weight(s):
        bonds = (s[:, u] * s[:, w]).sum(axis=1)
        return spec.beta_j * bonds + spec.beta_h * s.sum(axis=1)

    return _log_enumerate(n, log_weight, budget, workers)


def ising_bruteforce(spec: IsingSpec, budget=None, workers=None) -> float:
    """Z = sum_s exp(beta J sum_edges s_u s_w + beta h sum_v s_v); parallel edges count separately."""
    return exp_or_inf(ising_log_bruteforce(spec, budget, workers))


# Kaufman closed form

def _log_2cosh(x):
    x = np.abs(x)
    return x + np.log1p(np.exp(-2 * x))


def _log_abs_2sinh(x):
    x = np.abs(x)
    with np.errstate(divide='ignore'):
        return x + np.log(-np.expm1(-2 * x))


def kaufman_gammas(L2: int, beta_j: float) -> np.ndarray:
    """gamma_1 .. gamma_{2 L2}; the last one carries the sign of beta J - H_c."""
    K = beta_j
    h_star = math.atanh(math.exp(-2 * K))
    j = np.arange(1, 2 * L2 + 1)
    # cosh(gamma) - 1, written to avoid cancellation near 1
    with np.errstate(over='ignore', invalid='ignore'):
        delta = 2 * np.sinh(h_star - K) ** 2 + 2 * np.sinh(2 * h_star) * np.sinh(2 * K) * np.sin(j * np.pi / (2 * L2)) ** 2
        gamma = np.log1p(delta + np.sqrt(delta * (delta + 2)))
    gamma[-1] = 2 * (K - h_star)
    return gamma


def kaufman_log_partition(L1: int, L2: int, beta_j: float) -> float:
    if beta_j <= 0:
        raise ValueError(f'beta J must be positive, got {beta_j}')
    if L1 < 2 or L2 < 2:
        raise ValueError(f'lattice {L1} x {L2} is degenerate')
    if L2 % 2:
        raise ValueError(f'L2 must be even, got {L2}')
    gammas = kaufman_gammas(L2, beta_j)
    if not np.all(np.isfinite(gammas)):
        raise ValueError(f'beta J = {beta_j} is too large for the closed form in double precision')
    x = 0.5 * L1 * gammas
    even, odd = x[1::2], x[0::2]

    logs, signs = [], []
    for half in (even, odd):
        logs.append(float(np.sum(_log_2cosh(half))))
        signs.append(1.0)
        if np.all(half != 0):
            logs.append(float(np.sum(_log_abs_2sinh(half))))
            signs.append(float(np.prod(np.sign(half))))
    total, sign = logsumexp(logs, b=signs, return_sign=True)
    if sign <= 0:
        raise ConsistencyError(f'Kaufman products sum to a nonpositive value for {L1}x{L2}, beta J={beta_j}')
    return math.log(0.5) + 0.5 * L1 * L2 * float(_log_abs_2sinh(2 * beta_j)) + float(total)


def kaufman_partition(L1: int, L2: int, beta_j: float) -> float:
    """Zero-field partition function of the periodic L1 x L2 lattice."""
    return exp_or_inf(kaufman_log_partition(L1, L2, beta_j))


def partition_bounds(n: int, d: float) -> tuple:
    """Bounds on Z at beta J = ln(d)/4, h = 0: 2 d^(n/2) <= Z <= 2 d^(n/2) (1 + 3/d)^n."""
    lower = 2 * d ** (n / 2)
    return lower, lower * (1 + 3 / d) ** n


def r_sum_bound(n: int, d: float) -> float:
    """Upper bound on sum_s R(s)."""
    return 2 * d ** (4 * n) * (1 + 3 / d) ** n


# Second moment

@dataclass(frozen=True)
class MomentParams:
    L1: int
    L2: int
    d: int
    z: complex

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f'bond dimension must be at least 2, got {self.d}')
        IsingSpec(self.L1, self.L2, 0.0)

    @property
    def n(self) -> int:
        return self.L1 * self.L2

    @property
    def beta_j(self) -> float:
        return math.log(self.d) / 4

    @property
    def beta_h(self) -> float:
        return math.log(abs(self.z)) if self.z != 0 else -math.inf

    @property
    def log_prefactor(self) -> float:
        """ln(d^(7n/2) |z|^n)."""
        return 3.5 * self.n * math.log(self.d) + self.n * self.beta_h


@dataclass(frozen=True)
class SecondMoment:
    value: float
    ising_value: float
    log_value: float
    ratio: float


def second_moment_exact(params: MomentParams, budget=None, workers=None) -> SecondMoment:
    """E_A |h_A(z)|^2 as the R(s) sum, cross-checked against the Ising form."""
    n, d = params.n, params.d
    scale = 4 * n * math.log(d)
    absz = abs(params.z)
    if absz == 0:
        value = float(d) ** (4 * n) if scale < _LOG_FLOAT_MAX else math.inf
        return SecondMoment(value, value, scale, 1.0)

    _, u, w = _endpoints(params.L1, params.L2)
    num_edges = len(u)
    ln_d, ln_z = math.log(d), math.log(absz)

    def log_r(s):
        aligned = (s[:, u] == s[:, w]).sum(axis=1)
        flipped = (s < 0).sum(axis=1)
        return ln_d * (2.0 * aligned + 1.5 * (num_edges - aligned)) + 2 * ln_z * flipped

    log_value = _log_enumerate(n, log_r, budget, workers)
    log_ising = params.log_prefactor + ising_log_bruteforce(
        IsingSpec(params.L1, params.L2, params.beta_j, params.beta_h), budget, workers)
    if abs(log_value - log_ising) > _DUAL_TOL:
        raise ConsistencyError(f'R(s) sum and Ising form differ: ln values {log_value!r} vs {log_ising!r}')
    logger.debug(f'Second moment at |z|={absz}: ln E|h|^2 = {log_value:.12g}')
    return SecondMoment(exp_or_inf(log_value), exp_or_inf(log_ising), log_value, exp_or_inf(log_value - scale))


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float
    samples: int
    seed: int


def second_moment_mc(L1: int, L2: int, d: int, z, num_samples: int, seed: int, budget=None) -> MomentEstimate:
    """Sample mean of |chi(T_A(zd))|^2 over the shifted Gaussian ensemble."""
    if num_samples < 1:
        raise ValueError(f'need at least one sample, got {num_samples}')
    graph = build_torus(L1, L2)
    base = all_ones_network(graph, d)
    plan = plan_swallowing(graph)
    values = np.empty(num_samples)
    for k in range(num_samples):
        perturbations = sample_perturbations(L1, L2, d, seed, sample=k)
        net = base.with_tensors(t + a.scaled(z * d) for t, a in zip(base.tensors, perturbations))
        values[k] = abs(swallow_contract(net, plan, budget)) ** 2
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(num_samples)) if num_samples > 1 else 0.0
    logger.info(f'Sampled second moment at z={z}: {mean:.6g} +- {stderr:.3g} over {num_samples} samples')
    return MomentEstimate(mean, stderr, num_samples, seed)


@dataclass(frozen=True)
class VarianceBounds:
    upper_small_z: float
    upper_unit: float
    lower: float


def variance_bounds(n: int, d: int, z, c: float, rho: float) -> VarianceBounds:
    """Closed-form bounds on E_A |h_A(z)|^2 in the regime d >= n / c.

    upper_small_z applies for |z| <= rho and upper_unit for |z| <= 1. The
    lower bound d^(4n) (1 + |z|^2/d^2)^n holds for every z.
    """
    if d < n / c:
        logger.warning(f'd={d} is below n/c={n / c:.3g}; the upper bounds are outside their regime')
    base = float(d) ** (4 * n)
    return VarianceBounds(
        upper_small_z=base * (1 + 2 * rho ** 2 * math.exp(3 * c)),
        upper_unit=2 * math.exp(3 * c) * base,
        lower=base * (1 + abs(z) ** 2 / d ** 2) ** n,
    )


@dataclass(frozen=True)
class PairMoment:
    mean: np.ndarray
    stderr: np.ndarray
    samples: int


def empirical_pair_moment(d: int, rank: int, samples: int, seed: int) -> PairMoment:
    """Empirical E[A (x) conj(A)] for one unit Gaussian tensor; the identity is the delta tensor."""
    X = complex_gaussian(stream(seed, 0), 0.0, (samples, d ** rank))
    mean = X.T @ X.conj() / samples
    mag = np.abs(X) ** 2
    second = mag.T @ mag / samples
    stderr = np.sqrt(np.maximum(second - np.abs(mean) ** 2, 0.0) / samples)
    return PairMoment(mean, stderr, samples)
