"""
Additive-error Monte Carlo contraction of nonnegative networks.

Every swallowing matrix M is scaled by its column 1-norm and completed to a
column-stochastic matrix with one extra ancilla bit: rows with ancilla 0 are
M / ||M||_1, and each column's leftover mass goes to the first ancilla-1 row.
A trial walks the swallowing order, sampling the next coloring from the
column picked by the current K coloring; it succeeds iff every ancilla bit
is 0, which happens with probability chi(T) / Delta_1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from contract_exact import SwallowingPlan, apply_step, plan_swallowing, vertex_matrix
from errors import ZeroNetworkError
from rng import uniform_rows
from tn_core import TensorNetwork

logger = logging.getLogger(__name__)

_BATCH = 4096


@dataclass(frozen=True, eq=False)
class StochasticEmbedding:
    source_shape: tuple
    norm1: float
    matrix: np.ndarray

    @property
    def top(self) -> np.ndarray:
        """The ancilla-0 block, M / ||M||_1."""
        return self.matrix[:self.source_shape[0]]


def stochastic_embed(M) -> StochasticEmbedding:
    M = np.asarray(M)
    if np.iscomplexobj(M):
        if np.any(M.imag != 0):
            raise ValueError('matrix has complex entries')
        M = M.real
    M = np.atleast_2d(M.astype(float))
    if M.ndim != 2:
        raise ValueError(f'expected a matrix, got shape {M.shape}')
    if np.any(M < 0):
        raise ValueError('matrix has a negative entry')
    if not np.any(M):
        raise ValueError('cannot embed the zero matrix')
    rows, cols = M.shape
    norm = float(M.sum(axis=0).max())
    top = M / norm
    # all leftover mass of a column lands on the first ancilla-1 row
    residual = np.clip(1.0 - top.sum(axis=0), 0.0, None)
    N = np.zeros((2 * rows, cols))
    N[:rows] = top
    N[rows] = residual
    return StochasticEmbedding((rows, cols), norm, N)


@dataclass(frozen=True)
class WalkState:
    step: int
    coloring: dict
    ancilla: tuple


@dataclass(frozen=True, eq=False)
class WalkProgram:
    plan: SwallowingPlan
    bond_dim: int
    num_edges: int
    embeddings: tuple
    cdfs: tuple

    @property
    def delta1(self) -> float:
        return math.prod(emb.norm1 for emb in self.embeddings)


def compile_walk(network: TensorNetwork, plan: SwallowingPlan = None) -> WalkProgram:
    """Embeddings and per-column prefix sums for every step of `plan`."""
    if not network.is_nonnegative():
        raise ValueError('random-walk contraction needs a nonnegative network')
    plan = plan_swallowing(network) if plan is None else plan
    embeddings, cdfs = [], []
    for step in plan.steps:
        mat = vertex_matrix(network, step).real
        if not np.any(mat):
            raise ZeroNetworkError(step.index)
        emb = stochastic_embed(mat)
        cdf = np.cumsum(emb.matrix, axis=0)
        cdf[-1] = 1.0
        embeddings.append(emb)
        cdfs.append(cdf)
    return WalkProgram(plan, network.bond_dim, network.graph.num_edges, tuple(embeddings), tuple(cdfs))


def _column(coloring, K, d):
    col = 0
    for e in K:
        col = col * d + coloring[e]
    return col


def trace_trial(program: WalkProgram, uniforms) -> list:
    """Full walk for one row of uniforms, ancilla bits included; states s_2 .. s_{n+1}."""
    d = program.bond_dim
    coloring = {}
    ancilla = ()
    states = []
    for step, emb, cdf, u in zip(program.plan.steps, program.embeddings, program.cdfs, uniforms):
        col = _column(coloring, step.K, d)
        row = int(np.searchsorted(cdf[:, col], u, side='right'))
        top = emb.source_shape[0]
        bit, row = (0, row) if row < top else (1, row - top)
        nxt = {e: coloring[e] for e in step.J}
        for e in reversed(step.L):
            nxt[e] = row % d
            row //= d
        coloring = nxt
        ancilla += (bit,)
        states.append(WalkState(step.index + 1, dict(coloring), ancilla))
    return states


def run_trial(network: TensorNetwork, plan: SwallowingPlan, rng: np.random.Generator) -> bool:
    program = compile_walk(network, plan)
    final = trace_trial(program, rng.random(len(program.plan.steps)))[-1]
    return not any(final.ancilla)


def run_trials(program: WalkProgram, uniforms: np.ndarray) -> np.ndarray:
    """Vectorised trials, one per row of `uniforms`; stops tracking a trial once an ancilla bit is 1."""
    d = program.bond_dim
    count = uniforms.shape[0]
    colors = np.zeros((count, max(program.num_edges, 1)), dtype=np.int64)
    alive = np.ones(count, dtype=bool)
    for i, (step, emb, cdf) in enumerate(zip(program.plan.steps, program.embeddings, program.cdfs)):
        col = np.zeros(count, dtype=np.int64)
        for e in step.K:
            col = col * d + colors[:, e]
        rows = (cdf[:, col] <= uniforms[:, i]).sum(axis=0)
        top = emb.source_shape[0]
        alive &= rows < top
        rows = np.minimum(rows, top - 1)
        for e in reversed(step.L):
            colors[:, e] = rows % d
            rows = rows // d
    return alive


def exact_success_probability(network: TensorNetwork, plan: SwallowingPlan = None) -> float:
    """Probability that the walk ends with all ancilla bits 0, by dense propagation."""
    program = compile_walk(network, plan)
    d = program.bond_dim
    state = np.ones(())
    free = ()
    for step, emb in zip(program.plan.steps, program.embeddings):
        state, free = apply_step(state, free, step, emb.top, d)
    return float(state)


def trials_for(eps: float) -> int:
    if not 0 < eps <= 1:
        raise ValueError(f'precision must lie in (0, 1], got {eps}')
    return math.ceil(round(10.0 / eps ** 2, 9))


@dataclass(frozen=True)
class MCEstimate:
    chi_hat: float
    delta1: float
    trials: int
    successes: int
    seed: int
    certain: bool = False
    meta: dict = field(default_factory=dict)


def mc_estimate(network: TensorNetwork, plan: SwallowingPlan, eps: float, seed: int) -> MCEstimate:
    """chi_hat = (#success / K) * Delta_1 with K = ceil(10 / eps^2)."""
    trials = trials_for(eps)
    plan = plan_swallowing(network) if plan is None else plan
    try:
        program = compile_walk(network, plan)
    except ZeroNetworkError as exc:
        logger.info(f'{exc}; the contraction value is exactly 0')
        return MCEstimate(0.0, 0.0, trials, 0, seed, certain=True)
    width = len(plan.steps)
    successes = 0
    for first in range(0, trials, _BATCH):
        count = min(_BATCH, trials - first)
        successes += int(run_trials(program, uniform_rows(seed, first, count, width)).sum())
    delta1 = program.delta1
    chi_hat = successes / trials * delta1
    logger.info(f'Monte Carlo: {successes}/{trials} successes, delta1={delta1:.6g}, chi_hat={chi_hat:.6g}')
    return MCEstimate(chi_hat, delta1, trials, successes, seed)
