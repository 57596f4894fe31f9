"""
Exact contraction by swallowing vertices one at a time.

Step i absorbs vertex v_i into a running amplitude vector over the colorings
of the cut F_i (edges between already-swallowed vertices and the rest). The
vertex tensor acts as a matrix from the colorings of K_i (edges back into the
swallowed region) to those of L_i (edges forward); bystander edges J_i pass
through untouched, so I_J (x) M is never built.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from errors import BudgetExceededError
from settings import Settings
from tn_core import Graph, TensorNetwork, contract_pairs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SwallowStep:
    index: int
    vertex: int
    K: tuple
    L: tuple
    J: tuple
    loops: tuple = ()

    @property
    def F(self) -> tuple:
        return tuple(sorted(self.K + self.J))

    @property
    def next_F(self) -> tuple:
        return tuple(sorted(self.J + self.L))


@dataclass(frozen=True)
class SwallowingPlan:
    order: tuple
    steps: tuple

    @property
    def cut_sizes(self) -> list:
        """|F_1|, ..., |F_{n+1}|."""
        return [len(s.F) for s in self.steps] + [len(self.steps[-1].next_F)]

    @property
    def peak_cut(self) -> int:
        return max(self.cut_sizes)

    @property
    def k_sizes(self) -> list:
        return [len(s.K) for s in self.steps]


def plan_swallowing(network, order=None) -> SwallowingPlan:
    """Cut-set bookkeeping for swallowing `network` in `order` (default 0..n-1)."""
    graph = network.graph if isinstance(network, TensorNetwork) else network
    if not isinstance(graph, Graph):
        raise TypeError(f'expected a Graph or TensorNetwork, got {type(network).__name__}')
    n = graph.num_vertices
    order = tuple(range(n)) if order is None else tuple(int(v) for v in order)
    if sorted(order) != list(range(n)):
        raise ValueError(f'order is not a permutation of the {n} vertices')
    position = {v: i for i, v in enumerate(order)}

    steps = []
    free = set()
    for i, v in enumerate(order):
        K, L, loops = set(), set(), set()
        for eid in graph.incidence[v]:
            edge = graph.edges[eid]
            if edge.is_loop:
                loops.add(eid)
                continue
            a, b = edge.vertices
            other = b if a == v else a
            (K if position[other] < i else L).add(eid)
        J = free - K
        steps.append(SwallowStep(i + 1, v, tuple(sorted(K)), tuple(sorted(L)), tuple(sorted(J)), tuple(sorted(loops))))
        free = J | L
    if free:
        raise AssertionError(f'cut is not empty after the last step: {sorted(free)}')
    plan = SwallowingPlan(order, tuple(steps))
    logger.debug(f'Planned {n} steps, K sizes {plan.k_sizes}, peak cut {plan.peak_cut}')
    return plan


@dataclass(frozen=True, eq=False)
class SwallowingOperator:
    """Step matrix of shape d^|L| x d^|K|; rows over L, columns over K, edge ids ascending."""

    step: int
    matrix: np.ndarray

    @cached_property
    def norm1(self) -> float:
        # maximum absolute column sum
        return float(np.abs(self.matrix).sum(axis=0).max())

    @cached_property
    def norm2(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def vertex_matrix(network: TensorNetwork, step: SwallowStep) -> np.ndarray:
    v = step.vertex
    tensor = network.tensors[v]
    ports = network.graph.incidence[v]
    pairs = []
    for eid in step.loops:
        p, q = [port for port, e in enumerate(ports) if e == eid]
        pairs.append((p, q))
    traced = contract_pairs(tensor, pairs)
    surviving = [e for e in ports if e not in step.loops]
    axis_of = {e: axis for axis, e in enumerate(surviving)}
    d = network.bond_dim
    arranged = traced.data.transpose([axis_of[e] for e in step.L] + [axis_of[e] for e in step.K])
    return arranged.reshape(d ** len(step.L), d ** len(step.K))


def swallowing_operators(network: TensorNetwork, plan: SwallowingPlan) -> tuple:
    return tuple(SwallowingOperator(s.index, vertex_matrix(network, s)) for s in plan.steps)


def apply_step(state: np.ndarray, free: tuple, step: SwallowStep, matrix: np.ndarray, d: int):
    """One swallowing update; returns the new state and its sorted free edges."""
    axis = {e: i for i, e in enumerate(free)}
    block = state.transpose([axis[e] for e in step.J] + [axis[e] for e in step.K])
    block = block.reshape(d ** len(step.J), d ** len(step.K))
    updated = (block @ matrix.T).reshape((d,) * (len(step.J) + len(step.L)))
    labels = step.J + step.L
    target = tuple(sorted(labels))
    return updated.transpose([labels.index(e) for e in target]), target


def check_state_budget(network: TensorNetwork, plan: SwallowingPlan, budget=None) -> None:
    budget = Settings.state_budget() if budget is None else budget
    needed = network.bond_dim ** plan.peak_cut
    if needed > budget:
        raise BudgetExceededError(f'swallowing state (peak cut {plan.peak_cut})', needed, budget)


def swallow_contract(network: TensorNetwork, plan: SwallowingPlan = None, budget=None) -> complex:
    plan = plan_swallowing(network) if plan is None else plan
    check_state_budget(network, plan, budget)
    d = network.bond_dim
    state = np.ones((), dtype=complex)
    free = ()
    for step in plan.steps:
        state, free = apply_step(state, free, step, vertex_matrix(network, step), d)
    return complex(state)


def delta_norms(network: TensorNetwork, plan: SwallowingPlan) -> tuple:
    """(Delta_1, Delta_2): products of the per-step operator 1- and 2-norms.

    ||I_J (x) M||_p = ||M||_p for p in {1, 2}, so only the small matrices are used.
    """
    delta1 = 1.0
    delta2 = 1.0
    for op in swallowing_operators(network, plan):
        delta1 *= op.norm1
        delta2 *= op.norm2
    return delta1, delta2
