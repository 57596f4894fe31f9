import numpy as np
import pytest

from contract_exact import (
    apply_step,
    delta_norms,
    plan_swallowing,
    swallow_contract,
    swallowing_operators,
    vertex_matrix,
)
from errors import BudgetExceededError
from tn_core import (
    Graph,
    Tensor,
    TensorNetwork,
    all_ones_network,
    build_torus,
    column_major_order,
    contract_reference,
    row_major_order,
)


def close(a, b, rel=1e-10):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


def random_regular_graph(n, degree, gen):
    """Configuration-model pairing of ports; loops and parallel edges allowed."""
    stubs = [(v, p) for v in range(n) for p in range(degree)]
    order = gen.permutation(len(stubs))
    paired = [stubs[i] for i in order]
    return Graph(n, tuple((paired[i], paired[i + 1]) for i in range(0, len(paired), 2)))


def column_stochastic_network(graph, d, order, gen):
    """Nonnegative tensors whose step matrices have unit column sums for `order`."""
    plan = plan_swallowing(graph, order)
    tensors = [None] * graph.num_vertices
    for step in plan.steps:
        v = step.vertex
        data = gen.uniform(0.1, 1.0, (d,) * graph.degrees[v])
        later = tuple(p for p, e in enumerate(graph.incidence[v]) if e in step.L)
        tensors[v] = Tensor(d, data / data.sum(axis=later, keepdims=True))
    return TensorNetwork(graph, tuple(tensors), d)


class TestPlan:
    def test_cut_bookkeeping_on_small_torus(self):
        plan = plan_swallowing(build_torus(2, 2))
        assert len(plan.steps) == 4
        assert plan.steps[0].K == ()
        assert plan.steps[-1].L == () and plan.steps[-1].J == ()
        assert plan.cut_sizes[0] == 0 and plan.cut_sizes[-1] == 0
        for step, following in zip(plan.steps, plan.steps[1:]):
            assert step.next_F == following.F

    def test_every_edge_enters_and_leaves_once(self):
        graph = build_torus(3, 4)
        plan = plan_swallowing(graph, column_major_order(3, 4))
        opened = [e for s in plan.steps for e in s.L]
        closed = [e for s in plan.steps for e in s.K]
        assert sorted(opened) == sorted(closed) == list(range(graph.num_edges))

    def test_self_loops_are_traced_locally(self, triangle_graph):
        plan = plan_swallowing(triangle_graph)
        assert plan.steps[0].loops == (3,)
        assert 3 not in plan.steps[0].L

    def test_peak_cut_depends_on_order(self):
        graph = build_torus(2, 4)
        assert plan_swallowing(graph, row_major_order(2, 4)).peak_cut == 8
        assert plan_swallowing(graph, column_major_order(2, 4)).peak_cut == 6

    def test_k_sizes_on_small_torus(self):
        plan = plan_swallowing(build_torus(2, 2))
        assert plan.k_sizes == [0, 2, 2, 4]

    def test_path_graph(self):
        plan = plan_swallowing(Graph(3, (((0, 0), (1, 0)), ((1, 1), (2, 0)))))
        assert plan.k_sizes == [0, 1, 1]
        assert plan.cut_sizes == [0, 1, 1, 0]
        assert plan.peak_cut == 1

    def test_order_must_be_permutation(self):
        with pytest.raises(ValueError):
            plan_swallowing(build_torus(2, 2), [0, 1, 1, 3])


class TestSwallowContract:
    @pytest.mark.parametrize('dims,d', [((2, 2), 2), ((2, 2), 3), ((2, 4), 2), ((3, 3), 2)])
    def test_matches_reference_on_tori(self, make_network, dims, d):
        tn = make_network(build_torus(*dims), d, seed=sum(dims) + d)
        assert close(swallow_contract(tn), contract_reference(tn))

    def test_matches_reference_with_loops_and_multi_edges(self, make_network, triangle_graph):
        tn = make_network(triangle_graph, 3, seed=5)
        assert close(swallow_contract(tn), contract_reference(tn))

    def test_order_invariance(self, make_network):
        graph = build_torus(2, 4)
        tn = make_network(graph, 2, seed=9)
        expected = contract_reference(tn)
        gen = np.random.default_rng(0)
        for _ in range(3):
            order = gen.permutation(graph.num_vertices)
            assert close(swallow_contract(tn, plan_swallowing(tn, order)), expected)

    def test_all_ones_value(self):
        tn = all_ones_network(build_torus(2, 4), 3)
        assert swallow_contract(tn) == 3 ** 16

    def test_scalar_network(self):
        tn = TensorNetwork(Graph(1, ()), (Tensor.scalar(-0.25, bond_dim=2),), 2)
        assert swallow_contract(tn) == -0.25

    @pytest.mark.slow
    def test_random_networks_agree_across_orders(self, make_network):
        gen = np.random.default_rng(2024)
        shapes = [(2, 2, 2), (2, 2, 3), (2, 4, 2), (2, 4, 3), (2, 2, 2), (2, 2, 3), (2, 4, 2), (3, 4, 2)]
        cases = [(build_torus(L1, L2), d) for L1, L2, d in (shapes[k % len(shapes)] for k in range(40))]
        cases += [(random_regular_graph(int(gen.choice([4, 6, 8])), 3, gen), int(gen.choice([2, 3])))
                  for _ in range(10)]
        for k, (graph, d) in enumerate(cases):
            tn = make_network(graph, d, seed=1000 + k)
            expected = contract_reference(tn)
            assert close(swallow_contract(tn), expected)
            for _ in range(3):
                order = gen.permutation(graph.num_vertices)
                assert close(swallow_contract(tn, plan_swallowing(tn, order)), expected)

    def test_state_budget(self):
        with pytest.raises(BudgetExceededError):
            swallow_contract(all_ones_network(build_torus(2, 4), 2), budget=16)

    def test_state_budget_from_environment(self, monkeypatch):
        monkeypatch.setenv('TN_STATE_BUDGET', '16')
        with pytest.raises(BudgetExceededError):
            swallow_contract(all_ones_network(build_torus(2, 4), 2))


class TestOperators:
    def test_matrix_shape(self, make_network):
        tn = make_network(build_torus(2, 2), 2, seed=1)
        plan = plan_swallowing(tn)
        for step in plan.steps:
            assert vertex_matrix(tn, step).shape == (2 ** len(step.L), 2 ** len(step.K))

    def test_apply_step_matches_dense_kronecker(self, make_network):
        tn = make_network(build_torus(2, 2), 2, seed=3)
        plan = plan_swallowing(tn)
        state, free = np.ones(()), ()
        state, free = apply_step(state, free, plan.steps[0], vertex_matrix(tn, plan.steps[0]), 2)
        step = plan.steps[1]
        M = vertex_matrix(tn, step)
        updated, target = apply_step(state, free, step, M, 2)
        # dense: (I_J (x) M) acting on the state arranged as J then K
        axis = {e: i for i, e in enumerate(free)}
        arranged = state.transpose([axis[e] for e in step.J + step.K]).reshape(-1)
        dense = np.kron(np.eye(2 ** len(step.J)), M) @ arranged
        labels = step.J + step.L
        expected = dense.reshape((2,) * len(labels)).transpose([labels.index(e) for e in target])
        assert np.allclose(updated, expected)

    def test_norm_products_bound_the_value(self, make_network):
        tn = make_network(build_torus(2, 4), 2, seed=6)
        plan = plan_swallowing(tn)
        delta1, delta2 = delta_norms(tn, plan)
        chi = abs(swallow_contract(tn, plan))
        assert chi <= delta1 * (1 + 1e-12)
        assert chi <= delta2 * (1 + 1e-12)

    def test_scalar_network_delta1_is_its_modulus(self):
        tn = TensorNetwork(Graph(1, ()), (Tensor.scalar(3 - 4j, bond_dim=2),), 2)
        delta1, delta2 = delta_norms(tn, plan_swallowing(tn))
        assert delta1 == 5.0
        assert delta2 == pytest.approx(5.0, rel=1e-15)

    def test_column_stochastic_delta1_is_one(self):
        gen = np.random.default_rng(4)
        graph = build_torus(2, 4)
        order = column_major_order(2, 4)
        tn = column_stochastic_network(graph, 2, order, gen)
        plan = plan_swallowing(tn, order)
        assert delta_norms(tn, plan)[0] == pytest.approx(1.0, rel=1e-12)
        assert close(swallow_contract(tn, plan), 1.0, rel=1e-12)

    def test_norm2_is_largest_singular_value(self, make_network):
        tn = make_network(build_torus(2, 4), 2, seed=8)
        for op in swallowing_operators(tn, plan_swallowing(tn)):
            top = np.linalg.svd(op.matrix, compute_uv=False)[0]
            assert op.norm2 == pytest.approx(top, rel=1e-12)

    def test_ones_network_delta1_is_exact(self):
        tn = all_ones_network(build_torus(2, 2), 2)
        plan = plan_swallowing(tn)
        assert delta_norms(tn, plan)[0] == pytest.approx(swallow_contract(tn).real)
        assert all(op.norm1 == 2 ** len(s.L) for op, s in zip(swallowing_operators(tn, plan), plan.steps))
