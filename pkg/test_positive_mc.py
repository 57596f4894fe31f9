import math

import numpy as np
import pytest

from contract_exact import delta_norms, plan_swallowing, swallow_contract
from positive_mc import (
    compile_walk,
    exact_success_probability,
    mc_estimate,
    run_trial,
    run_trials,
    stochastic_embed,
    trace_trial,
    trials_for,
)
from rng import uniform_rows
from tn_core import Graph, Tensor, TensorNetwork, all_ones_network, build_torus


@pytest.fixture
def positive_network(make_network):
    return make_network(build_torus(2, 2), 2, seed=12, nonnegative=True)


class TestEmbedding:
    def test_columns_become_stochastic(self):
        emb = stochastic_embed([[1.0, 2.0], [3.0, 0.0]])
        assert emb.norm1 == 4.0
        assert emb.matrix.shape == (4, 2)
        assert np.allclose(emb.top, [[0.25, 0.5], [0.75, 0.0]])
        assert np.allclose(emb.matrix[2], [0.0, 0.5])
        assert np.allclose(emb.matrix[3], 0.0)
        assert np.allclose(emb.matrix.sum(axis=0), 1.0)

    def test_zero_column_goes_to_ancilla(self):
        emb = stochastic_embed([[0.0, 1.0], [0.0, 1.0]])
        assert emb.matrix[2, 0] == 1.0
        assert np.allclose(emb.matrix.sum(axis=0), 1.0)

    @pytest.mark.parametrize('bad', [
        [[1.0, -0.5]],
        [[1.0 + 1j, 0.0]],
        [[0.0, 0.0]],
    ])
    def test_rejects_bad_input(self, bad):
        with pytest.raises(ValueError):
            stochastic_embed(bad)

    def test_real_valued_complex_dtype_accepted(self):
        emb = stochastic_embed(np.array([[2.0 + 0j]]))
        assert emb.norm1 == 2.0


class TestWalk:
    def test_success_probability_is_ratio(self, positive_network):
        plan = plan_swallowing(positive_network)
        chi = swallow_contract(positive_network, plan).real
        delta1 = delta_norms(positive_network, plan)[0]
        assert exact_success_probability(positive_network, plan) == pytest.approx(chi / delta1, rel=1e-10)
        assert compile_walk(positive_network, plan).delta1 == pytest.approx(delta1, rel=1e-12)

    def test_vectorised_trials_match_traced_walks(self, positive_network):
        program = compile_walk(positive_network)
        uniforms = uniform_rows(seed=4, first=0, count=300, width=len(program.plan.steps))
        fast = run_trials(program, uniforms)
        slow = [not any(trace_trial(program, row)[-1].ancilla) for row in uniforms]
        assert fast.tolist() == slow

    def test_trace_records_every_step(self, positive_network):
        program = compile_walk(positive_network)
        states = trace_trial(program, [0.5] * 4)
        assert [s.step for s in states] == [2, 3, 4, 5]
        assert [len(s.ancilla) for s in states] == [1, 2, 3, 4]
        assert states[-1].coloring == {}
        for state, step in zip(states, program.plan.steps):
            assert set(state.coloring) == set(step.next_F)
            assert all(0 <= c < 2 for c in state.coloring.values())

    def test_single_trial_helper(self, positive_network):
        plan = plan_swallowing(positive_network)
        outcome = run_trial(positive_network, plan, np.random.default_rng(0))
        assert isinstance(outcome, bool)

    def test_negative_network_rejected(self, make_network):
        tn = make_network(build_torus(2, 2), 2, seed=1)
        with pytest.raises(ValueError):
            compile_walk(tn)


class TestEstimate:
    def test_trials_for(self):
        assert trials_for(0.05) == 4000
        assert trials_for(0.1) == 1000
        assert trials_for(1.0) == 10
        with pytest.raises(ValueError):
            trials_for(0)

    def test_all_ones_network_is_exact(self):
        tn = all_ones_network(build_torus(2, 2), 2)
        result = mc_estimate(tn, None, eps=0.2, seed=1)
        assert result.successes == result.trials == 250
        assert result.chi_hat == result.delta1 == 256

    def test_scalar_network(self):
        tn = TensorNetwork(Graph(1, ()), (Tensor.scalar(0.3, bond_dim=2),), 2)
        result = mc_estimate(tn, None, eps=0.5, seed=0)
        assert result.chi_hat == pytest.approx(0.3)
        assert exact_success_probability(tn) == 1.0

    def test_zero_network_is_certain(self):
        graph = build_torus(2, 2)
        tn = TensorNetwork(graph, tuple(Tensor(2, np.zeros((2,) * 4)) for _ in range(4)), 2)
        result = mc_estimate(tn, None, eps=0.1, seed=0)
        assert result.certain
        assert result.chi_hat == 0.0 and result.successes == 0

    def test_deterministic_for_a_seed(self, positive_network):
        a = mc_estimate(positive_network, None, eps=0.1, seed=7)
        b = mc_estimate(positive_network, None, eps=0.1, seed=7)
        assert a == b

    def test_batches_see_the_same_rows(self):
        whole = uniform_rows(9, 0, 10, 5)
        part = uniform_rows(9, 3, 4, 5)
        assert np.array_equal(whole[3:7], part)

    @pytest.mark.slow
    def test_success_frequency(self, positive_network):
        plan = plan_swallowing(positive_network)
        p = exact_success_probability(positive_network, plan)
        result = mc_estimate(positive_network, plan, eps=0.01, seed=21)
        assert result.trials == 100_000
        sigma = math.sqrt(p * (1 - p) / result.trials)
        assert abs(result.successes / result.trials - p) <= 4 * sigma

    @pytest.mark.slow
    def test_additive_guarantee_over_many_seeds(self, positive_network):
        plan = plan_swallowing(positive_network)
        chi = swallow_contract(positive_network, plan).real
        eps = 0.1
        hits = 0
        for seed in range(100):
            result = mc_estimate(positive_network, plan, eps=eps, seed=seed)
            hits += abs(result.chi_hat - chi) <= eps * result.delta1
        assert hits >= 62

    @pytest.mark.slow
    @pytest.mark.parametrize('instance', range(5))
    def test_guarantee_on_small_grids(self, make_network, instance):
        tn = make_network(build_torus(2, 3), 2, seed=300 + instance, nonnegative=True)
        plan = plan_swallowing(tn)
        chi = swallow_contract(tn, plan).real
        eps = 0.05
        hits, successes, trials = 0, 0, 0
        for seed in range(100):
            result = mc_estimate(tn, plan, eps=eps, seed=seed)
            assert result.trials == 4000
            hits += abs(result.chi_hat - chi) <= eps * result.delta1
            successes += result.successes
            trials += result.trials
        assert hits >= 62
        p = chi / delta_norms(tn, plan)[0]
        assert abs(successes / trials - p) <= 4 * math.sqrt(p * (1 - p) / trials)
