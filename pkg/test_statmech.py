import logging
import math

import numpy as np
import pytest

from contract_exact import swallow_contract
from errors import BudgetExceededError
from statmech import (
    IsingSpec,
    MomentParams,
    empirical_pair_moment,
    exp_or_inf,
    ising_bruteforce,
    ising_log_bruteforce,
    kaufman_gammas,
    kaufman_log_partition,
    kaufman_partition,
    partition_bounds,
    r_sum_bound,
    second_moment_exact,
    second_moment_mc,
    variance_bounds,
)
from tn_core import Tensor, TensorNetwork, build_torus


def doubled_network(L1, L2, d, z):
    """E[(J + zdA) (x) conj(J + zdA)] per vertex, on bond dimension d^2."""
    w2 = abs(z * d) ** 2
    m = np.array([a // d == a % d for a in range(d * d)], dtype=float)
    tensor = 1 + w2 * np.einsum('a,b,c,e->abce', m, m, m, m)
    graph = build_torus(L1, L2)
    return TensorNetwork(graph, tuple(Tensor(d * d, tensor) for _ in range(graph.num_vertices)), d * d)


class TestIsing:
    def test_free_spins(self):
        assert ising_bruteforce(IsingSpec(2, 2, 0.0)) == pytest.approx(16)

    def test_parallel_edges_count_twice(self):
        # 2 x 2 torus: 8 bonds, all aligned for the two uniform states
        z = ising_bruteforce(IsingSpec(2, 2, 0.3))
        assert z > 2 * math.exp(0.3 * 8)

    def test_field_symmetry(self):
        up = ising_log_bruteforce(IsingSpec(2, 4, 0.2, 0.5))
        down = ising_log_bruteforce(IsingSpec(2, 4, 0.2, -0.5))
        assert up == pytest.approx(down, abs=1e-12)

    @pytest.mark.parametrize('L1', [2, 3, 4])
    @pytest.mark.parametrize('L2', [2, 4])
    @pytest.mark.parametrize('beta_j', [0.1, 0.44, 1.0])
    def test_kaufman_matches_enumeration(self, L1, L2, beta_j):
        exact = ising_log_bruteforce(IsingSpec(L1, L2, beta_j))
        assert abs(kaufman_log_partition(L1, L2, beta_j) - exact) <= 1e-9

    def test_kaufman_value(self):
        assert kaufman_partition(2, 2, 0.3) == pytest.approx(ising_bruteforce(IsingSpec(2, 2, 0.3)), rel=1e-9)

    def test_last_gamma_carries_sign(self):
        K = 0.2
        gammas = kaufman_gammas(4, K)
        assert gammas[-1] == pytest.approx(2 * (K - math.atanh(math.exp(-2 * K))))
        assert gammas[-1] < 0
        assert np.all(gammas[:-1] > 0)

    def test_kaufman_strong_coupling_matches_enumeration(self):
        exact = ising_log_bruteforce(IsingSpec(2, 4, 30.0))
        assert kaufman_log_partition(2, 4, 30.0) == pytest.approx(exact, rel=1e-9)

    def test_partition_overflows_to_inf(self):
        assert kaufman_partition(4, 4, 30.0) == math.inf
        assert kaufman_log_partition(4, 4, 30.0) == pytest.approx(math.log(2) + 32 * 30.0, rel=1e-12)
        assert ising_bruteforce(IsingSpec(2, 4, 100.0)) == math.inf

    def test_exp_or_inf(self):
        assert exp_or_inf(1.0) == math.e
        assert exp_or_inf(710.0) == math.inf

    def test_coupling_beyond_double_range_rejected(self):
        with pytest.raises(ValueError, match='too large'):
            kaufman_log_partition(2, 4, 1000.0)

    @pytest.mark.parametrize('args', [(2, 2, 0.0), (2, 2, -0.1), (2, 3, 0.5), (1, 2, 0.5)])
    def test_kaufman_rejects(self, args):
        with pytest.raises(ValueError):
            kaufman_log_partition(*args)

    @pytest.mark.parametrize('dims,d', [((2, 2), 2), ((2, 2), 4), ((2, 2), 16), ((2, 4), 8), ((2, 4), 16)])
    def test_sandwich_bounds(self, dims, d):
        n = dims[0] * dims[1]
        lower, upper = partition_bounds(n, d)
        z = kaufman_partition(*dims, math.log(d) / 4)
        assert lower <= z <= upper

    def test_spin_budget(self):
        with pytest.raises(BudgetExceededError):
            ising_bruteforce(IsingSpec(4, 4, 0.1), budget=10)

    def test_spin_budget_from_environment(self, monkeypatch):
        monkeypatch.setenv('TN_SPIN_BUDGET', '8')
        with pytest.raises(BudgetExceededError):
            ising_bruteforce(IsingSpec(3, 4, 0.1))

    def test_worker_count_does_not_change_bits(self):
        spec = IsingSpec(4, 4, 0.3, 0.1)
        assert ising_log_bruteforce(spec, workers=1) == ising_log_bruteforce(spec, workers=3)

    def test_odd_width_rejected(self):
        with pytest.raises(ValueError):
            IsingSpec(2, 3, 0.1)


class TestSecondMoment:
    def test_zero_z(self):
        result = second_moment_exact(MomentParams(2, 2, 3, 0))
        assert result.value == 3.0 ** 16
        assert result.ratio == 1.0

    @pytest.mark.parametrize('z', [0.1, 0.5 + 0.5j, 1.0, 2.0])
    def test_ising_form_agrees(self, z):
        result = second_moment_exact(MomentParams(2, 4, 2, z))
        assert result.value == pytest.approx(result.ising_value, rel=1e-8)

    @pytest.mark.parametrize('d,z', [(2, 0.7), (2, 1.3j), (3, 0.4)])
    def test_doubled_network_oracle(self, d, z):
        exact = second_moment_exact(MomentParams(2, 2, d, z)).value
        oracle = swallow_contract(doubled_network(2, 2, d, z))
        assert oracle.real == pytest.approx(exact, rel=1e-9)
        assert abs(oracle.imag) <= 1e-9 * exact

    def test_sampled_mean(self):
        z = 0.3
        exact = second_moment_exact(MomentParams(2, 2, 2, z)).value
        estimate = second_moment_mc(2, 2, 2, z, num_samples=4000, seed=1)
        assert estimate.samples == 4000
        assert abs(estimate.mean - exact) <= 5 * estimate.stderr

    def test_sampling_needs_samples(self):
        with pytest.raises(ValueError):
            second_moment_mc(2, 2, 2, 0.3, num_samples=0, seed=1)

    def test_bond_dimension_validated(self):
        with pytest.raises(ValueError):
            MomentParams(2, 2, 1, 0.5)


class TestBounds:
    def test_lower_bound_holds(self):
        for z in (0.1, 0.5, 1.0):
            exact = second_moment_exact(MomentParams(2, 2, 4, z)).value
            assert variance_bounds(4, 4, z, c=1.0, rho=0.5).lower <= exact * (1 + 1e-12)

    def test_upper_bounds_in_regime(self):
        n, d = 4, 4
        small = second_moment_exact(MomentParams(2, 2, d, 0.1)).value
        unit = second_moment_exact(MomentParams(2, 2, d, 1.0)).value
        bounds = variance_bounds(n, d, 0.1, c=1.0, rho=0.1)
        assert small <= bounds.upper_small_z
        assert unit <= bounds.upper_unit

    def test_r_sum_bound(self):
        for dims, d in (((2, 2), 2), ((2, 4), 8)):
            n = dims[0] * dims[1]
            assert second_moment_exact(MomentParams(*dims, d, 1.0)).value <= r_sum_bound(n, d)

    def test_warns_outside_regime(self, caplog):
        with caplog.at_level(logging.WARNING, logger='statmech'):
            variance_bounds(16, 2, 0.5, c=1.0, rho=0.1)
        assert 'below n/c' in caplog.text


def test_pair_moment_is_delta():
    result = empirical_pair_moment(d=2, rank=2, samples=20_000, seed=3)
    assert result.mean.shape == (4, 4)
    assert np.all(np.abs(result.mean - np.eye(4)) <= 5 * result.stderr + 1e-12)
