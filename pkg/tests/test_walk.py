"""
Tests for the walk operator, phase detection and marked-vertex detection
"""

import math

import numpy as np
import pytest
from conftest import random_network, series_bounds

from qroute.config import Settings
from qroute.errors import BudgetRefusal, PreconditionError, WalkError
from qroute.graphs import ElectricNetwork, effective_resistance
from qroute.walk import (
    Fidelity, Verdict, WalkState, apply_step, build_walk_operator, dense_operator, detect_marked,
    eigenphases, overlap_low_phase, overlap_one_eigenspace, qpd_closed_form,
    qpd_outcome_distribution, qpd_probability_spectral, qpd_sample, repetitions, sigma_state,
    walk_length,
)

C1 = 9.0


def path_network(length: int, marked=()) -> ElectricNetwork:
    return ElectricNetwork.build([(i, i + 1, 1.0) for i in range(length)], root=0, marked=marked)


class TestWalkOperator:
    """Structure of U = (-Swap)·D"""

    def test_dense_operator_is_orthogonal(self):
        handle = build_walk_operator(path_network(3, marked=[3]), R=3, C1=C1)
        U = dense_operator(handle)
        assert np.allclose(U @ U.T, np.eye(U.shape[0]), atol=1e-12)

    def test_apply_matches_dense(self):
        rng = np.random.default_rng(0)
        net = random_network(rng, 6, 9, [4])
        handle = build_walk_operator(net, R=4, C1=C1)
        x = rng.normal(size=handle.space.dimension) + 1j * rng.normal(size=handle.space.dimension)
        assert np.allclose(handle.apply(x), dense_operator(handle) @ x, atol=1e-12)

    def test_step_preserves_norm(self):
        handle = build_walk_operator(path_network(4), R=4, C1=C1)
        state = sigma_state(handle)
        for _ in range(10):
            state = apply_step(handle, state)
        assert state.norm() == pytest.approx(1.0, abs=1e-12)

    def test_foreign_state_is_rejected(self):
        small = build_walk_operator(path_network(2), R=2, C1=C1)
        large = build_walk_operator(path_network(5), R=5, C1=C1)
        with pytest.raises(WalkError):
            apply_step(small, sigma_state(large))

    @pytest.mark.parametrize("R, c1", [(0.5, 9.0), (2.0, 0.5)])
    def test_parameters_below_one(self, R, c1):
        with pytest.raises(WalkError):
            build_walk_operator(path_network(2), R=R, C1=c1)

    def test_dense_limit(self):
        handle = build_walk_operator(path_network(3), R=3, C1=C1)
        with pytest.raises(BudgetRefusal) as err:
            dense_operator(handle, Settings(dense_dimension_limit=4))
        assert err.value.requested == handle.space.dimension


class TestPhaseDetection:
    """Outcome probabilities of single-qubit phase detection"""

    def test_zero_phase_never_fires(self):
        assert qpd_closed_form(0.0, 25) == 0.0

    @pytest.mark.parametrize("alpha, T", [(0.3, 10), (2.0, 7), (1e-9, 5), (math.pi, 4)])
    def test_closed_form_is_the_average(self, alpha, T):
        t = np.arange(1, T + 1)
        expected = float(np.mean(np.sin(t * alpha / 2) ** 2))
        assert qpd_closed_form(alpha, T) == pytest.approx(expected, abs=1e-12)

    def test_eigenvector_probability_matches_closed_form(self):
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 200:
            n = int(rng.integers(3, 8))
            net = random_network(rng, n, int(rng.integers(n - 1, n * (n - 1) // 2 + 1)),
                                 rng.choice(np.arange(1, n), size=1).tolist())
            handle = build_walk_operator(net, R=float(rng.uniform(1, 5)), C1=C1)
            values, vectors = eigenphases(handle)
            for j in rng.choice(len(values), size=min(10, len(values)), replace=False):
                T = int(rng.integers(1, 30))
                state = WalkState(handle.space, vectors[:, j])
                exact = qpd_outcome_distribution(handle, state, T)
                assert exact == pytest.approx(qpd_closed_form(float(np.angle(values[j])), T), abs=1e-9)
                checked += 1

    def test_spectral_and_stepping_agree(self):
        rng = np.random.default_rng(5)
        net = random_network(rng, 7, 12, [6])
        handle = build_walk_operator(net, R=3, C1=C1)
        T = 40
        stepped = qpd_outcome_distribution(handle, sigma_state(handle), T)
        assert qpd_probability_spectral(handle, T) == pytest.approx(stepped, abs=1e-9)

    def test_sample_is_binary(self):
        handle = build_walk_operator(path_network(3), R=3, C1=C1)
        rng = np.random.default_rng(0)
        assert {qpd_sample(handle, sigma_state(handle), 12, rng) for _ in range(20)} <= {0, 1}

    def test_bad_T(self):
        handle = build_walk_operator(path_network(2), R=2, C1=C1)
        with pytest.raises(WalkError):
            qpd_outcome_distribution(handle, sigma_state(handle), 0)


class TestSpectralGap:
    """The start state sits in the 1-eigenspace exactly when something is marked"""

    def _instances(self, seed: int, count: int):
        rng = np.random.default_rng(seed)
        for _ in range(count):
            n = int(rng.integers(3, 9))
            m = int(rng.integers(n - 1, min(n * (n - 1) // 2, 2 * n) + 1))
            marked = rng.choice(np.arange(1, n), size=int(rng.integers(1, n)), replace=False).tolist()
            yield random_network(rng, n, m, marked), random_network(rng, n, m)

    def test_overlaps(self):
        for marked_net, empty_net in self._instances(3, 10):
            R = max(1.0, effective_resistance(marked_net))
            handle = build_walk_operator(marked_net, R=R, C1=C1)
            assert overlap_one_eigenspace(handle) ** 2 >= 0.9 - 1e-9

            R, W = series_bounds(empty_net)
            handle = build_walk_operator(empty_net, R=R, C1=C1)
            theta = 1 / (4 * math.sqrt(0.5 + C1 * R * W))
            assert overlap_low_phase(handle, theta) ** 2 <= 0.25

    def test_everything_marked_is_a_fixed_point(self):
        net = ElectricNetwork.build([(0, 1, 1.0), (1, 2, 2.0)], root=0, marked=[0, 1, 2])
        handle = build_walk_operator(net, R=1, C1=C1)
        state = sigma_state(handle)
        assert np.allclose(apply_step(handle, state).amplitudes, state.amplitudes)
        assert overlap_one_eigenspace(handle) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.slow
    def test_detection_probability_gap(self, settings):
        for marked_net, empty_net in self._instances(17, 20):
            R, W = series_bounds(marked_net)
            T = walk_length(R, W, settings)
            handle = build_walk_operator(marked_net, R=R, C1=C1)
            assert qpd_probability_spectral(handle, T) <= 0.1

            R, W = series_bounds(empty_net)
            T = walk_length(R, W, settings)
            handle = build_walk_operator(empty_net, R=R, C1=C1)
            assert qpd_probability_spectral(handle, T) >= 0.3


class TestDetectMarked:
    """End-to-end detection with repetitions and a threshold"""

    def test_constants(self, settings):
        assert repetitions(0.01, settings) == math.ceil(48 * math.log(100))
        assert walk_length(1.0, 1.0, settings) == math.ceil(80 * math.sqrt(9.5))
        with pytest.raises(WalkError):
            repetitions(1.5, settings)

    @pytest.mark.parametrize("marked, verdict", [([3], Verdict.NONEMPTY), ([], Verdict.EMPTY)])
    def test_exact_verdicts(self, settings, marked, verdict):
        net = path_network(3, marked)
        result = detect_marked(net, R=3, W=3, delta=0.01, fidelity=Fidelity.EXACT,
                               rng=np.random.default_rng(1), settings=settings)
        assert result.verdict is verdict
        assert result.probability is not None
        assert result.steps == result.repetitions * result.walk_length

    def test_cost_model_uses_reachability(self, settings):
        net = ElectricNetwork.build([(0, 1, 1.0), (2, 3, 1.0)], root=0, marked=[3])
        result = detect_marked(net, R=2, W=2, delta=0.01, fidelity=Fidelity.COST,
                               rng=np.random.default_rng(0), settings=settings)
        assert result.verdict is Verdict.EMPTY
        assert result.probability is None

    def test_weight_precondition(self, settings):
        net = path_network(3, [3])
        with pytest.raises(PreconditionError, match="exceeds W"):
            detect_marked(net, R=3, W=2, delta=0.1, fidelity=Fidelity.EXACT,
                          rng=np.random.default_rng(0), settings=settings)

    def test_resistance_precondition(self, settings):
        net = path_network(3, [3])
        with pytest.raises(PreconditionError, match="effective resistance"):
            detect_marked(net, R=2, W=3, delta=0.1, fidelity=Fidelity.EXACT,
                          rng=np.random.default_rng(0), settings=settings)

    def test_step_budget_refusal(self):
        tight = Settings(exact_step_budget=10, dense_dimension_limit=4)
        with pytest.raises(BudgetRefusal):
            detect_marked(path_network(3, [3]), R=3, W=3, delta=0.1, fidelity=Fidelity.EXACT,
                          rng=np.random.default_rng(0), settings=tight)
