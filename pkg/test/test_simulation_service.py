#!/usr/bin/env python3
"""
Tests for the closed-loop simulator and cost accumulation
"""

import sys
import os
import json
import tempfile
import time
import unittest

import numpy as np

# Add the project root to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.settings import SCENARIO_DIR, scenario_path
from config.solver_config import SimulationOptions
from models.agent import AgentModel, CostWeights, ProtocolGains
from models.errors import NumericalBlowup, ShapeMismatch
from models.scenario import Scenario, ScenarioConfig, Trajectory
from models.topology import LEADER_FOLLOWING, LEADERLESS, Topology
from services.simulation_service import (SimulationService, classify_divergence, closed_loop_matrix, cost_factors,
                                         cost_terms, decompose, derivative, error_metrics, export_trajectory_csv,
                                         integrate, pairwise_cost, protocol_modes, step_count, sync_function)
from utils.formatters import matrix_from_document
from utils.logger import app_logger


def load_printed_gains(example_id):
    with open(os.path.join(SCENARIO_DIR, f'{example_id}_printed_gains.json'), 'r') as f:
        doc = json.load(f)['gains']
    return ProtocolGains(Ku=matrix_from_document(doc['Ku']), Kphi=matrix_from_document(doc['Kphi']))


def random_scenario(rng, topology, n=2, m=1, d=1, **kwargs):
    model = AgentModel(A=rng.standard_normal((n, n)), B=rng.standard_normal((n, m)),
                       C=rng.standard_normal((d, n)))
    g = rng.standard_normal((n, n))
    weights = CostWeights(Q=g @ g.T + np.eye(n), R=np.eye(m))
    gains = ProtocolGains(Ku=rng.standard_normal((m, n)), Kphi=rng.standard_normal((n, d)))
    size = topology.agent_count * n
    return Scenario(model=model, topology=topology, weights=weights, gains=gains,
                    x0=rng.standard_normal(size), phi0=rng.standard_normal(size), **kwargs)


class DynamicsTestSuite(unittest.TestCase):
    """Closed-loop right-hand side and instantaneous costs"""

    def setUp(self):
        self.start_time = time.time()
        app_logger.log_performance_metric("test_start", self.start_time)
        self.rng = np.random.default_rng(21)

    def tearDown(self):
        duration = time.time() - self.start_time
        app_logger.log_performance_metric("test_duration", duration, "s")

    def test_derivative_matches_stacked_matrix(self):
        for topology in (Topology.cycle(2), Topology.cycle(5), Topology.leader_chain(4)):
            with self.subTest(topology=topology.to_dict()):
                scenario = random_scenario(self.rng, topology)
                dx, dphi = derivative(scenario, scenario.x0, scenario.phi0)
                z = np.concatenate((scenario.x0, scenario.phi0))
                np.testing.assert_allclose(np.concatenate((dx, dphi)), closed_loop_matrix(scenario) @ z,
                                           atol=1e-12)

    def test_two_agent_derivative_by_hand(self):
        model = AgentModel(A=[[1.0]], B=[[2.0]], C=[[3.0]])
        scenario = Scenario(model=model, topology=Topology.cycle(2),
                            weights=CostWeights(Q=[[1.0]], R=[[1.0]]),
                            gains=ProtocolGains(Ku=[[0.5]], Kphi=[[-1.0]]), x0=[1.0, 2.0], phi0=[0.5, -0.5])
        dx, dphi = derivative(scenario, scenario.x0, scenario.phi0)
        # x_j' = x_j + 2*0.5*phi_j ; phi_j' = (1 + 1) phi_j + sum_i (e_j - e_i) * (-3), e = phi - x
        np.testing.assert_allclose(dx, [1.5, 1.5])
        e = np.array([0.5 - 1.0, -0.5 - 2.0])
        expected = 2.0 * np.array([0.5, -0.5]) - 3.0 * np.array([e[0] - e[1], e[1] - e[0]])
        np.testing.assert_allclose(dphi, expected)

    def test_derivative_shape_check(self):
        scenario = random_scenario(self.rng, Topology.cycle(3))
        with self.assertRaises(ShapeMismatch):
            derivative(scenario, np.zeros(5), np.zeros(6))

    def test_cost_terms_agree_with_explicit_sums_and_factors(self):
        for topology in (Topology.cycle(4), Topology.leader_chain(4)):
            scenario = random_scenario(self.rng, topology, n=3, m=2)
            f_u, f_x = cost_factors(topology, scenario.weights, scenario.gains)
            size = topology.agent_count * 3
            for _ in range(1000):
                x, phi = self.rng.standard_normal(size), self.rng.standard_normal(size)
                ju, jx = cost_terms(x, phi, topology, scenario.weights, scenario.gains)
                u = phi.reshape(-1, 3) @ scenario.gains.Ku.T
                explicit_ju = sum(float(v @ scenario.weights.R @ v) for v in u)
                explicit_jx = pairwise_cost(x, phi, topology, scenario.weights.Q)
                z = np.concatenate((x, phi))
                scale = 1.0 + abs(explicit_jx) + abs(explicit_ju)
                self.assertAlmostEqual(ju, explicit_ju, delta=1e-10 * scale)
                self.assertAlmostEqual(jx, explicit_jx, delta=1e-10 * scale)
                self.assertAlmostEqual(float(np.sum((f_u @ z) ** 2)), ju, delta=1e-10 * scale)
                self.assertAlmostEqual(float(np.sum((f_x @ z) ** 2)), jx, delta=1e-10 * scale)

    def test_leader_regulation_term(self):
        chain = Topology.leader_chain(3)
        q = np.eye(1)
        x = np.array([0.0, 1.0, 3.0])
        phi = np.zeros(3)
        # arcs: 2<-1, 2<-3, 3<-2 ; e = -x
        self.assertAlmostEqual(pairwise_cost(x, phi, chain, q), 1.0 + 4.0 + 4.0)

    def test_step_count(self):
        self.assertEqual(step_count(1e-3, 10.0), 10000)
        self.assertEqual(step_count(0.25, 1.0), 4)
        self.assertEqual(step_count(0.3, 1.0), 4)


class IntegrationTestSuite(unittest.TestCase):
    """RK4 trajectories and the running cost"""

    def setUp(self):
        self.start_time = time.time()
        app_logger.log_performance_metric("test_start", self.start_time)
        self.example1 = ScenarioConfig.load(scenario_path('example1'))
        self.example2 = ScenarioConfig.load(scenario_path('example2'))

    def tearDown(self):
        duration = time.time() - self.start_time
        app_logger.log_performance_metric("test_duration", duration, "s")

    def scalar_pair(self, a, phi0=None, horizon=1.0, dt=1e-3):
        model = AgentModel(A=[[a]], B=[[1.0]], C=[[1.0]])
        return Scenario(model=model, topology=Topology.cycle(2), weights=CostWeights(Q=[[1.0]], R=[[1.0]]),
                        gains=ProtocolGains.zeros(model), x0=[1.0, 0.0], phi0=phi0, dt=dt, horizon=horizon)

    def test_constant_states_give_linear_cost(self):
        trajectory = integrate(self.scalar_pair(0.0, horizon=2.0, dt=0.01))
        # e = -x is frozen; two arcs contribute (x1 - x2)^2 each
        np.testing.assert_allclose(trajectory.cost_running, 2.0 * trajectory.times, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(trajectory.states[-1], [1.0, 0.0])

    def test_decaying_pair_cost(self):
        trajectory = integrate(self.scalar_pair(-0.5))
        self.assertAlmostEqual(trajectory.final_cost, 2.0 * (1.0 - np.exp(-1.0)), delta=1e-9)
        np.testing.assert_allclose(trajectory.states[-1], [np.exp(-0.5), 0.0], rtol=1e-10, atol=1e-15)

    def test_cost_is_non_decreasing(self):
        scenario = random_scenario(np.random.default_rng(4), Topology.cycle(4), horizon=1.0, dt=1e-2)
        trajectory = integrate(scenario)
        self.assertTrue(np.all(np.diff(trajectory.cost_running) >= 0.0))
        self.assertEqual(trajectory.cost_running[0], 0.0)
        ju, jx = cost_terms(scenario.x0, scenario.phi0, scenario.topology, scenario.weights, scenario.gains)
        self.assertAlmostEqual(trajectory.cost_terms[0, 0], ju, delta=1e-10 * (1.0 + ju))
        self.assertAlmostEqual(trajectory.cost_terms[0, 1], jx, delta=1e-10 * (1.0 + jx))

    def test_leader_protocol_state_stays_zero(self):
        gains = load_printed_gains('example2')
        config = self.example2
        scenario = Scenario(model=config.model, topology=config.topology, weights=config.weights, gains=gains,
                            x0=config.x0, dt=1e-3, horizon=1.0)
        trajectory = integrate(scenario)
        leader_phi = trajectory.protocol_states[:, :config.model.n]
        self.assertTrue(np.all(leader_phi == 0.0))

    def test_leaderless_agreement_mode_stays_zero(self):
        gains = load_printed_gains('example1')
        config = self.example1
        scenario = Scenario(model=config.model, topology=config.topology, weights=config.weights, gains=gains,
                            x0=config.x0, dt=1e-3, horizon=1.0)
        trajectory = integrate(scenario)
        modes = protocol_modes(trajectory, config.topology)
        scale = 1.0 + float(np.max(np.abs(trajectory.protocol_states)))
        self.assertLess(float(np.max(np.abs(modes[:, 0, :]))), 1e-9 * scale)

    def test_decompose(self):
        scenario = random_scenario(np.random.default_rng(8), Topology.cycle(4), horizon=0.5, dt=1e-2)
        trajectory = integrate(scenario)
        error, sync = decompose(trajectory, scenario.topology)
        np.testing.assert_allclose(error + sync, trajectory.states, atol=1e-12)
        agent_error = error.reshape(len(trajectory.times), 4, 2)
        np.testing.assert_allclose(agent_error.sum(axis=1), 0.0, atol=1e-10)

    def test_zero_gains_diverge(self):
        config = self.example1
        service = SimulationService(SimulationOptions(dt=1e-2, horizon=10.0))
        scenario = service.build_scenario(config.model, config.topology, config.weights,
                                          ProtocolGains.zeros(config.model), config.x0)
        trajectory = service.simulate(scenario)
        self.assertTrue(service.diverged(trajectory, LEADERLESS))

    def test_agreement_start_is_not_divergence(self):
        def pair(states):
            states = np.array(states, dtype=float)
            samples = len(states)
            return Trajectory(times=np.arange(samples, dtype=float), states=states,
                              protocol_states=np.zeros_like(states), cost_running=np.zeros(samples),
                              cost_terms=np.zeros((samples, 2)), agent_count=2, n=1)

        settled = pair([[1.0, 1.0], [1.0, 1.0 + 1e-12]])
        self.assertFalse(classify_divergence(settled, LEADERLESS, 10.0, floor=1e-9))
        self.assertTrue(classify_divergence(settled, LEADERLESS, 10.0, floor=0.0))
        self.assertFalse(SimulationService(SimulationOptions()).diverged(settled, LEADERLESS))

        growing = pair([[1.0, 2.0], [1.0, 40.0]])
        self.assertTrue(classify_divergence(growing, LEADERLESS, 10.0, floor=1e-9))
        self.assertTrue(SimulationService(SimulationOptions()).diverged(growing, LEADER_FOLLOWING))

    def test_blowup_threshold(self):
        config = self.example1
        scenario = Scenario(model=config.model, topology=config.topology, weights=config.weights,
                            gains=ProtocolGains.zeros(config.model), x0=config.x0, dt=1e-2, horizon=10.0)
        with self.assertRaises(NumericalBlowup):
            integrate(scenario, blowup_threshold=100.0)


class SyncFunctionTestSuite(unittest.TestCase):
    """Synchronization function, error metrics and export"""

    def setUp(self):
        self.start_time = time.time()
        app_logger.log_performance_metric("test_start", self.start_time)
        self.config = ScenarioConfig.load(scenario_path('example1'))

    def tearDown(self):
        duration = time.time() - self.start_time
        app_logger.log_performance_metric("test_duration", duration, "s")

    def test_sync_function_at_zero(self):
        c0 = sync_function(self.config.model, self.config.x0, 0.0, LEADERLESS, 6)
        np.testing.assert_allclose(c0, np.array([14.0, 23.0, 29.0]) / 6.0, atol=1e-12)
        np.testing.assert_allclose(np.round(c0, 4), [2.3333, 3.8333, 4.8333])
        leader = sync_function(self.config.model, self.config.x0, 0.0, LEADER_FOLLOWING, 6)
        np.testing.assert_allclose(leader, [-13.0, 20.0, -3.0])

    def test_sync_function_follows_the_mean(self):
        times = np.array([0.0, 0.5, 1.0])
        values = sync_function(self.config.model, self.config.x0, times, LEADERLESS, 6)
        self.assertEqual(values.shape, (3, 3))
        # Under any protocol the mean of the agents obeys x' = Ax, since 1^T L = 0
        gains = load_printed_gains('example1')
        scenario = Scenario(model=self.config.model, topology=self.config.topology, weights=self.config.weights,
                            gains=gains, x0=self.config.x0, dt=1e-3, horizon=1.0)
        trajectory = integrate(scenario)
        mean = trajectory.agent_states()[-1].mean(axis=0)
        np.testing.assert_allclose(mean, values[-1], rtol=1e-8, atol=1e-8)

    def test_error_metrics(self):
        states = np.array([[0.0, 0.0, 2.0, 0.0], [1.0, 1.0, 1.0, 1.0]])
        trajectory = Trajectory(times=np.array([0.0, 1.0]), states=states, protocol_states=np.zeros_like(states),
                                cost_running=np.zeros(2), cost_terms=np.zeros((2, 2)), agent_count=2, n=2)
        np.testing.assert_allclose(error_metrics(trajectory, LEADERLESS), [1.0, 0.0])
        np.testing.assert_allclose(error_metrics(trajectory, LEADER_FOLLOWING), [2.0, 0.0])

    def test_trajectory_csv_header(self):
        model = AgentModel(A=[[-1.0]], B=[[1.0]], C=[[1.0]])
        scenario = Scenario(model=model, topology=Topology.cycle(2), weights=CostWeights(Q=[[1.0]], R=[[1.0]]),
                            gains=ProtocolGains.zeros(model), x0=[1.0, -1.0], dt=0.1, horizon=0.5)
        trajectory = integrate(scenario)
        with tempfile.TemporaryDirectory() as tmp:
            path = export_trajectory_csv(trajectory, os.path.join(tmp, 'trajectory.csv'))
            with open(path, 'r') as f:
                lines = f.read().splitlines()
        self.assertEqual(lines[0], 't,x1,x2,phi1,phi2,Ju,Jxphi,Js')
        self.assertEqual(len(lines), 1 + 6)


if __name__ == '__main__':
    unittest.main()
