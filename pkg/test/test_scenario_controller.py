#!/usr/bin/env python3
"""
Tests for scenario files, run reports and the command-line workflows
"""

import sys
import os
import json
import shutil
import tempfile
import time
import unittest

# Add the project root to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.settings import scenario_path
from config.solver_config import SolverConfig
from controllers.scenario_controller import ScenarioController
from models.errors import InvalidConfig
from models.scenario import EXIT_CODES, RunReport, ScenarioConfig
from utils.formatters import sanitize
from utils.logger import app_logger

import main

ZERO_GAINS = {
    'gains': {
        'Ku': {'rows': 2, 'cols': 3, 'data': [0.0] * 6},
        'Kphi': {'rows': 3, 'cols': 2, 'data': [0.0] * 6},
    }
}


class ScenarioConfigTestSuite(unittest.TestCase):
    """Configuration parsing and report serialization"""

    def setUp(self):
        self.start_time = time.time()
        app_logger.log_performance_metric("test_start", self.start_time)
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)
        duration = time.time() - self.start_time
        app_logger.log_performance_metric("test_duration", duration, "s")

    def test_round_trip(self):
        for example in ('example1', 'example2'):
            config = ScenarioConfig.load(scenario_path(example))
            path = os.path.join(self.tmp, f'{example}.json')
            config.save(path)
            restored = ScenarioConfig.load(path)
            self.assertEqual(restored.to_dict(), config.to_dict())
            self.assertEqual(restored.topology, config.topology)

    def test_overrides(self):
        config = ScenarioConfig.load(scenario_path('example1')).with_overrides(dt=0.01, horizon=2.0, budget=50.0)
        self.assertEqual(config.sim['dt'], 0.01)
        self.assertEqual(config.sim['horizon'], 2.0)
        self.assertEqual(config.budget, 50.0)
        with self.assertRaises(InvalidConfig):
            ScenarioConfig.load(scenario_path('example1')).with_overrides(budget=-1.0)

    def test_missing_file(self):
        with self.assertRaises(InvalidConfig):
            ScenarioConfig.load(os.path.join(self.tmp, 'absent.json'))

    def test_report_is_finite_json(self):
        report = RunReport(command='simulate', final_cost=float('inf'), details={'ratio': float('nan')})
        payload = report.to_dict()
        self.assertIsNone(payload['final_cost'])
        self.assertIsNone(payload['details']['ratio'])
        json.dumps(payload, allow_nan=False)
        self.assertEqual(sanitize({'a': (1.0, float('-inf'))}), {'a': [1.0, None]})

    def test_option_layering(self):
        config = SolverConfig({'solver': {'delta': 1e-3, 'margin': 1e-6}, 'sim': {'dt': 0.01}})
        self.assertEqual(config.get('solver', 'delta'), 1e-3)
        self.assertIsNone(config.get('solver', 'absent'))
        lmi = config.get_lmi_options({'margin': 1e-5, 'max_iters': 7.0, 'unknown': 1})
        self.assertEqual(lmi.delta, 1e-3)
        self.assertEqual(lmi.margin, 1e-5)
        self.assertEqual(lmi.max_iters, 7)
        self.assertAlmostEqual(lmi.solve_margin, 1e-4)
        sim = config.get_simulation_options({'horizon': 2.0, 'dt': None})
        self.assertEqual((sim.dt, sim.horizon), (0.01, 2.0))
        self.assertEqual(sim.to_dict()['divergence_ratio'], 10.0)

    def test_exit_codes(self):
        self.assertEqual(EXIT_CODES, {'ok': 0, 'infeasible': 2, 'budget_too_small': 2,
                                      'invalid_config': 3, 'diverged': 4})
        with self.assertRaises(ValueError):
            RunReport(command='design', status='unknown')


class ScenarioControllerTestSuite(unittest.TestCase):
    """Workflows end to end, failure paths first"""

    def setUp(self):
        self.start_time = time.time()
        app_logger.log_performance_metric("test_start", self.start_time)
        self.tmp = tempfile.mkdtemp()
        self.gains_path = os.path.join(self.tmp, 'zero_gains.json')
        with open(self.gains_path, 'w') as f:
            json.dump(ZERO_GAINS, f)

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)
        duration = time.time() - self.start_time
        app_logger.log_performance_metric("test_duration", duration, "s")

    def out(self, name='out'):
        return os.path.join(self.tmp, name)

    def read_report(self, report):
        with open(report.paths['report'], 'r') as f:
            return json.load(f)

    def test_invalid_config(self):
        data = ScenarioConfig.load(scenario_path('example1')).to_dict()
        del data['budget']
        path = os.path.join(self.tmp, 'broken.json')
        with open(path, 'w') as f:
            json.dump(data, f)
        report = ScenarioController(out_dir=self.out()).cmd_design(path)
        self.assertEqual(report.status, 'invalid_config')
        self.assertEqual(report.exit_code, 3)
        self.assertIn('budget', report.reason)
        self.assertEqual(self.read_report(report)['status'], 'invalid_config')

    def test_missing_config_argument(self):
        report = ScenarioController(out_dir=self.out()).cmd_design(None)
        self.assertEqual(report.exit_code, 3)

    def test_unknown_example(self):
        report = ScenarioController(out_dir=self.out()).cmd_reproduce('example9')
        self.assertEqual(report.status, 'invalid_config')
        self.assertEqual(report.exit_code, 3)

    def test_malformed_gains(self):
        path = os.path.join(self.tmp, 'bad_gains.json')
        with open(path, 'w') as f:
            json.dump({'gains': {'Ku': {'rows': 2, 'cols': 3, 'data': [1.0]}}}, f)
        report = ScenarioController(out_dir=self.out()).cmd_analyze(scenario_path('example1'), path)
        self.assertEqual(report.exit_code, 3)

    def test_zero_gains_analysis(self):
        report = ScenarioController(out_dir=self.out()).cmd_analyze(scenario_path('example1'), self.gains_path)
        self.assertEqual(report.status, 'infeasible')
        self.assertEqual(report.exit_code, 2)
        self.assertTrue(report.reason)
        saved = self.read_report(report)
        self.assertFalse(saved['details']['certificate']['feasible'])

    def test_zero_gains_simulation_diverges(self):
        controller = ScenarioController(out_dir=self.out(), dt=0.01)
        report = controller.cmd_simulate(scenario_path('example1'), self.gains_path)
        self.assertEqual(report.status, 'diverged')
        self.assertEqual(report.exit_code, 4)
        with open(report.paths['trajectory'], 'r') as f:
            header = f.readline().strip().split(',')
        self.assertEqual(header[0], 't')
        self.assertEqual(header[1:19], [f"x{k}" for k in range(1, 19)])
        self.assertEqual(header[19:37], [f"phi{k}" for k in range(1, 19)])
        self.assertEqual(header[37:], ['Ju', 'Jxphi', 'Js'])
        self.assertTrue(os.path.exists(report.paths['sync_function']))
        self.assertEqual(report.details['sync_function_t0'], [2.3333, 3.8333, 4.8333])

    def test_budget_too_small(self):
        report = ScenarioController(out_dir=self.out(), budget=0.001).cmd_design(scenario_path('example1'))
        self.assertEqual(report.status, 'budget_too_small')
        self.assertEqual(report.exit_code, 2)

    def test_sweep_on_scalar_network(self):
        scalar = {
            'name': 'scalar-cycle',
            'model': {'n': 1, 'm': 1, 'd': 1, 'A': [0.5], 'B': [1.0], 'C': [2.0]},
            'topology': {'kind': 'leaderless', 'N': 3, 'edges': [[1, 2, 1.0], [2, 3, 1.0], [3, 1, 1.0]]},
            'weights': {'Q': [1.0], 'R': [1.0]},
            'budget': 50.0,
            'initial_states': [[1.0], [2.0], [4.0]],
        }
        path = os.path.join(self.tmp, 'scalar.json')
        with open(path, 'w') as f:
            json.dump(scalar, f)
        report = ScenarioController(out_dir=self.out()).cmd_sweep(path)
        self.assertEqual(report.status, 'ok', report.reason)
        minimum = report.details['minimum_budget']
        self.assertGreater(minimum, 0.0)
        self.assertEqual(report.details['configured_budget'], 50.0)
        self.assertEqual(report.details['scenario'], 'scalar-cycle')
        saved = self.read_report(report)
        self.assertAlmostEqual(saved['details']['minimum_budget'], minimum)
        self.assertIn('design', saved['performance']['counts'])

    def test_main_run_returns_exit_code(self):
        code = main.run(['analyze', '--config', scenario_path('example1'), '--gains', self.gains_path,
                         '--out', self.out('cli')])
        self.assertEqual(code, 2)
        self.assertTrue(os.path.exists(os.path.join(self.out('cli'), 'analyze_report.json')))


if __name__ == '__main__':
    unittest.main()
