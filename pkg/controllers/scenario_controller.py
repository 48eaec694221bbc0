import json
import os
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from config.settings import BUNDLED_EXAMPLES, OUTPUT_DIR, scenario_path
from config.solver_config import LmiOptions, SimulationOptions, solver_config
from models.agent import AnalysisCertificate, DesignReport, ProtocolGains
from models.errors import GcsyncError, Infeasible, InvalidConfig
from models.scenario import RunReport, ScenarioConfig
from models.topology import LEADERLESS
from services.simulation_service import (SimulationService, error_metrics, export_sync_function_csv,
                                         export_trajectory_csv, protocol_modes, sync_function)
from services.synthesis_service import SynthesisService
from utils.formatters import sanitize
from utils.logger import app_logger
from utils.performance_monitor import performance_monitor
from utils.validators import validate_gains_document

SYNC_ROUND_DIGITS = 4


class ScenarioController:
    """Design / analyze / simulate / reproduce / sweep workflows behind the command line"""

    def __init__(self, out_dir: str = OUTPUT_DIR, dt: Optional[float] = None,
                 horizon: Optional[float] = None, budget: Optional[float] = None):
        self.out_dir = out_dir
        self.overrides = {'dt': dt, 'horizon': horizon, 'budget': budget}

    # Helpers

    def _out(self, filename: str) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        return os.path.join(self.out_dir, filename)

    def _load(self, config_path: str, report: RunReport) -> Tuple[ScenarioConfig, LmiOptions, SimulationOptions]:
        """Parse the scenario, apply overrides and record the effective options in the report"""
        if not config_path:
            raise InvalidConfig("a scenario configuration (--config) is required")
        config = ScenarioConfig.load(config_path).with_overrides(**self.overrides)
        lmi_options = solver_config.get_lmi_options(config.solver)
        sim_options = solver_config.get_simulation_options(config.sim)
        report.details['scenario'] = config.name or os.path.basename(config_path)
        report.details['options'] = {'solver': lmi_options.to_dict(), 'sim': sim_options.to_dict()}
        return config, lmi_options, sim_options

    @staticmethod
    def _load_gains(gains_path: str) -> ProtocolGains:
        if not gains_path:
            raise InvalidConfig("a gains file (--gains) is required")
        try:
            with open(gains_path, 'r') as f:
                doc = json.load(f)
        except OSError as e:
            raise InvalidConfig(f"cannot read gains file {gains_path}: {e}") from e
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"gains file {gains_path} is not valid JSON: {e}") from e
        ok, message = validate_gains_document(doc)
        if not ok:
            raise InvalidConfig(message)
        return ProtocolGains.from_document(doc.get('gains', doc))

    def _write_json(self, filename: str, payload: Dict[str, Any]) -> str:
        path = self._out(filename)
        with open(path, 'w') as f:
            json.dump(sanitize(payload), f, indent=2, allow_nan=False)
        return path

    def _run(self, command: str, body: Callable[[RunReport], None]) -> RunReport:
        """Run a workflow and turn every expected failure into a report status"""
        mark = performance_monitor.mark()
        report = RunReport(command=command)
        try:
            body(report)
        except GcsyncError as e:
            report.status = e.status
            report.reason = str(e) or type(e).__name__
            certificate = getattr(e, 'certificate', None)
            if isinstance(certificate, AnalysisCertificate):
                report.details['certificate'] = certificate.to_dict()
                report.certificate_margins = dict(certificate.margins)
        except Exception as e:
            app_logger.log_error(e, f"Command {command}")
            raise
        report.performance = performance_monitor.get_operation_summary(since=mark)
        report.performance['process'] = performance_monitor.get_current_metrics()
        report.paths['report'] = self._out(f"{command}_report.json")
        report.save(report.paths['report'])
        app_logger.log_command(command, report.status, report.reason)
        return report

    # Commands

    def cmd_design(self, config_path: str) -> RunReport:
        def body(report: RunReport):
            config, lmi_options, _ = self._load(config_path, report)
            report.budget = config.budget
            design = SynthesisService(lmi_options).design(
                config.model, config.topology, config.weights, config.x0, config.budget)
            self._fill_design(report, design)

        return self._run('design', body)

    def _fill_design(self, report: RunReport, design: DesignReport):
        report.gains = design.gains.to_document()
        report.gamma = design.gamma
        report.budget_coefficient = design.budget_coefficient
        report.solver_iterations = design.iterations
        report.certificate_margins = dict(design.margins)
        report.details['certified'] = design.certified
        if design.certificate is not None:
            report.cost_bound = design.certificate.cost_bound
            report.details['certificate'] = design.certificate.to_dict()
        report.paths['gains'] = self._write_json('gains.json', {
            'gains': design.gains.to_document(),
            'gamma': design.gamma,
            'budget': design.budget,
            'budget_coefficient': design.budget_coefficient,
            'certificate_margins': design.margins,
            'design': design.to_dict(),
        })
        if not design.certified:
            report.status = 'infeasible'
            report.reason = (design.certificate.reason if design.certificate and design.certificate.reason
                             else "designed gains did not pass the analysis criterion")

    def cmd_analyze(self, config_path: str, gains_path: str) -> RunReport:
        def body(report: RunReport):
            config, lmi_options, _ = self._load(config_path, report)
            gains = self._load_gains(gains_path)
            report.budget = config.budget
            report.gains = gains.to_document()
            self._fill_analysis(report, SynthesisService(lmi_options).analyze(
                config.model, config.topology, config.weights, gains, config.x0, config.budget))

        return self._run('analyze', body)

    @staticmethod
    def _fill_analysis(report: RunReport, certificate: AnalysisCertificate):
        report.cost_bound = certificate.cost_bound
        report.certificate_margins = dict(certificate.margins)
        report.details['feasible'] = certificate.feasible
        report.details['certificate'] = certificate.to_dict()

    def cmd_simulate(self, config_path: str, gains_path: str) -> RunReport:
        def body(report: RunReport):
            config, _, sim_options = self._load(config_path, report)
            gains = self._load_gains(gains_path)
            report.budget = config.budget
            report.gains = gains.to_document()
            self._simulate(report, config, gains, sim_options)

        return self._run('simulate', body)

    def _simulate(self, report: RunReport, config: ScenarioConfig, gains: ProtocolGains,
                  sim_options: SimulationOptions):
        service = SimulationService(sim_options)
        scenario = service.build_scenario(config.model, config.topology, config.weights, gains,
                                          config.x0, config.phi0)
        trajectory = service.simulate(scenario)
        kind = config.topology.kind
        metrics = error_metrics(trajectory, kind)

        report.final_cost = trajectory.final_cost
        report.final_error_metric = float(metrics[-1])
        report.paths['trajectory'] = export_trajectory_csv(trajectory, self._out('trajectory.csv'))
        report.details.update({
            'initial_error_metric': float(metrics[0]),
            'error_ratio': float(metrics[-1] / metrics[0]) if metrics[0] > 0 else None,
            'horizon': float(trajectory.times[-1]),
            'dt': scenario.dt,
            'within_budget': trajectory.final_cost <= config.budget,
            'budget_guarantee': 'certified' if scenario.budget_certified else 'void',
        })

        if kind == LEADERLESS:
            c = sync_function(config.model, config.x0, trajectory.times, kind, config.topology.agent_count)
            report.paths['sync_function'] = export_sync_function_csv(
                trajectory.times, c, self._out('sync_function.csv'))
            final_states = trajectory.agent_states()[-1]
            report.details['sync_function_t0'] = [round(float(v), SYNC_ROUND_DIGITS) for v in c[0]]
            report.details['sync_error_final'] = float(np.max(np.linalg.norm(final_states - c[-1], axis=1)))
            report.details['sync_norm_final'] = float(np.linalg.norm(c[-1]))
            report.details['agreement_mode_peak'] = float(
                np.max(np.abs(protocol_modes(trajectory, config.topology)[:, 0, :])))
        else:
            leader_phi = trajectory.protocol_states[:, :config.model.n]
            report.details['leader_protocol_zero'] = bool(np.all(leader_phi == 0.0))

        if service.diverged(trajectory, kind):
            report.status = 'diverged'
            report.reason = (f"disagreement grew from {metrics[0]:.4g} to {metrics[-1]:.4g} "
                             f"(more than {sim_options.divergence_ratio:g}x)")

    def cmd_reproduce(self, example_id: str) -> RunReport:
        """Design, analyze and simulate a bundled example end to end"""
        def body(report: RunReport):
            if example_id not in BUNDLED_EXAMPLES:
                raise InvalidConfig(f"unknown example '{example_id}', expected one of {BUNDLED_EXAMPLES}")
            config, lmi_options, sim_options = self._load(scenario_path(example_id), report)
            report.budget = config.budget
            synthesis = SynthesisService(lmi_options)

            design = synthesis.design(config.model, config.topology, config.weights, config.x0, config.budget)
            self._fill_design(report, design)
            if report.status != 'ok':
                return
            try:
                certificate = synthesis.analyze(config.model, config.topology, config.weights, design.gains,
                                                config.x0, config.budget)
            except Infeasible as e:
                report.status, report.reason = 'infeasible', str(e)
                return
            self._fill_analysis(report, certificate)
            self._simulate(report, config, design.gains, sim_options)

            summary = {
                'example': example_id,
                'status': report.status,
                'budget': config.budget,
                'budget_coefficient': report.budget_coefficient,
                'cost_bound': report.cost_bound,
                'final_cost': report.final_cost,
                'cost_chain_holds': (report.final_cost is not None and report.cost_bound is not None
                                     and report.final_cost <= report.cost_bound <= config.budget),
                'initial_error_metric': report.details.get('initial_error_metric'),
                'final_error_metric': report.final_error_metric,
                'error_ratio': report.details.get('error_ratio'),
            }
            if config.topology.kind == LEADERLESS:
                summary['sync_function_t0'] = report.details.get('sync_function_t0')
                summary['sync_error_final'] = report.details.get('sync_error_final')
            else:
                summary['leader_protocol_zero'] = report.details.get('leader_protocol_zero')
            report.paths['summary'] = self._write_json('summary.json', summary)

        return self._run('reproduce', body)

    def cmd_sweep(self, config_path: str) -> RunReport:
        """Smallest budget for which design still succeeds"""
        def body(report: RunReport):
            config, lmi_options, _ = self._load(config_path, report)
            report.budget = config.budget
            minimum = SynthesisService(lmi_options).minimum_budget(
                config.model, config.topology, config.weights, config.x0, upper=config.budget)
            report.details['minimum_budget'] = minimum
            report.details['configured_budget'] = config.budget

        return self._run('sweep', body)
