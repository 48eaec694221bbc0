import logging
import os
import sys
from datetime import datetime
from typing import Optional
import traceback

from config.settings import LOG_DIR, LOG_LEVEL


class ApplicationLogger:
    """Logging system for the synthesis and simulation toolkit"""

    def __init__(self, log_dir: str = LOG_DIR, level: str = LOG_LEVEL):
        self.log_dir = log_dir
        self.level = getattr(logging, level, logging.INFO)
        os.makedirs(log_dir, exist_ok=True)

        # Create loggers
        self.setup_loggers()

    def setup_loggers(self):
        """Setup different loggers for different purposes"""

        # Main application logger
        self.app_logger = logging.getLogger('gcsync')
        self.app_logger.setLevel(self.level)

        # LMI solver logger
        self.solver_logger = logging.getLogger('gcsync.solver')
        self.solver_logger.setLevel(self.level)

        # Design / analysis logger
        self.synthesis_logger = logging.getLogger('gcsync.synthesis')
        self.synthesis_logger.setLevel(self.level)

        # Closed-loop simulation logger
        self.sim_logger = logging.getLogger('gcsync.simulation')
        self.sim_logger.setLevel(self.level)

        # Performance logger
        self.perf_logger = logging.getLogger('gcsync.performance')
        self.perf_logger.setLevel(self.level)

        # Setup handlers for each logger
        if not self.app_logger.handlers:
            self._setup_handlers()

    def _setup_handlers(self):
        """Setup file and console handlers for all loggers"""
        today = datetime.now().strftime('%Y-%m-%d')

        for logger, prefix in ((self.app_logger, 'app'),
                               (self.solver_logger, 'solver'),
                               (self.synthesis_logger, 'synthesis'),
                               (self.sim_logger, 'simulation'),
                               (self.perf_logger, 'performance')):
            handler = logging.FileHandler(os.path.join(self.log_dir, f'{prefix}_{today}.log'))
            handler.setFormatter(self._get_formatter())
            logger.addHandler(handler)

        # Console handler for main logger; child loggers propagate into it
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(self._get_console_formatter())
        console_handler.setLevel(logging.WARNING)
        self.app_logger.addHandler(console_handler)

    def _get_formatter(self):
        """Get detailed formatter for file logs"""
        return logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
        )

    def _get_console_formatter(self):
        """Get simple formatter for console output"""
        return logging.Formatter('%(levelname)s: %(message)s')

    def log_application_start(self, command: str = ""):
        """Log application startup"""
        self.app_logger.info(f"Application started {command}".strip())

    def log_application_stop(self, exit_code: int = 0):
        """Log application shutdown"""
        self.app_logger.info(f"Application stopped - exit code {exit_code}")

    def log_command(self, command: str, status: str, reason: str = ""):
        """Log the outcome of a CLI command"""
        if status == 'ok':
            self.app_logger.info(f"Command {command} - status ok")
        else:
            self.app_logger.warning(f"Command {command} - status {status}: {reason}")

    def log_lmi_solve(self, mode: str, status: str, duration: float, margin: Optional[float] = None,
                      objective: Optional[float] = None):
        """Log one LMI solve"""
        details = f"LMI {mode} - status: {status}, Duration: {duration:.3f}s"
        if margin is not None:
            details += f", margin: {margin:.3e}"
        if objective is not None:
            details += f", objective: {objective:.6g}"
        if status == 'feasible':
            self.solver_logger.info(details)
        else:
            self.solver_logger.warning(details)

    def log_cone_iteration(self, iteration: int, objective: float, coupling: float, trace_product: float):
        """Log one cone complementarity iteration"""
        self.solver_logger.info(
            f"Cone complementarity k={iteration} - objective: {objective:.8g}, "
            f"coupling: {coupling:.3e}, tr(Px Phat_x): {trace_product:.6g}")

    def log_design(self, kind: str, budget: float, gamma: float, iterations: int, certified: bool):
        """Log a finished design run"""
        self.synthesis_logger.info(
            f"Design {kind} - budget: {budget:g}, gamma: {gamma:.6g}, "
            f"iterations: {iterations}, certified: {certified}")

    def log_analysis(self, kind: str, feasible: bool, cost_bound: Optional[float], budget: float):
        """Log an analysis run"""
        if feasible:
            self.synthesis_logger.info(
                f"Analysis {kind} - feasible, cost bound: {cost_bound:.6g} <= budget {budget:g}")
        else:
            self.synthesis_logger.warning(f"Analysis {kind} - no certificate found for budget {budget:g}")

    def log_simulation(self, kind: str, steps: int, dt: float, final_cost: float, final_error: float,
                       duration: float):
        """Log a closed-loop simulation"""
        self.sim_logger.info(
            f"Simulation {kind} - steps: {steps}, dt: {dt:g}, final cost: {final_cost:.6g}, "
            f"final error: {final_error:.3e}, Duration: {duration:.2f}s")

    def log_performance_metric(self, metric_name: str, value: float, unit: str = ""):
        """Log performance metrics"""
        self.perf_logger.info(f"Performance - {metric_name}: {value}{unit}")

    def log_error(self, error: Exception, context: str = ""):
        """Log application errors with full context"""
        error_info = {
            'error_type': type(error).__name__,
            'error_message': str(error),
            'context': context,
            'traceback': traceback.format_exc()
        }

        self.app_logger.error(f"Application error: {error_info}")


# Global logger instance
app_logger = ApplicationLogger()
