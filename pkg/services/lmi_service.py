"""LMI feasibility, linear minimization and the cone complementarity iteration.

Problems are modelled with cvxpy and solved by an interior-point conic solver.
Nothing the solver returns is trusted: every assignment is re-assembled and
checked block by block through ``numkit.is_pd`` before it is reported feasible.
A block that misses its threshold only by solver accuracy gets its solve level
raised and the problem is solved again; the next backend is tried when that
does not help.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import cvxpy as cp
import numpy as np

from config.solver_config import LmiOptions, solver_config
from models.errors import MissingVariable, NoFeasibleStart, ShapeMismatch, Step1Infeasible
from models.lmi import (AffineBlock, FEASIBLE, INFEASIBLE_BEST_EFFORT, MAX_ITERATIONS,
                        FeasibilityResult, LmiProblem)
from utils import numkit
from utils.logger import app_logger
from utils.performance_monitor import performance_monitor

Assignment = Dict[str, np.ndarray]
SOLVED = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
PROVEN_INFEASIBLE = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)


@dataclass
class _Attempt:
    status: str
    assignment: Optional[Assignment] = None
    margins: Dict[str, float] = field(default_factory=dict)
    certified: bool = False
    shift: Optional[float] = None


def _describe(deficits: Dict[str, float]) -> str:
    return ", ".join(f"{name} by {deficit:.2e}" for name, deficit in
                     sorted(deficits.items(), key=lambda item: -item[1]))


class LmiSolver:
    """Solves LmiProblem instances; one solver instance per sequence of related solves"""

    def __init__(self, options: Optional[LmiOptions] = None):
        self.options = options or solver_config.get_lmi_options()

    # Evaluation and certification

    @staticmethod
    def evaluate(block: AffineBlock, assignment: Assignment) -> Tuple[np.ndarray, float]:
        """
        Assemble a block at an assignment

        Returns:
            (symmetric matrix, extreme eigenvalue) where the eigenvalue is the
            largest one for negative senses and the smallest one for positive senses
        """
        for term in block.terms:
            if term.var not in assignment:
                raise MissingVariable(f"block {block.name}: no value for variable {term.var}")
            value = np.asarray(assignment[term.var], dtype=float)
            expected = (term.left.shape[1], term.right.shape[0])
            if (value.T if term.transpose else value).shape != expected:
                raise ShapeMismatch(
                    f"block {block.name}: variable {term.var} has shape {value.shape}, expected "
                    f"{expected[::-1] if term.transpose else expected}")
        matrix = block.assemble(assignment)
        values = numkit.eigvalsh(matrix)
        return matrix, float(values[-1] if block.sense.negative else values[0])

    def threshold(self, block: AffineBlock) -> float:
        """Slack a block has to exceed: the margin when strict, minus the PSD tolerance otherwise"""
        return self.options.margin if block.sense.strict else -self.options.psd_tolerance

    def certify(self, problem: LmiProblem, assignment: Assignment) -> Tuple[bool, Dict[str, float]]:
        """
        Re-check every block through ``numkit.is_pd``

        Returns:
            (all blocks pass, extreme eigenvalue of every block)
        """
        margins = {}
        satisfied = True
        for block in problem.blocks:
            matrix, extreme = self.evaluate(block, assignment)
            signed = -matrix if block.sense.negative else matrix
            report = numkit.is_pd(signed, margin=self.threshold(block))
            margins[block.name] = extreme
            satisfied = satisfied and report.positive
        return satisfied, margins

    def failing_blocks(self, problem: LmiProblem, margins: Dict[str, float]) -> Dict[str, float]:
        """Shortfall of every block whose slack does not clear its threshold"""
        deficits = {}
        for block in problem.blocks:
            deficit = self.threshold(block) - block.sense.slack(margins[block.name])
            if deficit >= 0:
                deficits[block.name] = deficit
        return deficits

    def proves_infeasible(self, result: FeasibilityResult) -> bool:
        """True when the solver itself found no point, not merely an answer that failed to certify"""
        if result.feasible:
            return False
        if result.solver_status in PROVEN_INFEASIBLE:
            return True
        return result.margin is not None and result.margin < self.options.margin

    def backtrack(self, problem: LmiProblem, start: Assignment, target: Assignment,
                  value: Optional[Callable[[Assignment], float]] = None) -> Optional[Assignment]:
        """
        Longest certified step from ``start`` toward ``target``

        Tries ``start + s (target - start)`` for s = 1/2, 1/4, ... and returns the
        first point that certifies and whose ``value`` does not exceed the value
        at ``start``; None when no step qualifies.
        """
        ceiling = value(start) if value is not None else None
        step = 1.0
        for _ in range(self.options.backtrack_steps):
            step *= 0.5
            point = {name: start[name] + step * (target[name] - start[name]) for name in start}
            certified, _ = self.certify(problem, point)
            if certified and (value is None or value(point) <= ceiling):
                app_logger.solver_logger.info(f"Backtracked to step {step:g} toward the rejected answer")
                return point
        return None

    # cvxpy modelling

    @staticmethod
    def _declare(problem: LmiProblem) -> Dict[str, cp.Variable]:
        return {var.name: cp.Variable(var.shape, symmetric=var.symmetric, name=var.name)
                for var in problem.variables}

    @staticmethod
    def _expression(block: AffineBlock, variables: Dict[str, cp.Variable]):
        expr = block.constant
        for term in block.terms:
            v = variables[term.var]
            expr = expr + term.scale * (term.left @ (v.T if term.transpose else v) @ term.right)
        return (expr + expr.T) / 2

    def _solve_level(self, block: AffineBlock) -> float:
        return self.options.solve_margin if block.sense.strict else self.options.solve_psd_level

    @staticmethod
    def _levels(problem: LmiProblem, base: Callable[[AffineBlock], float]) -> Dict[str, cp.Parameter]:
        levels = {}
        for block in problem.blocks:
            level = cp.Parameter(nonneg=True, name=f"level_{block.name}")
            level.value = base(block)
            levels[block.name] = level
        return levels

    def _constraints(self, problem: LmiProblem, variables: Dict[str, cp.Variable],
                     levels: Dict[str, cp.Parameter], shift: Optional[cp.Variable] = None) -> List:
        """Each block kept ``level`` (plus ``shift`` for strict blocks) inside its sense"""
        constraints = []
        for block in problem.blocks:
            sym = self._expression(block, variables)
            eye = np.eye(block.size)
            level = levels[block.name]
            if shift is not None and block.sense.strict:
                level = level + shift
            if block.sense.negative:
                constraints.append(sym << -level * eye)
            else:
                constraints.append(sym >> level * eye)
        return constraints

    def _regularization(self, variables: Dict[str, cp.Variable], names):
        if not names or self.options.regularization <= 0:
            return 0.0
        return self.options.regularization * sum(cp.norm(variables[name], 'fro') for name in names)

    def _backends(self) -> List[str]:
        installed = set(cp.installed_solvers())
        backends = [self.options.backend]
        if 'SCS' not in backends:
            backends.append('SCS')
        return [backend for backend in backends if backend in installed]

    @staticmethod
    def _solve_with(cp_problem: cp.Problem, backend: str) -> str:
        try:
            cp_problem.solve(solver=backend)
        except cp.SolverError as e:
            app_logger.solver_logger.warning(f"Backend {backend} failed: {e}")
            return 'solver_error'
        return cp_problem.status

    @staticmethod
    def _values(variables: Dict[str, cp.Variable]) -> Optional[Assignment]:
        values = {}
        for name, var in variables.items():
            if var.value is None:
                return None
            value = np.array(var.value, dtype=float)
            values[name] = numkit.symmetrize(value) if var.is_symmetric() else value
        return values

    @staticmethod
    def _common_margin(problem: LmiProblem, levels: Dict[str, cp.Parameter],
                       shift: Optional[cp.Variable]) -> Optional[float]:
        """Margin every strict block is guaranteed by the solved constraints"""
        if shift is None or shift.value is None:
            return None
        strict = [float(levels[block.name].value) for block in problem.blocks if block.sense.strict]
        return float(shift.value) + min(strict, default=0.0)

    def _solve_certified(self, label: str, cp_problem: cp.Problem, problem: LmiProblem,
                         variables: Dict[str, cp.Variable], levels: Dict[str, cp.Parameter],
                         shift: Optional[cp.Variable] = None) -> _Attempt:
        """
        Solve until the answer certifies

        After a failed certification the level of every failing block is raised past
        its shortfall and the problem is solved again, up to ``certify_retries`` times
        per backend. Raised levels persist for later solves of the same model. When no
        backend returns a point at all, semidefinite blocks drop to level zero for one
        more round.
        """
        attempt = self._certify_rounds(label, cp_problem, problem, variables, levels, shift)
        relaxable = [block.name for block in problem.blocks
                     if not block.sense.strict and levels[block.name].value > 0]
        if attempt.assignment is None and relaxable:
            app_logger.solver_logger.info(f"{label}: no answer with semidefinite headroom; solving without it")
            for name in relaxable:
                levels[name].value = 0.0
            attempt = self._certify_rounds(label, cp_problem, problem, variables, levels, shift)
        return attempt

    def _certify_rounds(self, label: str, cp_problem: cp.Problem, problem: LmiProblem,
                        variables: Dict[str, cp.Variable], levels: Dict[str, cp.Parameter],
                        shift: Optional[cp.Variable]) -> _Attempt:
        attempt = _Attempt(status='solver_error')
        for backend in self._backends():
            for _ in range(self.options.certify_retries + 1):
                status = self._solve_with(cp_problem, backend)
                assignment = self._values(variables) if status in SOLVED else None
                if assignment is None:
                    if attempt.assignment is None:
                        attempt = _Attempt(status=status)
                    break
                certified, margins = self.certify(problem, assignment)
                attempt = _Attempt(status, assignment, margins, certified,
                                   self._common_margin(problem, levels, shift))
                if certified:
                    return attempt
                if attempt.shift is not None and attempt.shift < self.options.margin:
                    # the maximized margin itself is short; raising levels cannot help
                    return attempt
                deficits = self.failing_blocks(problem, margins)
                for block in problem.blocks:
                    if block.name in deficits:
                        level = levels[block.name]
                        level.value = max(2.0 * level.value, level.value + 2.0 * deficits[block.name],
                                          self._solve_level(block))
                app_logger.solver_logger.info(
                    f"{label}: {backend} answer failed certification ({_describe(deficits)}); "
                    f"re-solving with raised levels")
        return attempt

    # Public operations

    def solve_feasibility(self, problem: LmiProblem) -> FeasibilityResult:
        """
        Maximize the common margin t of all strict blocks

        The problem is feasible when the re-assembled blocks pass ``certify``.
        Semidefinite blocks are solved ``psd_headroom * psd_tolerance`` inside their cone.
        """
        start = time.perf_counter()
        variables = self._declare(problem)
        t = cp.Variable(name='margin')
        levels = self._levels(problem, lambda block: 0.0 if block.sense.strict else self.options.solve_psd_level)
        constraints = self._constraints(problem, variables, levels, shift=t) + [t <= self.options.margin_cap]
        objective = cp.Maximize(t - self._regularization(variables, list(variables)))

        with performance_monitor.track('lmi_feasibility'):
            attempt = self._solve_certified('feasibility', cp.Problem(objective, constraints), problem,
                                            variables, levels, shift=t)

        result = FeasibilityResult(status=FEASIBLE if attempt.certified else INFEASIBLE_BEST_EFFORT,
                                   assignment=attempt.assignment or {}, margins=attempt.margins,
                                   margin=attempt.shift, solver_status=attempt.status)
        app_logger.log_lmi_solve('feasibility', result.status, time.perf_counter() - start, margin=result.margin)
        return result

    def solve_min_trace(self, problem: LmiProblem, fallback: Optional[Assignment] = None) -> FeasibilityResult:
        """
        Minimize the problem's linear objective over the feasible set

        Args:
            problem: Problem with a trace objective
            fallback: Certified feasible point; returned instead of the solver's
                answer when that answer does not improve on it and no certified
                step toward it does either

        Returns:
            FeasibilityResult whose objective is no larger than the fallback's
        """
        if fallback is None:
            start_point = self.solve_feasibility(problem)
            if not start_point.feasible:
                raise NoFeasibleStart("no feasible starting point for the trace minimization")
            fallback = start_point.assignment
        return _MinTraceModel(self, problem).solve([coef for coef, _ in problem.objective], fallback)

    def cone_complementarity(self, p_core: LmiProblem, coupling: Tuple[str, str],
                             verifier: Optional[Callable[[Assignment], bool]] = None,
                             progress: Optional[Callable[[int, Dict[str, float]], None]] = None
                             ) -> FeasibilityResult:
        """
        Cone complementarity linearization for the coupling ``Px * Phat_x = I``

        Args:
            p_core: Problem containing the Schur coupling block [[Px, I], [I, Phat_x]] >= 0
            coupling: Names of the two coupled n x n symmetric variables
            verifier: Optional acceptance test run on every iterate; a True answer stops
                the iteration successfully
            progress: Optional callback receiving (iteration, history entry)

        Returns:
            FeasibilityResult with status feasible (stop test met) or max_iterations
        """
        name_x, name_hat = coupling
        n = p_core.variable(name_x).shape[0]

        step1 = self.solve_feasibility(p_core)
        if not step1.feasible:
            raise Step1Infeasible("initial LMI feasibility check failed", result=step1)

        current = step1.assignment
        previous = current
        history: List[Dict[str, float]] = []

        def record(k: int, point: Assignment, objective: float) -> Dict[str, float]:
            product = point[name_x] @ point[name_hat]
            entry = {
                'iteration': k,
                'objective': float(objective),
                'trace_product': float(np.trace(product)),
                'coupling': float(np.linalg.norm(product - np.eye(n), 'fro')),
            }
            history.append(entry)
            app_logger.log_cone_iteration(k, entry['objective'], entry['coupling'], entry['trace_product'])
            if progress is not None:
                progress(k, entry)
            return entry

        def converged(entry: Dict[str, float], point: Assignment) -> bool:
            if entry['coupling'] < self.options.delta:
                return True
            return verifier is not None and bool(verifier(point))

        entry = record(0, current, 2.0 * np.trace(current[name_x] @ current[name_hat]))
        if converged(entry, current):
            return self._finish(p_core, FEASIBLE, current, entry, history)

        model = _MinTraceModel(self, p_core.with_objective([
            (np.eye(n), name_x), (np.eye(n), name_hat)]))
        for k in range(1, self.options.max_iters + 1):
            # tr(Px Y_k + X_k Phat_x) linearized at the current iterate
            coefs = [current[name_hat], current[name_x]]
            result = model.solve(coefs, fallback=previous)
            previous, current = current, result.assignment
            last_objective = entry['objective']
            entry = record(k, current, result.objective_value)
            if entry['objective'] > last_objective + self.options.monotone_slack * max(1.0, abs(last_objective)):
                app_logger.solver_logger.warning(
                    f"Cone complementarity objective rose at iteration {k}: "
                    f"{last_objective:.9g} -> {entry['objective']:.9g}")
            if converged(entry, current):
                return self._finish(p_core, FEASIBLE, current, entry, history)

        return self._finish(p_core, MAX_ITERATIONS, current, entry, history)

    def _finish(self, problem: LmiProblem, status: str, assignment: Assignment, entry: Dict[str, float],
                history: List[Dict[str, float]]) -> FeasibilityResult:
        _, margins = self.certify(problem, assignment)
        return FeasibilityResult(status=status, assignment=assignment, margins=margins,
                                 objective_value=entry['objective'], iterations=entry['iteration'],
                                 history=history)


class _MinTraceModel:
    """Compiled trace minimization whose objective coefficients and block levels are cvxpy parameters"""

    def __init__(self, solver: LmiSolver, problem: LmiProblem):
        self.solver = solver
        self.problem = problem
        self.variables = solver._declare(problem)
        self.parameters = []
        objective = 0.0
        for coef, name in problem.objective:
            param = cp.Parameter(np.shape(coef), name=f"C_{name}_{len(self.parameters)}")
            self.parameters.append(param)
            objective = objective + cp.trace(param @ self.variables[name])
        in_objective = {name for _, name in problem.objective}
        objective = objective + solver._regularization(
            self.variables, [name for name in self.variables if name not in in_objective])
        self.levels = solver._levels(problem, solver._solve_level)
        constraints = solver._constraints(problem, self.variables, self.levels)
        self.cp_problem = cp.Problem(cp.Minimize(objective), constraints)

    def solve(self, coefs: List[np.ndarray], fallback: Assignment) -> FeasibilityResult:
        start = time.perf_counter()
        for param, coef in zip(self.parameters, coefs):
            param.value = np.asarray(coef, dtype=float)

        def value_of(point: Assignment) -> float:
            return float(sum(np.trace(np.asarray(c) @ point[name])
                             for c, (_, name) in zip(coefs, self.problem.objective)))

        with performance_monitor.track('lmi_min_trace'):
            attempt = self.solver._solve_certified('min_trace', self.cp_problem, self.problem,
                                                   self.variables, self.levels)

        log = app_logger.solver_logger
        chosen = fallback
        if attempt.assignment is None:
            log.warning(f"Trace minimization returned no answer ({attempt.status}); kept the fallback point")
        elif attempt.certified:
            if value_of(attempt.assignment) <= value_of(fallback):
                chosen = attempt.assignment
            else:
                log.info("Certified answer does not improve on the fallback point; kept the fallback")
        else:
            deficits = self.solver.failing_blocks(self.problem, attempt.margins)
            log.warning(f"Trace minimization answer rejected ({_describe(deficits)})")
            stepped = self.solver.backtrack(self.problem, fallback, attempt.assignment, value_of)
            if stepped is not None:
                chosen = stepped
            else:
                log.warning("No certified step toward the rejected answer; kept the fallback point")

        _, margins = self.solver.certify(self.problem, chosen)
        objective = value_of(chosen)
        app_logger.log_lmi_solve('min_trace', FEASIBLE, time.perf_counter() - start, objective=objective)
        return FeasibilityResult(status=FEASIBLE, assignment=chosen, margins=margins, objective_value=objective,
                                 solver_status=attempt.status)
