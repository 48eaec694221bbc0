"""Guaranteed-cost criteria: assembly, protocol design and analysis of given gains.

The design criterion works on the transformed variables Px, Phat_x, Phat_phi,
Khat_u and needs the coupling Px * Phat_x = I, which the cone complementarity
iteration enforces. The analysis criterion is linear in Px, Pphi once the gains
are fixed. Both are stated only at the smallest and largest nonzero Laplacian
eigenvalues; the interior ones are checked afterwards.
"""

import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from config.solver_config import LmiOptions, solver_config
from models.agent import AgentModel, AnalysisCertificate, CostWeights, DesignReport, ProtocolGains
from models.errors import (AgreementInitialStates, BadSpectrum, BudgetTooSmall, InvalidConfig,
                           Infeasible, NotConverged, ShapeMismatch, Singular, Step1Infeasible)
from models.lmi import MAX_ITERATIONS, AffineBlock, BlockBuilder, LmiProblem, MatVar, Sense
from models.topology import LEADERLESS, Spectrum, Topology, relationship_matrix
from models.topology import spectrum as laplacian_spectrum
from services.lmi_service import LmiSolver
from utils import numkit
from utils.logger import app_logger
from utils.performance_monitor import performance_monitor

AGREEMENT_TOL = 1e-9
COEFFICIENT_FLOOR = 1e-12

BUDGET_BLOCK = 'budget'
COUPLING_BLOCK = 'coupling'


def stack_states(x0, agent_count: int, n: int) -> np.ndarray:
    """Return initial states as an (N, n) array, one agent per row"""
    states = np.asarray(x0, dtype=float)
    if states.size != agent_count * n:
        raise ShapeMismatch(f"expected {agent_count}x{n} initial state entries, got {states.size}")
    states = states.reshape(agent_count, n)
    if not np.all(np.isfinite(states)):
        raise InvalidConfig("initial states contain non-finite entries")
    return states


def budget_coefficient(x0, kind: str, agent_count: int) -> float:
    """x0^T (M kron I_n) x0 with M the relationship matrix of the topology kind"""
    states = np.asarray(x0, dtype=float).reshape(agent_count, -1)
    if kind == LEADERLESS:
        spread = np.max(np.linalg.norm(states - states.mean(axis=0), axis=1))
    else:
        spread = np.max(np.linalg.norm(states[1:] - states[0], axis=1))
    if spread < AGREEMENT_TOL:
        raise AgreementInitialStates("initial states already agree; the budget relation is undefined")

    m = relationship_matrix(kind, agent_count)
    coefficient = float(np.trace(states.T @ m @ states))
    if coefficient <= COEFFICIENT_FLOOR:
        raise AgreementInitialStates(f"budget coefficient {coefficient:.3e} is not positive")
    return coefficient


def cost_bound(x0, kind: str, agent_count: int, px: np.ndarray) -> float:
    """x0^T (M kron Px) x0"""
    states = np.asarray(x0, dtype=float).reshape(agent_count, -1)
    return float(np.trace(px @ cost_weight(states, kind, agent_count)))


def cost_weight(states: np.ndarray, kind: str, agent_count: int) -> np.ndarray:
    """W = X^T M X, so that the cost bound equals tr(Px W)"""
    w = states.T @ relationship_matrix(kind, agent_count) @ states
    return numkit.symmetrize(w)


def _budget_block(n: int, gamma: float) -> AffineBlock:
    builder = BlockBuilder(BUDGET_BLOCK, [n], Sense.NEGATIVE_SEMIDEFINITE)
    builder.add(0, 0, 'Px', (n, n))
    builder.add_constant(0, 0, -gamma * np.eye(n))
    return builder.build()


def _positivity_block(name: str, n: int) -> AffineBlock:
    builder = BlockBuilder(f"{name}_positive", [n], Sense.POSITIVE_DEFINITE)
    builder.add(0, 0, name, (n, n))
    return builder.build()


def _check_spectrum(spectrum: Spectrum, gamma: float):
    if not spectrum.lambda2 > 0:
        raise BadSpectrum(f"lambda2 = {spectrum.lambda2:.3e} must be positive")
    if not (gamma > 0 and math.isfinite(gamma)):
        raise InvalidConfig(f"gamma = {gamma} must be positive")


def _eigenvalue_labels(spectrum: Spectrum) -> Tuple[Tuple[str, float], ...]:
    return (('xi_lambda_2', spectrum.lambda2), ('xi_lambda_N', spectrum.lambdaN))


def assemble_design(model: AgentModel, spectrum: Spectrum, weights: CostWeights, gamma: float) -> LmiProblem:
    """
    Design criterion over Px, Phat_x, Phat_phi (symmetric) and Khat_u (m x n)

    Blocks: budget Px <= gamma I, one Schur-augmented (2n+m) block at each of
    lambda2 and lambdaN, the coupling [[Px, I], [I, Phat_x]] >= 0 and positivity
    of the three symmetric variables.
    """
    _check_spectrum(spectrum, gamma)
    n, m = model.n, model.m
    a, b, c = model.A, model.B, model.C
    ctc = c.T @ c

    blocks = [_budget_block(n, gamma)]
    for name, lam in _eigenvalue_labels(spectrum):
        builder = BlockBuilder(name, [n, n, m], Sense.NEGATIVE_DEFINITE)
        builder.add_sym(0, 'Phat_phi', (n, n), left=a)
        builder.add_sym(0, 'Khat_u', (m, n), left=b)
        builder.add(0, 1, 'Phat_x', (n, n), right=ctc, scale=-lam)
        builder.add(0, 2, 'Khat_u', (m, n), right=weights.R, transpose=True)
        builder.add_sym(1, 'Px', (n, n), right=a)
        builder.add_constant(1, 1, 2.0 * lam * (weights.Q - ctc))
        builder.add_constant(2, 2, -weights.R)
        blocks.append(builder.build())

    coupling = BlockBuilder(COUPLING_BLOCK, [n, n], Sense.POSITIVE_SEMIDEFINITE)
    coupling.add(0, 0, 'Px', (n, n))
    coupling.add(1, 1, 'Phat_x', (n, n))
    coupling.add_constant(0, 1, np.eye(n))
    blocks.append(coupling.build())

    blocks += [_positivity_block(name, n) for name in ('Px', 'Phat_x', 'Phat_phi')]
    variables = [MatVar('Px', (n, n)), MatVar('Phat_x', (n, n)), MatVar('Phat_phi', (n, n)),
                 MatVar('Khat_u', (m, n), symmetric=False)]
    return LmiProblem(variables=variables, blocks=blocks)


def analysis_block(model: AgentModel, weights: CostWeights, gains: ProtocolGains, lam: float,
                   name: str) -> AffineBlock:
    """Criterion block for given gains at one Laplacian eigenvalue, over Px and Pphi"""
    n, m = model.n, model.m
    closed = model.A + model.B @ gains.Ku
    builder = BlockBuilder(name, [n, n, m], Sense.NEGATIVE_DEFINITE)
    builder.add_sym(0, 'Pphi', (n, n), right=closed)
    builder.add(0, 1, 'Pphi', (n, n), right=gains.Kphi @ model.C, scale=lam)
    builder.add_constant(0, 2, gains.Ku.T @ weights.R)
    builder.add_sym(1, 'Px', (n, n), right=model.A + lam * gains.Kphi @ model.C)
    builder.add_constant(1, 1, 2.0 * lam * weights.Q)
    builder.add_constant(2, 2, -weights.R)
    return builder.build()


def assemble_analysis(model: AgentModel, spectrum: Spectrum, weights: CostWeights, gains: ProtocolGains,
                      gamma: float) -> LmiProblem:
    _check_spectrum(spectrum, gamma)
    n = model.n
    blocks = [_budget_block(n, gamma)]
    blocks += [analysis_block(model, weights, gains, lam, name.replace('xi', 'theta'))
               for name, lam in _eigenvalue_labels(spectrum)]
    blocks += [_positivity_block(name, n) for name in ('Px', 'Pphi')]
    return LmiProblem(variables=[MatVar('Px', (n, n)), MatVar('Pphi', (n, n))], blocks=blocks)


def gain_extraction(khat_u: np.ndarray, phat_phi: np.ndarray, phat_x: np.ndarray,
                    c: np.ndarray) -> ProtocolGains:
    """Ku = Khat_u Phat_phi^-1 and Kphi = -Phat_x C^T"""
    # Phat_phi is symmetric, so Ku^T = Phat_phi^-1 Khat_u^T
    ku = numkit.solve(phat_phi, np.asarray(khat_u).T).T
    return ProtocolGains(Ku=ku, Kphi=-np.asarray(phat_x) @ np.asarray(c).T)


def spectrum_margins(model: AgentModel, weights: CostWeights, gains: ProtocolGains, spectrum: Spectrum,
                     px: np.ndarray, pphi: np.ndarray) -> Dict[str, float]:
    """Largest eigenvalue of the analysis block at every nonzero Laplacian eigenvalue"""
    margins = {}
    for k, lam in enumerate(spectrum.nonzero, start=2):
        block = analysis_block(model, weights, gains, float(lam), f"theta_lambda_{k}")
        _, largest = LmiSolver.evaluate(block, {'Px': px, 'Pphi': pphi})
        margins[f"lambda_{k}"] = largest
    return margins


class SynthesisService:
    """Runs design and analysis for one set of solver options"""

    def __init__(self, options: Optional[LmiOptions] = None):
        self.options = options or solver_config.get_lmi_options()
        self.solver = LmiSolver(self.options)

    def _prepare(self, model: AgentModel, topology: Topology, weights: CostWeights, x0,
                 budget: float) -> Tuple[Spectrum, np.ndarray, float, float]:
        weights.check_against(model)
        if not (budget > 0 and math.isfinite(budget)):
            raise InvalidConfig(f"budget must be positive, got {budget}")
        states = stack_states(x0, topology.agent_count, model.n)
        spectrum = laplacian_spectrum(topology)
        coefficient = budget_coefficient(states, topology.kind, topology.agent_count)
        return spectrum, states, coefficient, budget / coefficient

    def design(self, model: AgentModel, topology: Topology, weights: CostWeights, x0, budget: float,
               progress: Optional[Callable[[int, Dict[str, float]], None]] = None) -> DesignReport:
        """
        Synthesize protocol gains whose cost stays below ``budget``

        Raises:
            BudgetTooSmall: the criterion is infeasible only because of the budget block
            Infeasible: the criterion is infeasible for any budget
            NotConverged: the coupling did not close within max_iters
        """
        spectrum, states, coefficient, gamma = self._prepare(model, topology, weights, x0, budget)
        problem = assemble_design(model, spectrum, weights, gamma)

        def verifier(assignment) -> bool:
            try:
                gains = gain_extraction(assignment['Khat_u'], assignment['Phat_phi'], assignment['Phat_x'],
                                        model.C)
                return self._certify(model, spectrum, weights, gains, states, topology, budget, gamma,
                                     tighten=False).feasible
            except (Singular, Infeasible):
                return False

        with performance_monitor.track('design'):
            try:
                result = self.solver.cone_complementarity(problem, ('Px', 'Phat_x'), verifier, progress)
            except Step1Infeasible as e:
                if e.result is not None and not self.solver.proves_infeasible(e.result):
                    raise Infeasible(
                        f"initial feasibility answer could not be certified "
                        f"(solver status {e.result.solver_status}, margin {e.result.margin})") from e
                relaxed = self.solver.solve_feasibility(problem.without_blocks(BUDGET_BLOCK))
                if relaxed.feasible:
                    raise BudgetTooSmall(
                        f"budget {budget:g} cannot supply enough energy (gamma = {gamma:.3e}); "
                        f"the criterion holds once the budget block is dropped") from e
                raise Infeasible("design criterion is infeasible for every budget") from e

        if result.status == MAX_ITERATIONS:
            raise NotConverged(
                f"coupling not closed after {result.iterations} iterations "
                f"(||Px Phat_x - I||_F = {result.history[-1]['coupling']:.3e})")

        a = result.assignment
        gains = gain_extraction(a['Khat_u'], a['Phat_phi'], a['Phat_x'], model.C)
        try:
            certificate = self.analyze(model, topology, weights, gains, states, budget)
        except Infeasible as e:
            certificate = e.certificate
        certified = bool(certificate is not None and certificate.feasible)

        app_logger.log_design(topology.kind, budget, gamma, result.iterations, certified)
        return DesignReport(gains=gains, Px=a['Px'], Phat_x=a['Phat_x'], Phat_phi=a['Phat_phi'],
                            Khat_u=a['Khat_u'], gamma=gamma, budget=budget, budget_coefficient=coefficient,
                            iterations=result.iterations, certified=certified, margins=result.margins,
                            certificate=certificate, history=result.history)

    def analyze(self, model: AgentModel, topology: Topology, weights: CostWeights, gains: ProtocolGains,
                x0, budget: float) -> AnalysisCertificate:
        """
        Certify given gains against the budget

        Raises:
            Infeasible: no certificate found (not a proof that the gains fail);
                the exception carries the best-effort certificate
        """
        gains.check_against(model)
        spectrum, states, _, gamma = self._prepare(model, topology, weights, x0, budget)
        with performance_monitor.track('analyze'):
            certificate = self._certify(model, spectrum, weights, gains, states, topology, budget, gamma,
                                        tighten=True)
        app_logger.log_analysis(topology.kind, certificate.feasible, certificate.cost_bound, budget)
        return certificate

    def _certify(self, model, spectrum, weights, gains, states, topology, budget, gamma,
                 tighten: bool) -> AnalysisCertificate:
        problem = assemble_analysis(model, spectrum, weights, gains, gamma)
        result = self.solver.solve_feasibility(problem)
        if not result.feasible:
            raise Infeasible("analysis criterion has no certified solution", certificate=AnalysisCertificate(
                feasible=False, budget=budget, margins=result.margins,
                reason="no certified solution of the analysis criterion"))

        assignment = result.assignment
        if tighten:
            weight = cost_weight(states, topology.kind, topology.agent_count)
            tightened = self.solver.solve_min_trace(problem.with_objective([(weight, 'Px')]), fallback=assignment)
            assignment = tightened.assignment
            result = tightened

        px, pphi = assignment['Px'], assignment['Pphi']
        bound = cost_bound(states, topology.kind, topology.agent_count, px)
        certificate = AnalysisCertificate(
            feasible=bound <= budget, budget=budget, cost_bound=bound, Px=px, Pphi=pphi,
            margins=result.margins,
            spectrum_margins=spectrum_margins(model, weights, gains, spectrum, px, pphi))
        if not certificate.feasible:
            certificate.reason = f"cost bound {bound:.6g} exceeds budget {budget:g}"
            raise Infeasible(certificate.reason, certificate=certificate)
        return certificate

    def minimum_budget(self, model: AgentModel, topology: Topology, weights: CostWeights, x0,
                       lower: Optional[float] = None, upper: Optional[float] = None,
                       rel_tol: float = 0.05, max_doublings: int = 12) -> float:
        """
        Smallest budget (to ``rel_tol``) for which design returns certified gains

        Bisects geometrically between a failing ``lower`` and a succeeding ``upper``.
        """
        states = stack_states(x0, topology.agent_count, model.n)
        coefficient = budget_coefficient(states, topology.kind, topology.agent_count)
        upper = upper if upper is not None else coefficient
        lower = lower if lower is not None else upper * 1e-6

        def succeeds(budget: float) -> bool:
            try:
                return self.design(model, topology, weights, states, budget).certified
            except (BudgetTooSmall, Infeasible, NotConverged):
                return False

        for _ in range(max_doublings):
            if succeeds(upper):
                break
            lower, upper = upper, upper * 2.0
        else:
            raise BudgetTooSmall(f"design fails for every budget up to {upper:g}")

        if succeeds(lower):
            return lower
        while upper / lower - 1.0 > rel_tol:
            middle = math.sqrt(lower * upper)
            if succeeds(middle):
                upper = middle
            else:
                lower = middle
            app_logger.synthesis_logger.info(f"Budget bisection: [{lower:.6g}, {upper:.6g}]")
        return upper
