"""Closed-loop network simulation with online cost accumulation.

The stacked state is z = [x; phi] with x, phi of length N*n, agent-major.
The network is linear time-invariant, so one classical RK4 step equals
multiplication by the degree-4 Taylor polynomial of h*M; the running cost is
integrated as an extra RK4 state on the same stages.
"""

import time
from typing import Optional, Tuple

import numpy as np

from config.solver_config import SimulationOptions, solver_config
from models.agent import AgentModel, CostWeights, ProtocolGains
from models.errors import NumericalBlowup, ShapeMismatch
from models.scenario import Scenario, Trajectory
from models.topology import LEADERLESS, Topology, laplacian, pairwise_weight_matrix, spectrum
from utils import numkit
from utils.logger import app_logger
from utils.performance_monitor import performance_monitor

COST_CHUNK = 4096


def closed_loop_matrix(scenario: Scenario) -> np.ndarray:
    """M with z' = M z"""
    model, gains = scenario.model, scenario.gains
    lap = laplacian(scenario.topology)
    eye = np.eye(scenario.topology.agent_count)
    bku = model.B @ gains.Ku
    coupling = np.kron(lap, gains.Kphi @ model.C)
    return np.block([
        [np.kron(eye, model.A), np.kron(eye, bku)],
        [-coupling, np.kron(eye, model.A + bku) + coupling],
    ])


def derivative(scenario: Scenario, x: np.ndarray, phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Agent and protocol state derivatives, evaluated agent by agent"""
    agents, n = scenario.topology.agent_count, scenario.model.n
    x, phi = np.asarray(x, dtype=float), np.asarray(phi, dtype=float)
    if x.size != agents * n or phi.size != agents * n:
        raise ShapeMismatch(f"x and phi must have {agents * n} entries")
    model, gains = scenario.model, scenario.gains
    xs, ps = x.reshape(agents, n), phi.reshape(agents, n)
    bku = model.B @ gains.Ku
    kc = gains.Kphi @ model.C

    dx = xs @ model.A.T + ps @ bku.T
    dphi = ps @ (model.A + bku).T + laplacian(scenario.topology) @ (ps - xs) @ kc.T
    return dx.ravel(), dphi.ravel()


def incidence_matrix(topology: Topology) -> np.ndarray:
    """One row per arc, +sqrt(w) at the receiver and -sqrt(w) at the sender"""
    arcs = list(topology.arcs())
    d = np.zeros((len(arcs), topology.agent_count))
    for row, (receiver, sender, w) in enumerate(arcs):
        root = np.sqrt(w)
        d[row, receiver - 1] = root
        d[row, sender - 1] = -root
    return d


def cost_factors(topology: Topology, weights: CostWeights, gains: ProtocolGains) -> Tuple[np.ndarray, np.ndarray]:
    """
    Square-root factors F_u, F_xphi of the stacked state z = [x; phi]

    Ju = |F_u z|^2 and Jxphi = |F_xphi z|^2, so both terms stay non-negative
    under roundoff even when the agreement component of z is large.
    """
    agents = topology.agent_count
    n = gains.Ku.shape[1]
    size = agents * n
    r_root = np.linalg.cholesky(weights.R).T
    q_root = np.linalg.cholesky(weights.Q).T

    f_u = np.zeros((agents * r_root.shape[0], 2 * size))
    f_u[:, size:] = np.kron(np.eye(agents), r_root @ gains.Ku)

    d = np.kron(incidence_matrix(topology), q_root)
    f_x = np.hstack((-d, d))
    return f_u, f_x


def cost_terms(x: np.ndarray, phi: np.ndarray, topology: Topology, weights: CostWeights,
               gains: ProtocolGains) -> Tuple[float, float]:
    """
    Instantaneous (Ju, Jxphi)

    Ju = phi^T (I kron Ku^T R Ku) phi and Jxphi = (phi - x)^T (G kron Q) (phi - x)
    with G the pairwise weight matrix (2L for the leaderless kind).
    """
    x, phi = np.asarray(x, dtype=float).ravel(), np.asarray(phi, dtype=float).ravel()
    agents, n = topology.agent_count, weights.Q.shape[0]
    if x.size != agents * n or phi.size != agents * n:
        raise ShapeMismatch(f"x and phi must have {agents * n} entries")
    ps = phi.reshape(agents, n)
    u = ps @ gains.Ku.T
    ju = float(np.einsum('ij,jk,ik->', u, weights.R, u))
    e = phi - x
    jx = float(e @ np.kron(pairwise_weight_matrix(topology), weights.Q) @ e)
    return ju, jx


def pairwise_cost(x: np.ndarray, phi: np.ndarray, topology: Topology, q: np.ndarray) -> float:
    """Regulation term as the explicit double sum over agents and their neighbors"""
    n = q.shape[0]
    e = (np.asarray(phi, dtype=float) - np.asarray(x, dtype=float)).reshape(topology.agent_count, n)
    total = 0.0
    for j in range(1, topology.agent_count + 1):
        for i, w in topology.neighbors(j):
            diff = e[j - 1] - e[i - 1]
            total += w * float(diff @ q @ diff)
    return total


def _squared_norms(z: np.ndarray, factor: np.ndarray) -> np.ndarray:
    """Row-wise |factor z_k|^2, chunked over samples"""
    values = np.empty(z.shape[0])
    if factor.shape[0] == 0:
        values.fill(0.0)
        return values
    factor_t = factor.T
    for start in range(0, z.shape[0], COST_CHUNK):
        projected = z[start:start + COST_CHUNK] @ factor_t
        values[start:start + COST_CHUNK] = np.einsum('ij,ij->i', projected, projected)
    return values


def step_count(dt: float, horizon: float) -> int:
    steps = int(round(horizon / dt))
    if abs(steps * dt - horizon) > 1e-9 * max(horizon, 1.0):
        steps = int(np.ceil(horizon / dt))
    return max(steps, 1)


def integrate(scenario: Scenario, blowup_threshold: float = 1e12) -> Trajectory:
    """
    Fixed-step RK4 integration of the stacked network

    Raises:
        NumericalBlowup: the state norm exceeded ``blowup_threshold``
    """
    h = scenario.dt
    steps = step_count(h, scenario.horizon)
    m = closed_loop_matrix(scenario)
    size = m.shape[0]
    eye = np.eye(size)
    hm = h * m
    hm2 = hm @ hm
    hm3 = hm2 @ hm
    propagator = eye + hm + hm2 / 2.0 + hm3 / 6.0 + hm3 @ hm / 24.0

    z = np.empty((steps + 1, size))
    z[0] = np.concatenate((scenario.x0, scenario.phi0))
    prop_t = propagator.T
    for k in range(steps):
        z[k + 1] = z[k] @ prop_t
        norm = np.linalg.norm(z[k + 1])
        if not np.isfinite(norm) or norm > blowup_threshold:
            raise NumericalBlowup(f"state norm exceeded {blowup_threshold:.1e} at t = {(k + 1) * h:.4g}",
                                  time=(k + 1) * h)

    # Stage states of each step as linear maps of the step's start state
    stage2 = eye + hm / 2.0
    stage3 = eye + hm / 2.0 + hm2 / 4.0
    stage4 = eye + hm + hm2 / 2.0 + hm3 / 4.0

    f_u, f_x = cost_factors(scenario.topology, scenario.weights, scenario.gains)
    f = np.vstack((f_u, f_x))
    # RK4 weights 1, 2, 2, 1 over the four stage states folded into one factor
    root2 = np.sqrt(2.0)
    stacked = np.vstack((f, root2 * (f @ stage2), root2 * (f @ stage3), f @ stage4))
    increments = (h / 6.0) * _squared_norms(z[:-1], stacked)
    cost_running = np.concatenate(([0.0], np.cumsum(increments)))
    terms = np.column_stack((_squared_norms(z, f_u), _squared_norms(z, f_x)))

    half = size // 2
    return Trajectory(times=np.arange(steps + 1) * h, states=z[:, :half], protocol_states=z[:, half:],
                      cost_running=cost_running, cost_terms=terms,
                      agent_count=scenario.topology.agent_count, n=scenario.model.n)


def sync_function(model: AgentModel, x0, t, kind: str = LEADERLESS, agent_count: Optional[int] = None) -> np.ndarray:
    """
    Trajectory the agents synchronize to

    Leaderless: e^{At} times the mean initial state. Leader-following: the
    leader's own motion e^{At} x_1(0).
    """
    states = np.asarray(x0, dtype=float)
    states = states.reshape(agent_count if agent_count else -1, model.n)
    anchor = states.mean(axis=0) if kind == LEADERLESS else states[0]
    times = np.atleast_1d(np.asarray(t, dtype=float))
    values = np.array([numkit.expm(model.A, tk) @ anchor for tk in times])
    return values[0] if np.ndim(t) == 0 else values


def error_metrics(trajectory: Trajectory, kind: str) -> np.ndarray:
    """Per-sample disagreement: distance to the mean (leaderless) or to the leader"""
    states = trajectory.agent_states()
    if kind == LEADERLESS:
        deviation = states - states.mean(axis=1, keepdims=True)
    else:
        deviation = states[:, 1:, :] - states[:, :1, :]
    return np.max(np.linalg.norm(deviation, axis=2), axis=1)


def classify_divergence(trajectory: Trajectory, kind: str, ratio: float, floor: float = 0.0) -> bool:
    """True when the final disagreement exceeds ``ratio`` times the initial one, or ``floor`` when that is smaller"""
    metrics = error_metrics(trajectory, kind)
    return bool(metrics[-1] > ratio * max(metrics[0], floor))


def decompose(trajectory: Trajectory, topology: Topology) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split agent states into error and synchronization parts, x = x_e + x_s

    Leaderless: x_s projects onto the first basis vector 1/sqrt(N).
    Leader-following: x_s repeats the leader state.
    """
    states = trajectory.agent_states()
    if topology.kind == LEADERLESS:
        u1 = spectrum(topology).basis[:, :1]
        sync = np.einsum('ij,sjk->sik', u1 @ u1.T, states)
    else:
        sync = np.repeat(states[:, :1, :], topology.agent_count, axis=1)
    samples = len(trajectory.times)
    x_s = sync.reshape(samples, -1)
    return trajectory.states - x_s, x_s


def protocol_modes(trajectory: Trajectory, topology: Topology) -> np.ndarray:
    """
    Protocol states in the Laplacian eigenbasis, shape (samples, modes, n)

    Leaderless: all N modes, the first being the agreement mode. Leader-following:
    the leader's protocol state followed by the follower modes.
    """
    phis = trajectory.agent_protocol_states()
    basis = spectrum(topology).basis
    if topology.kind == LEADERLESS:
        return np.einsum('ji,sjk->sik', basis, phis)
    followers = np.einsum('ji,sjk->sik', basis, phis[:, 1:, :])
    return np.concatenate((phis[:, :1, :], followers), axis=1)


def export_trajectory_csv(trajectory: Trajectory, path: str) -> str:
    size = trajectory.states.shape[1]
    header = ['t'] + [f"x{k}" for k in range(1, size + 1)] + [f"phi{k}" for k in range(1, size + 1)] + \
        ['Ju', 'Jxphi', 'Js']
    table = np.column_stack((trajectory.times, trajectory.states, trajectory.protocol_states,
                             trajectory.cost_terms, trajectory.cost_running))
    np.savetxt(path, table, delimiter=',', header=','.join(header), comments='', fmt='%.17g')
    return path


def export_sync_function_csv(times: np.ndarray, values: np.ndarray, path: str) -> str:
    header = ['t'] + [f"c{k}" for k in range(1, values.shape[1] + 1)]
    np.savetxt(path, np.column_stack((times, values)), delimiter=',', header=','.join(header),
               comments='', fmt='%.17g')
    return path


class SimulationService:
    """Runs scenarios with the configured integration options"""

    def __init__(self, options: Optional[SimulationOptions] = None):
        self.options = options or solver_config.get_simulation_options()

    def build_scenario(self, model: AgentModel, topology: Topology, weights: CostWeights, gains: ProtocolGains,
                       x0, phi0=None) -> Scenario:
        return Scenario(model=model, topology=topology, weights=weights, gains=gains, x0=x0, phi0=phi0,
                        dt=self.options.dt, horizon=self.options.horizon)

    def simulate(self, scenario: Scenario) -> Trajectory:
        start = time.perf_counter()
        with performance_monitor.track('simulate'):
            trajectory = integrate(scenario, self.options.blowup_threshold)
        metrics = error_metrics(trajectory, scenario.topology.kind)
        app_logger.log_simulation(scenario.topology.kind, len(trajectory.times) - 1, scenario.dt,
                                  trajectory.final_cost, float(metrics[-1]), time.perf_counter() - start)
        return trajectory

    def diverged(self, trajectory: Trajectory, kind: str) -> bool:
        return classify_divergence(trajectory, kind, self.options.divergence_ratio, self.options.divergence_floor)
