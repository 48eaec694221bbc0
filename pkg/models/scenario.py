import copy
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from models.agent import AgentModel, CostWeights, ProtocolGains
from models.errors import InvalidConfig, ShapeMismatch
from models.topology import Topology
from utils.formatters import sanitize
from utils.validators import validate_scenario_config

STATUSES = ('ok', 'infeasible', 'budget_too_small', 'diverged', 'invalid_config')
EXIT_CODES = {
    'ok': 0,
    'infeasible': 2,
    'budget_too_small': 2,
    'invalid_config': 3,
    'diverged': 4,
}


@dataclass(frozen=True)
class Scenario:
    """Everything one closed-loop simulation needs"""
    model: AgentModel
    topology: Topology
    weights: CostWeights
    gains: ProtocolGains
    x0: np.ndarray
    phi0: Optional[np.ndarray] = None
    dt: float = 1e-3
    horizon: float = 10.0

    def __post_init__(self):
        size = self.topology.agent_count * self.model.n
        x0 = np.asarray(self.x0, dtype=float).ravel()
        phi0 = np.zeros(size) if self.phi0 is None else np.asarray(self.phi0, dtype=float).ravel()
        if x0.size != size or phi0.size != size:
            raise ShapeMismatch(f"initial states must have {size} entries")
        self.gains.check_against(self.model)
        self.weights.check_against(self.model)
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidConfig(f"dt must be positive, got {self.dt}")
        if not self.horizon >= self.dt:
            raise InvalidConfig(f"horizon {self.horizon} must be at least dt {self.dt}")
        object.__setattr__(self, 'x0', x0)
        object.__setattr__(self, 'phi0', phi0)

    @property
    def budget_certified(self) -> bool:
        """The budget guarantee only holds for zero protocol initial states"""
        return not np.any(self.phi0)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray               # (samples, N*n)
    protocol_states: np.ndarray      # (samples, N*n)
    cost_running: np.ndarray         # (samples,)
    cost_terms: np.ndarray           # (samples, 2): Ju, Jxphi
    agent_count: int
    n: int

    @property
    def final_cost(self) -> float:
        return float(self.cost_running[-1])

    def agent_states(self) -> np.ndarray:
        """States as (samples, N, n)"""
        return self.states.reshape(len(self.times), self.agent_count, self.n)

    def agent_protocol_states(self) -> np.ndarray:
        return self.protocol_states.reshape(len(self.times), self.agent_count, self.n)


@dataclass
class ScenarioConfig:
    """Parsed scenario configuration file"""
    model: AgentModel
    topology: Topology
    weights: CostWeights
    budget: float
    initial_states: List[List[float]]
    protocol_initial_states: Optional[List[List[float]]] = None
    sim: Dict[str, Any] = field(default_factory=dict)
    solver: Dict[str, Any] = field(default_factory=dict)
    name: str = ""
    notes: str = ""

    @property
    def x0(self) -> np.ndarray:
        return np.asarray(self.initial_states, dtype=float).ravel()

    @property
    def phi0(self) -> Optional[np.ndarray]:
        if self.protocol_initial_states is None:
            return None
        return np.asarray(self.protocol_initial_states, dtype=float).ravel()

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'ScenarioConfig':
        ok, message = validate_scenario_config(data)
        if not ok:
            raise InvalidConfig(message)
        model = AgentModel.from_dict(data['model'])
        return ScenarioConfig(
            model=model,
            topology=Topology.from_dict(data['topology']),
            weights=CostWeights.from_dict(data['weights'], model.n, model.m),
            budget=float(data['budget']),
            initial_states=[[float(v) for v in state] for state in data['initial_states']],
            protocol_initial_states=(None if data.get('protocol_initial_states') is None else
                                     [[float(v) for v in s] for s in data['protocol_initial_states']]),
            sim=dict(data.get('sim', {})),
            solver=dict(data.get('solver', {})),
            name=str(data.get('name', '')),
            notes=str(data.get('notes', '')),
        )

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'name': self.name,
            'notes': self.notes,
            'model': self.model.to_dict(),
            'topology': self.topology.to_dict(),
            'weights': self.weights.to_dict(),
            'budget': self.budget,
            'initial_states': copy.deepcopy(self.initial_states),
            'sim': dict(self.sim),
            'solver': dict(self.solver),
        }
        if self.protocol_initial_states is not None:
            data['protocol_initial_states'] = copy.deepcopy(self.protocol_initial_states)
        return data

    @staticmethod
    def load(path: str) -> 'ScenarioConfig':
        try:
            with open(path, 'r') as f:
                data = json.load(f)
        except OSError as e:
            raise InvalidConfig(f"cannot read scenario {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"scenario {path} is not valid JSON: {e}") from e
        return ScenarioConfig.from_dict(data)

    def save(self, path: str):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)

    def with_overrides(self, dt: Optional[float] = None, horizon: Optional[float] = None,
                       budget: Optional[float] = None) -> 'ScenarioConfig':
        """Apply command-line overrides; validation runs again on the result"""
        data = self.to_dict()
        if dt is not None:
            data['sim']['dt'] = dt
        if horizon is not None:
            data['sim']['horizon'] = horizon
        if budget is not None:
            data['budget'] = budget
        return ScenarioConfig.from_dict(data)


@dataclass
class RunReport:
    command: str
    status: str = 'ok'
    reason: str = ""
    budget: Optional[float] = None
    gains: Optional[Dict[str, Any]] = None
    gamma: Optional[float] = None
    budget_coefficient: Optional[float] = None
    cost_bound: Optional[float] = None
    final_cost: Optional[float] = None
    final_error_metric: Optional[float] = None
    solver_iterations: Optional[int] = None
    certificate_margins: Dict[str, float] = field(default_factory=dict)
    paths: Dict[str, str] = field(default_factory=dict)
    performance: Dict[str, Any] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown report status '{self.status}'")

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def to_dict(self) -> Dict[str, Any]:
        return sanitize({
            'command': self.command,
            'status': self.status,
            'reason': self.reason,
            'budget': self.budget,
            'gains': self.gains,
            'gamma': self.gamma,
            'budget_coefficient': self.budget_coefficient,
            'cost_bound': self.cost_bound,
            'final_cost': self.final_cost,
            'final_error_metric': self.final_error_metric,
            'solver_iterations': self.solver_iterations,
            'certificate_margins': self.certificate_margins,
            'paths': self.paths,
            'performance': self.performance,
            'details': self.details,
        })

    def save(self, path: str):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, allow_nan=False)
