import copy
from dataclasses import dataclass, asdict, replace
from typing import Dict, Any, Optional

from config.settings import CONFIG

INTEGER_OPTIONS = ('max_iters', 'certify_retries', 'backtrack_steps')


@dataclass(frozen=True)
class LmiOptions:
    """Options for the LMI layer and the cone complementarity iteration"""
    margin: float = 1e-7            # certified margin of strict blocks
    psd_tolerance: float = 1e-6     # allowed violation of semidefinite blocks
    margin_cap: float = 1.0         # upper bound on the maximized feasibility margin
    regularization: float = 1e-8    # Frobenius penalty keeping optimal faces bounded
    solve_headroom: float = 10.0    # strict blocks are solved at headroom * margin
    psd_headroom: float = 2.0       # semidefinite blocks are solved at headroom * psd_tolerance
    certify_retries: int = 3        # re-solves with raised block levels after a failed certification
    backtrack_steps: int = 12       # halvings toward a rejected candidate
    delta: float = 1e-4             # coupling tolerance ‖Px·Phat_x − I‖_F
    max_iters: int = 200
    monotone_slack: float = 1e-8    # relative slack for the non-increasing objective check
    backend: str = 'CLARABEL'

    @property
    def solve_margin(self) -> float:
        return self.margin * self.solve_headroom

    @property
    def solve_psd_level(self) -> float:
        return self.psd_tolerance * self.psd_headroom

    def with_overrides(self, overrides: Optional[Dict[str, Any]]) -> 'LmiOptions':
        if not overrides:
            return self
        known = {k: v for k, v in overrides.items() if k in self.__dataclass_fields__}
        for key in INTEGER_OPTIONS:
            if key in known:
                known[key] = int(known[key])
        return replace(self, **known)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SimulationOptions:
    dt: float = 1e-3
    horizon: float = 10.0
    blowup_threshold: float = 1e12
    divergence_ratio: float = 10.0
    divergence_floor: float = 1e-9  # disagreement below this counts as agreement

    def with_overrides(self, overrides: Optional[Dict[str, Any]]) -> 'SimulationOptions':
        if not overrides:
            return self
        known = {k: float(v) for k, v in overrides.items()
                 if k in self.__dataclass_fields__ and v is not None}
        return replace(self, **known)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class SolverConfig:
    """Solver and simulation configuration: defaults, then config.json, then per-scenario overrides"""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = copy.deepcopy(config if config is not None else CONFIG)

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """Get configuration value"""
        return self.config.get(section, {}).get(key, default)

    def get_lmi_options(self, overrides: Optional[Dict[str, Any]] = None) -> LmiOptions:
        """Get LMI solver options, scenario overrides applied last"""
        return LmiOptions().with_overrides(self.config.get('solver')).with_overrides(overrides)

    def get_simulation_options(self, overrides: Optional[Dict[str, Any]] = None) -> SimulationOptions:
        """Get simulation options, scenario overrides applied last"""
        return SimulationOptions().with_overrides(self.config.get('sim')).with_overrides(overrides)


solver_config = SolverConfig()
