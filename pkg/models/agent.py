from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from models.errors import InvalidConfig, ShapeMismatch
from utils import numkit
from utils.formatters import matrix_from_document, matrix_to_document


@dataclass(frozen=True)
class AgentModel:
    """Identical linear agents x' = Ax + Bu, y = Cx"""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'A', numkit.as_matrix(self.A, 'A'))
        object.__setattr__(self, 'B', numkit.as_matrix(self.B, 'B'))
        object.__setattr__(self, 'C', numkit.as_matrix(self.C, 'C'))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ShapeMismatch(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise ShapeMismatch(f"B must have {n} rows, got {self.B.shape}")
        if self.C.shape[1] != n:
            raise ShapeMismatch(f"C must have {n} columns, got {self.C.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def d(self) -> int:
        return self.C.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n, 'm': self.m, 'd': self.d,
            'A': numkit.to_entries(self.A),
            'B': numkit.to_entries(self.B),
            'C': numkit.to_entries(self.C),
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'AgentModel':
        n, m, d = int(data['n']), int(data['m']), int(data['d'])
        return AgentModel(A=numkit.from_entries(n, n, data['A'], 'A'),
                          B=numkit.from_entries(n, m, data['B'], 'B'),
                          C=numkit.from_entries(d, n, data['C'], 'C'))


@dataclass(frozen=True)
class CostWeights:
    """Symmetric positive definite weights of the control-energy and regulation terms"""
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ('Q', 'R'):
            value = numkit.as_matrix(getattr(self, name), name)
            if value.shape[0] != value.shape[1] or numkit.symmetry_residual(value) > numkit.SYMMETRY_TOL:
                raise InvalidConfig(f"{name} must be symmetric")
            if not numkit.is_pd(value):
                raise InvalidConfig(f"{name} must be positive definite")
            object.__setattr__(self, name, numkit.symmetrize(value))

    def check_against(self, model: AgentModel):
        if self.Q.shape != (model.n, model.n):
            raise ShapeMismatch(f"Q must be {model.n}x{model.n}, got {self.Q.shape}")
        if self.R.shape != (model.m, model.m):
            raise ShapeMismatch(f"R must be {model.m}x{model.m}, got {self.R.shape}")

    def to_dict(self) -> Dict[str, Any]:
        return {'Q': numkit.to_entries(self.Q), 'R': numkit.to_entries(self.R)}

    @staticmethod
    def from_dict(data: Dict[str, Any], n: int, m: int) -> 'CostWeights':
        return CostWeights(Q=numkit.from_entries(n, n, data['Q'], 'Q'),
                           R=numkit.from_entries(m, m, data['R'], 'R'))


@dataclass(frozen=True)
class ProtocolGains:
    """Gains of the dynamic output-feedback protocol: u = Ku phi, phi driven through Kphi"""
    Ku: np.ndarray
    Kphi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'Ku', numkit.as_matrix(self.Ku, 'Ku'))
        object.__setattr__(self, 'Kphi', numkit.as_matrix(self.Kphi, 'Kphi'))

    def check_against(self, model: AgentModel):
        if self.Ku.shape != (model.m, model.n):
            raise ShapeMismatch(f"Ku must be {model.m}x{model.n}, got {self.Ku.shape}")
        if self.Kphi.shape != (model.n, model.d):
            raise ShapeMismatch(f"Kphi must be {model.n}x{model.d}, got {self.Kphi.shape}")

    @staticmethod
    def zeros(model: AgentModel) -> 'ProtocolGains':
        return ProtocolGains(Ku=np.zeros((model.m, model.n)), Kphi=np.zeros((model.n, model.d)))

    def to_document(self) -> Dict[str, Any]:
        return {'Ku': matrix_to_document(self.Ku), 'Kphi': matrix_to_document(self.Kphi)}

    @staticmethod
    def from_document(doc: Dict[str, Any]) -> 'ProtocolGains':
        return ProtocolGains(Ku=matrix_from_document(doc['Ku'], 'Ku'),
                             Kphi=matrix_from_document(doc['Kphi'], 'Kphi'))


@dataclass
class AnalysisCertificate:
    feasible: bool
    budget: float
    cost_bound: Optional[float] = None
    Px: Optional[np.ndarray] = None
    Pphi: Optional[np.ndarray] = None
    margins: Dict[str, float] = field(default_factory=dict)
    # Largest eigenvalue of the criterion block at every nonzero Laplacian eigenvalue
    spectrum_margins: Dict[str, float] = field(default_factory=dict)
    reason: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            'feasible': self.feasible,
            'budget': self.budget,
            'cost_bound': self.cost_bound,
            'Px': matrix_to_document(self.Px) if self.Px is not None else None,
            'Pphi': matrix_to_document(self.Pphi) if self.Pphi is not None else None,
            'margins': dict(self.margins),
            'spectrum_margins': dict(self.spectrum_margins),
            'reason': self.reason,
        }


@dataclass
class DesignReport:
    gains: ProtocolGains
    Px: np.ndarray
    Phat_x: np.ndarray
    Phat_phi: np.ndarray
    Khat_u: np.ndarray
    gamma: float
    budget: float
    budget_coefficient: float
    iterations: int
    certified: bool
    margins: Dict[str, float] = field(default_factory=dict)
    certificate: Optional[AnalysisCertificate] = None
    history: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'gains': self.gains.to_document(),
            'Px': matrix_to_document(self.Px),
            'Phat_x': matrix_to_document(self.Phat_x),
            'Phat_phi': matrix_to_document(self.Phat_phi),
            'Khat_u': matrix_to_document(self.Khat_u),
            'gamma': self.gamma,
            'budget': self.budget,
            'budget_coefficient': self.budget_coefficient,
            'iterations': self.iterations,
            'certified': self.certified,
            'margins': dict(self.margins),
            'certificate': self.certificate.to_dict() if self.certificate else None,
            'history': list(self.history),
        }
