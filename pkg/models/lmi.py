"""Affine symmetric matrix inequalities over named matrix variables."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.errors import ConstructionError, IllPosed, MissingVariable, ShapeMismatch
from utils import numkit

CONSTRUCTION_TOL = 1e-10


class Sense(Enum):
    NEGATIVE_DEFINITE = 'negative_definite'
    NEGATIVE_SEMIDEFINITE = 'negative_semidefinite'
    POSITIVE_SEMIDEFINITE = 'positive_semidefinite'
    POSITIVE_DEFINITE = 'positive_definite'

    @property
    def negative(self) -> bool:
        return self in (Sense.NEGATIVE_DEFINITE, Sense.NEGATIVE_SEMIDEFINITE)

    @property
    def strict(self) -> bool:
        return self in (Sense.NEGATIVE_DEFINITE, Sense.POSITIVE_DEFINITE)

    def slack(self, extreme: float) -> float:
        """Signed distance of a block's extreme eigenvalue on the satisfied side of zero"""
        return -extreme if self.negative else extreme


@dataclass(frozen=True)
class MatVar:
    name: str
    shape: Tuple[int, int]
    symmetric: bool = True

    def __post_init__(self):
        rows, cols = self.shape
        if rows <= 0 or cols <= 0:
            raise IllPosed(f"variable {self.name} has empty shape {self.shape}")
        if self.symmetric and rows != cols:
            raise ShapeMismatch(f"symmetric variable {self.name} must be square, got {self.shape}")

    def basis(self) -> List[np.ndarray]:
        """Elementary matrices spanning the variable's space"""
        rows, cols = self.shape
        elements = []
        for i in range(rows):
            for j in range(i if self.symmetric else 0, cols):
                e = np.zeros(self.shape)
                e[i, j] = 1.0
                if self.symmetric:
                    e[j, i] = 1.0
                elements.append(e)
        return elements


@dataclass(frozen=True)
class Term:
    """``scale * left @ V @ right`` (``V`` transposed when ``transpose``)"""
    left: np.ndarray
    var: str
    right: np.ndarray
    scale: float = 1.0
    transpose: bool = False

    def value(self, v: np.ndarray) -> np.ndarray:
        return self.scale * (self.left @ (v.T if self.transpose else v) @ self.right)

    def mirror(self) -> 'Term':
        # (L V R)^T = R^T V^T L^T
        return Term(left=self.right.T, var=self.var, right=self.left.T,
                    scale=self.scale, transpose=not self.transpose)


@dataclass(frozen=True)
class AffineBlock:
    name: str
    constant: np.ndarray
    terms: Tuple[Term, ...]
    sense: Sense

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    def assemble_raw(self, assignment: Dict[str, np.ndarray]) -> np.ndarray:
        total = self.constant.copy()
        for term in self.terms:
            if term.var not in assignment:
                raise MissingVariable(f"block {self.name}: no value for variable {term.var}")
            total = total + term.value(assignment[term.var])
        return total

    def assemble(self, assignment: Dict[str, np.ndarray]) -> np.ndarray:
        return numkit.symmetrize(self.assemble_raw(assignment))


class BlockBuilder:
    """
    Builds an AffineBlock from a grid of sub-blocks

    Off-diagonal entries are mirrored automatically; ``add_sym`` adds a term and
    its transpose on the diagonal (the ``X + X^T`` pattern).
    """

    def __init__(self, name: str, sizes: Sequence[int], sense: Sense):
        self.name = name
        self.sizes = list(sizes)
        self.sense = sense
        self.offsets = np.concatenate(([0], np.cumsum(self.sizes))).astype(int)
        self.dim = int(self.offsets[-1])
        if self.dim == 0:
            raise IllPosed(f"block {name} has zero dimension")
        self.constant = np.zeros((self.dim, self.dim))
        self.terms: List[Term] = []

    def _selector(self, index: int) -> np.ndarray:
        e = np.zeros((self.dim, self.sizes[index]))
        start = self.offsets[index]
        e[start:start + self.sizes[index], :] = np.eye(self.sizes[index])
        return e

    def _embed(self, row: int, col: int, left: np.ndarray, var: str, right: np.ndarray,
               scale: float, transpose: bool) -> Term:
        return Term(left=self._selector(row) @ left, var=var, right=right @ self._selector(col).T,
                    scale=scale, transpose=transpose)

    def add(self, row: int, col: int, var: str, shape: Tuple[int, int],
            left: Optional[np.ndarray] = None, right: Optional[np.ndarray] = None,
            scale: float = 1.0, transpose: bool = False) -> 'BlockBuilder':
        rows, cols = (shape[1], shape[0]) if transpose else shape
        left = np.eye(rows) if left is None else np.asarray(left, dtype=float)
        right = np.eye(cols) if right is None else np.asarray(right, dtype=float)
        if left.shape != (self.sizes[row], rows) or right.shape != (cols, self.sizes[col]):
            raise ShapeMismatch(
                f"block {self.name}[{row},{col}]: {left.shape} x {var}{(rows, cols)} x {right.shape} "
                f"does not fit {self.sizes[row]}x{self.sizes[col]}")
        term = self._embed(row, col, left, var, right, scale, transpose)
        self.terms.append(term)
        if row != col:
            self.terms.append(term.mirror())
        return self

    def add_sym(self, row: int, var: str, shape: Tuple[int, int],
                left: Optional[np.ndarray] = None, right: Optional[np.ndarray] = None,
                scale: float = 1.0, transpose: bool = False) -> 'BlockBuilder':
        self.add(row, row, var, shape, left, right, scale, transpose)
        self.terms.append(self.terms[-1].mirror())
        return self

    def add_constant(self, row: int, col: int, value: np.ndarray) -> 'BlockBuilder':
        value = numkit.as_matrix(value, f"{self.name} constant")
        if value.shape != (self.sizes[row], self.sizes[col]):
            raise ShapeMismatch(f"block {self.name}[{row},{col}]: constant {value.shape} does not fit")
        r0, c0 = self.offsets[row], self.offsets[col]
        self.constant[r0:r0 + value.shape[0], c0:c0 + value.shape[1]] += value
        if row != col:
            self.constant[c0:c0 + value.shape[1], r0:r0 + value.shape[0]] += value.T
        return self

    def build(self) -> AffineBlock:
        return AffineBlock(name=self.name, constant=self.constant.copy(), terms=tuple(self.terms),
                           sense=self.sense)


@dataclass
class LmiProblem:
    variables: List[MatVar]
    blocks: List[AffineBlock]
    # Linear objective sum_k tr(C_k @ V_k); empty means a pure feasibility problem
    objective: List[Tuple[np.ndarray, str]] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def variable(self, name: str) -> MatVar:
        for var in self.variables:
            if var.name == name:
                return var
        raise MissingVariable(f"variable {name} is not declared")

    @property
    def variable_map(self) -> Dict[str, MatVar]:
        return {var.name: var for var in self.variables}

    def block(self, name: str) -> AffineBlock:
        for block in self.blocks:
            if block.name == name:
                return block
        raise KeyError(name)

    def without_blocks(self, *names: str) -> 'LmiProblem':
        return LmiProblem(variables=list(self.variables),
                          blocks=[b for b in self.blocks if b.name not in names],
                          objective=list(self.objective))

    def with_objective(self, objective: List[Tuple[np.ndarray, str]]) -> 'LmiProblem':
        return LmiProblem(variables=list(self.variables), blocks=list(self.blocks), objective=objective)

    def validate(self):
        """Check references, shapes and that every block is symmetric by construction"""
        variables = self.variable_map
        if len(variables) != len(self.variables):
            raise IllPosed("duplicate variable names")
        if not self.blocks:
            raise IllPosed("problem has no blocks")

        for block in self.blocks:
            if block.size == 0:
                raise IllPosed(f"block {block.name} has zero dimension")
            if block.constant.shape != (block.size, block.size):
                raise ShapeMismatch(f"block {block.name}: constant is not square")
            for term in block.terms:
                if term.var not in variables:
                    raise MissingVariable(f"block {block.name} references undeclared variable {term.var}")
                rows, cols = variables[term.var].shape
                if term.transpose:
                    rows, cols = cols, rows
                if term.left.shape != (block.size, rows) or term.right.shape != (cols, block.size):
                    raise ShapeMismatch(f"block {block.name}: term on {term.var} has inconsistent shapes")

            if numkit.symmetry_residual(block.constant) > CONSTRUCTION_TOL:
                raise ConstructionError(f"block {block.name}: constant part is not symmetric")
            zero = {name: np.zeros(var.shape) for name, var in variables.items()}
            for name in {t.var for t in block.terms}:
                for element in variables[name].basis():
                    unit = dict(zero)
                    unit[name] = element
                    linear = block.assemble_raw(unit) - block.constant
                    asymmetry = np.linalg.norm(linear - linear.T)
                    if asymmetry > CONSTRUCTION_TOL * max(np.linalg.norm(linear), 1.0):
                        raise ConstructionError(
                            f"block {block.name}: variable {name} enters asymmetrically "
                            f"(residual {asymmetry:.3e})")

        for coef, name in self.objective:
            if name not in variables:
                raise MissingVariable(f"objective references undeclared variable {name}")
            rows, cols = variables[name].shape
            if np.shape(coef) != (cols, rows):
                raise ShapeMismatch(f"objective coefficient for {name} has shape {np.shape(coef)}")

    def objective_value(self, assignment: Dict[str, np.ndarray]) -> float:
        return float(sum(np.trace(np.asarray(coef) @ assignment[name]) for coef, name in self.objective))


FEASIBLE = 'feasible'
INFEASIBLE_BEST_EFFORT = 'infeasible_best_effort'
MAX_ITERATIONS = 'max_iterations'


@dataclass
class FeasibilityResult:
    status: str
    assignment: Dict[str, np.ndarray] = field(default_factory=dict)
    margins: Dict[str, float] = field(default_factory=dict)     # extreme eigenvalue per block
    objective_value: Optional[float] = None
    margin: Optional[float] = None                              # maximized common strict margin
    solver_status: str = ""
    iterations: int = 0
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE
