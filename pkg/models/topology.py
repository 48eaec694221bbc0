"""Interaction graphs and the spectral quantities the synchronization criteria need.

Agents are numbered from 1. For the leader-following kind agent 1 is the
leader: edges ``(1, j, w)`` are directed leader -> follower, all other edges
are undirected follower couplings.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np
from networkx.utils import UnionFind

from models.errors import InvalidEdge, InvalidTopology, NotAdmissible, WrongKind
from utils import numkit
from utils.logger import app_logger

LEADERLESS = 'leaderless'
LEADER_FOLLOWING = 'leader_following'
KINDS = (LEADERLESS, LEADER_FOLLOWING)

ZERO_EIG_TOL = 1e-9
LEADER = 1

Edge = Tuple[int, int, float]


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    diagnosis: str = ""
    lambda2: float = 0.0

    def __bool__(self):
        return self.admissible


@dataclass(frozen=True)
class Spectrum:
    """Laplacian spectrum and the orthonormal basis that diagonalizes the structure matrix

    For the leaderless kind ``basis`` is the N x N matrix ``U = [1/sqrt(N), U_hat]``
    and ``eigenvalues`` are those of L. For the leader-following kind ``basis`` is
    the (N-1) x (N-1) matrix diagonalizing the follower matrix, and ``eigenvalues``
    are ``0`` followed by its eigenvalues (the spectrum of the full L).
    """
    kind: str
    eigenvalues: np.ndarray
    basis: np.ndarray

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def lambdaN(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def nonzero(self) -> np.ndarray:
        return self.eigenvalues[1:]

    @property
    def interior(self) -> np.ndarray:
        """Nonzero eigenvalues strictly between lambda2 and lambdaN"""
        values = self.nonzero
        return values[(values > self.lambda2 + ZERO_EIG_TOL) & (values < self.lambdaN - ZERO_EIG_TOL)]


@dataclass(frozen=True)
class Topology:
    kind: str
    agent_count: int
    edges: Tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, 'edges', tuple(
            (int(i), int(j), float(w)) for i, j, w in self.edges))
        self.validate()

    def validate(self):
        """Raise InvalidTopology / InvalidEdge when the graph is malformed"""
        if self.kind not in KINDS:
            raise InvalidTopology(f"unknown topology kind '{self.kind}', expected one of {KINDS}")
        if self.agent_count < 2:
            raise InvalidTopology(f"at least 2 agents are required, got {self.agent_count}")

        seen = set()
        for i, j, w in self.edges:
            if not (1 <= i <= self.agent_count and 1 <= j <= self.agent_count):
                raise InvalidEdge(f"edge ({i}, {j}) references an agent outside 1..{self.agent_count}")
            if i == j:
                raise InvalidEdge(f"self-loop on agent {i}")
            if not math.isfinite(w) or w <= 0:
                raise InvalidEdge(f"edge ({i}, {j}) has nonpositive weight {w}")
            if self.kind == LEADER_FOLLOWING and j == LEADER:
                raise InvalidEdge(f"edge ({i}, {j}) points into the leader; the leader receives nothing")
            key = (i, j) if i == LEADER and self.kind == LEADER_FOLLOWING else (min(i, j), max(i, j))
            if key in seen:
                raise InvalidEdge(f"duplicate edge ({i}, {j})")
            seen.add(key)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def follower_count(self) -> int:
        return self.agent_count - 1 if self.kind == LEADER_FOLLOWING else self.agent_count

    def arcs(self) -> List[Edge]:
        """Directed information arcs (receiver, sender, weight)"""
        arcs = []
        for i, j, w in self.edges:
            if self.kind == LEADER_FOLLOWING and i == LEADER:
                arcs.append((j, i, w))
            else:
                arcs.append((i, j, w))
                arcs.append((j, i, w))
        return arcs

    def neighbors(self, agent: int) -> List[Tuple[int, float]]:
        """Agents whose outputs ``agent`` receives, with the edge weights"""
        return sorted((sender, w) for receiver, sender, w in self.arcs() if receiver == agent)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'N': self.agent_count,
            'edges': [[i, j, w] for i, j, w in self.edges],
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'Topology':
        try:
            edges = [tuple(edge) for edge in data['edges']]
            if any(len(edge) != 3 for edge in edges):
                raise InvalidTopology("every edge must be a triple [i, j, w]")
            return Topology(kind=data['kind'], agent_count=int(data['N']), edges=tuple(edges))
        except KeyError as e:
            raise InvalidTopology(f"topology is missing field {e}") from e
        except (TypeError, ValueError) as e:
            raise InvalidTopology(f"malformed topology: {e}") from e

    # Standard graphs

    @staticmethod
    def cycle(n: int, weight: float = 1.0) -> 'Topology':
        return Topology(LEADERLESS, n, tuple((k, k % n + 1, weight) for k in range(1, n + 1)) if n > 2
                        else ((1, 2, weight),))

    @staticmethod
    def complete(n: int, weight: float = 1.0) -> 'Topology':
        return Topology(LEADERLESS, n, tuple(
            (i, j, weight) for i in range(1, n + 1) for j in range(i + 1, n + 1)))

    @staticmethod
    def leader_star(n: int, weight: float = 1.0) -> 'Topology':
        return Topology(LEADER_FOLLOWING, n, tuple((LEADER, j, weight) for j in range(2, n + 1)))

    @staticmethod
    def leader_chain(n: int, weight: float = 1.0) -> 'Topology':
        """Leader feeds agent 2 only; followers form the path 2-3-...-N"""
        edges = [(LEADER, 2, weight)] + [(j, j + 1, weight) for j in range(2, n)]
        return Topology(LEADER_FOLLOWING, n, tuple(edges))


def laplacian(t: Topology) -> np.ndarray:
    """Row-sum-zero Laplacian; the leader row is zero for the leader-following kind"""
    n = t.agent_count
    lap = np.zeros((n, n))
    for receiver, sender, w in t.arcs():
        lap[receiver - 1, sender - 1] -= w
        lap[receiver - 1, receiver - 1] += w
    return lap


def pairwise_weight_matrix(t: Topology) -> np.ndarray:
    """
    Matrix G with ``sum_arcs w (e_r - e_s)^T Q (e_r - e_s) = e^T (G kron Q) e``

    Each arc (receiver r, sender s, w) adds ``w (1_r - 1_s)(1_r - 1_s)^T``.
    For the leaderless kind every edge gives two arcs and G = 2L.
    """
    n = t.agent_count
    g = np.zeros((n, n))
    for receiver, sender, w in t.arcs():
        r, s = receiver - 1, sender - 1
        g[r, r] += w
        g[s, s] += w
        g[r, s] -= w
        g[s, r] -= w
    return g


def is_admissible(t: Topology) -> AdmissibilityReport:
    """
    Connectivity (leaderless) or a spanning tree rooted at the leader

    Union-find decides; the algebraic connectivity is computed as a cross-check.
    """
    components = UnionFind(range(1, t.agent_count + 1))
    for i, j, _ in t.edges:
        components.union(i, j)

    # Leader arcs only leave the leader and follower edges are undirected, so a
    # follower is reachable from the leader iff it shares the leader's component.
    root = components[1]
    stragglers = [a for a in range(1, t.agent_count + 1) if components[a] != root]

    structure = laplacian(t) if t.kind == LEADERLESS else follower_matrix(t, check=False)
    values = numkit.eigvalsh(structure)
    lambda2 = float(values[1] if t.kind == LEADERLESS else values[0])

    if t.kind == LEADERLESS:
        admissible = not stragglers
        diagnosis = "" if admissible else f"disconnected: agents {stragglers} unreachable from agent 1"
    else:
        admissible = not stragglers
        diagnosis = "" if admissible else f"no spanning tree: followers {stragglers} unreachable from the leader"

    if admissible != (lambda2 > ZERO_EIG_TOL):
        app_logger.app_logger.warning(
            f"Connectivity cross-check disagrees: union-find says {admissible}, lambda2 = {lambda2:.3e}")
    return AdmissibilityReport(admissible=admissible, diagnosis=diagnosis, lambda2=lambda2)


def follower_matrix(t: Topology, check: bool = True) -> np.ndarray:
    """L_ff + Lambda_fl: the Laplacian block acting on the followers"""
    if t.kind != LEADER_FOLLOWING:
        raise WrongKind("follower matrix is only defined for leader-following topologies")
    if check:
        report = is_admissible(t)
        if not report:
            raise NotAdmissible(report.diagnosis)
    return laplacian(t)[1:, 1:]


def spectrum(t: Topology) -> Spectrum:
    report = is_admissible(t)
    if not report:
        raise NotAdmissible(report.diagnosis)

    if t.kind == LEADERLESS:
        eig = numkit.sym_eig(laplacian(t))
        values = eig.values.copy()
        values[0] = 0.0
        basis = eig.vectors.copy()
        basis[:, 0] = 1.0 / math.sqrt(t.agent_count)
        return Spectrum(kind=t.kind, eigenvalues=values, basis=basis)

    eig = numkit.sym_eig(follower_matrix(t, check=False))
    values = np.concatenate(([0.0], eig.values))
    return Spectrum(kind=t.kind, eigenvalues=values, basis=eig.vectors)


def relationship_matrix(kind: str, n: int) -> np.ndarray:
    """Complete-graph Laplacian with weights 1/N (leaderless) or the unit star Laplacian"""
    if n < 2:
        raise InvalidTopology(f"at least 2 agents are required, got {n}")
    if kind == LEADERLESS:
        return np.eye(n) - np.ones((n, n)) / n
    if kind == LEADER_FOLLOWING:
        m = np.eye(n)
        m[0, 0] = n - 1
        m[0, 1:] = -1.0
        m[1:, 0] = -1.0
        return m
    raise InvalidTopology(f"unknown topology kind '{kind}'")
