"""Graph topologies and left-stochastic combination matrices.

Convention: ``A[l, k]`` is the weight agent ``k`` gives to agent ``l``, so
columns sum to one and ``A @ v = v`` for the Perron vector ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

STOCHASTIC_TOL = 1e-12
PERRON_TOL = 1e-12
PERRON_MAX_ITER = 1_000_000


class NetworkError(ValueError):
    """Invalid topology or combination matrix."""


@dataclass(frozen=True)
class Topology:
    """Directed graph over ``num_agents`` agents.

    ``edges`` holds pairs ``(l, k)`` meaning ``l`` is a neighbor of ``k``
    (``k`` listens to ``l``). Self loops are implied and never stored.
    """

    num_agents: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.num_agents < 1:
            raise NetworkError("a topology needs at least one agent")
        clean = set()
        for l, k in self.edges:
            l, k = int(l), int(k)
            if not (0 <= l < self.num_agents and 0 <= k < self.num_agents):
                raise NetworkError(f"edge ({l}, {k}) references an unknown agent")
            if l != k:
                clean.add((l, k))
        object.__setattr__(self, "edges", frozenset(clean))

    @classmethod
    def from_adjacency(cls, adjacency: Iterable[Iterable[int]]) -> "Topology":
        """Build from ``adjacency[k]`` = neighbors ``k`` listens to.

        Listing ``k`` in its own row is allowed and ignored.
        """
        rows = [list(r) for r in adjacency]
        edges = {(int(l), k) for k, row in enumerate(rows) for l in row}
        return cls(len(rows), frozenset(edges))

    @classmethod
    def undirected(cls, num_agents: int, pairs: Iterable[tuple[int, int]]) -> "Topology":
        edges = set()
        for a, b in pairs:
            edges.add((a, b))
            edges.add((b, a))
        return cls(num_agents, frozenset(edges))

    @classmethod
    def complete(cls, num_agents: int) -> "Topology":
        return cls(num_agents, frozenset(
            (l, k) for l in range(num_agents) for k in range(num_agents) if l != k))

    def support(self) -> np.ndarray:
        """Boolean support pattern including the self loops."""
        mask = np.eye(self.num_agents, dtype=bool)
        for l, k in self.edges:
            mask[l, k] = True
        return mask

    def neighbors(self, k: int) -> list[int]:
        """Neighborhood of ``k`` including ``k`` itself."""
        return [l for l in range(self.num_agents) if l == k or (l, k) in self.edges]

    def is_symmetric(self) -> bool:
        return all((k, l) in self.edges for l, k in self.edges)

    def is_strongly_connected(self) -> bool:
        mask = self.support()
        n = self.num_agents
        for forward in (True, False):
            adj = mask if forward else mask.T
            seen = np.zeros(n, dtype=bool)
            seen[0] = True
            stack = [0]
            while stack:
                node = stack.pop()
                for nxt in np.flatnonzero(adj[node]):
                    if not seen[nxt]:
                        seen[nxt] = True
                        stack.append(int(nxt))
            if not seen.all():
                return False
        return True

    def adjacency_list(self) -> list[list[int]]:
        return [[l for l in self.neighbors(k) if l != k] for k in range(self.num_agents)]


@dataclass(frozen=True, eq=False)
class CombinationMatrix:
    """Validated left-stochastic primitive matrix with cached spectral data."""

    entries: np.ndarray
    perron: np.ndarray
    mixing_lambda: float

    @classmethod
    def from_entries(cls, entries, topology: Topology | None = None) -> "CombinationMatrix":
        A = np.array(entries, dtype=float)
        validate_left_stochastic(A)
        if topology is not None:
            if topology.num_agents != A.shape[0]:
                raise NetworkError("matrix size does not match the topology")
            if not np.array_equal(A > 0, topology.support()):
                raise NetworkError("matrix support does not match the topology")
        if not check_primitive(A):
            raise NetworkError("combination matrix is not primitive")
        A.setflags(write=False)
        v = perron_vector(A)
        v.setflags(write=False)
        return cls(A, v, mixing_bound(A))

    @property
    def num_agents(self) -> int:
        return self.entries.shape[0]

    def column(self, k: int) -> np.ndarray:
        return self.entries[:, k]


def validate_left_stochastic(A: np.ndarray) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NetworkError(f"combination matrix must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)) or np.any(A < 0):
        raise NetworkError("combination matrix entries must be finite and nonnegative")
    dev = np.max(np.abs(A.sum(axis=0) - 1.0))
    if dev > STOCHASTIC_TOL:
        raise NetworkError(f"columns must sum to one (max deviation {dev:.3e})")


def build_metropolis(topology: Topology) -> CombinationMatrix:
    """Metropolis weights on an undirected, connected topology.

    Degrees count the self loop; ``a[l, k] = 1 / max(d_l, d_k)`` for
    neighbors and the diagonal takes the remaining mass, which makes the
    matrix doubly stochastic.
    """
    if not topology.is_symmetric():
        raise NetworkError("Metropolis weights need an undirected (symmetric) topology")
    if not topology.is_strongly_connected():
        raise NetworkError("topology is not connected")
    mask = topology.support()
    deg = mask.sum(axis=0)
    K = topology.num_agents
    A = np.zeros((K, K))
    for l, k in topology.edges:
        A[l, k] = 1.0 / max(deg[l], deg[k])
    A[np.diag_indices(K)] = 1.0 - A.sum(axis=0)
    return CombinationMatrix.from_entries(A, topology)


def check_primitive(A) -> bool:
    """True iff some power of ``A`` is entrywise positive.

    Works on the zero pattern only, powering up to the Wielandt exponent
    ``(K-1)^2 + 1``, which is no larger than ``K(K-1)`` for ``K >= 2``.
    """
    B = (np.asarray(A) > 0).astype(np.int64)
    K = B.shape[0]
    bound = max(1, (K - 1) ** 2 + 1)
    P = B.copy()
    for _ in range(bound):
        if P.all():
            return True
        P = ((P @ B) > 0).astype(np.int64)
    return bool(P.all())


def perron_vector(A, tol: float = PERRON_TOL, max_iter: int = PERRON_MAX_ITER) -> np.ndarray:
    """Positive unit-sum right eigenvector of ``A`` at eigenvalue one.

    Plain power iteration ``v <- A v`` with l1 renormalization.
    """
    A = np.asarray(A, dtype=float)
    if not check_primitive(A):
        raise NetworkError("Perron vector requested for a non-primitive matrix")
    K = A.shape[0]
    v = np.full(K, 1.0 / K)
    for _ in range(max_iter):
        nxt = A @ v
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - v)) < tol:
            return nxt
        v = nxt
    raise NetworkError(f"power iteration did not converge in {max_iter} iterations")


def mixing_bound(A) -> float:
    """Second-largest eigenvalue modulus of ``A``."""
    mods = np.sort(np.abs(np.linalg.eigvals(np.asarray(A, dtype=float))))[::-1]
    if mods.size < 2:
        return 0.0
    return float(mods[1])
