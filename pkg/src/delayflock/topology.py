"""Interaction digraphs: strong connectivity, shortest paths and depth.

Row ``i`` of the adjacency matrix lists the agents that influence agent ``i``:
``chi[i, j] == 1`` means ``j`` transmits information to ``i``.  The arc set
contains ``(i, j)`` exactly when ``chi[i, j] == 1`` and distances are measured
along those arcs.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DepthUndefined, InvalidMatrix

#: Marker stored in distance matrices for unreachable pairs.
UNREACHABLE = np.inf


@dataclass(frozen=True, eq=False)
class Digraph:
    chi: np.ndarray

    def __post_init__(self):
        chi = np.array(self.chi)
        if chi.ndim != 2 or chi.shape[0] != chi.shape[1]:
            raise InvalidMatrix(f"adjacency must be square, got shape {chi.shape}")
        if chi.shape[0] < 2:
            raise InvalidMatrix("at least two agents are required")
        if not np.all((chi == 0) | (chi == 1)):
            raise InvalidMatrix("adjacency entries must be 0 or 1")
        if np.any(np.diag(chi) != 0):
            raise InvalidMatrix("self loops are not allowed")
        chi = chi.astype(np.int8)
        chi.setflags(write=False)
        object.__setattr__(self, "chi", chi)

    @property
    def n_agents(self):
        return self.chi.shape[0]

    def arcs(self):
        """Return ``(I, J)`` index arrays of all pairs with ``chi[i, j] == 1``."""
        return np.nonzero(self.chi)

    def __eq__(self, other):
        return isinstance(other, Digraph) and np.array_equal(self.chi, other.chi)

    def __hash__(self):
        return hash(self.chi.tobytes())

    def __repr__(self):
        return f"Digraph(n_agents={self.n_agents}, arcs={int(self.chi.sum())})"


@dataclass(frozen=True)
class NeighborSummary:
    neighbor_sets: tuple
    cardinalities: tuple
    depth: int
    dist: np.ndarray


def _bfs(chi, source):
    n = chi.shape[0]
    dist = np.full(n, UNREACHABLE)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(chi[u]):
            if dist[v] == UNREACHABLE:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def distances(g):
    """All-pairs shortest path lengths; unreachable pairs hold ``UNREACHABLE``."""
    return np.vstack([_bfs(g.chi, i) for i in range(g.n_agents)])


def strongly_connected(g):
    # Reachability from vertex 0 along arcs and along reversed arcs covers
    # every vertex iff the digraph is strongly connected.
    forward = _bfs(g.chi, 0)
    backward = _bfs(g.chi.T, 0)
    return bool(np.all(np.isfinite(forward)) and np.all(np.isfinite(backward)))


def neighbor_summary(g):
    """Neighbor sets, in-degrees, all-pairs distances and the depth of ``g``.

    Raises :class:`DepthUndefined` when some vertex cannot reach another.
    """
    dist = distances(g)
    if not np.all(np.isfinite(dist)):
        i, j = np.argwhere(~np.isfinite(dist))[0]
        raise DepthUndefined(f"vertex {j} is not reachable from vertex {i}")
    sets = tuple(frozenset(int(j) for j in np.flatnonzero(row)) for row in g.chi)
    dist.setflags(write=False)
    return NeighborSummary(
        neighbor_sets=sets,
        cardinalities=tuple(len(s) for s in sets),
        depth=int(dist.max()),
        dist=dist,
    )


def depth(g):
    return neighbor_summary(g).depth


def make_digraph(kind, n_agents=None, *, matrix=None, seed=None, edge_prob=None):
    """Build a digraph of a named family.

    ``kind`` is one of ``"complete"``, ``"ring"``, ``"custom"`` (requires
    ``matrix``) or ``"random"`` (requires ``seed`` and ``edge_prob``).  Random
    digraphs start from the directed ring, so they are always strongly
    connected, and every other off-diagonal arc is added independently with
    probability ``edge_prob``.
    """
    if kind == "custom":
        if matrix is None:
            raise InvalidMatrix("custom digraph needs a matrix")
        return Digraph(np.asarray(matrix))
    if n_agents is None or n_agents < 2:
        raise InvalidMatrix("at least two agents are required")
    n = int(n_agents)
    if kind == "complete":
        return Digraph(np.ones((n, n), dtype=np.int8) - np.eye(n, dtype=np.int8))
    chi = np.zeros((n, n), dtype=np.int8)
    idx = np.arange(n)
    chi[idx, (idx + 1) % n] = 1
    if kind == "ring":
        return Digraph(chi)
    if kind == "random":
        if edge_prob is None or not 0 < edge_prob <= 1:
            raise ValueError("edge_prob must lie in (0, 1]")
        rng = np.random.default_rng(seed)
        extra = rng.random((n, n)) < edge_prob
        chi = np.where(extra, 1, chi).astype(np.int8)
        np.fill_diagonal(chi, 0)
        return Digraph(chi)
    raise ValueError(f"unknown digraph family {kind!r}")
