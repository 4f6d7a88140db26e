"""Graph construction, Laplacian spectrum and graph Fourier transform."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

EARTH_RADIUS_KM = 6371.0088


class GraphSizeError(ValueError):
    """Raised when a graph cannot be built from the given number of nodes."""


class ContractError(ValueError):
    """Raised when an input matrix or vector violates an operation's contract."""


class DisconnectedGraphWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GraphTopology:
    """Undirected, unweighted graph on ``n_nodes`` nodes.

    ``edges`` holds pairs ``(i, j)`` with ``i < j``.
    """

    n_nodes: int
    edges: frozenset
    coords: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise GraphSizeError("n_nodes must be positive")
        clean = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ContractError(f"self-loop at node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ContractError(f"edge ({i}, {j}) out of range")
            clean.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(clean))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n_nodes, self.n_nodes))
        if self.edges:
            idx = np.array(sorted(self.edges))
            A[idx[:, 0], idx[:, 1]] = 1.0
            A[idx[:, 1], idx[:, 0]] = 1.0
        return A

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Eigenvectors (columns of ``eigenvectors``) and ascending eigenvalues."""

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def haversine_distances(coords) -> np.ndarray:
    """Pairwise great-circle distances in km between (lat, lon) degree pairs."""
    rad = np.radians(np.asarray(coords, dtype=float))
    lat, lon = rad[:, 0:1], rad[:, 1:2]
    dlat = lat - lat.T
    dlon = lon - lon.T
    a = np.sin(dlat / 2) ** 2 + np.cos(lat) * np.cos(lat.T) * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def euclidean_distances(coords) -> np.ndarray:
    c = np.asarray(coords, dtype=float)
    diff = c[:, None, :] - c[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def build_knn_graph(coords, k: int, metric: str = "haversine") -> GraphTopology:
    """Symmetrized k-nearest-neighbour graph over geographic coordinates.

    Parameters
    ----------
    coords : (n, 2) array_like
        Latitude and longitude in degrees.
    k : int
        Number of neighbours each node selects.
    metric : {"haversine", "euclidean"}
        Great-circle distance, or plain Euclidean distance on the degree values.

    Returns
    -------
    GraphTopology
        An edge ``(i, j)`` exists if either endpoint selected the other.
        Equal distances are resolved in favour of the lower node index.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ContractError("coords must have shape (n, 2)")
    if k < 1:
        raise ContractError("k must be positive")
    n = coords.shape[0]
    if n < k + 1:
        raise GraphSizeError(f"need at least k + 1 = {k + 1} nodes, got {n}")
    if not np.all(np.isfinite(coords)):
        raise ContractError("coordinates must be finite")

    if metric == "haversine":
        dist = haversine_distances(coords)
    elif metric == "euclidean":
        dist = euclidean_distances(coords)
    else:
        raise ContractError(f"unknown metric {metric!r}")

    index = np.arange(n)
    edges = set()
    for i in range(n):
        # lexsort: last key is primary
        order = np.lexsort((index, dist[i]))
        order = order[order != i][:k]
        for j in order:
            edges.add((min(i, int(j)), max(i, int(j))))

    topo = GraphTopology(n_nodes=n, edges=frozenset(edges), coords=coords)
    n_comp = count_components(topo)
    if n_comp > 1:
        warnings.warn(
            f"k-NN graph has {n_comp} connected components",
            DisconnectedGraphWarning,
            stacklevel=2,
        )
    return topo


def count_components(topology: GraphTopology) -> int:
    n_comp, _ = connected_components(csr_matrix(topology.adjacency()), directed=False)
    return int(n_comp)


def laplacian(topology: GraphTopology) -> np.ndarray:
    """Combinatorial Laplacian ``D - A``."""
    A = topology.adjacency()
    return np.diag(A.sum(axis=1)) - A


def eigendecompose(L) -> LaplacianSpectrum:
    """Eigendecomposition of a symmetric Laplacian.

    Eigenvalues come back ascending. Each eigenvector is flipped so that its
    largest-magnitude entry is positive, which pins down the sign ambiguity.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ContractError("Laplacian must be square")
    asym = np.max(np.abs(L - L.T)) if L.size else 0.0
    if asym > 1e-10:
        raise ContractError(f"matrix not symmetric (max asymmetry {asym:.3g})")

    vals, vecs = np.linalg.eigh(L)
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    pivots = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivots, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    # eigh returns tiny negative round-off for the null space
    vals = np.where(np.abs(vals) < 1e-12, 0.0, vals)
    vecs.setflags(write=False)
    vals.setflags(write=False)
    return LaplacianSpectrum(eigenvectors=vecs, eigenvalues=vals)


def _check_len(spectrum: LaplacianSpectrum, v: np.ndarray):
    if v.shape[0] != spectrum.n:
        raise ContractError(f"length {v.shape[0]} does not match graph size {spectrum.n}")


def gft(spectrum: LaplacianSpectrum, x) -> np.ndarray:
    """Graph Fourier transform ``U^T x``. Columns of a 2-D ``x`` are signals."""
    x = np.asarray(x, dtype=float)
    _check_len(spectrum, x)
    return spectrum.eigenvectors.T @ x


def igft(spectrum: LaplacianSpectrum, s) -> np.ndarray:
    """Inverse graph Fourier transform ``U s``."""
    s = np.asarray(s, dtype=float)
    _check_len(spectrum, s)
    return spectrum.eigenvectors @ s
