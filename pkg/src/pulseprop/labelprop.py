"""Graph label propagation with absorbing labeled nodes.

Feature vectors become graph nodes; edges carry similarity (binary KNN
union edges or an RBF kernel). Row-normalizing the adjacency by the degree
gives the transition matrix T = D^-1 A, and labels spread by repeated
application of T with labeled rows clamped to their one-hot values. Since
labeled nodes absorb, the stationary unlabeled distribution solves the
linear system

    (I - T_uu) Y_u = T_ul Y_l,

which the closed-form solver evaluates directly; the iterative solver runs
the clamped power iteration with a convergence threshold. Both agree to
solver precision wherever every unlabeled component can reach a labeled
node. Unlabeled components with no labeled attachment are "stranded":
their rows fall back to the labeled-class prior and are flagged on the
result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from . import _kernels
from .preprocess import PulseMatrix

# closed form is exact and affordable up to this many nodes, iterate beyond
CLOSED_FORM_NODE_LIMIT = 10_000


@dataclass(frozen=True)
class PropagationConfig:
    kernel: str = "knn"
    n_neighbors: int = 7
    rbf_gamma: float = 20.0
    max_iterations: int = 1000
    tolerance: float = 1e-3
    solver: str = "auto"  # auto -> closed_form at desk scale, iterative above

    def __post_init__(self):
        if self.kernel not in ("knn", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.solver not in ("auto", "iterative", "closed_form"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.n_neighbors < 1 or self.rbf_gamma <= 0 or self.max_iterations < 1 or self.tolerance <= 0:
            raise ValueError("invalid propagation hyperparameters")

    def resolve_solver(self, n_nodes: int) -> str:
        if self.solver != "auto":
            return self.solver
        return "closed_form" if n_nodes <= CLOSED_FORM_NODE_LIMIT else "iterative"


@dataclass
class PropagationGraph:
    """Similarity graph plus its row-stochastic transition matrix."""

    adjacency: sp.csr_matrix
    degree: np.ndarray
    transition: sp.csr_matrix
    labeled_idx: np.ndarray
    unlabeled_idx: np.ndarray
    labels: np.ndarray
    n_classes: int

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]


@dataclass
class LabelDistribution:
    """Per-node class probabilities; labeled rows stay one-hot."""

    probabilities: np.ndarray
    stranded_nodes: tuple[int, ...] = field(default=())


def build_graph(features, labels, config: PropagationConfig) -> PropagationGraph:
    """Construct the similarity graph and T = D^-1 A.

    labels holds one entry per row: a class id in 0..k-1 or -1 for
    unlabeled. Every class up to the maximum seen must have at least one
    labeled node. KNN edges are the union i->j or j->i with binary weight;
    RBF edges are exp(-gamma |xi - xj|^2) with a zero diagonal.
    """
    x = _feature_array(features)
    y = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    if y.shape != (n,):
        raise ValueError("labels must align with feature rows")
    if n < 2:
        raise ValueError("need at least 2 nodes")
    labeled_idx = np.flatnonzero(y >= 0)
    unlabeled_idx = np.flatnonzero(y < 0)
    if labeled_idx.size == 0:
        raise ValueError("need at least one labeled node")
    n_classes = int(y[labeled_idx].max()) + 1
    if n_classes < 2:
        raise ValueError("need labeled nodes from at least two classes")
    present = np.unique(y[labeled_idx])
    missing = sorted(set(range(n_classes)) - set(int(c) for c in present))
    if missing:
        raise ValueError(f"classes {missing} have no labeled node")

    if config.kernel == "knn":
        if config.n_neighbors >= n:
            raise ValueError("n_neighbors must be smaller than the node count")
        nn = _kernels.topk_neighbors(x, x, config.n_neighbors, exclude_self=True)
        rows = np.repeat(np.arange(n, dtype=np.int64), config.n_neighbors)
        adjacency = sp.coo_matrix(
            (np.ones(rows.size), (rows, nn.ravel())), shape=(n, n)
        ).tocsr()
        adjacency.data[:] = 1.0  # collapse duplicate entries from the coo sum
        adjacency = adjacency.maximum(adjacency.T)
    else:
        sq = np.einsum("ij,ij->i", x, x)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(d2, 0.0, out=d2)
        weights = np.exp(-config.rbf_gamma * d2)
        np.fill_diagonal(weights, 0.0)
        adjacency = sp.csr_matrix(weights)

    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    if (degree <= 0).any():
        isolated = np.flatnonzero(degree <= 0)
        raise ValueError(f"isolated nodes with zero degree: {isolated[:10].tolist()}")
    transition = sp.diags(1.0 / degree) @ adjacency
    return PropagationGraph(
        adjacency=adjacency,
        degree=degree,
        transition=transition.tocsr(),
        labeled_idx=labeled_idx,
        unlabeled_idx=unlabeled_idx,
        labels=y,
        n_classes=n_classes,
    )


def initial_distribution(graph: PropagationGraph) -> LabelDistribution:
    """One-hot rows for labeled nodes, uniform rows for unlabeled ones."""
    probs = np.full((graph.n_nodes, graph.n_classes), 1.0 / graph.n_classes)
    probs[graph.labeled_idx] = 0.0
    probs[graph.labeled_idx, graph.labels[graph.labeled_idx]] = 1.0
    return LabelDistribution(probabilities=probs)


def propagate_iterative(
    graph: PropagationGraph, initial: LabelDistribution, config: PropagationConfig
) -> tuple[LabelDistribution, int, bool]:
    """Clamped power iteration until the unlabeled rows move less than tolerance.

    Returns (distribution, iterations_used, converged); non-convergence is
    reported, not raised.
    """
    clamp = initial.probabilities
    labeled_mask = np.zeros(graph.n_nodes, dtype=np.uint8)
    labeled_mask[graph.labeled_idx] = 1
    t = graph.transition
    y, iterations, converged = _kernels.propagate_csr(
        t.indptr,
        t.indices,
        t.data,
        initial.probabilities,
        clamp,
        labeled_mask,
        config.tolerance,
        config.max_iterations,
    )
    return LabelDistribution(probabilities=y), iterations, converged


def propagate_closed_form(graph: PropagationGraph, initial: LabelDistribution) -> LabelDistribution:
    """Solve the absorbing-state linear system for the unlabeled rows.

    Unlabeled components without any labeled attachment would make the
    system singular; those nodes are excluded from the solve, assigned the
    labeled-class prior and flagged via stranded_nodes.
    """
    u = graph.unlabeled_idx
    l = graph.labeled_idx
    probs = initial.probabilities.copy()
    if u.size == 0:
        return LabelDistribution(probabilities=probs)

    t_uu = graph.transition[u][:, u]
    t_ul = graph.transition[u][:, l]
    y_l0 = initial.probabilities[l]

    stranded_local = _stranded_components(graph.adjacency[u][:, u], t_ul)
    solvable = np.setdiff1d(np.arange(u.size), stranded_local, assume_unique=False)

    if solvable.size:
        a = sp.identity(solvable.size, format="csc") - t_uu[solvable][:, solvable].tocsc()
        rhs = np.asarray((t_ul[solvable] @ y_l0))
        solution = spla.spsolve(a, rhs)
        solution = np.atleast_2d(solution)
        if solution.shape[0] != solvable.size:  # spsolve squeezes single-row systems
            solution = solution.reshape(solvable.size, -1)
        np.clip(solution, 0.0, 1.0, out=solution)
        solution /= solution.sum(axis=1, keepdims=True)
        probs[u[solvable]] = solution

    stranded_global: tuple[int, ...] = ()
    if stranded_local.size:
        prior = np.bincount(graph.labels[l], minlength=graph.n_classes).astype(np.float64)
        prior /= prior.sum()
        probs[u[stranded_local]] = prior
        stranded_global = tuple(int(i) for i in u[stranded_local])
    return LabelDistribution(probabilities=probs, stranded_nodes=stranded_global)


def propagate(
    graph: PropagationGraph, initial: LabelDistribution, config: PropagationConfig
) -> tuple[LabelDistribution, dict]:
    """Dispatch to the configured solver; returns (distribution, solver info)."""
    solver = config.resolve_solver(graph.n_nodes)
    if solver == "closed_form":
        dist = propagate_closed_form(graph, initial)
        return dist, {"solver": "closed_form", "stranded_nodes": len(dist.stranded_nodes)}
    dist, iterations, converged = propagate_iterative(graph, initial, config)
    return dist, {"solver": "iterative", "iterations": iterations, "converged": converged}


def harden_labels(dist: LabelDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Argmax labels (ties to the higher class) plus the class-1 score column."""
    probs = dist.probabilities
    k = probs.shape[1]
    labels = (k - 1) - np.argmax(probs[:, ::-1], axis=1)
    scores = probs[:, 1].copy() if k >= 2 else probs[:, 0].copy()
    return labels, scores


def save_graph(graph: PropagationGraph, pulse_ids, edges_path, nodes_path) -> None:
    """Debug dump: 'i j weight' edge list plus an 'index pulse_id label' node file."""
    coo = graph.adjacency.tocoo()
    with open(edges_path, "w") as fh:
        for i, j, w in zip(coo.row, coo.col, coo.data):
            if i < j:  # adjacency is symmetric, emit each edge once
                fh.write(f"{i} {j} {float(w)!r}\n")
    with open(nodes_path, "w") as fh:
        for idx, pid in enumerate(pulse_ids):
            fh.write(f"{idx} {pid} {int(graph.labels[idx])}\n")


def _feature_array(features) -> np.ndarray:
    if isinstance(features, PulseMatrix):
        return np.ascontiguousarray(features.features, dtype=np.float64)
    arr = np.ascontiguousarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    return arr


def _stranded_components(a_uu: sp.spmatrix, t_ul: sp.spmatrix) -> np.ndarray:
    """Local indices of unlabeled nodes whose component never touches a labeled node."""
    n_components, membership = csgraph.connected_components(a_uu, directed=False)
    attachment = np.asarray(t_ul.sum(axis=1)).ravel()
    stranded = []
    for comp in range(n_components):
        members = np.flatnonzero(membership == comp)
        if attachment[members].sum() == 0.0:
            stranded.extend(members.tolist())
    return np.array(sorted(stranded), dtype=np.int64)
