"""Dependency-DAG learning over summarized trace columns.

A weighted adjacency matrix is fit by continuous optimization: linear
least-squares reconstruction plus an L1 penalty, constrained to acyclicity
through the smooth score h(W) = tr(exp(W*W)) - d driven to zero by an
augmented Lagrangian (L-BFGS-B inner solver on doubled non-negative
variables). Role semantics are hard constraints, not preferences:
parameter nodes admit no in-edges and objective nodes no out-edges, and
expert tabu pairs are pinned to zero throughout the optimization. Expert
edges are merged afterwards and win any conflict with learned edges.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import networkx as nx
import numpy as np
import scipy.linalg as slin
import scipy.optimize as sopt

from .summarize import SummaryTable

DEFAULT_L1 = 0.1
DEFAULT_W_THRESHOLD = 0.3
H_TOL = 1e-8
RHO_MAX = 1e16
MAX_OUTER_ITER = 100


class StructureWarning(UserWarning):
    pass


class NodeRole(enum.Enum):
    PARAM = "param"
    METRIC_GROUP = "group"
    OBJECTIVE = "objective"


class Provenance(enum.Enum):
    LEARNED = "learned"
    EXPERT = "expert"


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    weight: float
    provenance: Provenance


@dataclass(frozen=True)
class EdgeMask:
    """Boolean d x d matrix of permitted edges (allowed[i, j]: i -> j)."""

    names: tuple[str, ...]
    allowed: np.ndarray

    @classmethod
    def from_roles(
        cls,
        names: list[str],
        roles: list[NodeRole],
        tabu: tuple[tuple[str, str], ...] = (),
    ) -> "EdgeMask":
        d = len(names)
        allowed = np.ones((d, d), dtype=bool)
        np.fill_diagonal(allowed, False)
        index = {n: i for i, n in enumerate(names)}
        for j, role in enumerate(roles):
            if role is NodeRole.PARAM:
                allowed[:, j] = False
        for i, role in enumerate(roles):
            if role is NodeRole.OBJECTIVE:
                allowed[i, :] = False
        for src, dst in tabu:
            if src in index and dst in index:
                allowed[index[src], index[dst]] = False
        return cls(tuple(names), allowed)


@dataclass
class DagStructure:
    """Directed acyclic graph over {param, group, objective} nodes."""

    nodes: list[tuple[str, NodeRole]]
    edges: list[Edge]

    def __post_init__(self):
        names = [n for n, _ in self.nodes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate node names")
        g = self.to_networkx()
        if not nx.is_directed_acyclic_graph(g):
            raise ValueError("structure contains a cycle")

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        for name, role in self.nodes:
            g.add_node(name, role=role)
        for e in self.edges:
            g.add_edge(e.src, e.dst, weight=e.weight, provenance=e.provenance)
        return g

    def roles(self) -> dict[str, NodeRole]:
        return dict(self.nodes)

    def parents(self, name: str) -> list[str]:
        order = {n: i for i, (n, _) in enumerate(self.nodes)}
        ps = [e.src for e in self.edges if e.dst == name]
        return sorted(ps, key=order.__getitem__)

    def objective_nodes(self) -> list[str]:
        return [n for n, r in self.nodes if r is NodeRole.OBJECTIVE]


def acyclicity(w: np.ndarray) -> float:
    """Smooth DAG score: 0 iff the graph of nonzero entries is acyclic."""
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("acyclicity requires finite entries")
    d = w.shape[0]
    return float(np.trace(slin.expm(w * w)) - d)


def acyclicity_grad(w: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient of the acyclicity score."""
    d = w.shape[0]
    e = slin.expm(w * w)
    return float(np.trace(e) - d), e.T * 2.0 * w


def _has_cycle(w: np.ndarray) -> bool:
    g = nx.from_numpy_array(np.abs(w) > 0, create_using=nx.DiGraph)
    return not nx.is_directed_acyclic_graph(g)


def design_matrix(table: SummaryTable) -> tuple[np.ndarray, list[str], list[NodeRole]]:
    """Fully standardized column matrix with node names and roles.

    Group and objective columns arrive standardized; parameter columns are
    on their unit-cube scale and get standardized here so the L1 penalty
    treats all columns alike. A constant parameter column (never varied)
    becomes all-zeros.
    """
    names = table.node_names()
    roles = (
        [NodeRole.PARAM] * len(table.param_names)
        + [NodeRole.METRIC_GROUP] * len(table.group_names)
        + [NodeRole.OBJECTIVE] * len(table.objective_names)
    )
    x = table.matrix().copy()
    for j in range(len(table.param_names)):
        col = x[:, j]
        std = col.std()
        x[:, j] = (col - col.mean()) / std if std > 0 else 0.0
    return x, names, roles


def learn_structure(
    table: SummaryTable,
    mask: EdgeMask,
    l1: float = DEFAULT_L1,
    w_threshold: float = DEFAULT_W_THRESHOLD,
) -> np.ndarray:
    """Fit the weighted adjacency matrix under the mask.

    Minimizes ``(1/2n) ||X - XW||_F^2 + l1 ||W||_1`` subject to h(W) = 0.
    Masked entries are pinned to zero by variable bounds. Entries below
    ``w_threshold`` in magnitude are zeroed afterwards; if the thresholded
    graph still has a cycle the threshold is raised by 0.05 until acyclic.
    """
    x, names, _ = design_matrix(table)
    if list(mask.names) != names:
        raise ValueError("mask node order does not match table columns")
    n, d = x.shape
    if n < d:
        warnings.warn(
            f"only {n} rows for {d} nodes; structure estimates will be noisy",
            StructureWarning,
        )

    allowed = mask.allowed
    # doubled parametrization w = pos - neg keeps the L1 term smooth
    bounds = [
        (0.0, 0.0) if (i == j or not allowed[i, j]) else (0.0, None)
        for _ in range(2)
        for i in range(d)
        for j in range(d)
    ]

    def unpack(wvec):
        return (wvec[: d * d] - wvec[d * d :]).reshape(d, d)

    rho, alpha, h = 1.0, 0.0, np.inf
    wvec = np.zeros(2 * d * d)

    def objective(wv):
        w = unpack(wv)
        resid = x - x @ w
        loss = 0.5 / n * float(np.sum(resid * resid))
        g_loss = -(x.T @ resid) / n
        hval, g_h = acyclicity_grad(w)
        obj = loss + 0.5 * rho * hval * hval + alpha * hval + l1 * wv.sum()
        g_smooth = g_loss + (rho * hval + alpha) * g_h
        grad = np.concatenate([(g_smooth + l1).ravel(), (-g_smooth + l1).ravel()])
        if not np.isfinite(obj):
            raise FloatingPointError(
                f"structure optimization diverged (loss={loss}, h={hval}, rho={rho})"
            )
        return obj, grad

    for _ in range(MAX_OUTER_ITER):
        w_new, h_new = None, None
        while rho < RHO_MAX:
            sol = sopt.minimize(
                objective, wvec, method="L-BFGS-B", jac=True, bounds=bounds
            )
            w_new = sol.x
            h_new = acyclicity(unpack(w_new))
            if h_new > 0.25 * h:
                rho *= 10
            else:
                break
        wvec, h = w_new, h_new
        alpha += rho * h
        if h <= H_TOL or rho >= RHO_MAX:
            break

    w = unpack(wvec)
    w[~allowed] = 0.0
    thr = w_threshold
    w_out = np.where(np.abs(w) >= thr, w, 0.0)
    while _has_cycle(w_out):
        thr += 0.05
        w_out = np.where(np.abs(w) >= thr, w, 0.0)
    return w_out


def merge_expert(
    learned: np.ndarray,
    names: list[str],
    roles: list[NodeRole],
    expert_edges: tuple[tuple[str, str], ...] = (),
    tabu_edges: tuple[tuple[str, str], ...] = (),
) -> DagStructure:
    """Union of learned and expert edges with expert precedence.

    An expert edge suppresses the reverse learned edge. If the union has a
    cycle, the lowest-|weight| learned edge on each cycle is dropped until
    acyclic; a cycle made of expert edges only is an error.
    """
    index = {n: i for i, n in enumerate(names)}
    role_of = dict(zip(names, roles))
    for src, dst in expert_edges:
        for endpoint in (src, dst):
            if endpoint not in index:
                raise ValueError(f"expert edge references unknown node {endpoint!r}")
        if role_of[dst] is NodeRole.PARAM:
            raise ValueError(f"expert edge {src}->{dst} enters a parameter node")
        if role_of[src] is NodeRole.OBJECTIVE:
            raise ValueError(f"expert edge {src}->{dst} leaves an objective node")
    expert_g = nx.DiGraph(expert_edges)
    if not nx.is_directed_acyclic_graph(expert_g):
        raise ValueError("expert edge set contains a cycle")

    tabu = set(tabu_edges)
    expert = list(dict.fromkeys(expert_edges))
    expert_set = set(expert)
    reversed_by_expert = {(dst, src) for src, dst in expert_set}

    edges: dict[tuple[str, str], Edge] = {}
    for i, src in enumerate(names):
        for j, dst in enumerate(names):
            wij = learned[i, j]
            if wij == 0:
                continue
            if (src, dst) in tabu or (src, dst) in reversed_by_expert:
                continue
            edges[(src, dst)] = Edge(src, dst, float(wij), Provenance.LEARNED)
    for src, dst in expert:
        w = edges[(src, dst)].weight if (src, dst) in edges else 0.0
        edges[(src, dst)] = Edge(src, dst, w, Provenance.EXPERT)

    g = nx.DiGraph()
    g.add_nodes_from(names)
    for e in edges.values():
        g.add_edge(e.src, e.dst)
    while not nx.is_directed_acyclic_graph(g):
        cycle = nx.find_cycle(g)
        on_cycle = [edges[(u, v)] for u, v, *_ in cycle]
        learned_on_cycle = [e for e in on_cycle if e.provenance is Provenance.LEARNED]
        if not learned_on_cycle:
            raise ValueError("expert edges alone form a cycle; cannot resolve")
        victim = min(learned_on_cycle, key=lambda e: abs(e.weight))
        del edges[(victim.src, victim.dst)]
        g.remove_edge(victim.src, victim.dst)

    ordered = sorted(edges.values(), key=lambda e: (index[e.src], index[e.dst]))
    return DagStructure(nodes=list(zip(names, roles)), edges=ordered)


def max_dimension(g: DagStructure) -> int:
    """Largest in-degree over all nodes: the widest model any node needs."""
    if not g.edges:
        return 0
    indeg: dict[str, int] = {}
    for e in g.edges:
        indeg[e.dst] = indeg.get(e.dst, 0) + 1
    return max(indeg.values())


_DOT_SHAPE = {
    NodeRole.PARAM: ("box", "steelblue"),
    NodeRole.METRIC_GROUP: ("ellipse", "gray30"),
    NodeRole.OBJECTIVE: ("diamond", "firebrick"),
}


def export_dot(g: DagStructure) -> str:
    """Deterministic DOT rendering; node style by role, edge style by provenance."""
    lines = ["digraph dependency_structure {", "  rankdir=LR;"]
    for name, role in g.nodes:
        shape, color = _DOT_SHAPE[role]
        lines.append(f'  "{name}" [shape={shape}, color={color}];')
    for e in sorted(g.edges, key=lambda e: (e.src, e.dst)):
        style = "bold" if e.provenance is Provenance.EXPERT else "solid"
        lines.append(
            f'  "{e.src}" -> "{e.dst}" [style={style}, label="{e.weight:.3f}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


STRUCTURE_FORMAT_VERSION = 1


def structure_to_text(g: DagStructure) -> str:
    """Tab-separated structure document (names may contain spaces)."""
    lines = [f"dagtune-structure\tv{STRUCTURE_FORMAT_VERSION}"]
    for name, role in g.nodes:
        lines.append(f"node\t{name}\t{role.value}")
    for e in sorted(g.edges, key=lambda e: (e.src, e.dst)):
        lines.append(f"edge\t{e.src}\t{e.dst}\t{e.weight!r}\t{e.provenance.value}")
    return "\n".join(lines) + "\n"


def structure_from_text(text: str) -> DagStructure:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("dagtune-structure\t"):
        raise ValueError("not a structure document")
    nodes: list[tuple[str, NodeRole]] = []
    edges: list[Edge] = []
    for ln in lines[1:]:
        parts = ln.split("\t")
        if parts[0] == "node" and len(parts) == 3:
            nodes.append((parts[1], NodeRole(parts[2])))
        elif parts[0] == "edge" and len(parts) == 5:
            edges.append(Edge(parts[1], parts[2], float(parts[3]), Provenance(parts[4])))
        else:
            raise ValueError(f"bad structure line: {ln!r}")
    return DagStructure(nodes=nodes, edges=edges)
