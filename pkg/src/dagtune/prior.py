"""Expert knowledge container: known edges, forbidden edges, node models.

Edges may name metric groups that do not exist until the first trace
summarization; such edges are held pending and applied once the node
appears, with a warning so typos do not vanish silently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import networkx as nx

from .graph_model import ModelBinding


class PriorWarning(UserWarning):
    pass


@dataclass
class ExpertPrior:
    edges: list[tuple[str, str]] = field(default_factory=list)
    tabu_edges: list[tuple[str, str]] = field(default_factory=list)
    models: dict[str, ModelBinding] = field(default_factory=dict)

    def __post_init__(self):
        self.edges = [tuple(e) for e in self.edges]
        self.tabu_edges = [tuple(e) for e in self.tabu_edges]
        for src, dst in self.edges + self.tabu_edges:
            if src == dst:
                raise ValueError(f"self-edge {src!r} -> {dst!r} not allowed")
        if not nx.is_directed_acyclic_graph(nx.DiGraph(self.edges)):
            raise ValueError("expert edges contain a cycle")

    def resolved(self, node_names: list[str]) -> "ExpertPrior":
        """The subset applicable to the given nodes; pending items warned."""
        known = set(node_names)
        edges, tabu = [], []
        pending: list[str] = []
        for src, dst in self.edges:
            if src in known and dst in known:
                edges.append((src, dst))
            else:
                pending.append(f"{src}->{dst}")
        for src, dst in self.tabu_edges:
            if src in known and dst in known:
                tabu.append((src, dst))
            else:
                pending.append(f"tabu {src}->{dst}")
        models = {n: b for n, b in self.models.items() if n in known}
        pending += [f"model on {n}" for n in self.models if n not in known]
        if pending:
            warnings.warn(
                "expert prior items held pending (nodes not yet present): "
                + ", ".join(pending),
                PriorWarning,
            )
        return ExpertPrior(edges=edges, tabu_edges=tabu, models=models)
