"""Probabilistic DAG: one predictive model per non-parameter node.

Every metric-group and objective node carries a model conditioned
directly on its structure parents, trained independently of the other
nodes. Sampling walks the ancestors of the objective in topological
order with a per-node cache, so a node feeding several children is drawn
exactly once per call.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Protocol

import networkx as nx
import numpy as np

from . import expr as expr_mod
from .gp import GpNode
from .structure import DagStructure, NodeRole
from .summarize import SummaryTable


class NodeModel(Protocol):
    def fit(self, inputs: np.ndarray, targets: np.ndarray, seed: int | None = None): ...

    def sample(self, parents: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


class ExprNode:
    """Deterministic expert model: an arithmetic expression over parents."""

    def __init__(self, text: str):
        self.text = text
        self.ast = expr_mod.parse(text)
        self.identifiers = expr_mod.identifiers(self.ast)
        self.parent_order: list[str] = []

    def bind(self, parent_names: list[str]) -> "ExprNode":
        unknown = [i for i in self.identifiers if i not in parent_names]
        if unknown:
            raise ValueError(
                f"expression {self.text!r} references non-parent identifier(s) {unknown}"
            )
        self.parent_order = list(parent_names)
        return self

    def fit(self, inputs: np.ndarray, targets: np.ndarray, seed: int | None = None):
        return self

    def sample(self, parents: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if not self.parent_order:
            raise RuntimeError("ExprNode used before bind()")
        env = {name: parents[:, :, i] for i, name in enumerate(self.parent_order)}
        value = expr_mod.evaluate(self.ast, env)
        return np.broadcast_to(np.asarray(value, dtype=np.float64), parents.shape[:2]).copy()

    def evaluate_scalars(self, values: dict[str, float]) -> float:
        return float(expr_mod.evaluate(self.ast, values))


@dataclass(frozen=True)
class ModelBinding:
    """Expert model declaration for one node."""

    model: str  # "gp" | "expr"
    kernel: str = "matern52"
    expression: str | None = None

    def __post_init__(self):
        if self.model not in ("gp", "expr"):
            raise ValueError(f"unknown model kind {self.model!r}")
        if self.model == "expr" and not self.expression:
            raise ValueError("expr binding requires an expression")


def _node_seed(base_seed: int, name: str) -> int:
    # stable across processes (unlike hash()), cheap, well spread
    return (base_seed * 0x9E3779B1 + zlib.crc32(name.encode())) % (2**32)


@dataclass
class ProbDag:
    structure: DagStructure
    models: dict[str, NodeModel]
    parent_map: dict[str, list[str]]
    trained: dict[str, bool] = field(default_factory=dict)

    def param_names(self) -> list[str]:
        return [n for n, r in self.structure.nodes if r is NodeRole.PARAM]


def build(structure: DagStructure, bindings: dict[str, ModelBinding] | None = None) -> ProbDag:
    """Attach a model to every non-parameter node.

    Nodes without a binding get a default GP; ``expr`` bindings must only
    reference the node's structure parents. Binding a parameter node is an
    error: parameters are sampled from the space, not modeled.
    """
    bindings = bindings or {}
    roles = structure.roles()
    for name in bindings:
        if name not in roles:
            raise ValueError(f"model binding references unknown node {name!r}")
        if roles[name] is NodeRole.PARAM:
            raise ValueError(f"cannot bind a model to parameter node {name!r}")

    models: dict[str, NodeModel] = {}
    parent_map: dict[str, list[str]] = {}
    for name, role in structure.nodes:
        if role is NodeRole.PARAM:
            continue
        parents = structure.parents(name)
        parent_map[name] = parents
        spec = bindings.get(name)
        if spec is None or spec.model == "gp":
            kernel = spec.kernel if spec else "matern52"
            models[name] = GpNode(kernel=kernel)
        else:
            models[name] = ExprNode(spec.expression).bind(parents)
    return ProbDag(
        structure=structure,
        models=models,
        parent_map=parent_map,
        trained={n: isinstance(m, ExprNode) for n, m in models.items()},
    )


def fit_all(dag: ProbDag, table: SummaryTable, seed: int = 0) -> ProbDag:
    """Train every GP node on (parent columns -> node column), independently."""
    for name in sorted(dag.models):
        model = dag.models[name]
        if isinstance(model, ExprNode):
            dag.trained[name] = True
            continue
        parents = dag.parent_map[name]
        try:
            y = table.column(name)
            if parents:
                x = np.column_stack([table.column(p) for p in parents])
            else:
                # orphan node: no informative inputs, fit against a dummy
                # constant so the model exposes its marginal distribution
                x = np.zeros((len(y), 1))
        except KeyError as e:
            raise ValueError(f"summary table lacks a column for node {name!r}: {e}") from e
        model.fit(x, y, seed=_node_seed(seed, name))
        dag.trained[name] = True
    return dag


def sample_objective(
    dag: ProbDag,
    param_samples: np.ndarray,
    rng: np.random.Generator,
    objective: str | None = None,
) -> np.ndarray:
    """Draw objective samples by ancestral sampling along the DAG.

    ``param_samples`` has shape (s, q, D) with D following the order of
    the structure's parameter nodes. Only ancestors of the objective are
    visited, each exactly once; nodes with several children are served
    from the cache. Output shape is (s, q).
    """
    param_samples = np.asarray(param_samples, dtype=np.float64)
    if param_samples.ndim != 3:
        raise ValueError("param_samples must have shape (s, q, D)")
    params = dag.param_names()
    if param_samples.shape[2] != len(params):
        raise ValueError(
            f"param_samples last axis is {param_samples.shape[2]}, expected {len(params)}"
        )
    objectives = dag.structure.objective_nodes()
    if objective is None:
        if len(objectives) != 1:
            raise ValueError(f"specify the objective; structure has {objectives}")
        objective = objectives[0]
    elif objective not in objectives:
        raise ValueError(f"{objective!r} is not an objective node")

    g = dag.structure.to_networkx()
    needed = nx.ancestors(g, objective) | {objective}
    order = [n for n in nx.topological_sort(g) if n in needed]

    cache: dict[str, np.ndarray] = {}
    param_index = {n: i for i, n in enumerate(params)}
    for node in order:
        if node in param_index:
            cache[node] = param_samples[:, :, param_index[node]]
            continue
        if not dag.trained.get(node, False):
            raise RuntimeError(f"node {node!r} on the objective path is not trained")
        parents = dag.parent_map[node]
        if parents:
            stacked = np.stack([cache[p] for p in parents], axis=-1)
        else:
            s, q = param_samples.shape[:2]
            stacked = np.zeros((s, q, 1))
        cache[node] = dag.models[node].sample(stacked, rng)
    return cache[objective]
