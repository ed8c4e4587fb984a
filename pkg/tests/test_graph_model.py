import numpy as np
import pytest

from dagtune.graph_model import (
    ExprNode,
    ModelBinding,
    build,
    fit_all,
    sample_objective,
)
from dagtune.gp import GpNode
from dagtune.structure import DagStructure, Edge, NodeRole, Provenance
from dagtune.summarize import SummaryTable

LEARNED = Provenance.LEARNED


def _structure(nodes, edges):
    return DagStructure(
        nodes=nodes, edges=[Edge(s, d, 1.0, LEARNED) for s, d in edges]
    )


def chain_structure():
    return _structure(
        [("p", NodeRole.PARAM), ("m", NodeRole.METRIC_GROUP), ("y", NodeRole.OBJECTIVE)],
        [("p", "m"), ("m", "y")],
    )


def diamond_structure():
    return _structure(
        [
            ("p", NodeRole.PARAM),
            ("a", NodeRole.METRIC_GROUP),
            ("b", NodeRole.METRIC_GROUP),
            ("y", NodeRole.OBJECTIVE),
        ],
        [("p", "a"), ("p", "b"), ("a", "y"), ("b", "y")],
    )


class CountingExpr(ExprNode):
    def __init__(self, text):
        super().__init__(text)
        self.calls = 0

    def sample(self, parents, rng):
        self.calls += 1
        return super().sample(parents, rng)


class TestBuild:
    def test_default_is_gp_everywhere(self):
        dag = build(chain_structure())
        assert isinstance(dag.models["m"], GpNode)
        assert isinstance(dag.models["y"], GpNode)
        assert "p" not in dag.models

    def test_expr_binding_used(self):
        dag = build(
            chain_structure(),
            {"y": ModelBinding(model="expr", expression="m + 1")},
        )
        assert isinstance(dag.models["y"], ExprNode)
        assert isinstance(dag.models["m"], GpNode)

    def test_param_binding_rejected(self):
        with pytest.raises(ValueError, match="parameter"):
            build(chain_structure(), {"p": ModelBinding(model="gp")})

    def test_unknown_node_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            build(chain_structure(), {"zz": ModelBinding(model="gp")})

    def test_expr_must_reference_parents_only(self):
        with pytest.raises(ValueError, match="non-parent"):
            build(
                chain_structure(),
                {"y": ModelBinding(model="expr", expression="p + 1")},
            )

    def test_kernel_override_passes_through(self):
        dag = build(chain_structure(), {"m": ModelBinding(model="gp", kernel="rbf")})
        assert dag.models["m"].kernel == "rbf"


def _table_for(names_cols):
    names, cols = zip(*names_cols.items())
    roles = []
    return SummaryTable(
        param_names=[n for n in names if n.startswith("p")],
        param_cols=np.column_stack([names_cols[n] for n in names if n.startswith("p")]),
        group_names=[n for n in names if n.startswith("m")],
        group_cols=(
            np.column_stack([names_cols[n] for n in names if n.startswith("m")])
            if any(n.startswith("m") for n in names)
            else np.empty((len(cols[0]), 0))
        ),
        objective_names=[n for n in names if n.startswith("y")],
        objective_cols=np.column_stack([names_cols[n] for n in names if n.startswith("y")]),
        scalers={},
    )


class TestFitAll:
    def test_fits_gp_nodes_and_sets_flags(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(size=40)
        m = 2 * p + rng.normal(0, 0.05, 40)
        y = m + 1 + rng.normal(0, 0.05, 40)
        dag = build(chain_structure())
        fit_all(dag, _table_for({"p": p, "m": m, "y": y}), seed=1)
        assert dag.trained == {"m": True, "y": True}

    def test_missing_column_names_node(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(size=10)
        dag = build(chain_structure())
        with pytest.raises(ValueError, match="'m'"):
            fit_all(dag, _table_for({"p": p, "y": p}), seed=1)

    def test_node_fits_are_independent(self):
        rng = np.random.default_rng(2)
        p = rng.uniform(size=30)
        m = 2 * p + rng.normal(0, 0.05, 30)
        y = m + 1 + rng.normal(0, 0.05, 30)
        dag1 = build(chain_structure())
        fit_all(dag1, _table_for({"p": p, "m": m, "y": y}), seed=5)
        # changing another node's data leaves this node's fit untouched
        dag2 = build(chain_structure())
        y2 = y + rng.normal(0, 1.0, 30)
        fit_all(dag2, _table_for({"p": p, "m": m, "y": y2}), seed=5)
        np.testing.assert_array_equal(
            dag1.models["m"].hyperparameters(), dag2.models["m"].hyperparameters()
        )
        assert not np.array_equal(
            dag1.models["y"].hyperparameters(), dag2.models["y"].hyperparameters()
        )

    def test_expr_only_dag_needs_no_fit(self):
        dag = build(
            chain_structure(),
            {
                "m": ModelBinding(model="expr", expression="2 * p"),
                "y": ModelBinding(model="expr", expression="m + 1"),
            },
        )
        assert all(dag.trained.values())

    def test_refit_changes_affected_hyperparameters(self):
        rng = np.random.default_rng(3)
        p = rng.uniform(size=25)
        m = 2 * p + rng.normal(0, 0.05, 25)
        y = m + 1
        dag = build(chain_structure())
        fit_all(dag, _table_for({"p": p, "m": m, "y": y}), seed=7)
        before = dag.models["m"].hyperparameters()
        p2 = np.append(p, 0.123)
        m2 = np.append(m, 0.9)
        y2 = np.append(y, 1.9)
        fit_all(dag, _table_for({"p": p2, "m": m2, "y": y2}), seed=7)
        assert not np.array_equal(before, dag.models["m"].hyperparameters())


class TestSampleObjective:
    def test_deterministic_chain_exact(self):
        dag = build(
            chain_structure(),
            {
                "m": ModelBinding(model="expr", expression="2 * p"),
                "y": ModelBinding(model="expr", expression="m + 1"),
            },
        )
        for s, q in [(1, 1), (4, 3), (16, 2)]:
            samples = np.full((s, q, 1), 3.0)
            out = sample_objective(dag, samples, np.random.default_rng(0))
            assert out.shape == (s, q)
            np.testing.assert_array_equal(out, 7.0)

    def test_diamond_samples_each_ancestor_once(self):
        a = CountingExpr("2 * p")
        b = CountingExpr("p + 1")
        y = CountingExpr("a + b")
        dag = build(
            diamond_structure(),
            {
                "a": ModelBinding(model="expr", expression="2 * p"),
                "b": ModelBinding(model="expr", expression="p + 1"),
                "y": ModelBinding(model="expr", expression="a + b"),
            },
        )
        dag.models["a"] = a.bind(["p"])
        dag.models["b"] = b.bind(["p"])
        dag.models["y"] = y.bind(["a", "b"])
        sample_objective(dag, np.full((8, 5, 1), 2.0), np.random.default_rng(0))
        assert (a.calls, b.calls, y.calls) == (1, 1, 1)

    def test_duplicated_deterministic_input_has_zero_variance(self):
        dag = build(
            diamond_structure(),
            {
                "a": ModelBinding(model="expr", expression="p"),
                "b": ModelBinding(model="expr", expression="p"),
                "y": ModelBinding(model="expr", expression="a + b"),
            },
        )
        out = sample_objective(dag, np.full((32, 1, 1), 1.5), np.random.default_rng(0))
        np.testing.assert_array_equal(out, 3.0)
        assert out.std() == 0.0

    def test_shape_law_random_sizes(self):
        rng = np.random.default_rng(4)
        dag = build(
            chain_structure(),
            {
                "m": ModelBinding(model="expr", expression="p"),
                "y": ModelBinding(model="expr", expression="m"),
            },
        )
        for _ in range(5):
            s, q = int(rng.integers(1, 10)), int(rng.integers(1, 10))
            out = sample_objective(dag, rng.uniform(size=(s, q, 1)), rng)
            assert out.shape == (s, q)

    def test_untrained_node_on_path_rejected(self):
        dag = build(chain_structure())
        with pytest.raises(RuntimeError, match="not trained"):
            sample_objective(dag, np.zeros((2, 2, 1)), np.random.default_rng(0))

    def test_factorization_matches_bruteforce_composition(self):
        """Random deterministic DAGs: graph sampling equals composing the
        node functions in topological order (independent implementation)."""
        rng = np.random.default_rng(5)
        import networkx as nx

        for trial in range(10):
            n_params = int(rng.integers(1, 3))
            n_mid = int(rng.integers(1, 4))
            names = [f"p{i}" for i in range(n_params)]
            roles = {n: NodeRole.PARAM for n in names}
            exprs = {}
            edges = []
            for i in range(n_mid):
                name = f"m{i}"
                parents = list(rng.choice(names, size=rng.integers(1, len(names) + 1), replace=False))
                coefs = rng.integers(1, 4, size=len(parents))
                exprs[name] = " + ".join(f"{c} * {p}" for c, p in zip(coefs, parents))
                edges += [(p, name) for p in parents]
                roles[name] = NodeRole.METRIC_GROUP
                names.append(name)
            mids = [n for n in names if n.startswith("m")]
            y_parents = list(rng.choice(mids, size=rng.integers(1, len(mids) + 1), replace=False))
            exprs["y"] = " + ".join(y_parents)
            edges += [(p, "y") for p in y_parents]
            roles["y"] = NodeRole.OBJECTIVE
            names.append("y")

            structure = _structure([(n, roles[n]) for n in names], edges)
            bindings = {
                n: ModelBinding(model="expr", expression=e) for n, e in exprs.items()
            }
            dag = build(structure, bindings)
            params = rng.uniform(size=(3, 4, n_params))
            got = sample_objective(dag, params, np.random.default_rng(0))

            # brute force: evaluate node by node over a dict of arrays
            from dagtune import expr as expr_mod

            g = structure.to_networkx()
            values = {f"p{i}": params[:, :, i] for i in range(n_params)}
            for node in nx.topological_sort(g):
                if node in exprs:
                    values[node] = expr_mod.evaluate(expr_mod.parse(exprs[node]), values)
            np.testing.assert_allclose(got, values["y"], atol=1e-12)

    def test_gp_chain_runs_end_to_end(self):
        rng = np.random.default_rng(6)
        p = rng.uniform(size=50)
        m = np.sin(3 * p) + rng.normal(0, 0.01, 50)
        y = m**2 + rng.normal(0, 0.01, 50)
        dag = build(chain_structure())
        fit_all(dag, _table_for({"p": p, "m": m, "y": y}), seed=0)
        out = sample_objective(dag, rng.uniform(size=(64, 8, 1)), np.random.default_rng(1))
        assert out.shape == (64, 8)
        assert np.isfinite(out).all()
