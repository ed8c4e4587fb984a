"""dagtune: a sample-efficient auto-tuner for expensive systems.

Learns a dependency DAG of system components from structured logs,
attaches a Gaussian-process (or expert-declared) model to every node, and
runs Bayesian optimization over the resulting graph: Sobol candidate
sampling, Monte-Carlo draws through the DAG, quasi-Expected-Improvement
selection.
"""

from ._accel import BACKEND as ACCEL_BACKEND
from .envs import BuiltinEnv, EvaluationError, ProcessEnv, make_builtin
from .graph_model import ExprNode, ModelBinding, ProbDag, build, fit_all, sample_objective
from .gp import GpNode
from .optimize import (
    Acquisition,
    EnvAborted,
    Proposal,
    Schedule,
    baseline_random,
    baseline_vanilla_bo,
    propose,
    qei,
    run_loop,
)
from .prior import ExpertPrior
from .sobol import SobolSampler, sobol_next
from .space import (
    Categorical,
    Configuration,
    Continuous,
    Integer,
    ParamDef,
    ParamSpace,
    cardinality_log2,
    decode,
    encode,
)
from .structure import (
    DagStructure,
    Edge,
    EdgeMask,
    NodeRole,
    Provenance,
    acyclicity,
    export_dot,
    learn_structure,
    max_dimension,
    merge_expert,
)
from .summarize import (
    GroupingSpec,
    SummaryTable,
    factor_compress,
    group_keys,
    prune_low_variance,
    standardize,
    summarize,
)
from .trace import LogAnnotation, TraceRecord, TraceStore, parse_log, to_matrix

__version__ = "0.1.0"

__all__ = [
    "ACCEL_BACKEND",
    "Acquisition",
    "BuiltinEnv",
    "Categorical",
    "Configuration",
    "Continuous",
    "DagStructure",
    "Edge",
    "EdgeMask",
    "EnvAborted",
    "EvaluationError",
    "ExpertPrior",
    "ExprNode",
    "GpNode",
    "GroupingSpec",
    "Integer",
    "LogAnnotation",
    "ModelBinding",
    "NodeRole",
    "ParamDef",
    "ParamSpace",
    "ProbDag",
    "ProcessEnv",
    "Proposal",
    "Provenance",
    "Schedule",
    "SobolSampler",
    "SummaryTable",
    "TraceRecord",
    "TraceStore",
    "acyclicity",
    "baseline_random",
    "baseline_vanilla_bo",
    "build",
    "cardinality_log2",
    "decode",
    "encode",
    "export_dot",
    "factor_compress",
    "fit_all",
    "group_keys",
    "learn_structure",
    "make_builtin",
    "max_dimension",
    "merge_expert",
    "parse_log",
    "propose",
    "prune_low_variance",
    "qei",
    "run_loop",
    "sample_objective",
    "sobol_next",
    "standardize",
    "summarize",
    "to_matrix",
]
