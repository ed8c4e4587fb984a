"""Trace summarization: prune, standardize, group, factor-compress.

Raw traces carry hundreds of metric columns; structure learning and GP
nodes want a handful. The pipeline drops uninformative columns, puts the
survivors on a common scale, partitions them by key-path prefix, and
compresses each partition to a single factor score. Parameters bypass the
pipeline (they stay on their unit-cube encoding) and objectives get their
own scalers, so all three roles survive summarization distinctly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .space import ParamSpace, encode
from .trace import TraceStore, split_key

FA_MAX_ITER = 200
FA_TOL = 1e-8
PSI_FLOOR = 1e-6


class SummarizeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GroupingSpec:
    """Granularity of metric grouping.

    ``depth`` is the number of leading key-path segments that form a group
    key; ``min_variance`` prunes raw columns at or below that population
    variance.
    """

    depth: int = 1
    min_variance: float = 1e-12

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("grouping depth must be >= 1")
        if self.min_variance < 0:
            raise ValueError("min_variance must be >= 0")


@dataclass
class FactorInfo:
    columns: list[str]
    loadings: np.ndarray
    converged: bool


@dataclass
class SummaryTable:
    """Standardized design table: params | metric groups | objective."""

    param_names: list[str]
    param_cols: np.ndarray
    group_names: list[str]
    group_cols: np.ndarray
    objective_names: list[str]
    objective_cols: np.ndarray
    scalers: dict[str, tuple[float, float]]
    loadings: dict[str, FactorInfo] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.param_cols.shape[0]

    def node_names(self) -> list[str]:
        return self.param_names + self.group_names + self.objective_names

    def matrix(self) -> np.ndarray:
        return np.hstack([self.param_cols, self.group_cols, self.objective_cols])

    def column(self, name: str) -> np.ndarray:
        for names, cols in (
            (self.param_names, self.param_cols),
            (self.group_names, self.group_cols),
            (self.objective_names, self.objective_cols),
        ):
            if name in names:
                return cols[:, names.index(name)]
        raise KeyError(f"no column named {name!r} in summary table")


def prune_low_variance(
    matrix: np.ndarray, names: list[str], min_variance: float
) -> tuple[np.ndarray, list[str]]:
    """Drop columns with population variance <= ``min_variance``."""
    if matrix.shape[0] < 2:
        raise ValueError("need at least 2 rows to estimate variance")
    var = matrix.var(axis=0)
    keep = var > min_variance
    if not keep.any():
        raise ValueError(
            "no informative metrics: all columns pruned; lower min_variance"
        )
    return matrix[:, keep], [n for n, k in zip(names, keep) if k]


def standardize(matrix: np.ndarray) -> tuple[np.ndarray, list[tuple[float, float]]]:
    """Per-column (x - mean) / std with population std; scalers returned."""
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    if np.any(std == 0):
        bad = int(np.argmin(std))
        raise ValueError(f"column {bad} has zero variance; prune before standardizing")
    return (matrix - mean) / std, list(zip(mean.tolist(), std.tolist()))


def group_keys(names: list[str], depth: int) -> dict[str, list[int]]:
    """Partition column indices by their first ``min(depth, len)`` segments."""
    groups: dict[str, list[int]] = {}
    for i, name in enumerate(names):
        segments = split_key(name)
        key = ".".join(segments[: min(depth, len(segments))])
        groups.setdefault(key, []).append(i)
    return {k: groups[k] for k in sorted(groups)}


def _fa_loglik(s: np.ndarray, lam: np.ndarray, psi: np.ndarray, n: int) -> float:
    m = len(lam)
    sigma = np.outer(lam, lam) + np.diag(psi)
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        return -np.inf
    tr = np.trace(np.linalg.solve(sigma, s))
    return -0.5 * n * (m * np.log(2 * np.pi) + logdet + tr)


def factor_compress(group: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Compress a standardized n x m group to one factor.

    Fits the single-factor model x = lam * f + eps by EM on the sample
    covariance, scores by the regression method, and standardizes the
    scores. The loading of largest magnitude is forced positive (earliest
    column on ties) to pin down the sign.

    Returns ``(scores, loadings, converged)``; on EM non-convergence the
    first principal component is used instead, with a warning.
    """
    n, m = group.shape
    if n < 2:
        raise ValueError("factor analysis needs at least 2 rows")
    if m == 1:
        scores = group[:, 0].copy()
        std = scores.std()
        if std > 0:
            scores = (scores - scores.mean()) / std
        return scores, np.array([1.0]), True

    s = (group.T @ group) / n
    eigvals, eigvecs = np.linalg.eigh(s)
    lam = eigvecs[:, -1] * np.sqrt(max(eigvals[-1], PSI_FLOOR))
    psi = np.maximum(np.diag(s) - lam * lam, PSI_FLOOR)

    converged = False
    loglik = -np.inf
    for _ in range(FA_MAX_ITER):
        # E-step via Woodbury: delta = Sigma^{-1} lam = Psi^{-1} lam / M
        ipsi_lam = lam / psi
        big_m = 1.0 + lam @ ipsi_lam
        delta = ipsi_lam / big_m
        s_delta = s @ delta
        # M-step sufficient statistics (per-observation averages)
        ef2 = delta @ s_delta + 1.0 - lam @ delta
        lam = s_delta / ef2
        psi = np.maximum(np.diag(s) - lam * s_delta, PSI_FLOOR)
        new_loglik = _fa_loglik(s, lam, psi, n)
        if abs(new_loglik - loglik) < FA_TOL:
            converged = True
            break
        loglik = new_loglik

    if converged:
        ipsi_lam = lam / psi
        big_m = 1.0 + lam @ ipsi_lam
        delta = ipsi_lam / big_m
        scores = group @ delta
        loadings = lam
    else:
        warnings.warn(
            "factor-analysis EM did not converge; using first principal component",
            SummarizeWarning,
        )
        loadings = eigvecs[:, -1] * np.sqrt(max(eigvals[-1], PSI_FLOOR))
        scores = group @ eigvecs[:, -1]

    # sign convention: largest-|loading| column loads positively
    pivot = int(np.argmax(np.abs(loadings)))
    if loadings[pivot] < 0:
        loadings = -loadings
        scores = -scores
    std = scores.std()
    if std > 0:
        scores = (scores - scores.mean()) / std
    return scores, loadings, converged


def summarize(
    store: TraceStore,
    space: ParamSpace,
    spec: GroupingSpec,
    objective: str,
    direction: str = "min",
    upto: int | None = None,
    exclude_metrics: tuple[str, ...] = (),
) -> SummaryTable:
    """Run the full pipeline over the finalized records of ``store``.

    ``upto`` restricts to the first N records (used when reconstructing
    the model state of an earlier optimization step). ``direction`` makes
    minimization canonical: for ``max`` objectives the column is negated
    before standardization. Metric keys listed in ``exclude_metrics`` (and
    any key equal to the objective name) never enter the grouping stage.
    """
    if direction not in ("min", "max"):
        raise ValueError(f"direction must be 'min' or 'max', got {direction!r}")
    records = store.records[:upto] if upto is not None else store.records
    records = [r for r in records if r.finalized and objective in r.objectives]
    n = len(records)
    if n < 2:
        raise ValueError(f"need at least 2 finalized records to summarize, have {n}")

    param_cols = np.stack([encode(space, r.config) for r in records])

    skip = set(exclude_metrics) | {objective}
    metric_names = sorted({k for r in records for k in r.metrics} - skip)
    group_names: list[str] = []
    group_cols = np.empty((n, 0))
    scalers: dict[str, tuple[float, float]] = {}
    loadings: dict[str, FactorInfo] = {}
    if metric_names:
        raw = np.full((n, len(metric_names)), np.nan)
        for i, r in enumerate(records):
            for j, k in enumerate(metric_names):
                if k in r.metrics:
                    raw[i, j] = r.metrics[k]
        # impute missing cells with the column mean before anything else
        col_mean = np.nanmean(raw, axis=0)
        missing = np.isnan(raw)
        if missing.any():
            raw[missing] = np.broadcast_to(col_mean, raw.shape)[missing]

        raw, metric_names = prune_low_variance(raw, metric_names, spec.min_variance)
        std_matrix, col_scalers = standardize(raw)
        scalers.update(dict(zip(metric_names, col_scalers)))

        groups = group_keys(metric_names, spec.depth)
        cols = []
        for gname, idx in groups.items():
            scores, lam, converged = factor_compress(std_matrix[:, idx])
            cols.append(scores)
            loadings[gname] = FactorInfo(
                columns=[metric_names[i] for i in idx],
                loadings=lam,
                converged=converged,
            )
        group_names = list(groups)
        group_cols = np.column_stack(cols)

    sign = 1.0 if direction == "min" else -1.0
    obj_raw = sign * np.array([r.objectives[objective] for r in records])
    obj_std = obj_raw.std()
    if obj_std == 0:
        raise ValueError(f"objective {objective!r} is constant over the trace")
    obj_col = (obj_raw - obj_raw.mean()) / obj_std
    scalers[objective] = (float(obj_raw.mean()), float(obj_std))

    return SummaryTable(
        param_names=list(space.names),
        param_cols=param_cols,
        group_names=group_names,
        group_cols=group_cols,
        objective_names=[objective],
        objective_cols=obj_col[:, None],
        scalers=scalers,
        loadings=loadings,
    )


def params_objective_table(
    store: TraceStore,
    space: ParamSpace,
    objective: str,
    direction: str = "min",
    upto: int | None = None,
) -> SummaryTable:
    """Minimal table with no metric groups, for manual-structure tuners."""
    records = store.records[:upto] if upto is not None else store.records
    records = [r for r in records if r.finalized and objective in r.objectives]
    n = len(records)
    if n < 2:
        raise ValueError(f"need at least 2 finalized records, have {n}")
    param_cols = np.stack([encode(space, r.config) for r in records])
    sign = 1.0 if direction == "min" else -1.0
    obj_raw = sign * np.array([r.objectives[objective] for r in records])
    obj_std = obj_raw.std()
    if obj_std == 0:
        raise ValueError(f"objective {objective!r} is constant over the trace")
    obj_col = (obj_raw - obj_raw.mean()) / obj_std
    return SummaryTable(
        param_names=list(space.names),
        param_cols=param_cols,
        group_names=[],
        group_cols=np.empty((n, 0)),
        objective_names=[objective],
        objective_cols=obj_col[:, None],
        scalers={objective: (float(obj_raw.mean()), float(obj_std))},
    )
