"""The outer optimization loop and baseline tuners.

Each step either spends a Sobol warmup point or proposes from the model:
draw candidate configurations from the Sobol stream, push Monte-Carlo
samples through the probabilistic DAG, score with quasi-Expected-
Improvement, and evaluate the argmax on the real system. Structure is
relearned on a fixed schedule (a quarter of the budget by default);
between relearns only the node models are refit on the grown trace.

Reproducibility and resume rest on counter-based randomness: the Sobol
index consumed by a step and the RNG stream of a step are pure functions
of (seed, step), and model state is a pure function of the trace prefix,
so a killed run restarted from its trace proposes identically.
"""

from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .envs import EvaluationError
from .graph_model import ProbDag, build, fit_all, sample_objective
from .prior import ExpertPrior
from .sobol import SobolSampler
from .space import Configuration, ParamSpace, decode
from .structure import (
    DEFAULT_L1,
    DEFAULT_W_THRESHOLD,
    DagStructure,
    Edge,
    EdgeMask,
    NodeRole,
    Provenance,
    design_matrix,
    learn_structure,
    merge_expert,
)
from .summarize import GroupingSpec, SummaryTable, params_objective_table, summarize
from .trace import TraceRecord, TraceStore

MAX_CONSECUTIVE_FAILURES = 3

# spawn-key stream labels for counter-based per-step RNG
_STREAM_PROPOSE = 1
_STREAM_RANDOM = 2
_STREAM_FIT = 3


class EnvAborted(RuntimeError):
    """Too many consecutive evaluation failures."""


class ProposalSource(enum.Enum):
    WARMUP = "warmup"
    MODEL = "model"


@dataclass(frozen=True)
class Proposal:
    config: Configuration
    acq_value: float
    provenance: ProposalSource


@dataclass(frozen=True)
class Acquisition:
    """Quasi-Expected-Improvement settings on the standardized scale."""

    f_best: float
    mc_draws: int = 128

    def __post_init__(self):
        if self.mc_draws < 1:
            raise ValueError("mc_draws must be >= 1")
        if not np.isfinite(self.f_best):
            raise ValueError("f_best must be finite")


@dataclass(frozen=True)
class Schedule:
    """Step budget and cadence of the structure pipeline."""

    budget: int
    warmup: int | None = None
    relearn_every: int | None = None
    n_candidates: int = 512
    mc_draws: int = 128

    def resolve(self, dim: int) -> "Schedule":
        """Fill derived defaults: warmup max(5, D/2), relearn budget/4."""
        warmup = self.warmup if self.warmup is not None else max(5, dim // 2)
        relearn = (
            self.relearn_every
            if self.relearn_every is not None
            else max(self.budget // 4, 1)
        )
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if warmup < 2:
            raise ValueError("warmup must be >= 2")
        if relearn < 1:
            raise ValueError("relearn_every must be >= 1")
        if self.n_candidates < 1 or self.mc_draws < 1:
            raise ValueError("n_candidates and mc_draws must be >= 1")
        return replace(self, warmup=warmup, relearn_every=relearn)


def _step_rng(seed: int, stream: int, step: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(stream, step))
    )


def _fit_seed(seed: int, step: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_STREAM_FIT, step))
    return int(ss.generate_state(1)[0])


def _sobol_base(step: int, sched: Schedule) -> int:
    """First Sobol index a step consumes; pure arithmetic for resume."""
    if step < sched.warmup:
        return 1 + step
    return 1 + sched.warmup + (step - sched.warmup) * sched.n_candidates


def _is_refresh(step: int, sched: Schedule) -> bool:
    return step == sched.warmup or (
        step >= sched.warmup and step % sched.relearn_every == 0
    )


def _last_refresh(step: int, sched: Schedule) -> int:
    for k in range(step, sched.warmup - 1, -1):
        if _is_refresh(k, sched):
            return k
    return sched.warmup


def qei(draws: np.ndarray, f_best: float) -> float:
    """Monte-Carlo expected improvement for minimization.

    ``draws`` is (s, q): s joint sample paths over q candidate points.
    Rows containing non-finite values are discarded; the estimate is
    ``mean_s max(max_j (f_best - y_j), 0)`` over the survivors.
    """
    draws = np.asarray(draws, dtype=np.float64)
    if draws.ndim != 2:
        raise ValueError("draws must be a (s, q) matrix")
    finite = np.isfinite(draws).all(axis=1)
    if not finite.any():
        raise ValueError("all Monte-Carlo draws are non-finite")
    kept = draws[finite]
    improvement = np.maximum(f_best - kept, 0.0).max(axis=1)
    return float(improvement.mean())


def _qei_per_candidate(draws: np.ndarray, f_best: float) -> np.ndarray:
    """Vectorized q=1 qEI per column; -inf where no draw is finite."""
    finite = np.isfinite(draws)
    imp = np.where(finite, np.maximum(f_best - draws, 0.0), 0.0)
    counts = finite.sum(axis=0)
    vals = np.full(draws.shape[1], -np.inf)
    ok = counts > 0
    vals[ok] = imp.sum(axis=0)[ok] / counts[ok]
    return vals


def propose(
    dag: ProbDag,
    space: ParamSpace,
    sampler: SobolSampler,
    acq: Acquisition,
    n_candidates: int,
    rng: np.random.Generator,
) -> Proposal:
    """Score a Sobol candidate batch through the DAG and return the argmax.

    Candidates are scored as independent q=1 proposals (one column each of
    a single batched DAG sampling pass, so every ancestor node is still
    drawn exactly once). Ties go to the lowest Sobol index.
    """
    cands = sampler.next(n_candidates)
    tensor = np.broadcast_to(cands, (acq.mc_draws,) + cands.shape)
    draws = sample_objective(dag, tensor, rng)
    vals = _qei_per_candidate(draws, acq.f_best)
    best = int(np.argmax(vals))
    if not np.isfinite(vals[best]):
        raise RuntimeError(
            "every candidate produced non-finite objective draws; "
            "inspect the node models"
        )
    return Proposal(
        config=decode(space, cands[best]),
        acq_value=float(vals[best]),
        provenance=ProposalSource.MODEL,
    )


def _evaluate(env, cfg: Configuration):
    t0 = time.perf_counter()
    try:
        metrics, objectives = env(cfg)
        failed = False
    except EvaluationError as e:
        warnings.warn(f"evaluation failed: {e}")
        metrics, objectives = {}, {}
        failed = True
    return metrics, objectives, time.perf_counter() - t0, failed


def _learn(
    table: SummaryTable,
    prior: ExpertPrior,
    l1: float,
    w_threshold: float,
) -> DagStructure:
    x_names = table.node_names()
    resolved = prior.resolved(x_names)
    _, names, roles = design_matrix(table)
    mask = EdgeMask.from_roles(names, roles, tabu=tuple(resolved.tabu_edges))
    w = learn_structure(table, mask, l1=l1, w_threshold=w_threshold)
    return merge_expert(
        w, names, roles, expert_edges=tuple(resolved.edges), tabu_edges=tuple(resolved.tabu_edges)
    )


def run_loop(
    env,
    space: ParamSpace,
    prior: ExpertPrior,
    schedule: Schedule,
    seed: int,
    store: TraceStore,
    objective: str,
    direction: str = "min",
    grouping: GroupingSpec | None = None,
    l1: float = DEFAULT_L1,
    w_threshold: float = DEFAULT_W_THRESHOLD,
    on_structure=None,
) -> TraceStore:
    """Run (or resume) the structured optimization loop until the budget.

    ``env`` maps a Configuration to ``(metrics, objectives)`` and signals
    failure by raising :class:`EvaluationError`; a failed step is recorded
    with empty objectives and skipped by the models, and three consecutive
    failures abort the run. ``on_structure(step, structure)`` is invoked
    after every structure relearn.
    """
    sched = schedule.resolve(space.dim)
    grouping = grouping or GroupingSpec()
    sampler = SobolSampler(space.dim, scramble_seed=seed)

    structure: DagStructure | None = None
    consecutive = 0
    for rec in reversed(store.records):
        if rec.finalized:
            break
        consecutive += 1

    for step in range(len(store), sched.budget):
        sampler.seek(_sobol_base(step, sched))
        n_finalized = sum(1 for r in store.records if r.finalized)
        if step < sched.warmup or n_finalized < 2:
            # space-fill during warmup, or when failures left too little
            # data to model (the fallback consumes from the step's own
            # Sobol block, so resume arithmetic is unaffected)
            prop = Proposal(
                config=decode(space, sampler.next(1)[0]),
                acq_value=float("nan"),
                provenance=ProposalSource.WARMUP,
            )
        else:
            table = summarize(store, space, grouping, objective, direction)
            refresh = _is_refresh(step, sched)
            if not refresh and structure is None:
                # resuming mid-schedule: rebuild the structure exactly as the
                # original run learned it, from the same trace prefix
                r = _last_refresh(step, sched)
                past = summarize(store, space, grouping, objective, direction, upto=r)
                structure = _learn(past, prior, l1, w_threshold)
            if not refresh and structure is not None:
                missing = set(n for n, _ in structure.nodes) - set(table.node_names())
                # a structure node vanished from the summary (metric went
                # flat); both fresh and resumed runs relearn here
                refresh = bool(missing)
            if refresh:
                structure = _learn(table, prior, l1, w_threshold)
                if on_structure is not None:
                    on_structure(step, structure)
            resolved = prior.resolved(table.node_names())
            dag = build(structure, resolved.models)
            fit_all(dag, table, seed=_fit_seed(seed, step))
            acq = Acquisition(
                f_best=float(table.objective_cols.min()), mc_draws=sched.mc_draws
            )
            rng = _step_rng(seed, _STREAM_PROPOSE, step)
            prop = propose(dag, space, sampler, acq, sched.n_candidates, rng)

        cfg = prop.config
        metrics, objectives, wall, failed = _evaluate(env, cfg)
        store.append(
            TraceRecord(
                step=step,
                config=cfg,
                metrics=metrics,
                objectives=objectives,
                wall_seconds=wall,
                seed=seed,
            )
        )
        consecutive = consecutive + 1 if failed else 0
        if consecutive >= MAX_CONSECUTIVE_FAILURES:
            raise EnvAborted(
                f"{MAX_CONSECUTIVE_FAILURES} consecutive evaluation failures at step {step}"
            )
    return store


def baseline_random(
    env, space: ParamSpace, budget: int, seed: int, store: TraceStore
) -> TraceStore:
    """Uniform-in-cube proposals; same trace format, same failure policy."""
    consecutive = 0
    for step in range(len(store), budget):
        rng = _step_rng(seed, _STREAM_RANDOM, step)
        cfg = decode(space, rng.random(space.dim))
        metrics, objectives, wall, failed = _evaluate(env, cfg)
        store.append(
            TraceRecord(
                step=step,
                config=cfg,
                metrics=metrics,
                objectives=objectives,
                wall_seconds=wall,
                seed=seed,
            )
        )
        consecutive = consecutive + 1 if failed else 0
        if consecutive >= MAX_CONSECUTIVE_FAILURES:
            raise EnvAborted(
                f"{MAX_CONSECUTIVE_FAILURES} consecutive evaluation failures at step {step}"
            )
    return store


def manual_full_structure(space: ParamSpace, objective: str) -> DagStructure:
    """Every parameter feeding the objective directly: the structure-free
    fallback, equivalent to a plain full-dimensional GP tuner."""
    nodes = [(n, NodeRole.PARAM) for n in space.names] + [
        (objective, NodeRole.OBJECTIVE)
    ]
    edges = [Edge(n, objective, 0.0, Provenance.EXPERT) for n in space.names]
    return DagStructure(nodes=nodes, edges=edges)


def baseline_vanilla_bo(
    env,
    space: ParamSpace,
    budget: int,
    seed: int,
    store: TraceStore,
    objective: str,
    direction: str = "min",
    schedule: Schedule | None = None,
) -> TraceStore:
    """Single full-dimensional GP tuner: the structure pipeline disabled.

    Shares the Sobol warmup, the candidate stream, and the acquisition
    with the structured loop, so any performance gap is attributable to
    the learned structure.
    """
    sched = (schedule or Schedule(budget=budget)).resolve(space.dim)
    sampler = SobolSampler(space.dim, scramble_seed=seed)
    structure = manual_full_structure(space, objective)
    consecutive = 0
    for step in range(len(store), sched.budget):
        sampler.seek(_sobol_base(step, sched))
        n_finalized = sum(1 for r in store.records if r.finalized)
        if step < sched.warmup or n_finalized < 2:
            cfg = decode(space, sampler.next(1)[0])
        else:
            table = params_objective_table(store, space, objective, direction)
            dag = build(structure)
            fit_all(dag, table, seed=_fit_seed(seed, step))
            acq = Acquisition(
                f_best=float(table.objective_cols.min()), mc_draws=sched.mc_draws
            )
            rng = _step_rng(seed, _STREAM_PROPOSE, step)
            cfg = propose(dag, space, sampler, acq, sched.n_candidates, rng).config
        metrics, objectives, wall, failed = _evaluate(env, cfg)
        store.append(
            TraceRecord(
                step=step,
                config=cfg,
                metrics=metrics,
                objectives=objectives,
                wall_seconds=wall,
                seed=seed,
            )
        )
        consecutive = consecutive + 1 if failed else 0
        if consecutive >= MAX_CONSECUTIVE_FAILURES:
            raise EnvAborted(
                f"{MAX_CONSECUTIVE_FAILURES} consecutive evaluation failures at step {step}"
            )
    return store
