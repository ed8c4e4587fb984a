"""Tuner configuration file: schema, parsing, serialization.

One YAML document describes a run: parameter space, objective, log
annotation, grouping, schedule, environment, and the expert prior. The
prior may be inline or a path to a separate document. ``schema_version``
is checked so old files fail loudly instead of subtly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from . import expr as expr_mod
from .graph_model import ModelBinding
from .optimize import Schedule
from .prior import ExpertPrior
from .space import Categorical, Continuous, Integer, ParamDef, ParamSpace
from .summarize import GroupingSpec
from .trace import LogAnnotation

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Config parse/validation failure; message names the offending field."""


@dataclass(frozen=True)
class ObjectiveSpec:
    name: str
    direction: str = "min"
    expr: str | None = None

    def __post_init__(self):
        if self.direction not in ("min", "max"):
            raise ConfigError(f"objective.direction: must be min or max, got {self.direction!r}")
        if self.expr is not None:
            try:
                expr_mod.parse(self.expr)
            except ValueError as e:
                raise ConfigError(f"objective.expr: {e}") from e


@dataclass(frozen=True)
class EnvSpec:
    kind: str  # "builtin" | "process"
    builtin_name: str | None = None
    command: str | None = None
    metrics_file: str | None = None
    seed: int = 0
    timeout: float | None = None

    def __post_init__(self):
        if self.kind == "builtin":
            if not self.builtin_name:
                raise ConfigError("env.builtin_name: required for builtin envs")
            if self.command:
                raise ConfigError("env.command: not allowed for builtin envs")
        elif self.kind == "process":
            if not self.command:
                raise ConfigError("env.command: required for process envs")
            if self.builtin_name:
                raise ConfigError("env.builtin_name: not allowed for process envs")
        else:
            raise ConfigError(f"env.kind: must be builtin or process, got {self.kind!r}")


@dataclass
class TunerConfig:
    space: ParamSpace | None
    objective: ObjectiveSpec
    env: EnvSpec
    annotation: LogAnnotation | None = None
    grouping: GroupingSpec = field(default_factory=GroupingSpec)
    schedule: Schedule = field(default_factory=lambda: Schedule(budget=50))
    prior: ExpertPrior = field(default_factory=ExpertPrior)
    seed: int = 0
    output_dir: str = "dagtune-out"
    l1: float = 0.1
    w_threshold: float = 0.3

    def __eq__(self, other):
        if not isinstance(other, TunerConfig):
            return NotImplemented
        return serialize_config(self) == serialize_config(other)


def _parse_space(items) -> ParamSpace:
    defs = []
    for i, item in enumerate(items):
        where = f"space[{i}]"
        try:
            name = item["name"]
            kind = item["type"]
            if kind == "continuous":
                domain = Continuous(float(item["lo"]), float(item["hi"]))
            elif kind == "integer":
                domain = Integer(int(item["lo"]), int(item["hi"]))
            elif kind == "categorical":
                domain = Categorical(tuple(str(c) for c in item["choices"]))
            else:
                raise ConfigError(f"{where}.type: unknown type {kind!r}")
            defs.append(ParamDef(name, domain))
        except KeyError as e:
            raise ConfigError(f"{where}: missing key {e}") from e
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"{where}: {e}") from e
    try:
        return ParamSpace(defs)
    except ValueError as e:
        raise ConfigError(f"space: {e}") from e


def _space_to_yaml(space: ParamSpace):
    out = []
    for p in space.params:
        d = p.domain
        if isinstance(d, Continuous):
            out.append({"name": p.name, "type": "continuous", "lo": d.lo, "hi": d.hi})
        elif isinstance(d, Integer):
            out.append({"name": p.name, "type": "integer", "lo": d.lo, "hi": d.hi})
        else:
            out.append({"name": p.name, "type": "categorical", "choices": list(d.choices)})
    return out


def _parse_prior(obj, base_dir: str) -> ExpertPrior:
    if isinstance(obj, str):
        path = obj if os.path.isabs(obj) else os.path.join(base_dir, obj)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = yaml.safe_load(fh) or {}
        except OSError as e:
            raise ConfigError(f"prior: cannot read {path}: {e}") from e
    if not isinstance(obj, dict):
        raise ConfigError("prior: expected a mapping or a file path")
    models = {}
    for node, spec in (obj.get("models") or {}).items():
        try:
            models[node] = ModelBinding(
                model=spec.get("model", "gp"),
                kernel=spec.get("kernel", "matern52"),
                expression=spec.get("expression"),
            )
        except (AttributeError, ValueError) as e:
            raise ConfigError(f"prior.models.{node}: {e}") from e
    try:
        return ExpertPrior(
            edges=[tuple(e) for e in (obj.get("edges") or [])],
            tabu_edges=[tuple(e) for e in (obj.get("tabu_edges") or [])],
            models=models,
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"prior: {e}") from e


def parse_config(doc: dict, base_dir: str = ".") -> TunerConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version}")

    try:
        env = EnvSpec(**(doc.get("env") or {}))
    except TypeError as e:
        raise ConfigError(f"env: {e}") from e

    space = _parse_space(doc["space"]) if doc.get("space") else None
    if env.kind == "process" and space is None:
        raise ConfigError("space: required for process envs")

    obj_doc = doc.get("objective") or {}
    try:
        objective = ObjectiveSpec(
            name=obj_doc.get("name", "objective"),
            direction=obj_doc.get("direction", "min"),
            expr=obj_doc.get("expr"),
        )
    except TypeError as e:
        raise ConfigError(f"objective: {e}") from e

    annotation = None
    if doc.get("annotation") is not None:
        try:
            annotation = LogAnnotation(doc["annotation"])
        except ValueError as e:
            raise ConfigError(f"annotation: {e}") from e
    if env.kind == "process" and annotation is None:
        raise ConfigError("annotation: required for process envs")

    try:
        grouping = GroupingSpec(**(doc.get("grouping") or {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"grouping: {e}") from e

    sched_doc = dict(doc.get("schedule") or {})
    if "budget" not in sched_doc:
        sched_doc["budget"] = 50
    try:
        schedule = Schedule(**sched_doc)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"schedule: {e}") from e

    structure_doc = doc.get("structure") or {}
    return TunerConfig(
        space=space,
        objective=objective,
        env=env,
        annotation=annotation,
        grouping=grouping,
        schedule=schedule,
        prior=_parse_prior(doc.get("prior") or {}, base_dir),
        seed=int(doc.get("seed", 0)),
        output_dir=str(doc.get("output_dir", "dagtune-out")),
        l1=float(structure_doc.get("l1", 0.1)),
        w_threshold=float(structure_doc.get("w_threshold", 0.3)),
    )


def load_config(path: str) -> TunerConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from e
    return parse_config(doc or {}, base_dir=os.path.dirname(os.path.abspath(path)))


def serialize_config(cfg: TunerConfig) -> str:
    doc: dict = {"schema_version": SCHEMA_VERSION, "seed": cfg.seed, "output_dir": cfg.output_dir}
    if cfg.space is not None:
        doc["space"] = _space_to_yaml(cfg.space)
    doc["objective"] = {"name": cfg.objective.name, "direction": cfg.objective.direction}
    if cfg.objective.expr:
        doc["objective"]["expr"] = cfg.objective.expr
    env: dict = {"kind": cfg.env.kind, "seed": cfg.env.seed}
    if cfg.env.builtin_name:
        env["builtin_name"] = cfg.env.builtin_name
    if cfg.env.command:
        env["command"] = cfg.env.command
    if cfg.env.metrics_file:
        env["metrics_file"] = cfg.env.metrics_file
    if cfg.env.timeout is not None:
        env["timeout"] = cfg.env.timeout
    doc["env"] = env
    if cfg.annotation is not None:
        doc["annotation"] = cfg.annotation.pattern
    doc["grouping"] = {"depth": cfg.grouping.depth, "min_variance": cfg.grouping.min_variance}
    sched = {"budget": cfg.schedule.budget}
    if cfg.schedule.warmup is not None:
        sched["warmup"] = cfg.schedule.warmup
    if cfg.schedule.relearn_every is not None:
        sched["relearn_every"] = cfg.schedule.relearn_every
    sched["n_candidates"] = cfg.schedule.n_candidates
    sched["mc_draws"] = cfg.schedule.mc_draws
    doc["schedule"] = sched
    doc["structure"] = {"l1": cfg.l1, "w_threshold": cfg.w_threshold}
    prior: dict = {}
    if cfg.prior.edges:
        prior["edges"] = [list(e) for e in cfg.prior.edges]
    if cfg.prior.tabu_edges:
        prior["tabu_edges"] = [list(e) for e in cfg.prior.tabu_edges]
    if cfg.prior.models:
        prior["models"] = {}
        for node, b in cfg.prior.models.items():
            spec = {"model": b.model}
            if b.model == "gp":
                spec["kernel"] = b.kernel
            if b.expression:
                spec["expression"] = b.expression
            prior["models"][node] = spec
    if prior:
        doc["prior"] = prior
    return yaml.safe_dump(doc, sort_keys=False)
