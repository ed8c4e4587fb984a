"""Evaluation environments: built-in synthetic benchmarks and an adapter
that runs an external command and parses its logs.

Built-in environments are desk-scale stand-ins for a real simulator: they
expose a known latent group structure (distinct metric prefixes per
component) and an analytically known optimum, which is what the test
suites and the convergence benchmarks key on.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as expr_mod
from .space import Configuration, Continuous, ParamDef, ParamSpace
from .trace import LogAnnotation, parse_log


class EvaluationError(RuntimeError):
    """A single system evaluation failed; the loop records and skips it."""


EnvResult = tuple[dict[str, float], dict[str, float]]


def _config_fingerprint(cfg: Configuration) -> int:
    blob = repr(sorted(cfg.items())).encode()
    return zlib.crc32(blob)


@dataclass
class BuiltinEnv:
    """Synthetic system with declared metric structure and known optimum."""

    name: str
    space: ParamSpace
    objective_name: str
    direction: str
    default_config: Configuration
    optimum_config: Configuration | None
    optimum_value: float | None
    noise_scale: float
    seed: int
    _emit: Callable[[Configuration, np.random.Generator], EnvResult] = field(repr=False, default=None)

    def __call__(self, cfg: Configuration) -> EnvResult:
        # noise keyed on (env seed, config) so re-evaluating a config is
        # reproducible regardless of call order
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(_config_fingerprint(cfg),))
        )
        return self._emit(cfg, rng)


# centers of the two latent bowls; the known optimum is their concatenation.
# kept well away from 0.5 so each parameter's influence on its group has a
# clear monotone component over the unit cube
EDP_LATENCY_CENTERS = (0.7, 0.25, 0.8, 0.3, 0.75)
EDP_POWER_CENTERS = (0.2, 0.65, 0.3, 0.7, 0.25)


def builtin_synthetic_edp(
    seed: int = 0,
    noise_scale: float = 0.01,
    latency_centers: tuple[float, ...] = EDP_LATENCY_CENTERS,
    power_centers: tuple[float, ...] = EDP_POWER_CENTERS,
    metrics_per_group: int = 20,
) -> BuiltinEnv:
    """Two latent quadratic bowls behind ~40 noisy prefixed metrics.

    Parameters p1..p5 move ``latency = 1 + sum((p_i - a_i)^2)`` and p6..p10
    move ``power`` the same way; the objective ``edp = power * latency**2``
    is computed from the latents exactly (noise lives only in the emitted
    metrics). Optimum: p = (a, b) with edp = 1.
    """
    a = np.asarray(latency_centers, dtype=np.float64)
    b = np.asarray(power_centers, dtype=np.float64)
    d = len(a) + len(b)
    space = ParamSpace(
        [ParamDef(f"p{i + 1}", Continuous(0.0, 1.0)) for i in range(d)]
    )

    coef_rng = np.random.default_rng(seed)
    lat_scale = coef_rng.uniform(0.5, 2.0, size=metrics_per_group)
    lat_shift = coef_rng.uniform(-2.0, 2.0, size=metrics_per_group)
    lat_sign = coef_rng.choice([-1.0, 1.0], size=metrics_per_group)
    pow_scale = coef_rng.uniform(0.5, 2.0, size=metrics_per_group)
    pow_shift = coef_rng.uniform(-2.0, 2.0, size=metrics_per_group)
    pow_sign = coef_rng.choice([-1.0, 1.0], size=metrics_per_group)

    def emit(cfg: Configuration, rng: np.random.Generator) -> EnvResult:
        p = np.array([cfg[f"p{i + 1}"] for i in range(d)], dtype=np.float64)
        latency = 1.0 + float(np.sum((p[: len(a)] - a) ** 2))
        power = 1.0 + float(np.sum((p[len(a):] - b) ** 2))
        metrics: dict[str, float] = {}
        lat_noise = rng.normal(0.0, noise_scale, size=metrics_per_group)
        pow_noise = rng.normal(0.0, noise_scale, size=metrics_per_group)
        for j in range(metrics_per_group):
            metrics[f"sys.lat.m{j:02d}"] = float(
                lat_shift[j] + lat_sign[j] * lat_scale[j] * latency + lat_noise[j]
            )
            metrics[f"sys.pow.m{j:02d}"] = float(
                pow_shift[j] + pow_sign[j] * pow_scale[j] * power + pow_noise[j]
            )
        # constant bookkeeping entries; the variance pruner must drop these
        metrics["sys.meta.version"] = 3.0
        metrics["sys.meta.cores"] = 8.0
        return metrics, {"edp": power * latency**2}

    return BuiltinEnv(
        name="synthetic-edp",
        space=space,
        objective_name="edp",
        direction="min",
        default_config={f"p{i + 1}": 0.0 for i in range(d)},
        optimum_config={f"p{i + 1}": float(np.concatenate([a, b])[i]) for i in range(d)},
        optimum_value=1.0,
        noise_scale=noise_scale,
        seed=seed,
        _emit=emit,
    )


def builtin_quadratic_1d(seed: int = 0, noise_scale: float = 0.0) -> BuiltinEnv:
    """One-dimensional bowl (x - 0.3)^2 with a handful of mirror metrics."""
    space = ParamSpace([ParamDef("x", Continuous(0.0, 1.0))])

    def emit(cfg: Configuration, rng: np.random.Generator) -> EnvResult:
        y = (cfg["x"] - 0.3) ** 2
        noise = rng.normal(0.0, noise_scale, size=3) if noise_scale > 0 else np.zeros(3)
        metrics = {
            "sys.f.m0": 2.0 * y + 0.5 + noise[0],
            "sys.f.m1": -y + 1.0 + noise[1],
            "sys.f.m2": 3.0 * y + noise[2],
        }
        return metrics, {"objective": y}

    return BuiltinEnv(
        name="quadratic-1d",
        space=space,
        objective_name="objective",
        direction="min",
        default_config={"x": 1.0},
        optimum_config={"x": 0.3},
        optimum_value=0.0,
        noise_scale=noise_scale,
        seed=seed,
        _emit=emit,
    )


BUILTINS: dict[str, Callable[..., BuiltinEnv]] = {
    "synthetic-edp": builtin_synthetic_edp,
    "quadratic-1d": builtin_quadratic_1d,
}


def make_builtin(name: str, seed: int = 0) -> BuiltinEnv:
    if name not in BUILTINS:
        raise ValueError(f"unknown builtin env {name!r}; available: {sorted(BUILTINS)}")
    return BUILTINS[name](seed=seed)


def write_config_file(cfg: Configuration, path: str) -> None:
    """Flat ``name = value`` lines, one per parameter, repr-exact floats."""
    lines = [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in cfg.items()]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class ProcessEnv:
    """Runs an external command per evaluation and parses its output.

    The command template must contain a ``{config}`` placeholder, replaced
    by the path of a temporary flat config file. Metrics are parsed from
    stdout with the log annotation, plus ``metrics_file`` if declared
    (file entries override stdout duplicates). The objective is either a
    named metric or an expression over metrics.
    """

    def __init__(
        self,
        command: str,
        annotation: LogAnnotation,
        objective: str,
        objective_expr: str | None = None,
        metrics_file: str | None = None,
        timeout: float | None = None,
    ):
        if "{config}" not in command:
            raise ValueError("process env command must contain a {config} placeholder")
        self.command = command
        self.annotation = annotation
        self.objective = objective
        self.objective_ast = expr_mod.parse(objective_expr) if objective_expr else None
        self.metrics_file = metrics_file
        self.timeout = timeout

    def __call__(self, cfg: Configuration) -> EnvResult:
        fd, path = tempfile.mkstemp(prefix="dagtune_cfg_", suffix=".txt")
        os.close(fd)
        try:
            write_config_file(cfg, path)
            argv = shlex.split(self.command.replace("{config}", shlex.quote(path)))
            try:
                proc = subprocess.run(
                    argv, capture_output=True, text=True, timeout=self.timeout
                )
            except (OSError, subprocess.TimeoutExpired) as e:
                raise EvaluationError(f"command failed to run: {e}") from e
            if proc.returncode != 0:
                raise EvaluationError(
                    f"command exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
                )
            metrics = parse_log(proc.stdout, self.annotation)
            if self.metrics_file:
                try:
                    with open(self.metrics_file, "r", encoding="utf-8") as fh:
                        metrics.update(parse_log(fh.read(), self.annotation))
                except OSError as e:
                    raise EvaluationError(f"cannot read metrics file: {e}") from e
            value = self._objective_value(metrics)
            return metrics, {self.objective: value}
        finally:
            if os.path.exists(path):
                os.unlink(path)

    def _objective_value(self, metrics: dict[str, float]) -> float:
        if self.objective_ast is not None:
            try:
                value = float(expr_mod.evaluate(self.objective_ast, metrics))
            except KeyError as e:
                raise EvaluationError(f"objective expression needs missing metric: {e}") from e
        else:
            if self.objective not in metrics:
                raise EvaluationError(f"objective metric {self.objective!r} not emitted")
            value = metrics[self.objective]
        if not np.isfinite(value):
            raise EvaluationError(f"objective value is not finite: {value}")
        return value
