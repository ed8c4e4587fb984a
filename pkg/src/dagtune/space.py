"""Tunable parameter space and its unit-hypercube encoding.

All numeric machinery (samplers, structure learning, GP nodes) works on
``[0, 1]^D``; this module owns the bidirectional mapping between native
parameter values and that cube. Every parameter occupies one encoded
dimension: categorical choices are relaxed to evenly spaced interior
points and decoded by interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

Value = Union[float, int, str]
Configuration = dict[str, Value]


@dataclass(frozen=True)
class Continuous:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("continuous bounds must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"continuous domain requires lo < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class Integer:
    lo: int
    hi: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"integer domain requires lo < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class Categorical:
    choices: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        if len(self.choices) < 2:
            raise ValueError("categorical domain needs at least 2 choices")
        if len(set(self.choices)) != len(self.choices):
            raise ValueError("categorical choices must be distinct")


Domain = Union[Continuous, Integer, Categorical]


@dataclass(frozen=True)
class ParamDef:
    name: str
    domain: Domain

    def __post_init__(self):
        if not self.name:
            raise ValueError("parameter name must be nonempty")
        if "." in self.name:
            raise ValueError(f"parameter name may not contain '.': {self.name!r}")


class ParamSpace:
    """Ordered collection of parameter definitions."""

    def __init__(self, params: list[ParamDef]):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        self.params = list(params)
        self.names = names

    def __len__(self) -> int:
        return len(self.params)

    def __eq__(self, other) -> bool:
        return isinstance(other, ParamSpace) and self.params == other.params

    def __repr__(self) -> str:
        return f"ParamSpace({self.params!r})"

    @property
    def dim(self) -> int:
        # every domain kind encodes to exactly one dimension
        return len(self.params)

    def __getitem__(self, name: str) -> ParamDef:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def validate(self, cfg: Configuration) -> None:
        """Raise ValueError naming the offending parameter if ``cfg`` is invalid."""
        unknown = set(cfg) - set(self.names)
        if unknown:
            raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
        for p in self.params:
            if p.name not in cfg:
                raise ValueError(f"missing value for parameter {p.name!r}")
            v = cfg[p.name]
            d = p.domain
            if isinstance(d, Continuous):
                if not isinstance(v, (int, float)) or not d.lo <= float(v) <= d.hi:
                    raise ValueError(
                        f"parameter {p.name!r}: value {v!r} outside [{d.lo}, {d.hi}]"
                    )
            elif isinstance(d, Integer):
                if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or not d.lo <= v <= d.hi:
                    raise ValueError(
                        f"parameter {p.name!r}: value {v!r} not an integer in [{d.lo}, {d.hi}]"
                    )
            else:
                if v not in d.choices:
                    raise ValueError(
                        f"parameter {p.name!r}: value {v!r} not among choices {list(d.choices)}"
                    )


def encode(space: ParamSpace, cfg: Configuration) -> np.ndarray:
    """Map a configuration to its point in the unit cube.

    Continuous/Integer map affinely onto [lo, hi]; categorical choice i of
    k maps to the bin midpoint (i + 0.5) / k.
    """
    space.validate(cfg)
    out = np.empty(space.dim, dtype=np.float64)
    for i, p in enumerate(space.params):
        v = cfg[p.name]
        d = p.domain
        if isinstance(d, Continuous):
            out[i] = (float(v) - d.lo) / (d.hi - d.lo)
        elif isinstance(d, Integer):
            out[i] = (int(v) - d.lo) / (d.hi - d.lo)
        else:
            out[i] = (d.choices.index(v) + 0.5) / len(d.choices)
    return out


def decode(space: ParamSpace, x: np.ndarray) -> Configuration:
    """Map a unit-cube point back to native parameter values.

    Total on [0, 1]^D; out-of-range coordinates are clamped first (the
    acquisition optimizer may step epsilon outside the cube). Integers use
    round-half-up; categoricals use floor(u * k) clamped to the last bin.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (space.dim,):
        raise ValueError(f"expected vector of length {space.dim}, got shape {x.shape}")
    x = np.clip(x, 0.0, 1.0)
    cfg: Configuration = {}
    for i, p in enumerate(space.params):
        u = float(x[i])
        d = p.domain
        if isinstance(d, Continuous):
            cfg[p.name] = d.lo + u * (d.hi - d.lo)
        elif isinstance(d, Integer):
            cfg[p.name] = int(np.floor(d.lo + u * (d.hi - d.lo) + 0.5))
        else:
            k = len(d.choices)
            cfg[p.name] = d.choices[min(int(u * k), k - 1)]
    return cfg


def cardinality_log2(space: ParamSpace) -> tuple[float, bool]:
    """Search-space size diagnostic.

    Returns ``(log2 of the discrete configuration count, has_continuous)``;
    continuous dimensions contribute infinitely many configurations and are
    reported through the flag instead of the sum.
    """
    total = 0.0
    has_continuous = False
    for p in space.params:
        d = p.domain
        if isinstance(d, Continuous):
            has_continuous = True
        elif isinstance(d, Integer):
            total += np.log2(d.hi - d.lo + 1)
        else:
            total += np.log2(len(d.choices))
    return total, has_continuous
