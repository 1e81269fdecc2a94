"""Named parameter spaces with fixed flags and estimation transforms."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, logit

from .errors import SpecError, StartValueError


@dataclass(frozen=True)
class Identity:
    name = "identity"

    def to_natural(self, x):
        return x

    def to_internal(self, v):
        return v

    def derivative(self, x):
        return 1.0


@dataclass(frozen=True)
class Exp:
    """Positive parameters estimated on the log scale."""

    name = "exp"

    def to_natural(self, x):
        return float(np.exp(x))

    def to_internal(self, v):
        if v <= 0:
            raise StartValueError(f"exp-transformed parameter needs a positive value, got {v}")
        return float(np.log(v))

    def derivative(self, x):
        return float(np.exp(x))


@dataclass(frozen=True)
class ScaledLogistic:
    """Parameters bounded to (lower, upper) through a logistic map."""

    lower: float
    upper: float
    name = "logistic"

    def to_natural(self, x):
        return float(self.lower + (self.upper - self.lower) * expit(x))

    def to_internal(self, v):
        if not self.lower < v < self.upper:
            raise StartValueError(f"logistic-transformed parameter must lie strictly inside ({self.lower}, {self.upper}), got {v}")
        return float(logit((v - self.lower) / (self.upper - self.lower)))

    def derivative(self, x):
        s = expit(x)
        return float((self.upper - self.lower) * s * (1.0 - s))


def make_transform(spec):
    """Build a transform from 'identity', 'exp' or ('logistic', lower, upper)."""
    if spec is None or spec == "identity":
        return Identity()
    if spec == "exp":
        return Exp()
    if isinstance(spec, (list, tuple)) and spec and spec[0] == "logistic":
        return ScaledLogistic(float(spec[1]), float(spec[2]))
    if isinstance(spec, (Identity, Exp, ScaledLogistic)):
        return spec
    raise SpecError(f"unknown transform {spec!r}")


@dataclass(frozen=True)
class ParamDef:
    name: str
    value: float
    fixed: bool = False
    transform: object = Identity()


class ParamSpace:
    """Ordered named parameters; free ones map to an unconstrained vector."""

    def __init__(self, params):
        self.params = tuple(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SpecError(f"duplicate parameter names in {names}")
        for p in self.params:
            if not p.fixed and not np.isfinite(p.value):
                raise StartValueError(f"free parameter {p.name!r} has non-finite start {p.value}")

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def __getitem__(self, name):
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def names(self):
        return tuple(p.name for p in self.params)

    @property
    def free(self):
        return tuple(p for p in self.params if not p.fixed)

    @property
    def free_names(self):
        return tuple(p.name for p in self.free)

    @property
    def n_free(self):
        return len(self.free)

    def start(self) -> np.ndarray:
        return np.array([p.transform.to_internal(p.value) for p in self.free], dtype=float)

    def theta(self, x=None) -> dict:
        """Natural-scale values of every parameter at internal point ``x``."""
        out = {p.name: float(p.value) for p in self.params}
        if x is not None:
            for p, xi in zip(self.free, np.asarray(x, dtype=float)):
                out[p.name] = p.transform.to_natural(float(xi))
        return out

    def internal(self, theta: dict) -> np.ndarray:
        return np.array([p.transform.to_internal(theta[p.name]) for p in self.free], dtype=float)

    def jacobian(self, x) -> np.ndarray:
        """d natural / d internal for the free parameters (diagonal)."""
        return np.array([p.transform.derivative(float(xi)) for p, xi in zip(self.free, x)])

    def override(self, changes: dict) -> "ParamSpace":
        """Apply {name: {value|start, fixed, transform}} overrides."""
        unknown = [k for k in changes if k not in self.names]
        if unknown:
            raise SpecError(f"override names {unknown} are not parameters of this model ({list(self.names)})")
        out = []
        for p in self.params:
            ch = changes.get(p.name)
            if ch is None:
                out.append(p)
                continue
            if not isinstance(ch, dict):
                ch = {"value": ch}
            kw = {}
            if "start" in ch:
                kw["value"] = float(ch["start"])
            if "value" in ch:
                kw["value"] = float(ch["value"])
            if "fixed" in ch:
                kw["fixed"] = bool(ch["fixed"])
            if "transform" in ch:
                kw["transform"] = make_transform(ch["transform"])
            out.append(replace(p, **kw))
        return ParamSpace(out)

    def fix_all(self) -> "ParamSpace":
        return ParamSpace([replace(p, fixed=True) for p in self.params])

    def with_values(self, values: dict) -> "ParamSpace":
        return ParamSpace([replace(p, value=float(values.get(p.name, p.value))) for p in self.params])
