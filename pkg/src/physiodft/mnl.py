"""Multinomial logit with linear-in-parameters utilities."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import SpecError

Covariate = Union[str, Callable, None]


@dataclass(frozen=True)
class UtilityTerm:
    """``coef * covariate`` added to the utilities of ``alternatives``.

    ``covariate`` is a dataset column name, a callable ``f(data)`` returning an
    (N,) or (N, J) array, or None for an alternative-specific constant.
    """

    coef: str
    covariate: Covariate
    alternatives: tuple

    def values(self, data) -> np.ndarray:
        if self.covariate is None:
            return np.ones(len(data))
        if isinstance(self.covariate, str):
            return data.feature(self.covariate)
        return np.asarray(self.covariate(data), dtype=float)


@dataclass(frozen=True)
class UtilitySpec:
    n_alternatives: int
    terms: tuple

    def __post_init__(self):
        constant_alts = set()
        for t in self.terms:
            if any(not 0 <= a < self.n_alternatives for a in t.alternatives):
                raise SpecError(f"term {t.coef!r} targets alternatives {t.alternatives} outside [0, {self.n_alternatives})")
            if t.covariate is None:
                constant_alts.update(t.alternatives)
        if len(constant_alts) >= self.n_alternatives:
            raise SpecError("every alternative carries a constant; normalize at least one to zero")

    @property
    def coefficients(self) -> tuple:
        seen = []
        for t in self.terms:
            if t.coef not in seen:
                seen.append(t.coef)
        return tuple(seen)

    def extend(self, *terms) -> "UtilitySpec":
        return UtilitySpec(self.n_alternatives, self.terms + tuple(terms))


def _term_block(term, data, J):
    x = term.values(data)
    block = np.zeros((len(data), J))
    alts = list(term.alternatives)
    if x.ndim == 1:
        block[:, alts] = x[:, None]
    else:
        block[:, alts] = x[:, alts]
    return block


def design(data, spec: UtilitySpec) -> np.ndarray:
    """(N, J, P) covariate array; utilities are ``design @ theta``."""
    names = spec.coefficients
    X = np.zeros((len(data), spec.n_alternatives, len(names)))
    for t in spec.terms:
        X[:, :, names.index(t.coef)] += _term_block(t, data, spec.n_alternatives)
    return X


def utility(data, spec: UtilitySpec, theta: dict) -> np.ndarray:
    """Systematic utilities, shape (N, J)."""
    missing = [c for c in spec.coefficients if c not in theta]
    if missing:
        raise SpecError(f"coefficients {missing} not found in parameter vector")
    U = np.zeros((len(data), spec.n_alternatives))
    for t in spec.terms:
        U += theta[t.coef] * _term_block(t, data, spec.n_alternatives)
    return U


def mnl_probability(utilities) -> np.ndarray:
    """Softmax over the last axis with max-subtraction."""
    return softmax(np.asarray(utilities, dtype=float), axis=-1)


def mnl_log_probability(utilities) -> np.ndarray:
    return log_softmax(np.asarray(utilities, dtype=float), axis=-1)


def log_probability_gradient(data, spec: UtilitySpec, theta: dict) -> np.ndarray:
    """Per-observation gradient of log P(chosen) w.r.t. the coefficients, (N, P)."""
    X = design(data, spec)
    U = X @ np.array([theta[c] for c in spec.coefficients])
    P = mnl_probability(U)
    idx = np.arange(len(data))
    return X[idx, data.chosen, :] - np.einsum("nj,njp->np", P, X)
