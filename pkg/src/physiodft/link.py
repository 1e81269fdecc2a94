"""Linking physiological features to model parameters.

Four placements are supported: attention-weight logits (``gamma``),
attribute scalings (``beta``), initial preference / utility constant
(``initial``), process noise (``noise``), plus the gap-acceptance form that
tilts the gap-size attention weight (``gap_weight``). Every placement is
additive in its linear index, so zeroing all link coefficients gives back
the base model exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .dft import (
    DftParams,
    chosen_probability_batch,
    choice_probabilities_batch,
    distance_matrix_batch,
    feedback_matrix,
    preference_moments_batch,
    valence_moments_batch,
)
from .errors import ParameterDomainError, SpecError
from .mnl import UtilitySpec, UtilityTerm

TARGETS = ("gamma", "beta", "initial", "noise", "gap_weight")
MAX_LOG_SIGMA = 700.0


def gaze_adjusted_logits(gamma, counts, times, alpha_count, alpha_time):
    gamma = np.asarray(gamma, dtype=float)
    counts = np.asarray(counts, dtype=float)
    times = np.asarray(times, dtype=float)
    if counts.shape[-1] != gamma.shape[-1] or times.shape[-1] != gamma.shape[-1]:
        raise SpecError(f"share vectors must have {gamma.shape[-1]} entries, got {counts.shape[-1]} and {times.shape[-1]}")
    return gamma + counts * alpha_count + times * alpha_time


def gaze_adjusted_scalings(beta, counts, alpha_count):
    beta = np.asarray(beta, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if counts.shape[-1] != beta.shape[-1]:
        raise SpecError(f"share vector must have {beta.shape[-1]} entries, got {counts.shape[-1]}")
    return beta + counts * alpha_count


def stress_index(x_scen, z_hr, z_scr, delta_stress, alpha_hr, alpha_scr):
    """Total stress: scenario shift plus weighted heart rate and SCR."""
    return delta_stress * np.asarray(x_scen, float) + alpha_hr * np.asarray(z_hr, float) + alpha_scr * np.asarray(z_scr, float)


def stress_noise(alpha_stress):
    """Process-noise standard deviation exp(stress)."""
    a = np.asarray(alpha_stress, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a > MAX_LOG_SIGMA):
        raise ParameterDomainError(f"stress index {np.max(a):.6g} overflows exp(); process noise undefined")
    out = np.exp(a)
    return float(out) if out.ndim == 0 else out


def gaze_total(y_left, y_yaw_sd, y_pitch_sd, alphas):
    a_left, a_yaw, a_pitch = alphas
    return np.asarray(y_left, float) * a_left + np.asarray(y_yaw_sd, float) * a_yaw + np.asarray(y_pitch_sd, float) * a_pitch


def gap_attention_weights(alpha_gaze):
    """(gap, position, other) weights: exp(a), 1, 1 normalized.

    Written as a softmax over logits (a, 0, 0) so it saturates to (1, 0, 0)
    or (0, 1/2, 1/2) without overflow.
    """
    a = np.asarray(alpha_gaze, dtype=float)
    logits = np.stack([a, np.zeros_like(a), np.zeros_like(a)], axis=-1)
    return softmax(logits, axis=-1)


@dataclass(frozen=True)
class LinkTerm:
    """``coef * feature`` added to ``target``.

    Share features (per-attribute arrays) apply attribute by attribute;
    scalar features apply to ``attribute`` (beta/gamma targets) or
    ``alternative`` (initial target).
    """

    target: str
    feature: str
    coef: str
    attribute: int = 0
    alternative: int = 0

    def __post_init__(self):
        if self.target not in TARGETS:
            raise SpecError(f"unknown link target {self.target!r}; expected one of {TARGETS}")


@dataclass(frozen=True)
class LinkSpec:
    terms: tuple = ()
    base: str = ""

    def __post_init__(self):
        pairs = [(t.target, t.feature) for t in self.terms]
        dup = {p for p in pairs if pairs.count(p) > 1}
        if dup:
            raise SpecError(f"link pairs {sorted(dup)} appear more than once")

    def by_target(self, target):
        return [t for t in self.terms if t.target == target]

    @property
    def coefficients(self):
        return tuple(dict.fromkeys(t.coef for t in self.terms))

    @property
    def features(self):
        return tuple(dict.fromkeys(t.feature for t in self.terms))


def _scalar_index(terms, data, theta):
    total = np.zeros(len(data))
    for t in terms:
        f = data.feature(t.feature)
        if f.ndim != 1:
            raise SpecError(f"feature {t.feature!r} is per-attribute; target {t.target!r} needs a scalar feature")
        total = total + theta[t.coef] * f
    return total


@dataclass
class ResolvedDft:
    """Per-observation DFT inputs, every array with a leading N axis."""

    M: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    sigma_eps: np.ndarray
    tau: np.ndarray
    p0: np.ndarray

    def __len__(self):
        return self.M.shape[0]

    @property
    def weights(self):
        return softmax(self.gamma, axis=1)

    def params(self, n: int) -> DftParams:
        return DftParams(
            beta=self.beta[n], gamma=self.gamma[n], phi1=self.phi1[n], phi2=self.phi2[n],
            sigma_eps=self.sigma_eps[n], tau=self.tau[n], p0=self.p0[n],
        )

    def moments(self):
        if np.any(self.sigma_eps <= 0) or np.any(~np.isfinite(self.sigma_eps)):
            raise ParameterDomainError("sigma_eps must be finite and > 0")
        D = distance_matrix_batch(self.M, self.beta)
        S = feedback_matrix(D, self.phi1, self.phi2)
        mu, Phi = valence_moments_batch(self.M, self.beta, self.weights, self.sigma_eps)
        return preference_moments_batch(S, mu, Phi, self.p0, self.tau, phi=(self.phi1, self.phi2))

    def chosen_probabilities(self, chosen, tol=1e-6):
        xi, omega = self.moments()
        return chosen_probability_batch(xi, omega, chosen, tol=tol)

    def probabilities(self, tol=1e-6):
        xi, omega = self.moments()
        return choice_probabilities_batch(xi, omega, tol=tol)


def _apply_attribute_terms(arr, terms, data, theta):
    arr = arr.copy()
    for t in terms:
        f = data.feature(t.feature)
        if f.ndim == 2:
            if f.shape[1] != arr.shape[1]:
                raise SpecError(f"feature {t.feature!r} has {f.shape[1]} entries per task, model has {arr.shape[1]} attributes")
            arr = arr + theta[t.coef] * f
        else:
            arr[:, t.attribute] = arr[:, t.attribute] + theta[t.coef] * f
    return arr


def resolve(data, variant, theta: dict):
    """Resolve every observation's parameters for ``variant`` at ``theta``.

    DFT variants give a :class:`ResolvedDft`; MNL variants give the
    :class:`UtilitySpec` extended with the linked terms.
    """
    link: LinkSpec = variant.link
    missing = [c for c in link.coefficients if c not in theta]
    if missing:
        raise SpecError(f"link coefficients {missing} not in parameter vector of {variant.key}")
    app = variant.application
    if variant.family == "mnl":
        bad = [t.target for t in link.terms if t.target in ("gamma", "noise", "gap_weight")]
        if bad:
            raise SpecError(f"{variant.key}: MNL has no {sorted(set(bad))} parameters to link")
        spec = app.mnl_spec(data)
        extra = []
        for t in link.by_target("beta"):
            extra.append(UtilityTerm(t.coef, _BetaLinkCovariate(app, t), tuple(range(data.n_alternatives))))
        for t in link.by_target("initial"):
            extra.append(UtilityTerm(t.coef, t.feature, (t.alternative,)))
        return spec.extend(*extra)

    base: ResolvedDft = app.dft_base(data, theta)
    base.gamma = _apply_attribute_terms(base.gamma, link.by_target("gamma"), data, theta)
    base.beta = _apply_attribute_terms(base.beta, link.by_target("beta"), data, theta)
    initial = link.by_target("initial")
    if initial:
        p0 = base.p0.copy()
        for alt in sorted({t.alternative for t in initial}):
            p0[:, alt] += _scalar_index([t for t in initial if t.alternative == alt], data, theta)
        base.p0 = p0
    noise = link.by_target("noise")
    if noise:
        if "sigma_eps" in theta:
            raise SpecError(f"{variant.key}: sigma_eps is both a parameter and linked to features; drop it from the parameter space")
        base.sigma_eps = stress_noise(_scalar_index(noise, data, theta))
    gw = link.by_target("gap_weight")
    if gw:
        if base.gamma.shape[1] != 3:
            raise SpecError(f"{variant.key}: gap attention weights need the 3-attribute gap layout")
        if np.any(base.gamma != base.gamma[:, :1]):
            raise SpecError(f"{variant.key}: gap_weight link requires equal base attention weights")
        # softmax(c + (a, 0, 0)) == gap_attention_weights(a) for equal base logits c
        gamma = base.gamma.copy()
        gamma[:, 0] += _scalar_index(gw, data, theta)
        base.gamma = gamma
    return base


@dataclass(frozen=True)
class _BetaLinkCovariate:
    """Covariate for an attribute-scaling link in MNL: feature x attribute level."""

    app: object = field(repr=False)
    term: LinkTerm = None

    def __call__(self, data):
        f = data.feature(self.term.feature)
        if f.ndim == 2:
            return sum(f[:, k, None] * self.app.attribute_covariate(data, k) for k in range(f.shape[1]))
        return f[:, None] * self.app.attribute_covariate(data, self.term.attribute)
