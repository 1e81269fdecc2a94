"""The model zoo: MNL and DFT variants for both applications.

Variant keys are ``"<application>:<name>"``, e.g. ``"static:DFT-B2"`` or
``"gap:DFT-S2"``. Each variant fixes its own set of parameters; the rest
are estimated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .data import STATIC_ATTRIBUTES, Dataset
from .errors import DataError, SpecError
from .link import LinkSpec, LinkTerm, ResolvedDft, resolve
from .mnl import UtilitySpec, UtilityTerm, design, utility
from .params import Exp, Identity, ParamDef, ParamSpace, ScaledLogistic

PROB_FLOOR = 1e-300
STATIC_TAU = 1000.0
GAP_TAU_START = 20.0
PHI1_START = 1e-4


@dataclass(frozen=True)
class _AttributeColumn:
    k: int

    def __call__(self, data):
        return data.attributes[:, :, self.k]


@dataclass(frozen=True)
class _AcceptOnly:
    """Covariate on the accept alternative, zero on reject."""

    fn: object

    def __call__(self, data):
        x = self.fn(data)
        return np.column_stack([x, np.zeros_like(x)])


def _gap_index(data):
    i = data.feature("gap_index")
    if np.any(i < 1):
        row = int(np.flatnonzero(i < 1)[0])
        raise DataError(f"task {data.task_id[row]!r}: gap_index must start at 1, got {i[row]}")
    return i


def _ln_gap_x_gapsize(data):
    return np.log(_gap_index(data)) * data.feature("x_gapsize")


def _first_gap_speed(data):
    return (_gap_index(data) == 1) * data.feature("x_speed")


@dataclass(frozen=True)
class StaticApplication:
    """Stated-preference tasks: J alternatives described by K rated attributes."""

    attribute_names: tuple = STATIC_ATTRIBUTES
    n_alternatives: int = 3
    name: str = "static"

    def check(self, data: Dataset):
        if data.application != "static":
            raise DataError(f"static model given {data.application!r} data")
        if tuple(data.attribute_names) != tuple(self.attribute_names) or data.n_alternatives != self.n_alternatives:
            raise DataError(
                f"dataset has J={data.n_alternatives}, attributes {list(data.attribute_names)}; "
                f"model expects J={self.n_alternatives}, attributes {list(self.attribute_names)}"
            )

    def attribute_covariate(self, data, k):
        return data.attributes[:, :, k]

    def mnl_spec(self, data) -> UtilitySpec:
        J = self.n_alternatives
        return UtilitySpec(J, tuple(
            UtilityTerm(f"beta_{a}", _AttributeColumn(k), tuple(range(J))) for k, a in enumerate(self.attribute_names)
        ))

    def dft_base(self, data, theta) -> ResolvedDft:
        N = len(data)
        names = self.attribute_names

        def row(prefix):
            return np.tile(np.array([theta[f"{prefix}_{a}"] for a in names], dtype=float), (N, 1))

        return ResolvedDft(
            M=data.attributes,
            beta=row("beta"),
            gamma=row("gamma"),
            phi1=np.full(N, theta["phi1"]),
            phi2=np.full(N, theta["phi2"]),
            sigma_eps=np.full(N, theta.get("sigma_eps", np.nan)),
            tau=np.full(N, theta["tau"]),
            p0=np.zeros((N, self.n_alternatives)),
        )


@dataclass(frozen=True)
class GapApplication:
    """Binary gap acceptance; alternative 0 accepts, 1 rejects.

    The DFT attribute matrix is [[gap size, position, 1], [0, 0, 0]].
    """

    attribute_names: tuple = ("gap", "pos", "alt")
    n_alternatives: int = 2
    name: str = "gap"

    def check(self, data: Dataset):
        if data.application != "gap":
            raise DataError(f"gap model given {data.application!r} data")

    def attribute_covariate(self, data, k):
        col = (data.feature("x_gapsize"), data.feature("x_pos"), np.ones(len(data)))[k]
        return np.column_stack([col, np.zeros_like(col)])

    def mnl_spec(self, data) -> UtilitySpec:
        acc = (0,)
        return UtilitySpec(2, (
            UtilityTerm("delta_G", None, acc),
            UtilityTerm("beta_gap", "x_gapsize", acc),
            UtilityTerm("beta_gapn", _ln_gap_x_gapsize, acc),
            UtilityTerm("beta_speed", _first_gap_speed, acc),
            UtilityTerm("beta_pos", "x_pos", acc),
            UtilityTerm("alpha_age", "z_age", acc),
            UtilityTerm("alpha_reg", "z_reg", acc),
        ))

    def dft_base(self, data, theta) -> ResolvedDft:
        N = len(data)
        i = _gap_index(data)
        gap, pos = data.feature("x_gapsize"), data.feature("x_pos")
        M = np.zeros((N, 2, 3))
        M[:, 0, 0] = gap
        M[:, 0, 1] = pos
        M[:, 0, 2] = 1.0
        s_gap = theta["beta_gap"] + theta["beta_gapn"] * np.log(i)
        s_alt = (
            theta["delta_bias"]
            + theta["beta_speed"] * _first_gap_speed(data)
            + theta["alpha_age"] * data.feature("z_age")
            + theta["alpha_reg"] * data.feature("z_reg")
        )
        beta = np.column_stack([s_gap, np.full(N, theta["beta_pos"]), s_alt])
        p0 = np.zeros((N, 2))
        p0[:, 0] = theta["delta_G"]
        return ResolvedDft(
            M=M, beta=beta, gamma=np.zeros((N, 3)),
            phi1=np.full(N, theta["phi1"]), phi2=np.full(N, theta["phi2"]),
            sigma_eps=np.full(N, theta.get("sigma_eps", np.nan)),
            tau=np.full(N, theta["tau"]), p0=p0,
        )


@dataclass(frozen=True)
class Variant:
    key: str
    application: object
    family: str
    space: ParamSpace = field(repr=False)
    link: LinkSpec = LinkSpec()
    base: str | None = None
    description: str = ""

    @property
    def name(self):
        return self.key.split(":", 1)[1]

    def resolve(self, data, theta):
        self.application.check(data)
        return resolve(data, self, theta)

    def log_likelihood_obs(self, data, theta, tol=1e-6):
        """Per-observation log P(chosen) and the count of floored probabilities."""
        if self.family == "mnl":
            spec = self.resolve(data, theta)
            lp = log_softmax(utility(data, spec, theta), axis=1)
            return lp[np.arange(len(data)), data.chosen], 0
        p = self.resolve(data, theta).chosen_probabilities(data.chosen, tol=tol)
        floored = p < PROB_FLOOR
        return np.log(np.where(floored, PROB_FLOOR, p)), int(floored.sum())

    def probabilities(self, data, theta, tol=1e-6):
        if self.family == "mnl":
            spec = self.resolve(data, theta)
            return softmax(utility(data, spec, theta), axis=1)
        return self.resolve(data, theta).probabilities(tol=tol)


def _p(name, value, fixed=False, transform=Identity()):
    return ParamDef(name, float(value), fixed, transform)


def _static_space(kind, names, J, alphas=None):
    out = []
    if kind == "MNL":
        out += [_p(f"beta_{a}", 0.0) for a in names]
    else:
        free_beta = kind == "B2"
        out += [_p(f"beta_{a}", 1.0, fixed=(k == 0 or not free_beta)) for k, a in enumerate(names)]
        out += [_p(f"gamma_{a}", 0.0, fixed=(k == 0 or free_beta)) for k, a in enumerate(names)]
        out += [
            _p("phi1", PHI1_START, transform=Exp()),
            _p("phi2", 1.0 / J, fixed=True, transform=ScaledLogistic(0.0, 1.0 / J)),
            _p("sigma_eps", 1.0, transform=Exp()),
            _p("tau", STATIC_TAU, fixed=True, transform=Exp()),
        ]
    if alphas is not None:
        count_free, time_free = alphas
        out += [_p("alpha_gaze_count", 0.0, fixed=not count_free), _p("alpha_gaze_time", 0.0, fixed=not time_free)]
    return ParamSpace(out)


def _share_link(target):
    return (LinkTerm(target, "count_share", "alpha_gaze_count"), LinkTerm(target, "time_share", "alpha_gaze_time"))


STRESS = (("x_scen", "delta_stress"), ("z_hr", "alpha_hr"), ("z_scr", "alpha_scr"))
GAZE = (("y_gaze_left", "alpha_gaze_left"), ("y_gaze_yaw_sd", "alpha_gaze_yaw_sd"), ("y_gaze_pitch_sd", "alpha_gaze_pitch_sd"))


def _terms(target, pairs, **kw):
    return tuple(LinkTerm(target, f, c, **kw) for f, c in pairs)


def _gap_space(family, stress=False, gaze=False, sigma=True):
    out = [_p(n, 0.0) for n in ("delta_G", "beta_gap", "beta_gapn", "beta_speed", "beta_pos", "alpha_age", "alpha_reg")]
    if family == "dft":
        out += [_p("delta_bias", 0.0), _p("phi1", 0.0, fixed=True, transform=Exp()),
                _p("phi2", 0.0, fixed=True, transform=ScaledLogistic(0.0, 0.5))]
        if sigma:
            out.append(_p("sigma_eps", 1.0, fixed=True, transform=Exp()))
        out.append(_p("tau", GAP_TAU_START, transform=Exp()))
    if stress:
        out += [_p(c, 0.0) for _, c in STRESS]
    if gaze:
        out += [_p(c, 0.0) for _, c in GAZE]
    return ParamSpace(out)


STATIC_VARIANTS = {
    # name: (family, base kind, link target or None, (count free, time free), nesting base, description)
    "MNL-B": ("mnl", "MNL", None, None, None, "linear-in-stars MNL, no constants"),
    "MNL-E": ("mnl", "MNL", "beta", (True, False), "MNL-B", "fixation count share added to marginal utilities"),
    "DFT-B1": ("dft", "B1", None, None, None, "estimated attention weights, unit scalings"),
    "DFT-B2": ("dft", "B2", None, None, None, "estimated scalings, equal attention weights"),
    "DFT-E1": ("dft", "B2", "gamma", (True, False), "DFT-B2", "fixation counts on attention logits"),
    "DFT-E2": ("dft", "B2", "gamma", (False, True), "DFT-B2", "fixation times on attention logits"),
    "DFT-E3": ("dft", "B2", "gamma", (True, True), "DFT-B2", "counts and times on attention logits"),
    "DFT-E4": ("dft", "B1", "gamma", (True, False), "DFT-B1", "fixation counts on attention logits"),
    "DFT-E5": ("dft", "B2", "beta", (True, False), "DFT-B2", "fixation counts on scalings"),
    "DFT-E6": ("dft", "B1", "beta", (True, False), "DFT-B1", "fixation counts on scalings"),
}

GAP_VARIANTS = {
    # name: (family, stress target, gaze target, sigma parameter present, nesting base, description)
    "MNL-B": ("mnl", None, None, True, None, "gap-acceptance MNL"),
    "MNL-S": ("mnl", "initial", None, True, "MNL-B", "stress added to the accept utility"),
    "MNL-E": ("mnl", "initial", "initial", True, "MNL-S", "stress and gaze added to the accept utility"),
    "DFT-B": ("dft", None, None, True, None, "gap-acceptance DFT, fixed weights and noise"),
    "DFT-S1": ("dft", "initial", None, True, "DFT-B", "stress added to the initial accept preference"),
    "DFT-S2": ("dft", "noise", None, False, "DFT-B", "process noise exp(stress)"),
    "DFT-E1": ("dft", "noise", "initial", False, "DFT-S2", "gaze added to the initial accept preference"),
    "DFT-E2": ("dft", "noise", "beta", False, "DFT-S2", "gaze added to the gap-size scaling"),
    "DFT-E3": ("dft", "noise", "gap_weight", False, "DFT-S2", "gaze tilts the gap-size attention weight"),
}


def variant_keys():
    return [f"static:{n}" for n in STATIC_VARIANTS] + [f"gap:{n}" for n in GAP_VARIANTS]


def get_variant(key: str, attribute_names=None, n_alternatives=None) -> Variant:
    """Build a registered variant; static variants adapt to the data's J and attributes."""
    if ":" not in key:
        raise SpecError(f"variant key {key!r} must look like 'static:DFT-B2' or 'gap:DFT-S2'; known: {variant_keys()}")
    app_name, name = key.split(":", 1)
    if app_name == "static" and name in STATIC_VARIANTS:
        family, kind, target, alphas, base, desc = STATIC_VARIANTS[name]
        names = tuple(attribute_names or STATIC_ATTRIBUTES)
        J = int(n_alternatives or 3)
        app = StaticApplication(names, J)
        link = LinkSpec(_share_link(target), base=base or "") if target else LinkSpec()
        space = _static_space(kind if family == "dft" else "MNL", names, J, alphas)
        return Variant(key, app, family, space, link, base and f"static:{base}", desc)
    if app_name == "gap" and name in GAP_VARIANTS:
        family, stress_t, gaze_t, sigma, base, desc = GAP_VARIANTS[name]
        terms = ()
        if stress_t:
            terms += _terms(stress_t, STRESS)
        if gaze_t:
            terms += _terms(gaze_t, GAZE)
        space = _gap_space(family, stress=bool(stress_t), gaze=bool(gaze_t), sigma=sigma)
        return Variant(key, GapApplication(), family, space, LinkSpec(terms, base=base or ""), base and f"gap:{base}", desc)
    raise SpecError(f"unknown variant {key!r}; known variants: {', '.join(variant_keys())}")


def custom_variant(key, application, family, space: ParamSpace, link: LinkSpec) -> Variant:
    return Variant(key, application, family, space, link, None, "custom")
