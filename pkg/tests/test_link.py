import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import softmax

from physiodft.errors import ParameterDomainError, SpecError
from physiodft.link import (
    LinkSpec,
    LinkTerm,
    gap_attention_weights,
    gaze_adjusted_logits,
    gaze_adjusted_scalings,
    gaze_total,
    resolve,
    stress_index,
    stress_noise,
)
from physiodft.models import STATIC_VARIANTS, GAP_VARIANTS, Variant, get_variant
from physiodft.simulate import GapDesign, StaticDesign, generate_dataset


def test_gaze_logits_examples():
    g = np.array([0.1, -0.2, 0.3, 0.0])
    assert np.array_equal(gaze_adjusted_logits(g, np.full(4, 0.25), np.full(4, 0.25), 0.0, 0.0), g)
    same = softmax(gaze_adjusted_logits(g, np.full(4, 0.25), np.full(4, 0.25), 1.7, -0.4))
    assert np.allclose(same, softmax(g), atol=1e-15)
    w = softmax(gaze_adjusted_logits(np.zeros(4), [0.4, 0.2, 0.2, 0.2], [0.1, 0.2, 0.3, 0.4], 2.29, 0.0))
    # direct evaluation of exp(0.916, 0.458, 0.458, 0.458) / sum
    e = np.exp([0.916, 0.458, 0.458, 0.458])
    assert np.allclose(w, e / e.sum(), atol=1e-15)
    assert np.allclose(w, [0.34511, 0.21830, 0.21830, 0.21830], atol=5e-6)
    with pytest.raises(SpecError):
        gaze_adjusted_logits(np.zeros(4), np.ones(3), np.ones(4), 1.0, 1.0)


def test_gaze_scalings_examples():
    assert np.array_equal(gaze_adjusted_scalings([1, 2, 3, 4], [0.5, 0.5, 0, 0], 0.0), [1, 2, 3, 4])
    assert np.allclose(gaze_adjusted_scalings(np.ones(4), [0.5, 0.5, 0, 0], 6.00), [4, 4, 1, 1])


def test_stress_examples():
    assert stress_index(0, 0, 0, 0.55, 0.91, 4.49) == 0
    s = stress_index(1, 1, 0.1, 0.55, 0.91, 4.49)
    assert s == pytest.approx(1.909, abs=1e-12)
    assert stress_index(1, 1, 0.1, 1.1, 1.82, 8.98) == pytest.approx(2 * s)
    assert stress_noise(0.0) == 1.0
    assert stress_noise(1.909) == pytest.approx(6.746, abs=5e-4)
    with pytest.raises(ParameterDomainError):
        stress_noise(701.0)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_stress_noise_monotone(a, b):
    if a < b:
        assert stress_noise(a) <= stress_noise(b)


def test_gaze_total_examples():
    assert gaze_total(0, 0, 0, (61.05, -1.41, -2.44)) == 0
    assert gaze_total(0.02, 5, 3, (61.05, -1.41, -2.44)) == pytest.approx(-13.149, abs=1e-12)
    assert gaze_total(0.02, 6, 3, (61.05, -1.41, -2.44)) < gaze_total(0.02, 5, 3, (61.05, -1.41, -2.44))


def test_gap_attention_weight_examples():
    assert np.allclose(gap_attention_weights(0.0), 1 / 3)
    assert np.allclose(gap_attention_weights(np.log(2)), [0.5, 0.25, 0.25])
    assert np.allclose(gap_attention_weights(800.0), [1, 0, 0])
    assert np.allclose(gap_attention_weights(-800.0), [0, 0.5, 0.5])


@given(st.floats(-700, 700))
def test_gap_attention_weights_on_simplex(a):
    w = gap_attention_weights(a)
    assert abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)
    ea = np.exp(min(a, 700))
    if abs(a) < 30:
        assert np.allclose(w, np.array([ea, 1, 1]) / (2 + ea), rtol=1e-12)


def test_duplicate_link_pairs_rejected():
    with pytest.raises(SpecError):
        LinkSpec((LinkTerm("gamma", "count_share", "a"), LinkTerm("gamma", "count_share", "b")))
    with pytest.raises(SpecError):
        LinkTerm("nowhere", "z_hr", "a")


@pytest.fixture(scope="module")
def static_data():
    v = get_variant("static:DFT-B2")
    theta = v.space.theta()
    theta.update(beta_condition=1.5, sigma_eps=20.0, phi1=1e-3)
    return generate_dataset(StaticDesign(), v, theta, 300, 11)[0]


@pytest.fixture(scope="module")
def gap_data():
    v = get_variant("gap:DFT-B")
    theta = v.space.theta()
    theta.update(delta_G=-2.0, beta_gap=0.5, beta_pos=0.3, tau=8.0)
    return generate_dataset(GapDesign(), v, theta, 300, 12)[0]


def _zeroed(v, rng):
    theta = v.space.theta()
    link_coefs = set(v.link.coefficients)
    for n in theta:
        if n in link_coefs:
            theta[n] = 0.0
        elif not v.space[n].fixed and n not in ("tau", "phi1", "sigma_eps"):
            theta[n] = float(rng.normal(scale=0.5))
    return theta


@pytest.mark.parametrize("name", [n for n, spec in STATIC_VARIANTS.items() if spec[4]])
def test_static_nesting(name, static_data, rng):
    v = get_variant(f"static:{name}")
    base = get_variant(v.base)
    theta = _zeroed(v, rng)
    a = np.sum(v.log_likelihood_obs(static_data, theta)[0])
    b = np.sum(base.log_likelihood_obs(static_data, {k: theta[k] for k in base.space.names})[0])
    assert abs(a - b) < 1e-10


@pytest.mark.parametrize("name", [n for n, spec in GAP_VARIANTS.items() if spec[4]])
def test_gap_nesting(name, gap_data, rng):
    v = get_variant(f"gap:{name}")
    base = get_variant(v.base)
    theta = _zeroed(v, rng)
    btheta = {k: theta.get(k, 0.0) for k in base.space.names}
    if "sigma_eps" in base.space.names and "sigma_eps" not in theta:
        btheta["sigma_eps"] = 1.0  # exp(0) from a zeroed stress index
    a = np.sum(v.log_likelihood_obs(gap_data, theta)[0])
    b = np.sum(base.log_likelihood_obs(gap_data, btheta)[0])
    assert abs(a - b) < 1e-10


def test_dft_s2_noise_is_exp_stress(gap_data):
    v = get_variant("gap:DFT-S2")
    theta = v.space.theta()
    theta.update(delta_stress=0.55, alpha_hr=0.91, alpha_scr=4.49)
    r = v.resolve(gap_data, theta)
    expect = np.exp(stress_index(gap_data.feature("x_scen"), gap_data.feature("z_hr"), gap_data.feature("z_scr"),
                                 0.55, 0.91, 4.49))
    assert np.allclose(r.sigma_eps, expect, rtol=1e-14)


def test_dft_e3_weights(gap_data):
    v = get_variant("gap:DFT-E3")
    theta = v.space.theta()
    theta.update(alpha_gaze_left=61.05, alpha_gaze_yaw_sd=-1.41, alpha_gaze_pitch_sd=-2.44)
    r = v.resolve(gap_data, theta)
    a = gaze_total(gap_data.feature("y_gaze_left"), gap_data.feature("y_gaze_yaw_sd"),
                   gap_data.feature("y_gaze_pitch_sd"), (61.05, -1.41, -2.44))
    assert np.allclose(r.weights, gap_attention_weights(a), atol=1e-14)


def test_equal_share_bonus_leaves_probabilities_unchanged(static_data):
    v = get_variant("static:DFT-E3")
    theta = v.space.theta()
    theta.update(alpha_gaze_count=1.3, alpha_gaze_time=-0.7, sigma_eps=20.0, phi1=1e-3)
    shifted = static_data.subset(np.arange(len(static_data)))
    shifted.features = dict(shifted.features)
    shifted.features["count_share"] = static_data.features["count_share"] + 0.2
    shifted.features["time_share"] = static_data.features["time_share"] - 0.1
    assert np.allclose(v.probabilities(static_data, theta), v.probabilities(shifted, theta), atol=1e-9)


def test_unsupported_targets_are_spec_errors(gap_data, static_data):
    base = get_variant("static:MNL-B")
    bad = Variant("static:bad", base.application, "mnl", base.space, LinkSpec((LinkTerm("gamma", "count_share", "beta_size"),)))
    with pytest.raises(SpecError):
        resolve(static_data, bad, bad.space.theta())
    s2 = get_variant("gap:DFT-S2")
    theta = s2.space.theta()
    theta["sigma_eps"] = 1.0
    with pytest.raises(SpecError, match="sigma_eps"):
        resolve(gap_data, s2, theta)
    missing = Variant("gap:m", s2.application, "dft", s2.space, LinkSpec((LinkTerm("initial", "z_hr", "alpha_x"),)))
    with pytest.raises(SpecError):
        resolve(gap_data, missing, missing.space.theta())


def test_empty_link_reproduces_base(static_data):
    v = get_variant("static:DFT-B1")
    theta = v.space.theta()
    theta.update(gamma_condition=0.8, sigma_eps=25.0, phi1=1e-3)
    r = resolve(static_data, v, theta)
    assert np.array_equal(r.gamma[0], [0.0, 0.8, 0.0, 0.0])
    assert np.array_equal(r.beta, np.ones_like(r.beta))
