import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import ndtr

from physiodft.dft import (
    ChoiceTask,
    DftParams,
    PreferenceMoments,
    choice_probabilities_batch,
    choice_probability,
    contrast_matrix,
    distance_matrix,
    feedback_matrix,
    preference_moments,
    task_moments,
    task_probabilities,
    valence_moments,
)
from physiodft.errors import (
    DegenerateCovarianceError,
    IllConditionedFeedbackError,
    InvalidTaskError,
    ParameterDomainError,
)


def brute_moments(S, mu, Phi, p0, tau):
    """Iterate the mean and covariance recursions step by step."""
    xi, om = np.array(p0, float), np.zeros_like(Phi)
    for _ in range(int(tau)):
        xi = S @ xi + mu
        om = S @ om @ S.T + Phi
    return xi, om


def params(J, K, **kw):
    base = dict(beta=np.ones(K), gamma=np.zeros(K), phi1=0.5, phi2=0.2, sigma_eps=1.0, tau=10, p0=np.zeros(J))
    base.update(kw)
    return DftParams(**base)


# contrast, distance and feedback ----------------------------------------

def test_contrast_matrix_forms():
    assert np.array_equal(contrast_matrix(2), [[1, -1], [-1, 1]])
    C3 = contrast_matrix(3)
    assert np.allclose(np.diag(C3), 1) and np.allclose(C3[~np.eye(3, dtype=bool)], -0.5)
    for J in range(2, 8):
        assert np.allclose(contrast_matrix(J) @ np.ones(J), 0, atol=1e-15)
    with pytest.raises(InvalidTaskError):
        contrast_matrix(1)


def test_distance_examples():
    task = ChoiceTask([[1.0, 0.0], [0.0, 1.0]])
    D = distance_matrix(task, [1.0, 1.0])
    assert D[0, 1] == pytest.approx(np.sqrt(2))
    assert np.allclose(distance_matrix(task, [2.0, 2.0]), 2 * D)
    same = ChoiceTask([[3.0, 2.0], [3.0, 2.0], [1.0, 1.0]])
    assert distance_matrix(same, [1.0, 1.0])[0, 1] == 0.0


@given(arrays(float, (3, 2), elements=st.floats(-5, 5)), arrays(float, 2, elements=st.floats(0, 3)))
def test_distance_is_a_metric_matrix(M, beta):
    D = distance_matrix(ChoiceTask(M), beta)
    assert np.allclose(D, D.T) and np.all(np.diag(D) == 0) and np.all(D >= 0)


def test_feedback_examples():
    D = np.array([[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]], float)
    assert np.array_equal(feedback_matrix(D, 0.7, 0.0), np.eye(3))
    S = feedback_matrix(D, 0.7, 0.25)
    assert np.allclose(S, S.T) and np.allclose(np.diag(S), 0.75)
    assert np.allclose(feedback_matrix(D, 1e9, 0.25), 0.75 * np.eye(3))
    S0 = feedback_matrix(np.zeros((3, 3)), 1.0, 1 / 3)
    assert np.allclose(S0, np.eye(3) - np.ones((3, 3)) / 3)
    assert np.linalg.matrix_rank(np.eye(3) - S0) == 1
    with pytest.raises(ParameterDomainError):
        feedback_matrix(D, 1.0, 0.34)
    with pytest.raises(ParameterDomainError):
        feedback_matrix(D, -1.0, 0.1)


def test_params_domain_checks():
    with pytest.raises(ParameterDomainError):
        params(3, 2, phi2=0.4)
    with pytest.raises(ParameterDomainError):
        params(3, 2, sigma_eps=0.0)
    with pytest.raises(ParameterDomainError):
        params(3, 2, tau=0.5)
    with pytest.raises(InvalidTaskError):
        ChoiceTask([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(InvalidTaskError):
        ChoiceTask([[1.0, 2.0], [0.0, 1.0]], chosen=2)


@given(arrays(float, 4, elements=st.floats(-20, 20)), st.floats(-50, 50))
def test_weights_on_simplex_and_shift_invariant(gamma, c):
    p = params(2, 4, gamma=gamma)
    q = params(2, 4, gamma=gamma + c)
    assert abs(p.weights.sum() - 1) < 1e-12 and np.all(p.weights >= 0)
    assert np.allclose(p.weights, q.weights, atol=1e-12, rtol=0)


# valence -----------------------------------------------------------------

def test_valence_identical_rows_and_single_attribute():
    mu, _ = valence_moments(ChoiceTask([[2.0, 3.0]] * 3), params(3, 2))
    assert np.allclose(mu, 0)
    _, Phi = valence_moments(ChoiceTask([[1.0], [4.0], [2.0]]), params(3, 1, sigma_eps=1.7))
    assert np.allclose(Phi, 1.7 ** 2 * np.eye(3))


def test_valence_moments_match_monte_carlo():
    # per-step valence V = C M diag(beta) W + eps with W a one-hot draw
    task = ChoiceTask([[5.0, 1.0], [1.0, 5.0], [3.0, 3.0]])
    p = params(3, 2, sigma_eps=1.0)
    mu, Phi = valence_moments(task, p)
    rng = np.random.default_rng(5)
    n = 1_000_000
    A = contrast_matrix(3) @ task.attributes
    V = A[:, rng.integers(0, 2, n)].T + rng.normal(size=(n, 3))
    se_mean = np.sqrt(np.diag(Phi) / n)
    assert np.all(np.abs(V.mean(0) - mu) < 3 * se_mean)
    emp = np.cov(V.T)
    # SE of a sample covariance entry: sqrt((Phi_ii Phi_jj + Phi_ij^2) / n) under near-normality;
    # the attention mixture has light tails, so a 4x margin covers the kurtosis excess
    se_cov = np.sqrt((np.outer(np.diag(Phi), np.diag(Phi)) + Phi ** 2) / n)
    assert np.all(np.abs(emp - Phi) < 4 * se_cov)


# preference moments ---------------------------------------------------------

def test_identity_feedback_closed_form():
    mu = np.array([0.3, -0.1, 0.2])
    Phi = np.array([[2.0, 0.1, 0.0], [0.1, 1.0, 0.2], [0.0, 0.2, 1.5]])
    p0 = np.array([1.0, -2.0, 0.5])
    m = preference_moments(np.eye(3), mu, Phi, p0, 15.87)
    assert np.allclose(m.xi, p0 + 15.87 * mu)
    assert np.allclose(m.omega, 15.87 * Phi)


def test_single_step():
    S = feedback_matrix(np.array([[0, 1.0], [1.0, 0]]), 0.3, 0.4)
    mu, Phi, p0 = np.array([0.5, -0.5]), np.array([[1.0, 0.2], [0.2, 2.0]]), np.array([0.7, -0.1])
    m = preference_moments(S, mu, Phi, p0, 1)
    assert np.allclose(m.xi, S @ p0 + mu)
    assert np.allclose(m.omega, Phi)


@given(st.integers(2, 4), st.integers(1, 4), st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_moments_match_step_by_step_recursion(J, K, tau, seed):
    rng = np.random.default_rng(seed)
    task = ChoiceTask(rng.uniform(0, 5, (J, K)))
    p = params(J, K, beta=rng.uniform(0.2, 2, K), gamma=rng.normal(size=K),
               phi1=rng.uniform(0.01, 2), phi2=rng.uniform(0.01, 1 / J), sigma_eps=rng.uniform(0.3, 3),
               tau=tau, p0=rng.normal(size=J))
    S = feedback_matrix(distance_matrix(task, p.beta), p.phi1, p.phi2)
    mu, Phi = valence_moments(task, p)
    xi, om = brute_moments(S, mu, Phi, p.p0, tau)
    m = task_moments(task, p)
    scale = 1 + np.abs(xi).max()
    assert np.allclose(m.xi, xi, atol=1e-9 * scale, rtol=1e-9)
    assert np.allclose(m.omega, om, atol=1e-9 * np.abs(om).max(), rtol=1e-9)
    assert np.allclose(m.omega, m.omega.T)
    assert np.linalg.eigvalsh(m.omega).min() >= -1e-9 * np.trace(m.omega)


def test_phi2_zero_collapses_to_identity_formula():
    task = ChoiceTask([[1.0, 2.0], [3.0, 0.5]])
    p = params(2, 2, phi2=0.0, tau=7.5, p0=np.array([0.2, 0.0]))
    mu, Phi = valence_moments(task, p)
    m = task_moments(task, p)
    assert np.array_equal(m.xi, p.p0 + 7.5 * mu)
    assert np.array_equal(m.omega, 7.5 * Phi)


def test_real_tau_lies_between_neighbouring_integers():
    task = ChoiceTask([[1.0, 2.0, 0.5], [3.0, 0.5, 1.0], [2.0, 2.0, 2.0]])
    pr = [task_probabilities(task, params(3, 3, tau=t, sigma_eps=2.0))[0] for t in (15, 15.87, 16)]
    assert min(pr[0], pr[2]) <= pr[1] <= max(pr[0], pr[2])


def test_duplicated_alternatives_are_ill_conditioned():
    task = ChoiceTask([[1.0, 2.0], [1.0, 2.0], [3.0, 0.0]])
    with pytest.raises(IllConditionedFeedbackError, match="phi1"):
        task_moments(task, params(3, 2, phi2=0.3))


# choice probabilities -------------------------------------------------------

def test_binary_examples():
    assert choice_probability(PreferenceMoments(np.zeros(2), np.eye(2)), 0) == pytest.approx(0.5, abs=1e-15)
    p = choice_probability(PreferenceMoments(np.array([1.0, 0.0]), np.eye(2)), 0)
    assert p == pytest.approx(ndtr(1 / np.sqrt(2)), abs=1e-15)
    assert p == pytest.approx(0.760250, abs=1e-6)


def test_trinary_matches_argmax_frequency():
    m = PreferenceMoments(np.array([1.0, 0.0, 0.0]), np.eye(3))
    probs = np.array([choice_probability(m, j) for j in range(3)])
    rng = np.random.default_rng(17)
    n = 10_000_000
    counts = np.zeros(3)
    for _ in range(10):
        counts += np.bincount(np.argmax(rng.normal(size=(n // 10, 3)) + m.xi, axis=1), minlength=3)
    freq = counts / n
    se = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(freq - probs) < 3 * se)


def test_four_alternatives_use_qmc_and_close():
    rng = np.random.default_rng(2)
    B = rng.normal(size=(4, 4))
    m = PreferenceMoments(rng.normal(size=4), B @ B.T + np.eye(4))
    probs = [choice_probability(m, j, tol=1e-7) for j in range(4)]
    assert sum(probs) == pytest.approx(1.0, abs=1e-6)


@st.composite
def moments(draw):
    J = draw(st.integers(2, 3))
    xi = draw(arrays(float, J, elements=st.floats(-5, 5)))
    B = draw(arrays(float, (J, J), elements=st.floats(-2, 2)))
    return xi, B @ B.T + 0.1 * np.eye(J)


@given(moments(), st.floats(-100, 100))
def test_probability_closure_and_translation(m, c):
    xi, om = m
    P = choice_probabilities_batch(xi[None], om[None])[0]
    assert np.all(P >= 0) and np.all(P <= 1)
    assert abs(P.sum() - 1) < 1e-6
    Q = choice_probabilities_batch((xi + c)[None], om[None])[0]
    assert np.allclose(P, Q, atol=1e-9, rtol=0)


def test_degenerate_difference_covariance_raises():
    om = np.ones((3, 3))
    with pytest.raises(DegenerateCovarianceError) as exc:
        choice_probability(PreferenceMoments(np.zeros(3), om), 0)
    assert exc.value.smallest_eigenvalue is not None


def test_invalid_alternative_index():
    with pytest.raises(InvalidTaskError):
        choice_probability(PreferenceMoments(np.zeros(2), np.eye(2)), 2)
