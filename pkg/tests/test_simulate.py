import numpy as np
import pytest

from physiodft.dft import ChoiceTask, DftParams, contrast_matrix, distance_matrix, feedback_matrix, task_moments, task_probabilities
from physiodft.models import get_variant
from physiodft.simulate import (
    GapDesign,
    StaticDesign,
    generate_dataset,
    random_case,
    simulate_choice_shares,
    simulate_final_preferences,
    simulate_trajectory,
    simulation_steps,
    validate_oracle,
)

TASK = ChoiceTask([[4.0, 1.0, 2.0], [1.0, 4.0, 3.0], [2.5, 2.5, 1.0]])


def params(**kw):
    base = dict(beta=[1.0, 0.8, 0.5], gamma=[0.3, 0.0, -0.4], phi1=0.2, phi2=0.1, sigma_eps=2.0, tau=12, p0=[0.5, 0.0, -0.5])
    base.update(kw)
    return DftParams(**base)


def test_trajectory_shape_and_start():
    tr = simulate_trajectory(TASK, params(tau=12), seed=3)
    assert tr.path.shape == (13, 3) and tr.attended.shape == (12,)
    assert np.array_equal(tr.path[0], [0.5, 0.0, -0.5])
    assert np.all((tr.attended >= 0) & (tr.attended < 3))


def test_trajectory_deterministic_and_indexed():
    a = simulate_trajectory(TASK, params(), seed=3)
    b = simulate_trajectory(TASK, params(), seed=3)
    c = simulate_trajectory(TASK, params(), seed=3, index=1)
    assert np.array_equal(a.path, b.path) and np.array_equal(a.attended, b.attended)
    assert not np.array_equal(a.path, c.path)


def test_noiseless_single_attribute_path_is_deterministic():
    task = ChoiceTask([[1.0], [3.0], [2.0]])
    p = DftParams(beta=[1.0], gamma=[0.0], phi1=0.5, phi2=0.2, sigma_eps=1e-300, tau=6, p0=[0.0, 0.0, 0.0])
    S = feedback_matrix(distance_matrix(task, p.beta), p.phi1, p.phi2)
    drift = contrast_matrix(3) @ task.attributes[:, 0]
    expect = [np.zeros(3)]
    for _ in range(6):
        expect.append(S @ expect[-1] + drift)
    assert np.allclose(simulate_trajectory(task, p, seed=9).path, np.array(expect), rtol=1e-14, atol=1e-14)


def test_rounding_of_real_tau():
    assert simulation_steps(15.87) == 16 and simulation_steps(15.2) == 15 and simulation_steps(1.0) == 1
    assert simulate_trajectory(TASK, params(tau=15.87), 0).path.shape[0] == 17


def test_final_preference_moments():
    p = params(sigma_eps=3.0)
    n = 1_000_000
    P = simulate_final_preferences(TASK, p, n, seed=21)
    m = task_moments(TASK, p)
    se = np.sqrt(np.diag(m.omega) / n)
    assert np.all(np.abs(P.mean(0) - m.xi) < 3 * se)
    d = P - P.mean(0)
    for i in range(3):
        for j in range(i, 3):
            prod = d[:, i] * d[:, j]
            assert abs(prod.mean() - m.omega[i, j]) < 3 * prod.std() / np.sqrt(n)


def test_symmetric_task_shares():
    task = ChoiceTask([[2.0, 3.0]] * 3)
    p = DftParams(beta=[1.0, 1.0], gamma=[0.0, 0.0], phi1=0.1, phi2=0.0, sigma_eps=1.0, tau=5, p0=np.zeros(3))
    n = 300_000
    s = simulate_choice_shares(task, p, n, seed=4)
    assert s.sum() == 1.0
    assert np.all(np.abs(s - 1 / 3) < 3 * np.sqrt(2 / (9 * n)))
    with pytest.raises(ValueError):
        simulate_choice_shares(task, p, 0)


def test_shares_match_analytic_probabilities():
    p = params(sigma_eps=12.0)
    n = 400_000
    s = simulate_choice_shares(TASK, p, n, seed=8)
    pr = task_probabilities(TASK, p)
    assert np.all(np.abs(s - pr) < 3 * np.sqrt(pr * (1 - pr) / n))


def test_random_cases_respect_ranges():
    for i in range(40):
        task, p = random_case(0, i)
        assert task.n_alternatives in (2, 3) and 1 <= task.n_attributes <= 4
        assert p.tau == int(p.tau) and 1 <= p.tau <= 50
    a, pa = random_case(5, 3)
    b, pb = random_case(5, 3)
    assert np.array_equal(a.attributes, b.attributes) and pa.sigma_eps == pb.sigma_eps


def test_validate_small_run_is_deterministic():
    r1 = validate_oracle(n_cases=4, draws=100, seed=2)
    r2 = validate_oracle(n_cases=4, draws=100, seed=2, workers=2)
    for a, b in zip(r1, r2):
        assert np.array_equal(a.simulated, b.simulated) and np.array_equal(a.analytic, b.analytic)
        assert a.z.shape == (a.n_alternatives,)


def test_empty_and_repeatable_datasets():
    v = get_variant("static:MNL-B")
    theta = {n: 0.3 for n in v.space.names}
    empty, truth = generate_dataset(StaticDesign(), v, theta, 0, 1)
    assert len(empty) == 0 and truth["N"] == 0
    a, _ = generate_dataset(StaticDesign(), v, theta, 50, 1)
    b, _ = generate_dataset(StaticDesign(), v, theta, 50, 1)
    assert np.array_equal(a.chosen, b.chosen) and np.array_equal(a.attributes, b.attributes)
    assert all(len(np.unique(m, axis=0)) == 3 for m in a.attributes)


def test_gap_dataset_layout():
    v = get_variant("gap:MNL-B")
    data, truth = generate_dataset(GapDesign(), v, {n: 0.1 for n in v.space.names}, 30, 2)
    assert set(np.unique(data.feature("gap_index"))) == {1, 2, 3, 4, 5}
    assert np.array_equal(data.feature("x_scen")[:10], [0] * 5 + [1] * 5)
    assert truth["variant"] == "gap:MNL-B"


def test_choice_frequencies_converge():
    v = get_variant("static:MNL-B")
    theta = {"beta_kitchen": 0.3, "beta_condition": 0.7, "beta_size": 0.45, "beta_transport": 0.4}
    data, _ = generate_dataset(StaticDesign(), v, theta, 100_000, 6)
    P = v.probabilities(data, theta)
    for j in range(3):
        hit = (data.chosen == j).astype(float)
        se = np.sqrt(np.sum(P[:, j] * (1 - P[:, j]))) / len(data)
        assert abs(hit.mean() - P[:, j].mean()) < 3 * se
