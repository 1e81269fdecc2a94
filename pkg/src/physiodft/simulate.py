"""Trajectory-level Monte Carlo of the DFT process and synthetic datasets.

Random streams are keyed by (seed, stream kind, index) through
``numpy.random.SeedSequence``, so results do not depend on how work is
split across workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .data import STATIC_ATTRIBUTES, Dataset
from .dft import ChoiceTask, DftParams, contrast_matrix, distance_matrix, feedback_matrix, task_probabilities

BLOCK = 1 << 16
_TRAJ, _DRAWS, _OBS, _PART = 0, 1, 2, 3


def _rng(seed, kind, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), kind, int(index)]))


def simulation_steps(tau) -> int:
    """Non-integer tau is rounded to the nearest integer step count."""
    return max(1, int(math.floor(float(tau) + 0.5)))


@dataclass
class Trajectory:
    path: np.ndarray
    attended: np.ndarray
    seed: int


def _step_inputs(task: ChoiceTask, params: DftParams):
    D = distance_matrix(task, params.beta)
    S = feedback_matrix(D, params.phi1, params.phi2)
    A = contrast_matrix(task.n_alternatives) @ task.attributes * params.beta
    return S, A, params.weights


def simulate_trajectory(task: ChoiceTask, params: DftParams, seed: int, index: int = 0) -> Trajectory:
    """One preference path of length tau + 1 starting at p0.

    ``index`` selects an independent stream under the same seed.
    """
    S, A, w = _step_inputs(task, params)
    rng = _rng(seed, _TRAJ, index)
    T = simulation_steps(params.tau)
    J, K = task.n_alternatives, task.n_attributes
    path = np.empty((T + 1, J))
    path[0] = params.p0
    attended = np.empty(T, dtype=int)
    for t in range(T):
        k = rng.choice(K, p=w)
        eps = rng.normal(0.0, params.sigma_eps, size=J)
        attended[t] = k
        path[t + 1] = S @ path[t] + A[:, k] + eps
    return Trajectory(path, attended, int(seed))


def _final_block(S, A, w, p0, sigma, T, n, rng):
    J, K = A.shape
    P = np.broadcast_to(p0, (n, J)).copy()
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    for _ in range(T):
        k = np.searchsorted(cdf, rng.random(n), side="right")
        P = P @ S.T + A[:, k].T + rng.normal(0.0, sigma, size=(n, J))
    return P


def simulate_final_preferences(task: ChoiceTask, params: DftParams, n_draws: int, seed: int) -> np.ndarray:
    """(n_draws, J) preference states after tau steps."""
    S, A, w = _step_inputs(task, params)
    T = simulation_steps(params.tau)
    out = []
    for b, start in enumerate(range(0, n_draws, BLOCK)):
        n = min(BLOCK, n_draws - start)
        out.append(_final_block(S, A, w, params.p0, params.sigma_eps, T, n, _rng(seed, _DRAWS, b)))
    return np.concatenate(out) if out else np.zeros((0, task.n_alternatives))


def _argmax_random_ties(P, rng):
    top = P.max(axis=1, keepdims=True)
    ties = P == top
    winner = ties.argmax(axis=1)
    multi = ties.sum(axis=1) > 1
    for i in np.flatnonzero(multi):
        winner[i] = rng.choice(np.flatnonzero(ties[i]))
    return winner


def simulate_choice_shares(task: ChoiceTask, params: DftParams, n_draws: int, seed: int = 0) -> np.ndarray:
    """Frequency with which each alternative holds the maximal preference at tau."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    S, A, w = _step_inputs(task, params)
    T = simulation_steps(params.tau)
    counts = np.zeros(task.n_alternatives)
    for b, start in enumerate(range(0, n_draws, BLOCK)):
        n = min(BLOCK, n_draws - start)
        rng = _rng(seed, _DRAWS, b)
        P = _final_block(S, A, w, params.p0, params.sigma_eps, T, n, rng)
        counts += np.bincount(_argmax_random_ties(P, rng), minlength=task.n_alternatives)
    return counts / n_draws


@dataclass(frozen=True)
class StaticDesign:
    """Random stated-preference tasks: integer star ratings and gaze shares."""

    n_alternatives: int = 3
    attribute_names: tuple = STATIC_ATTRIBUTES
    levels: tuple = (1, 2, 3, 4, 5)
    tasks_per_participant: int = 10
    share_concentration: float = 2.0
    application: str = field(default="static", init=False)


@dataclass(frozen=True)
class GapDesign:
    """Random gap-acceptance observations with stress and gaze covariates.

    Each participant faces ``gaps_per_scenario`` consecutive gaps in a
    relaxed (x_scen = 0) and a time-pressured (x_scen = 1) scenario.
    """

    gaps_per_scenario: int = 5
    gapsize: tuple = (2.0, 8.0)
    pos: tuple = (0.0, 2.0)
    speed: tuple = (0.0, 2.0)
    p_age: float = 0.3
    p_reg: float = 0.6
    scr_mean: float = 0.1
    gaze_left_sd: float = 0.1
    yaw_sd: tuple = (2.0, 10.0)
    pitch_sd: tuple = (1.0, 6.0)
    application: str = field(default="gap", init=False)

    @property
    def tasks_per_participant(self):
        return 2 * self.gaps_per_scenario


def _static_covariates(design: StaticDesign, N, seed):
    J, K = design.n_alternatives, len(design.attribute_names)
    M = np.empty((N, J, K))
    counts = np.empty((N, K))
    times = np.empty((N, K))
    u = np.empty(N)
    levels = np.asarray(design.levels, dtype=float)
    conc = np.full(K, design.share_concentration)
    for n in range(N):
        rng = _rng(seed, _OBS, n)
        while True:
            M[n] = rng.choice(levels, size=(J, K))
            # duplicated alternatives make (I - S) singular
            if len(np.unique(M[n], axis=0)) == J:
                break
        counts[n] = rng.dirichlet(conc)
        times[n] = rng.dirichlet(conc)
        u[n] = rng.random()
    tpp = design.tasks_per_participant
    pid = np.array([f"p{n // tpp:05d}" for n in range(N)], dtype=object)
    tid = np.array([f"t{n:06d}" for n in range(N)], dtype=object)
    data = Dataset(
        "static", pid, tid, np.zeros(N, dtype=int), J,
        features={"count_share": counts, "time_share": times},
        attributes=M, attribute_names=tuple(design.attribute_names),
    )
    return data, u


def _gap_covariates(design: GapDesign, N, seed):
    tpp = design.tasks_per_participant
    cols = {c: np.empty(N) for c in (
        "gap_index", "x_gapsize", "x_pos", "x_speed", "z_age", "z_reg", "x_scen",
        "z_hr", "z_scr", "y_gaze_left", "y_gaze_yaw_sd", "y_gaze_pitch_sd")}
    u = np.empty(N)
    people = {}
    for n in range(N):
        p, within = divmod(n, tpp)
        if p not in people:
            prng = _rng(seed, _PART, p)
            people[p] = (float(prng.random() < design.p_age), float(prng.random() < design.p_reg))
        rng = _rng(seed, _OBS, n)
        cols["gap_index"][n] = within % design.gaps_per_scenario + 1
        cols["x_scen"][n] = float(within >= design.gaps_per_scenario)
        cols["z_age"][n], cols["z_reg"][n] = people[p]
        cols["x_gapsize"][n] = rng.uniform(*design.gapsize)
        cols["x_pos"][n] = rng.uniform(*design.pos)
        cols["x_speed"][n] = rng.uniform(*design.speed)
        cols["z_hr"][n] = rng.normal()
        cols["z_scr"][n] = rng.exponential(design.scr_mean)
        cols["y_gaze_left"][n] = rng.normal(0.0, design.gaze_left_sd)
        cols["y_gaze_yaw_sd"][n] = rng.uniform(*design.yaw_sd)
        cols["y_gaze_pitch_sd"][n] = rng.uniform(*design.pitch_sd)
        u[n] = rng.random()
    pid = np.array([f"p{n // tpp:05d}" for n in range(N)], dtype=object)
    tid = np.array([f"g{n:06d}" for n in range(N)], dtype=object)
    return Dataset("gap", pid, tid, np.zeros(N, dtype=int), 2, features=cols), u


def generate_dataset(design, variant, theta: dict, N: int, seed: int):
    """Synthetic observations with choices drawn from the analytic probabilities.

    Returns ``(dataset, truth)`` where ``truth`` records the generating
    variant, parameters, design, seed and N.
    """
    if design.application == "static":
        data, u = _static_covariates(design, N, seed)
    else:
        data, u = _gap_covariates(design, N, seed)
    if N:
        P = variant.probabilities(data, theta)
        cdf = np.cumsum(P, axis=1)
        chosen = np.minimum((u[:, None] >= cdf).sum(axis=1), data.n_alternatives - 1)
        data = data.with_choices(chosen)
    truth = {
        "variant": variant.key,
        "theta": {k: float(v) for k, v in theta.items()},
        "design": {k: (list(v) if isinstance(v, tuple) else v) for k, v in design.__dict__.items()},
        "seed": int(seed),
        "N": int(N),
    }
    return data, truth


_CASE = 4


@dataclass
class OracleCase:
    """Analytic choice probabilities against simulated shares for one task."""

    index: int
    n_alternatives: int
    n_attributes: int
    tau: int
    analytic: np.ndarray
    simulated: np.ndarray
    draws: int

    @property
    def z(self) -> np.ndarray:
        """Discrepancies in binomial standard errors of the analytic probability."""
        p = self.analytic
        se = np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / self.draws)
        diff = np.abs(self.simulated - p)
        return np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 1e-12, np.inf, 0.0))

    @property
    def max_z(self) -> float:
        return float(np.max(self.z))

    @property
    def passed(self) -> bool:
        return self.max_z <= 3.0


def random_case(seed: int, index: int):
    """A random DFT task with J in {2, 3}, K <= 4 and integer tau <= 50.

    Attributes lie on a continuous 1 to 5 rating scale. Process noise is
    4 to 8 times the largest scaled attribute range, the regime of the
    fitted stated-preference models, where the per-step valence is close
    enough to Gaussian for the analytic probabilities to be exact at
    Monte-Carlo resolution. With attention switching dominating the noise
    the increments are a visibly non-normal mixture and the two disagree.
    """
    rng = _rng(seed, _CASE, index)
    J = int(rng.integers(2, 4))
    K = int(rng.integers(1, 5))
    task = ChoiceTask(rng.uniform(1.0, 5.0, size=(J, K)), task_id=f"case{index}")
    beta = rng.uniform(0.2, 1.5, size=K)
    sigma = float(rng.uniform(4.0, 8.0) * 4.0 * beta.max())
    params = DftParams(
        beta=beta,
        gamma=rng.normal(0.0, 1.0, size=K),
        phi1=float(np.exp(rng.uniform(np.log(0.01), 0.0))),
        phi2=float(rng.uniform(0.0, 1.0 / J)),
        sigma_eps=sigma,
        tau=int(rng.integers(1, 51)),
        p0=rng.normal(0.0, 0.5 * sigma, size=J),
    )
    return task, params


def validate_oracle(n_cases=50, draws=1_000_000, seed=0, tol=1e-6, workers=1):
    """Compare analytic probabilities with trajectory simulation on random tasks.

    Each case is seeded independently, so the report does not depend on
    ``workers``.
    """
    from concurrent.futures import ThreadPoolExecutor

    def run(i):
        task, params = random_case(seed, i)
        p = task_probabilities(task, params, tol=tol)
        sim = simulate_choice_shares(task, params, draws, seed=int(seed) * 100_003 + i)
        return OracleCase(i, task.n_alternatives, task.n_attributes, simulation_steps(params.tau), p, sim, int(draws))

    if workers <= 1:
        return [run(i) for i in range(n_cases)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run, range(n_cases)))
