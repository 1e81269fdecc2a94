"""Decision field theory: preference moments and analytic choice probabilities.

Per-task functions take a :class:`ChoiceTask` and :class:`DftParams`. The
``*_batch`` variants operate on stacks of tasks with a leading observation
axis and are what the likelihood code uses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, softmax

from .errors import (
    DegenerateCovarianceError,
    IllConditionedFeedbackError,
    InvalidTaskError,
    ParameterDomainError,
)
from .orthant import bvn_cdf, orthant_probability

IDENTITY_TOL = 1e-12
SINGULAR_RTOL = 1e-12
PHI2_SLACK = 1e-12


@dataclass(frozen=True)
class ChoiceTask:
    """One observation: a J x K attribute matrix and the chosen alternative."""

    attributes: np.ndarray
    chosen: int = 0
    task_id: str = ""
    participant_id: str = ""

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.attributes, dtype=float))
        if M.ndim != 2 or M.shape[0] < 2 or M.shape[1] < 1:
            raise InvalidTaskError(f"attribute matrix must be J x K with J >= 2, K >= 1; got {M.shape}")
        if not np.all(np.isfinite(M)):
            raise InvalidTaskError(f"task {self.task_id!r}: attribute matrix has non-finite entries")
        if not 0 <= int(self.chosen) < M.shape[0]:
            raise InvalidTaskError(f"task {self.task_id!r}: chosen index {self.chosen} outside [0, {M.shape[0]})")
        object.__setattr__(self, "attributes", M)
        object.__setattr__(self, "chosen", int(self.chosen))

    @property
    def n_alternatives(self) -> int:
        return self.attributes.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.attributes.shape[1]


@dataclass(frozen=True)
class DftParams:
    """Fully resolved process parameters for one task.

    ``beta`` scales attributes, ``gamma`` holds attention-weight logits,
    ``p0`` is the initial preference state (its length fixes J).
    """

    beta: np.ndarray
    gamma: np.ndarray
    phi1: float
    phi2: float
    sigma_eps: float
    tau: float
    p0: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        gamma = np.asarray(self.gamma, dtype=float).ravel()
        p0 = np.asarray(self.p0, dtype=float).ravel()
        if beta.shape != gamma.shape:
            raise ParameterDomainError("beta and gamma must have one entry per attribute")
        J = p0.size
        if J < 2:
            raise ParameterDomainError("p0 must have one entry per alternative (J >= 2)")
        if not (np.isfinite(self.phi1) and self.phi1 >= 0):
            raise ParameterDomainError(f"phi1 must be >= 0, got {self.phi1}")
        if not 0 <= self.phi2 <= 1.0 / J + PHI2_SLACK:
            raise ParameterDomainError(f"phi2 must lie in [0, 1/J] = [0, {1.0 / J:.6g}], got {self.phi2}")
        if not (np.isfinite(self.sigma_eps) and self.sigma_eps > 0):
            raise ParameterDomainError(f"sigma_eps must be > 0, got {self.sigma_eps}")
        if not (np.isfinite(self.tau) and self.tau >= 1):
            raise ParameterDomainError(f"tau must be >= 1, got {self.tau}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "phi1", float(self.phi1))
        object.__setattr__(self, "phi2", float(self.phi2))
        object.__setattr__(self, "sigma_eps", float(self.sigma_eps))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.gamma)


@dataclass(frozen=True)
class PreferenceMoments:
    xi: np.ndarray
    omega: np.ndarray = field(repr=False)


def contrast_matrix(J: int) -> np.ndarray:
    """Diagonal 1, off-diagonal -1/(J-1); rows sum to zero."""
    if J < 2:
        raise InvalidTaskError(f"contrast matrix needs J >= 2, got {J}")
    return (1.0 + 1.0 / (J - 1)) * np.eye(J) - np.full((J, J), 1.0 / (J - 1))


def distance_matrix(task: ChoiceTask, beta) -> np.ndarray:
    """Euclidean distances between beta-scaled attribute rows."""
    beta = np.asarray(beta, dtype=float)
    return distance_matrix_batch(task.attributes[None], beta[None])[0]


def distance_matrix_batch(M, beta):
    X = M * beta[:, None, :]
    diff = X[:, :, None, :] - X[:, None, :, :]
    return np.sqrt(np.einsum("nijk,nijk->nij", diff, diff))


def feedback_matrix(D, phi1, phi2):
    """S = I - phi2 * exp(-phi1 * D**2), elementwise; broadcasts over a leading axis."""
    D = np.asarray(D, dtype=float)
    J = D.shape[-1]
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    if np.any(phi1 < 0):
        raise ParameterDomainError(f"phi1 must be >= 0, got {phi1}")
    if np.any(phi2 < 0) or np.any(phi2 > 1.0 / J + PHI2_SLACK):
        raise ParameterDomainError(
            f"phi2 must lie in [0, 1/J] = [0, {1.0 / J:.6g}]; larger values make (I - S) non-invertible"
        )
    p1 = phi1[..., None, None] if phi1.ndim else phi1
    p2 = phi2[..., None, None] if phi2.ndim else phi2
    return np.eye(J) - p2 * np.exp(-p1 * D * D)


def valence_moments(task: ChoiceTask, params: DftParams):
    """Mean and covariance of the per-step valence vector."""
    mu, Phi = valence_moments_batch(
        task.attributes[None], params.beta[None], params.weights[None], np.array([params.sigma_eps])
    )
    return mu[0], Phi[0]


def valence_moments_batch(M, beta, weights, sigma_eps):
    N, J, K = M.shape
    C = contrast_matrix(J)
    A = np.einsum("ij,njk->nik", C, M) * beta[:, None, :]
    mu = np.einsum("njk,nk->nj", A, weights)
    attn_cov = weights[:, :, None] * np.eye(K) - weights[:, :, None] * weights[:, None, :]
    Phi = A @ attn_cov @ np.swapaxes(A, 1, 2)
    Phi = 0.5 * (Phi + np.swapaxes(Phi, 1, 2))
    Phi = Phi + (np.asarray(sigma_eps, dtype=float) ** 2)[:, None, None] * np.eye(J)
    return mu, Phi


def _geometric(d, tau):
    """sum_{r<tau} (1-d)**r extended to real tau; equals tau at d = 0."""
    d = np.clip(d, 0.0, 1.0)
    tau = np.broadcast_to(tau, d.shape)
    out = np.array(tau, dtype=float, copy=True)
    nz = d > 0
    with np.errstate(divide="ignore"):
        out[nz] = -np.expm1(tau[nz] * np.log1p(-d[nz])) / d[nz]
    return out


def preference_moments(S, mu, Phi, p0, tau) -> PreferenceMoments:
    """Mean and covariance of preferences after ``tau`` updating steps."""
    xi, omega = preference_moments_batch(
        np.asarray(S, float)[None], np.asarray(mu, float)[None], np.asarray(Phi, float)[None],
        np.asarray(p0, float)[None], np.array([tau], dtype=float),
    )
    return PreferenceMoments(xi[0], omega[0])


def preference_moments_batch(S, mu, Phi, p0, tau, phi=None):
    """Batched preference moments.

    ``phi`` optionally carries (phi1, phi2) arrays so the ill-conditioning
    error can name the offending values.
    """
    N, J, _ = S.shape
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (N,))
    if np.any(tau < 1):
        raise ParameterDomainError(f"tau must be >= 1, got min {tau.min()}")
    xi = np.empty((N, J))
    omega = np.empty((N, J, J))
    A = np.eye(J) - S
    ident = np.max(np.abs(A), axis=(1, 2)) < IDENTITY_TOL
    if np.any(ident):
        xi[ident] = p0[ident] + tau[ident, None] * mu[ident]
        omega[ident] = tau[ident, None, None] * Phi[ident]
    rest = ~ident
    if np.any(rest):
        Ar = A[rest]
        d, Q = np.linalg.eigh(0.5 * (Ar + np.swapaxes(Ar, 1, 2)))
        dmax = np.max(np.abs(d), axis=1)
        bad = d[:, 0] < SINGULAR_RTOL * dmax
        if np.any(bad):
            i = int(np.flatnonzero(rest)[np.argmax(bad)])
            detail = ""
            if phi is not None:
                detail = f" (phi1={np.broadcast_to(phi[0], (N,))[i]:.6g}, phi2={np.broadcast_to(phi[1], (N,))[i]:.6g})"
            raise IllConditionedFeedbackError(
                f"(I - S) is numerically singular for observation {i}{detail}; "
                "phi1 too small or duplicated alternatives with phi2 > 0"
            )
        d = np.clip(d, 0.0, 1.0)
        tr = tau[rest]
        g1 = _geometric(d, tr[:, None])
        with np.errstate(divide="ignore"):
            lam_tau = np.exp(tr[:, None] * np.log1p(-d))
        Qt = np.swapaxes(Q, 1, 2)
        xi[rest] = np.einsum("nij,nj->ni", Q, g1 * np.einsum("nij,nj->ni", Qt, mu[rest])) + np.einsum(
            "nij,nj->ni", Q, lam_tau * np.einsum("nij,nj->ni", Qt, p0[rest])
        )
        dd = d[:, :, None] + d[:, None, :] - d[:, :, None] * d[:, None, :]
        G = _geometric(dd, tr[:, None, None])
        om = Q @ (G * (Qt @ Phi[rest] @ Q)) @ Qt
        omega[rest] = 0.5 * (om + np.swapaxes(om, 1, 2))
    return xi, omega


def _difference_moments(xi, omega, j):
    """Mean and covariance of P[j] - P[i] over i != j."""
    J = xi.shape[-1]
    others = [i for i in range(J) if i != j]
    L = np.zeros((J - 1, J))
    L[:, j] = 1.0
    L[np.arange(J - 1), others] = -1.0
    return xi @ L.T, L @ omega @ L.T


def choice_probability(moments: PreferenceMoments, j: int, tol: float = 1e-6, seed: int = 0) -> float:
    """Probability that alternative ``j`` holds the maximal preference."""
    J = moments.xi.size
    if not 0 <= j < J:
        raise InvalidTaskError(f"alternative index {j} outside [0, {J})")
    gamma, lam = _difference_moments(moments.xi, moments.omega, j)
    if J <= 3:
        return float(choice_probabilities_batch(moments.xi[None], moments.omega[None])[0, j])
    return orthant_probability(gamma, lam, tol=tol, seed=seed)


def _degenerate(lmin, scale, where):
    raise DegenerateCovarianceError(
        f"difference covariance not positive definite for observation {where} "
        f"(smallest eigenvalue {lmin:.3e}); duplicated alternatives?",
        smallest_eigenvalue=float(lmin),
    )


def chosen_probability_batch(xi, omega, chosen, tol=1e-6, seed=0):
    """Probability of the chosen alternative for every observation."""
    N, J = xi.shape
    chosen = np.asarray(chosen, dtype=int)
    if J == 2:
        other = 1 - chosen
        idx = np.arange(N)
        g = xi[idx, chosen] - xi[idx, other]
        lam = omega[idx, chosen, chosen] + omega[idx, other, other] - 2.0 * omega[idx, chosen, other]
        scale = np.trace(omega, axis1=1, axis2=2)
        bad = lam <= 1e-12 * scale
        if np.any(bad):
            i = int(np.argmax(bad))
            _degenerate(lam[i], scale[i], i)
        return ndtr(g / np.sqrt(lam))
    if J == 3:
        out = np.empty(N)
        for j in range(3):
            sel = chosen == j
            if np.any(sel):
                out[sel] = _trinary(xi[sel], omega[sel], j, np.flatnonzero(sel))
        return out
    out = np.empty(N)
    for n in range(N):
        g, lam = _difference_moments(xi[n], omega[n], int(chosen[n]))
        out[n] = orthant_probability(g, lam, tol=tol, seed=seed)
    return out


def _trinary(xi, omega, j, index):
    a, b = [i for i in range(3) if i != j]
    g1 = xi[:, j] - xi[:, a]
    g2 = xi[:, j] - xi[:, b]
    wjj = omega[:, j, j]
    l11 = wjj + omega[:, a, a] - 2.0 * omega[:, j, a]
    l22 = wjj + omega[:, b, b] - 2.0 * omega[:, j, b]
    l12 = wjj - omega[:, j, a] - omega[:, j, b] + omega[:, a, b]
    tr = l11 + l22
    lmin = tr / 2.0 - np.sqrt(((l11 - l22) / 2.0) ** 2 + l12**2)
    bad = lmin <= 1e-12 * tr
    if np.any(bad):
        i = int(np.argmax(bad))
        _degenerate(lmin[i], tr[i], int(index[i]))
    s1 = np.sqrt(l11)
    s2 = np.sqrt(l22)
    rho = np.clip(l12 / (s1 * s2), -1.0, 1.0)
    return bvn_cdf(g1 / s1, g2 / s2, rho)


def choice_probabilities_batch(xi, omega, tol=1e-6, seed=0):
    """(N, J) matrix of choice probabilities for every alternative."""
    N, J = xi.shape
    return np.column_stack(
        [chosen_probability_batch(xi, omega, np.full(N, j), tol=tol, seed=seed) for j in range(J)]
    )


def task_moments(task: ChoiceTask, params: DftParams) -> PreferenceMoments:
    """Preference moments for one task: distances, feedback, valence, accumulation."""
    D = distance_matrix(task, params.beta)
    S = feedback_matrix(D, params.phi1, params.phi2)
    mu, Phi = valence_moments(task, params)
    xi, omega = preference_moments_batch(
        S[None], mu[None], Phi[None], params.p0[None], np.array([params.tau]),
        phi=(np.array([params.phi1]), np.array([params.phi2])),
    )
    return PreferenceMoments(xi[0], omega[0])


def task_probabilities(task: ChoiceTask, params: DftParams, tol: float = 1e-6, seed: int = 0) -> np.ndarray:
    m = task_moments(task, params)
    return np.array([choice_probability(m, j, tol=tol, seed=seed) for j in range(task.n_alternatives)])
