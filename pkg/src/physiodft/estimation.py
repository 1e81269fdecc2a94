"""Maximum-likelihood estimation with participant-clustered robust inference."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import BFGS, minimize
from scipy.stats import chi2, norm

from .errors import InferenceError, OrderingError, PhysioDftError, StartValueError
from .params import ParamSpace

log = logging.getLogger(__name__)

GTOL = 1e-5


def fit_stats(ll, ll0, k, n):
    """Adjusted rho-squared against the null model, and BIC."""
    adj_rho2 = 1.0 - (ll - k) / ll0
    bic = -2.0 * ll + k * np.log(n)
    return float(adj_rho2), float(bic)


def lr_test(ll_restricted, ll_full, df):
    """Upper-tail chi-square p-value of the likelihood-ratio statistic."""
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    stat = 2.0 * (ll_full - ll_restricted)
    if stat < -2e-9:
        raise OrderingError(f"full model LL {ll_full} is below restricted LL {ll_restricted}; swap the arguments?")
    return float(chi2.sf(max(stat, 0.0), df))


def null_log_likelihood(data):
    """Equal-shares model: ln(1/J) per observation."""
    return float(len(data) * np.log(1.0 / data.n_alternatives))


def _chunks(n, workers):
    bounds = np.linspace(0, n, max(1, min(workers, n)) + 1).astype(int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def log_likelihood_obs(data, variant, theta, workers=1, tol=1e-6):
    """Per-observation log-likelihood contributions and floored-probability count.

    With ``workers > 1`` observations are split into contiguous chunks and
    evaluated on a thread pool; results are concatenated in observation
    order so the reduction is independent of scheduling.
    """
    if workers <= 1 or len(data) < 2 * workers:
        return variant.log_likelihood_obs(data, theta, tol=tol)
    parts = _chunks(len(data), workers)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        results = list(ex.map(lambda ab: variant.log_likelihood_obs(data.subset(np.arange(*ab)), theta, tol=tol), parts))
    return np.concatenate([r[0] for r in results]), sum(r[1] for r in results)


def log_likelihood(data, variant, theta, workers=1, tol=1e-6):
    ll, floored = log_likelihood_obs(data, variant, theta, workers=workers, tol=tol)
    if floored:
        log.warning("%d probabilities floored at 1e-300", floored)
    return float(np.sum(ll))


def _steps(x, rel):
    return rel * np.maximum(1.0, np.abs(x))


def numeric_gradient(f, x, rel=1e-5):
    x = np.asarray(x, dtype=float)
    h = _steps(x, rel)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h[i])
    return g


def numeric_jacobian(f, x, rel=1e-5):
    """Central-difference Jacobian of a vector function, shape (len(f(x)), len(x))."""
    x = np.asarray(x, dtype=float)
    h = _steps(x, rel)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        cols.append((f(x + e) - f(x - e)) / (2.0 * h[i]))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def numeric_hessian(f, x, rel_outer=1e-4, rel_inner=1e-5):
    """Hessian as central differences of the central-difference gradient.

    Returned unsymmetrized so callers can check symmetry.
    """
    return numeric_jacobian(lambda z: numeric_gradient(f, z, rel_inner), x, rel_outer)


def sandwich(hessian, scores, clusters):
    """Cluster-robust covariance H^-1 B H^-1.

    ``hessian`` is the Hessian of the negative log-likelihood; ``scores``
    holds per-observation gradients (N, P); B sums outer products of the
    per-cluster score totals.
    """
    H = 0.5 * (hessian + hessian.T)
    evals, evecs = np.linalg.eigh(H)
    scale = max(np.max(np.abs(evals)), np.finfo(float).tiny) if evals.size else 1.0
    null = evals <= 1e-10 * scale
    if np.any(null):
        raise InferenceError(
            f"Hessian is singular or indefinite ({int(null.sum())} null direction(s); eigenvalues {evals[null]})",
            null_directions=evecs[:, null],
        )
    Hinv = evecs @ np.diag(1.0 / evals) @ evecs.T
    _, inv = np.unique(np.asarray(clusters), return_inverse=True)
    sums = np.zeros((inv.max() + 1 if inv.size else 0, scores.shape[1]))
    np.add.at(sums, inv, scores)
    B = sums.T @ sums
    V = Hinv @ B @ Hinv
    return 0.5 * (V + V.T)


@dataclass
class FitResult:
    variant: str
    names: tuple
    estimates: dict
    fixed: dict
    free_names: tuple
    x_hat: np.ndarray = field(repr=False)
    cov_internal: np.ndarray | None = field(repr=False)
    std_errors: dict
    t_ratios: dict
    loglik: float
    null_loglik: float
    n_params: int
    n_obs: int
    adj_rho2: float
    bic: float
    converged: bool
    convergence: str
    grad_max: float
    iterations: int
    n_floored: int = 0
    hessian_asymmetry: float = float("nan")
    warnings: list = field(default_factory=list)
    transforms: dict = field(default_factory=dict, repr=False)

    def confidence_interval(self, name, level=0.95):
        """Wald interval built on the estimation scale, mapped to natural values."""
        if name not in self.free_names:
            v = self.estimates[name]
            return v, v
        if self.cov_internal is None:
            return float("nan"), float("nan")
        i = self.free_names.index(name)
        z = norm.ppf(0.5 + level / 2.0)
        se = np.sqrt(max(self.cov_internal[i, i], 0.0))
        tr = self.transforms[name]
        lo, hi = tr.to_natural(self.x_hat[i] - z * se), tr.to_natural(self.x_hat[i] + z * se)
        return min(lo, hi), max(lo, hi)


def robust_covariance(data, variant, space: ParamSpace, x_hat, clusters=None, workers=1, tol=1e-6):
    """Clustered sandwich covariance on the estimation scale.

    Returns (covariance, hessian_of_negative_ll). Clusters default to
    participants.
    """
    if clusters is None:
        clusters = data.clusters()

    def negll(x):
        return -np.sum(log_likelihood_obs(data, variant, space.theta(x), workers=workers, tol=tol)[0])

    def llvec(x):
        return log_likelihood_obs(data, variant, space.theta(x), workers=workers, tol=tol)[0]

    H = numeric_hessian(negll, x_hat)
    scores = numeric_jacobian(llvec, x_hat)
    return sandwich(H, scores, clusters), H


def estimate(data, variant, space: ParamSpace | None = None, workers=1, gtol=GTOL, maxiter=500, tol=1e-6,
             clusters=None):
    """Maximize the log-likelihood of ``variant`` on ``data``.

    Trust-region quasi-Newton (BFGS Hessian updates) on central-difference
    gradients in the transformed space, followed
    by Newton refinement on the numeric Hessian. Convergence requires
    max |gradient| < gtol or a vanishing Newton step; otherwise the result
    is returned with ``converged=False``.
    """
    space = space or variant.space
    n = len(data)
    ll0 = null_log_likelihood(data)
    x0 = space.start()
    notes = []

    def llsum(x):
        try:
            ll, _ = log_likelihood_obs(data, variant, space.theta(x), workers=workers, tol=tol)
        except PhysioDftError:
            return -np.inf
        s = float(np.sum(ll))
        return s if np.isfinite(s) else -np.inf

    start_ll = llsum(x0)
    if not np.isfinite(start_ll):
        try:
            log_likelihood_obs(data, variant, space.theta(x0), workers=workers, tol=tol)
        except PhysioDftError as exc:
            raise StartValueError(f"log-likelihood not finite at start values: {exc}") from exc
        raise StartValueError("log-likelihood not finite at start values")

    transforms = {p.name: p.transform for p in space.free}
    if space.n_free == 0:
        ll, floored = log_likelihood_obs(data, variant, space.theta(), workers=workers, tol=tol)
        ll = float(np.sum(ll))
        adj, bic = fit_stats(ll, ll0, 0, n)
        theta = space.theta()
        return FitResult(
            variant=variant.key, names=space.names, estimates=theta, fixed={p.name: p.fixed for p in space},
            free_names=(), x_hat=np.zeros(0), cov_internal=np.zeros((0, 0)),
            std_errors={k: float("nan") for k in theta}, t_ratios={k: float("nan") for k in theta},
            loglik=ll, null_loglik=ll0, n_params=0, n_obs=n, adj_rho2=adj, bic=bic,
            converged=True, convergence="no free parameters", grad_max=0.0, iterations=0, n_floored=floored,
            transforms=transforms,
        )

    def f(x):
        v = llsum(x)
        return -v if np.isfinite(v) else np.inf

    def grad(x):
        return numeric_gradient(f, x)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        warnings.filterwarnings("ignore", message="delta_grad == 0.0")
        # trust region caps early steps; a line-search BFGS can leap onto the flat phi1 -> inf ridge
        res = minimize(f, x0, jac=grad, hess=BFGS(), method="trust-constr",
                       options={"gtol": gtol, "xtol": 1e-10, "maxiter": maxiter})
    x = res.x
    iterations = int(res.nit)
    g = grad(x)
    reason = ""
    # Newton refinement: FD gradients stall BFGS short of a tight gradient tolerance
    H = None
    for _ in range(20):
        if np.max(np.abs(g)) < gtol:
            reason = "gradient"
            break
        try:
            H = numeric_hessian(f, x)
            Hs = 0.5 * (H + H.T)
            step = np.linalg.solve(Hs, g)
        except (np.linalg.LinAlgError, PhysioDftError):
            break
        fx = f(x)
        t = 1.0
        while t > 1e-6:
            xn = x - t * step
            if f(xn) <= fx + 1e-12 * abs(fx):
                break
            t /= 2.0
        else:
            break
        if np.max(np.abs(t * step) / np.maximum(1.0, np.abs(x))) < 1e-10:
            x = xn
            reason = "step"
            break
        x = xn
        iterations += 1
        g = grad(x)
    if not reason and np.max(np.abs(g)) < gtol:
        reason = "gradient"
    g = grad(x)
    converged = bool(reason)
    if not converged:
        notes.append(f"not converged: max|gradient| = {np.max(np.abs(g)):.3e} ({res.message})")

    theta = space.theta(x)
    ll_vec, floored = log_likelihood_obs(data, variant, theta, workers=workers, tol=tol)
    ll = float(np.sum(ll_vec))
    if floored:
        notes.append(f"{floored} probabilities floored at 1e-300")
    k = space.n_free
    adj, bic = fit_stats(ll, ll0, k, n)

    cov = None
    asym = float("nan")
    se = {name: float("nan") for name in space.names}
    tr = {name: float("nan") for name in space.names}
    try:
        cov, H = robust_covariance(data, variant, space, x, clusters=clusters, workers=workers, tol=tol)
        asym = float(np.max(np.abs(H - H.T)) / max(np.max(np.abs(H)), np.finfo(float).tiny))
        jac = space.jacobian(x)
        for i, p in enumerate(space.free):
            s = abs(jac[i]) * np.sqrt(max(cov[i, i], 0.0))
            se[p.name] = float(s)
            tr[p.name] = float(theta[p.name] / s) if s > 0 else float("nan")
    except InferenceError as exc:
        notes.append(f"inference degraded: {exc}")
        warnings.warn(f"inference degraded: {exc}", RuntimeWarning, stacklevel=2)
    except PhysioDftError as exc:
        notes.append(f"inference degraded: {exc}")

    return FitResult(
        variant=variant.key, names=space.names, estimates=theta, fixed={p.name: p.fixed for p in space},
        free_names=space.free_names, x_hat=x, cov_internal=cov, std_errors=se, t_ratios=tr,
        loglik=ll, null_loglik=ll0, n_params=k, n_obs=n, adj_rho2=adj, bic=bic,
        converged=converged, convergence=reason or "failed", grad_max=float(np.max(np.abs(g))),
        iterations=iterations, n_floored=floored, hessian_asymmetry=asym, warnings=notes, transforms=transforms,
    )
