"""Positive-orthant probabilities of multivariate normal vectors.

Dimension 1 and 2 use closed forms (the bivariate case follows Genz's
refinement of the Drezner-Wesolowsky quadrature, accurate to about 1e-15).
Higher dimensions use Genz's separation-of-variables transform integrated
with randomized quasi-Monte-Carlo.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from .errors import AccuracyError, DegenerateCovarianceError

# Gauss-Legendre half-rules (positive nodes) for 6, 12 and 20 points.
_GL6_W = np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904])
_GL6_X = np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970])
_GL12_W = np.array([
    0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
    0.2031674267230659, 0.2334925365383547, 0.2491470458134029,
])
_GL12_X = np.array([
    0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
    0.5873179542866171, 0.3678314989981802, 0.1252334085114692,
])
_GL20_W = np.array([
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
    0.1527533871307259,
])
_GL20_X = np.array([
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
    0.07652652113349733,
])


def _full_rule(w, x):
    # nodes mapped from [-1, 1] to [0, 2], both halves
    return np.concatenate([w, w]), np.concatenate([1.0 - x, 1.0 + x])


_RULES = [_full_rule(_GL6_W, _GL6_X), _full_rule(_GL12_W, _GL12_X), _full_rule(_GL20_W, _GL20_X)]


def _bvnu_moderate(h, k, r, w, x):
    # |r| < 0.925
    hk = h * k
    hs = (h * h + k * k) / 2.0
    asr = np.arcsin(r) / 2.0
    sn = np.sin(asr[:, None] * x[None, :])
    terms = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn))
    bvn = terms @ w
    return bvn * asr / (2.0 * np.pi) + ndtr(-h) * ndtr(-k)


def _bvnu_strong(h, k, r, w, x):
    # 0.925 <= |r| <= 1
    tp = 2.0 * np.pi
    k = np.where(r < 0, -k, k)
    hk = h * k
    bvn = np.zeros_like(h)
    inner = np.abs(r) < 1.0
    if np.any(inner):
        hi, ki, hki, ri = h[inner], k[inner], hk[inner], r[inner]
        a_s = (1.0 - ri) * (1.0 + ri)
        a = np.sqrt(a_s)
        bs = (hi - ki) ** 2
        asr = -(bs / a_s + hki) / 2.0
        c = (4.0 - hki) / 8.0
        d = (12.0 - hki) / 80.0
        with np.errstate(over="ignore", under="ignore"):
            b0 = np.where(
                asr > -100.0,
                a * np.exp(asr) * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s),
                0.0,
            )
            b = np.sqrt(bs)
            sp = np.sqrt(tp) * ndtr(-b / a)
            b0 = np.where(
                hki > -100.0,
                b0 - np.exp(-hki / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0),
                b0,
            )
            a = a / 2.0
            xs = (a[:, None] * x[None, :]) ** 2
            asr2 = -(bs[:, None] / xs + hki[:, None]) / 2.0
            keep = asr2 > -100.0
            xs_k = np.where(keep, xs, 0.0)
            sp2 = 1.0 + c[:, None] * xs_k * (1.0 + 5.0 * d[:, None] * xs_k)
            rs = np.sqrt(1.0 - xs_k)
            ep = np.exp(-(hki[:, None] / 2.0) * xs_k / (1.0 + rs) ** 2) / rs
            contrib = np.where(keep, np.exp(np.where(keep, asr2, 0.0)) * (sp2 - ep), 0.0)
        bvn[inner] = (a * (contrib @ w) - b0) / tp
    pos = r > 0
    out = np.empty_like(h)
    out[pos] = bvn[pos] + ndtr(-np.maximum(h[pos], k[pos]))
    neg = ~pos
    hn, kn, bn = h[neg], k[neg], bvn[neg]
    band = np.where(hn < 0, ndtr(kn) - ndtr(hn), ndtr(-hn) - ndtr(-kn))
    out[neg] = np.where(hn >= kn, -bn, band - bn)
    return out


def bvn_upper(h, k, r):
    """Upper bivariate normal probability P(X > h, Y > k).

    X and Y are standard normal with correlation ``r``. Arguments broadcast;
    infinite limits are supported.
    """
    h, k, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (h, k, r)))
    shape = h.shape
    h, k, r = h.ravel().copy(), k.ravel().copy(), r.ravel().copy()
    out = np.empty_like(h)

    done = np.zeros(h.shape, dtype=bool)
    inf_up = (h == np.inf) | (k == np.inf)
    out[inf_up] = 0.0
    done |= inf_up
    both = ~done & (h == -np.inf) & (k == -np.inf)
    out[both] = 1.0
    done |= both
    h_inf = ~done & (h == -np.inf)
    out[h_inf] = ndtr(-k[h_inf])
    done |= h_inf
    k_inf = ~done & (k == -np.inf)
    out[k_inf] = ndtr(-h[k_inf])
    done |= k_inf
    zero = ~done & (r == 0)
    out[zero] = ndtr(-h[zero]) * ndtr(-k[zero])
    done |= zero

    ar = np.abs(r)
    for lo, hi, (w, x) in zip((0.0, 0.3, 0.75), (0.3, 0.75, np.inf), _RULES):
        band = ~done & (ar >= lo) & (ar < hi)
        moderate = band & (ar < 0.925)
        if np.any(moderate):
            out[moderate] = _bvnu_moderate(h[moderate], k[moderate], r[moderate], w, x)
        strong = band & (ar >= 0.925)
        if np.any(strong):
            out[strong] = _bvnu_strong(h[strong], k[strong], r[strong], w, x)
    return np.clip(out, 0.0, 1.0).reshape(shape)


def bvn_cdf(h, k, r):
    """Lower bivariate normal probability P(X < h, Y < k)."""
    return bvn_upper(-np.asarray(h, dtype=float), -np.asarray(k, dtype=float), r)


def _check_covariance(cov):
    eig = np.linalg.eigvalsh(cov)
    scale = max(np.trace(cov), np.finfo(float).tiny)
    if eig[0] <= 1e-12 * scale:
        raise DegenerateCovarianceError(
            f"covariance not positive definite (smallest eigenvalue {eig[0]:.3e})",
            smallest_eigenvalue=float(eig[0]),
        )


def qmc_orthant(mean, cov, tol=1e-6, seed=0, n_shifts=10, min_points=1024, max_points=2**22):
    """P(X > 0) for X ~ N(mean, cov) by randomized quasi-Monte-Carlo.

    Returns ``(probability, error_estimate)`` where the error estimate is three
    standard errors across independently scrambled Sobol sequences. Points are
    doubled until the estimate drops below ``tol``; past ``max_points`` an
    AccuracyError carries the achieved error.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    m = mean.size
    _check_covariance(cov)
    # P(X > 0) = P(Y < mean) with Y ~ N(0, cov); put the tightest limits first
    sd = np.sqrt(np.diag(cov))
    order = np.argsort(mean / sd)
    b = mean[order]
    L = np.linalg.cholesky(cov[np.ix_(order, order)])

    def integrand(u):
        n = u.shape[0]
        y = np.zeros((n, m))
        e = np.full(n, ndtr(b[0] / L[0, 0]))
        f = e.copy()
        for i in range(1, m):
            # keep the inverse CDF finite at the ends
            y[:, i - 1] = ndtri(np.clip(u[:, i - 1] * e, 1e-300, 1.0 - 1e-16))
            e = ndtr((b[i] - y[:, :i] @ L[i, :i]) / L[i, i])
            f = f * e
        return f

    seeds = np.random.SeedSequence(seed).spawn(n_shifts)
    engines = [qmc.Sobol(d=max(m - 1, 1), scramble=True, seed=np.random.default_rng(s)) for s in seeds]
    sums = np.zeros(n_shifts)
    n = 0
    batch = min_points
    while True:
        for j, eng in enumerate(engines):
            sums[j] += integrand(eng.random(batch)).sum()
        n += batch
        est = sums / n
        p = float(est.mean())
        err = float(3.0 * est.std(ddof=1) / np.sqrt(n_shifts))
        if err < tol:
            return min(max(p, 0.0), 1.0), err
        if n >= max_points:
            raise AccuracyError(
                f"orthant quadrature did not reach tolerance {tol:g} (achieved {err:.3e})",
                error_estimate=err,
            )
        batch = n


def orthant_probability(mean, cov, tol=1e-6, seed=0):
    """P(X > 0 componentwise) for X ~ N(mean, cov), any dimension."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    m = mean.size
    if cov.shape != (m, m):
        raise ValueError(f"covariance shape {cov.shape} does not match mean of size {m}")
    _check_covariance(cov)
    if m == 1:
        return float(ndtr(mean[0] / np.sqrt(cov[0, 0])))
    if m == 2:
        s1, s2 = np.sqrt(cov[0, 0]), np.sqrt(cov[1, 1])
        rho = cov[0, 1] / (s1 * s2)
        return float(bvn_cdf(mean[0] / s1, mean[1] / s2, rho))
    return qmc_orthant(mean, cov, tol=tol, seed=seed)[0]
