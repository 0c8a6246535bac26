"""Evaluation protocol and distribution-analysis tools.

Rank and linear correlations with the standard five-parameter logistic
remapping, goodness-of-fit of parametric families to discrete rating
histograms, and k-means clustering of rating distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from radapt.distmath import DEFAULT_SIGMA_FLOOR, RatingScale
from radapt.errors import FitError

CSV_HEADER = "dataset,domain,srocc,plcc,rmse,beta1,beta2,beta3,beta4,beta5,n"


@dataclass(frozen=True)
class MetricReport:
    srocc: float
    plcc: float
    rmse: float
    betas: tuple[float, float, float, float, float]
    n: int

    def __post_init__(self):
        if not (abs(self.srocc) <= 1.0 + 1e-12 and abs(self.plcc) <= 1.0 + 1e-12):
            raise ValueError("correlations must lie in [-1, 1]")
        if self.rmse < 0 or self.n < 3:
            raise ValueError("rmse must be >= 0 and n >= 3")

    def csv_row(self, dataset: str, domain: str) -> str:
        vals = [self.srocc, self.plcc, self.rmse, *self.betas]
        body = ",".join(f"{v:.9g}" for v in vals)
        return f"{dataset},{domain},{body},{self.n}"


def _as_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def srocc(pred, gt) -> float:
    """Spearman rank-order correlation with average-rank tie handling."""
    p = _as_vector(pred, "pred")
    g = _as_vector(gt, "gt")
    if p.shape != g.shape or p.size < 3:
        raise ValueError("srocc needs two equal-length vectors with n >= 3")
    if np.all(p == p[0]) or np.all(g == g[0]):
        raise FitError("rank correlation undefined for a constant input")
    rho = stats.spearmanr(p, g).statistic
    return float(rho)


def logistic_map(mu_hat, betas) -> np.ndarray | float:
    """Five-parameter logistic remapping of raw predicted scores.

    b1 * (1/2 - 1/(1 + exp(b2 (x - b3)))) + b4 x + b5, exponent clamped
    to +-500 so saturated fits cannot overflow.
    """
    b1, b2, b3, b4, b5 = (float(b) for b in betas)
    x = np.asarray(mu_hat, dtype=np.float64)
    z = np.clip(b2 * (x - b3), -500.0, 500.0)
    out = b1 * (0.5 - 1.0 / (1.0 + np.exp(z))) + b4 * x + b5
    return float(out) if out.ndim == 0 else out


IDENTITY_BETAS = (0.0, 1.0, 0.0, 1.0, 0.0)


def fit_logistic(pred, gt) -> tuple[float, float, float, float, float]:
    """Least-squares logistic fit via restarted simplex search.

    Three starts: the range/mean heuristic, the identity map, and a
    linear-regression-scaled start; the best final residual wins, so the
    fit never ends worse than the identity parameters.
    """
    p = _as_vector(pred, "pred")
    g = _as_vector(gt, "gt")
    if p.shape != g.shape or p.size < 10:
        raise ValueError("fit_logistic needs equal-length vectors with n >= 10")
    if np.all(p == p[0]) or np.all(g == g[0]):
        raise FitError("logistic fit undefined for a constant input")

    def sse(b):
        r = logistic_map(p, b) - g
        return float(r @ r)

    spread = float(np.max(g) - np.min(g))
    slope, intercept = np.polyfit(p, g, 1)
    sd = float(np.std(p))
    starts = [
        (spread, 1.0, float(np.mean(p)), 0.0, float(np.mean(g))),
        IDENTITY_BETAS,
        (spread, 4.0 / sd if sd > 0 else 1.0, float(np.mean(p)), float(slope), float(intercept)),
    ]
    best = None
    for b0 in starts:
        res = optimize.minimize(
            sse,
            np.array(b0, dtype=np.float64),
            method="Nelder-Mead",
            options={"maxiter": 2000, "xatol": 1e-10, "fatol": 1e-12},
        )
        if best is None or res.fun < best.fun:
            best = res
    return tuple(float(b) for b in best.x)


def plcc(pred, gt) -> tuple[float, tuple[float, float, float, float, float]]:
    """Pearson correlation after the fitted logistic remapping."""
    p = _as_vector(pred, "pred")
    g = _as_vector(gt, "gt")
    betas = fit_logistic(p, g)
    mapped = logistic_map(p, betas)
    if np.all(mapped == mapped[0]):
        raise FitError("logistic fit collapsed to a constant")
    r = stats.pearsonr(mapped, g).statistic
    return float(r), betas


def compute_metrics(pred, gt) -> MetricReport:
    """Full evaluation: SROCC, remapped PLCC, and remapped RMSE."""
    p = _as_vector(pred, "pred")
    g = _as_vector(gt, "gt")
    rho = srocc(p, g)
    r, betas = plcc(p, g)
    rmse = float(np.sqrt(np.mean((logistic_map(p, betas) - g) ** 2)))
    return MetricReport(rho, r, rmse, betas, p.size)


# ------------------------------------------------- rating-histogram analysis


@dataclass(frozen=True)
class RaterHistogram:
    """Counts of discrete ratings, category k counted at counts[k-1]."""

    counts: tuple[float, ...]

    def __post_init__(self):
        if len(self.counts) < 2 or any(c < 0 for c in self.counts):
            raise ValueError("histogram needs >= 2 nonnegative category counts")
        if self.n_raters <= 0:
            raise ValueError("histogram must contain at least one rating")

    @property
    def n_raters(self) -> float:
        return float(sum(self.counts))

    def freqs(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.float64) / self.n_raters


def _grid_family_mle(t_stats: np.ndarray, freqs: np.ndarray, eta0: np.ndarray, clamp):
    """Maximum likelihood for an exponential family restricted to a grid.

    t_stats is C x d (sufficient statistics per category). On a finite
    grid the log-likelihood is concave in the natural parameters, so
    damped Newton with the exact covariance Hessian converges fast:
    grad = E_freq[T] - E_p[T], hess = -Cov_p(T).
    """
    eta = clamp(np.asarray(eta0, dtype=np.float64))
    target = t_stats.T @ freqs

    def probs(e):
        logw = t_stats @ e
        w = np.exp(logw - np.max(logw))
        return w / np.sum(w)

    def loglik(e):
        p = probs(e)
        return float(np.sum(freqs * np.log(np.maximum(p, 1e-300))))

    ll = loglik(eta)
    for _ in range(100):
        p = probs(eta)
        mean_t = t_stats.T @ p
        grad = target - mean_t
        if np.max(np.abs(grad)) < 1e-10:
            return eta, p
        cov = t_stats.T @ (t_stats * p[:, None]) - np.outer(mean_t, mean_t)
        try:
            step = np.linalg.solve(cov, grad)
        except np.linalg.LinAlgError as exc:
            raise FitError(f"degenerate sufficient-statistic covariance: {exc}") from exc
        scale_f = 1.0
        for _ in range(30):
            cand = clamp(eta + scale_f * step)
            cand_ll = loglik(cand)
            if cand_ll >= ll - 1e-15:
                # clamping can pin a coordinate, leaving a permanent
                # gradient residual; a vanishing step is convergence too
                moved = np.max(np.abs(cand - eta))
                eta, ll = cand, cand_ll
                if moved < 1e-12 * (1.0 + np.max(np.abs(eta))):
                    return eta, probs(eta)
                break
            scale_f *= 0.5
        else:
            return eta, probs(eta)
    raise FitError("family fit did not converge in 100 iterations")


def _check_histogram(hist: RaterHistogram, family: str) -> np.ndarray:
    if hist.n_raters < 5:
        raise ValueError("goodness-of-fit needs at least 5 raters")
    f = hist.freqs()
    if np.count_nonzero(f) == 1 and family != "gaussian":
        raise FitError(f"single-category histogram cannot identify a {family} fit")
    return f


def gof_fit(hist: RaterHistogram, family: str) -> tuple[tuple[float, ...], float]:
    """Fit a parametric family to a rating histogram; return (params, rmse).

    The family's density is discretized at the rating categories and
    renormalized, and the fit maximizes the multinomial likelihood of the
    observed counts under those category probabilities (so a histogram
    that already equals a discretized member is recovered exactly).
    Gamma and Weibull live on the shifted support k - r1 + 1.
    """
    f = _check_histogram(hist, family)
    c = len(hist.counts)
    x = np.arange(1.0, c + 1.0)

    if family == "gaussian":
        if np.count_nonzero(f) == 1:
            mu = float(x[int(np.argmax(f))])
            sig = DEFAULT_SIGMA_FLOOR
            logw = -0.5 * ((x - mu) / sig) ** 2
            p = np.exp(logw - np.max(logw))
            p /= p.sum()
        else:
            t = np.column_stack([x, x**2])
            m0 = float(f @ x)
            v0 = max(float(f @ (x - m0) ** 2), 0.05)
            eta0 = np.array([m0 / v0, -0.5 / v0])

            def clamp(e):
                return np.array([e[0], min(e[1], -1e-8)])

            eta, p = _grid_family_mle(t, f, eta0, clamp)
            var = -0.5 / eta[1]
            mu, sig = float(eta[0] * var), float(np.sqrt(var))
        params = (mu, sig)
    elif family == "gamma":
        t = np.column_stack([np.log(x), x])
        m0 = float(f @ x)
        v0 = max(float(f @ (x - m0) ** 2), 0.05)
        a0 = max(m0 * m0 / v0, 0.1)
        b0 = max(v0 / m0, 1e-3)
        eta0 = np.array([a0 - 1.0, -1.0 / b0])

        def clamp(e):
            return np.array([max(e[0], -1.0 + 1e-8), min(e[1], -1e-8)])

        eta, p = _grid_family_mle(t, f, eta0, clamp)
        params = (float(eta[0] + 1.0), float(-1.0 / eta[1]))
    elif family == "weibull":
        logx = np.log(x)

        def profile(shape):
            # for fixed shape the weights w_k = x_k^(shape-1) exp(eta x_k^shape)
            # form a one-parameter exponential family in eta < 0
            xc = x**shape

            def clamp(e):
                return np.minimum(e, -1e-12)

            logw_fixed = (shape - 1.0) * logx

            def probs_with(e):
                logw = logw_fixed + xc * e[0]
                w = np.exp(logw - np.max(logw))
                return w / w.sum()

            eta = clamp(np.array([-1.0 / float(f @ xc)]))
            ll = float(np.sum(f * np.log(np.maximum(probs_with(eta), 1e-300))))
            for _ in range(100):
                p = probs_with(eta)
                mean_t = float(xc @ p)
                grad = float(f @ xc) - mean_t
                if abs(grad) < 1e-10:
                    break
                var_t = float(xc**2 @ p) - mean_t**2
                if var_t <= 0:
                    raise FitError("degenerate weibull profile curvature")
                step = grad / var_t
                scale_f = 1.0
                moved = None
                for _ in range(30):
                    cand = clamp(eta + scale_f * step)
                    cand_ll = float(np.sum(f * np.log(np.maximum(probs_with(cand), 1e-300))))
                    if cand_ll >= ll - 1e-15:
                        moved = abs(float(cand[0]) - float(eta[0]))
                        eta, ll = cand, cand_ll
                        break
                    scale_f *= 0.5
                if moved is None or moved < 1e-12 * (1.0 + abs(float(eta[0]))):
                    break
            else:
                raise FitError("weibull inner fit did not converge in 100 iterations")
            return ll, float(eta[0]), probs_with(eta)

        res = optimize.minimize_scalar(
            lambda s: -profile(s)[0], bounds=(0.05, 50.0), method="bounded",
            options={"xatol": 1e-8},
        )
        shape = float(res.x)
        _, eta, p = profile(shape)
        params = (shape, float((-eta) ** (-1.0 / shape)))
    else:
        raise ValueError(f"unknown family {family!r}")

    rmse = float(np.sqrt(np.mean((p - f) ** 2)))
    return params, rmse


# ----------------------------------------------------------------- clustering


@dataclass(frozen=True)
class ClusterResult:
    assignments: np.ndarray
    centroids: np.ndarray
    percentages: np.ndarray
    inertia: float


def _kmeanspp_seed(points: np.ndarray, k: int, rng) -> np.ndarray:
    n = points.shape[0]
    centroids = [points[rng.integers(n)]]
    for _ in range(k - 1):
        d2 = np.min(
            [np.sum((points - c) ** 2, axis=1) for c in centroids], axis=0
        )
        total = d2.sum()
        if total <= 0:
            centroids.append(points[rng.integers(n)])
            continue
        centroids.append(points[rng.choice(n, p=d2 / total)])
    return np.array(centroids)


def cluster_distributions(
    histograms, k: int, n_restarts: int = 50, seed: int = 0
) -> ClusterResult:
    """k-means over normalized rating histograms, best of seeded restarts.

    Plain Lloyd iterations with squared-Euclidean distances; an emptied
    cluster is reseeded at the point farthest from its centroid.
    """
    points = np.array([h.freqs() for h in histograms], dtype=np.float64)
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"need at least k={k} histograms, got {n}")
    master = np.random.default_rng(seed)
    best = None
    for _ in range(n_restarts):
        rng = np.random.default_rng(master.integers(2**63))
        centroids = _kmeanspp_seed(points, k, rng)
        assign = np.full(n, -1)
        for _ in range(100):
            d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
            new_assign = np.argmin(d2, axis=1)
            if np.array_equal(new_assign, assign):
                break
            assign = new_assign
            for j in range(k):
                members = points[assign == j]
                if len(members):
                    centroids[j] = members.mean(axis=0)
                else:
                    far = np.argmax(np.min(d2, axis=1))
                    centroids[j] = points[far]
        inertia = float(np.sum((points - centroids[assign]) ** 2))
        if best is None or inertia < best.inertia:
            pct = np.bincount(assign, minlength=k) * (100.0 / n)
            best = ClusterResult(assign.copy(), centroids.copy(), pct, inertia)
    return best


def default_scale_for(hist: RaterHistogram) -> RatingScale:
    """Rating scale implied by a histogram's category count."""
    return RatingScale(1.0, float(len(hist.counts)), len(hist.counts))
