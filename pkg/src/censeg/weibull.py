"""Left-censored Weibull model.

The density is parametrised by a rate ``lambda`` and a shape ``sigma``::

    f(y) = sigma * lambda * (lambda * y)**(sigma - 1) * exp(-(lambda * y)**sigma)

A censored observation only contributes ``F(q) = 1 - exp(-(lambda * q)**sigma)``
where ``q`` is its quantification limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import _kernels


class FitError(RuntimeError):
    """Raised when the likelihood optimiser fails to converge.

    The best iterate found so far is kept in ``best``.
    """

    def __init__(self, message: str, best: "WeibullParams"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class Bounds:
    """Feasibility box for the rate and shape parameters."""

    rate_min: float = 1e-6
    rate_max: float = 1e6
    shape_min: float = 0.05
    shape_max: float = 20.0

    def __post_init__(self):
        if not (0 < self.rate_min < self.rate_max):
            raise ValueError(f"invalid rate bounds [{self.rate_min}, {self.rate_max}]")
        if not (0 < self.shape_min < self.shape_max):
            raise ValueError(f"invalid shape bounds [{self.shape_min}, {self.shape_max}]")


DEFAULT_BOUNDS = Bounds()


@dataclass(frozen=True)
class WeibullParams:
    rate: float
    shape: float
    degenerate: bool = False

    def __post_init__(self):
        if not (self.rate > 0 and self.shape > 0):
            raise ValueError(f"rate and shape must be positive, got {self.rate}, {self.shape}")

    def to_dict(self) -> dict:
        return {"lambda": self.rate, "sigma": self.shape, "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, d: dict) -> "WeibullParams":
        return cls(float(d["lambda"]), float(d["sigma"]), bool(d.get("degenerate", False)))


class CensoredSample:
    """Observations with per-point censoring thresholds.

    Censored entries carry ``x == q``; quantified entries carry the measured
    value in ``x``.
    """

    def __init__(self, x, q, censored):
        x = np.asarray(x, dtype=float).ravel()
        q = np.asarray(q, dtype=float).ravel()
        censored = np.asarray(censored, dtype=bool).ravel()
        if not (x.shape == q.shape == censored.shape):
            raise ValueError("x, q and censored must have the same length")
        if np.any(q <= 0) or np.any(x <= 0):
            raise ValueError("values and thresholds must be positive")
        if np.any(x[censored] != q[censored]):
            raise ValueError("censored entries must satisfy x == q")
        self.x = x
        self.q = q
        self.censored = censored

    def __len__(self) -> int:
        return self.x.size

    def __repr__(self) -> str:
        return f"CensoredSample(n={len(self)}, censored={int(self.censored.sum())})"

    @property
    def n_quantified(self) -> int:
        return int((~self.censored).sum())

    @classmethod
    def concat(cls, samples) -> "CensoredSample":
        samples = list(samples)
        return cls(
            np.concatenate([s.x for s in samples]),
            np.concatenate([s.q for s in samples]),
            np.concatenate([s.censored for s in samples]),
        )

    def __getitem__(self, idx) -> "CensoredSample":
        return CensoredSample(self.x[idx], self.q[idx], self.censored[idx])


def _check_positive(v, name):
    v = np.asarray(v, dtype=float)
    if np.any(~(v > 0)):
        raise ValueError(f"{name} must be positive")
    return v


def log_pdf(p: WeibullParams, y):
    """Log-density at ``y > 0``; scalar or array."""
    y = _check_positive(y, "y")
    z = p.rate * y
    out = math.log(p.shape * p.rate) + (p.shape - 1.0) * np.log(z) - z**p.shape
    return float(out) if out.ndim == 0 else out


def log1mexp(z):
    """Stable log(1 - exp(-z)) for z > 0."""
    z = np.asarray(z, dtype=float)
    small = z < math.log(2.0)
    with np.errstate(divide="ignore"):
        out = np.where(small, np.log(-np.expm1(-np.where(small, z, 1.0))),
                       np.log1p(-np.exp(-np.where(small, 1.0, z))))
    return float(out) if out.ndim == 0 else out


def log_cdf(p: WeibullParams, q):
    """Log of the CDF at threshold ``q > 0``."""
    q = _check_positive(q, "q")
    return log1mexp((p.rate * q) ** p.shape)


def neg_log_likelihood(p: WeibullParams, s: CensoredSample) -> float:
    c = s.censored
    nll = -np.sum(log1mexp((p.rate * s.q[c]) ** p.shape)) if c.any() else 0.0
    z = p.rate * s.x[~c]
    nll += np.sum(z**p.shape - math.log(p.shape * p.rate) - (p.shape - 1.0) * np.log(z))
    return float(nll)


def nll_grad_rate(p: WeibullParams, s: CensoredSample) -> float:
    """Analytic derivative of the NLL with respect to the rate."""
    lam, sig = p.rate, p.shape
    c = s.censored
    zc = (lam * s.q[c]) ** sig
    # d/dlam of -log(1 - exp(-zc)) = -(sig/lam) * zc / expm1(zc)
    g = -np.sum((sig / lam) * zc / np.expm1(zc)) if c.any() else 0.0
    zu = (lam * s.x[~c]) ** sig
    g += np.sum((sig / lam) * zu - sig / lam)
    return float(g)


def _rate_fit(s: CensoredSample, shape: float, bounds: Bounds):
    c = s.censored
    a = s.x[~c] ** shape
    bvals, counts = np.unique(s.q[c] ** shape, return_counts=True)
    t_lo = shape * math.log(bounds.rate_min)
    t_hi = shape * math.log(bounds.rate_max)
    t, flag = _kernels.solve_log_mu(int(a.size), float(a.sum()), bvals, counts.astype(float),
                                    bvals.size, t_lo, t_hi)
    return math.exp(t / shape), flag


def _clip_rate(rate: float, flag: int, bounds: Bounds) -> float:
    if flag < 0:
        return bounds.rate_min
    if flag > 0:
        return bounds.rate_max
    return min(max(rate, bounds.rate_min), bounds.rate_max)


def fit_rate_fixed_shape(s: CensoredSample, shape: float,
                         bounds: Bounds = DEFAULT_BOUNDS) -> WeibullParams:
    """Rate MLE with the shape held fixed.

    The problem is convex in ``log(rate)``; the score equation is solved by
    Newton steps safeguarded inside the bracket given by the rate bounds.
    A solution on the boundary (for instance an all-censored sample, whose
    likelihood keeps increasing with the rate) is flagged ``degenerate``.
    """
    if len(s) == 0:
        raise ValueError("empty sample")
    if not (bounds.shape_min <= shape <= bounds.shape_max):
        raise ValueError(f"shape {shape} outside [{bounds.shape_min}, {bounds.shape_max}]")
    rate, flag = _rate_fit(s, shape, bounds)
    rate = _clip_rate(rate, flag, bounds)
    return WeibullParams(rate, shape, degenerate=flag != 0)


def fit_mle(s: CensoredSample, bounds: Bounds = DEFAULT_BOUNDS, *,
            xtol: float = 1e-8, maxiter: int = 4000) -> WeibullParams:
    """Joint maximum-likelihood estimate of rate and shape.

    Bounded Nelder-Mead on ``(log rate, log shape)`` started from the
    exponential estimate ``(1 / mean(quantified), 1)``, followed by an exact
    rate solve at the returned shape.

    Raises
    ------
    FitError
        If the simplex search does not converge within ``maxiter`` iterations.
    """
    if len(s) == 0:
        raise ValueError("empty sample")
    unc = ~s.censored
    if not unc.any():
        # likelihood increases monotonically with the rate; shape is unidentified
        shape0 = min(max(1.0, bounds.shape_min), bounds.shape_max)
        return WeibullParams(bounds.rate_max, shape0, degenerate=True)

    x_unc = s.x[unc]
    log_x_unc = np.log(x_unc)
    qc = s.q[s.censored]
    n_unc = x_unc.size

    def objective(theta):
        log_lam, log_sig = theta
        sig = math.exp(log_sig)
        log_z = log_lam + log_x_unc
        zu = np.exp(sig * log_z)
        val = np.sum(zu) - n_unc * (math.log(sig) + log_lam) - (sig - 1.0) * np.sum(log_z)
        if qc.size:
            val -= np.sum(log1mexp(np.exp(sig * (log_lam + np.log(qc)))))
        return float(val)

    lo = np.log([bounds.rate_min, bounds.shape_min])
    hi = np.log([bounds.rate_max, bounds.shape_max])
    x0 = np.clip([-math.log(x_unc.mean()), 0.0], lo, hi)
    simplex = np.array([x0, x0 + [0.25, 0.0], x0 + [0.0, 0.25]])
    simplex = np.clip(simplex, lo, hi)
    f0 = objective(x0)
    res = optimize.minimize(
        objective, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
        options={"xatol": xtol, "fatol": 1e-12 * max(1.0, abs(f0)),
                 "maxiter": maxiter, "maxfev": 4 * maxiter,
                 "initial_simplex": simplex},
    )
    sig = float(np.exp(res.x[1]))
    best = WeibullParams(float(np.exp(res.x[0])), sig)
    if not res.success:
        raise FitError(f"shape/rate optimisation did not converge: {res.message}", best)
    refined = fit_rate_fixed_shape(s, sig, bounds)
    if neg_log_likelihood(refined, s) <= neg_log_likelihood(best, s):
        best = refined
    on_edge = (np.isclose(res.x, lo, rtol=0, atol=1e-9) | np.isclose(res.x, hi, rtol=0, atol=1e-9)).any()
    if on_edge or best.degenerate:
        best = WeibullParams(best.rate, best.shape, degenerate=True)
    return best


def sample(p: WeibullParams, n: int, q_schedule, rng_seed: int) -> CensoredSample:
    """Draw ``n`` values by inverse CDF and censor each below its threshold."""
    q = np.asarray(q_schedule, dtype=float)
    if q.shape != (n,):
        raise ValueError(f"q_schedule must have length {n}")
    rng = np.random.default_rng(rng_seed)
    u = 1.0 - rng.random(n)  # (0, 1]
    y = weibull_inverse_cdf(p, u)
    cens = y < q
    x = np.where(cens, q, y)
    # u == 1 gives y == 0, which can only happen censored
    return CensoredSample(x, q, cens)


def weibull_inverse_cdf(p: WeibullParams, u):
    """Quantile for survival probability ``u``: y = (-log u)**(1/shape) / rate."""
    return (-np.log(u)) ** (1.0 / p.shape) / p.rate
