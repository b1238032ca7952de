"""Gaussian sampling, product priors and chi-square divergence evaluators.

The mixture-vs-null divergences follow Ingster's identity
``1 + chi2 = E_{theta, theta' iid prior} exp(n <theta, theta'>)``; for product
priors the expectation factorizes over coordinates.  Evaluators work with
``log(1 + chi2)`` internally so that products over many coordinates neither
overflow nor lose the small-divergence regime to cancellation.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.special import expit, logsumexp

from .bodies import LpBody, boundary_scale, membership, pad
from .montecarlo import MCEstimate, RngStream, as_stream, map_blocks

log = logging.getLogger(__name__)

ENUM_LIMIT = 2**20  # pairs; admits two-point priors on 10 coordinates


@dataclass(frozen=True)
class Dataset:
    """``n`` i.i.d. rows from ``N(theta, I_dim)``."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise ValueError("samples must be a non-empty n x dim matrix")
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def split(self, n0: int) -> tuple["Dataset", "Dataset"]:
        return Dataset(self.samples[:n0]), Dataset(self.samples[n0:])


@dataclass(frozen=True)
class LfhtDataset:
    X: Dataset
    Y: Dataset
    Z: Dataset

    def __post_init__(self):
        if self.X.n != self.Y.n:
            raise ValueError("X and Y must have the same number of samples")
        if not self.X.dim == self.Y.dim == self.Z.dim:
            raise ValueError("X, Y and Z must share the dimension")

    @property
    def n(self) -> int:
        return self.X.n

    @property
    def m(self) -> int:
        return self.Z.n

    @property
    def dim(self) -> int:
        return self.X.dim

    def swapped(self) -> "LfhtDataset":
        return LfhtDataset(self.Y, self.X, self.Z)


def sample_dataset(theta, n: int, dim: int, stream: RngStream | int) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    mean = pad(theta, dim)
    gen = as_stream(stream).generator()
    return Dataset(mean + gen.standard_normal((n, dim)))


def sample_lfht_dataset(theta_x, theta_y, theta_z, n: int, m: int, dim: int,
                        stream: RngStream | int) -> LfhtDataset:
    s = as_stream(stream)
    return LfhtDataset(
        sample_dataset(theta_x, n, dim, s.child(0)),
        sample_dataset(theta_y, n, dim, s.child(1)),
        sample_dataset(theta_z, m, dim, s.child(2)),
    )


# ---------------------------------------------------------------- priors


@dataclass(frozen=True)
class TwoPointSym:
    """Independent signs: coordinate i is ``+-theta_star[i]`` with prob 1/2."""

    theta_star: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta_star, dtype=float).reshape(-1)
        if not np.all(np.isfinite(t)):
            raise ValueError("theta_star must be finite")
        object.__setattr__(self, "theta_star", t)

    @property
    def support_dim(self) -> int:
        return self.theta_star.size


@dataclass(frozen=True)
class Ternary:
    """``(1-h) delta_0 + h/2 (delta_r + delta_-r)`` on the first d coordinates."""

    d: int
    h: float
    r: float

    def __post_init__(self):
        if self.d < 1 or not 0.0 <= self.h <= 1.0 or self.r <= 0:
            raise ValueError("Ternary needs d >= 1, 0 <= h <= 1, r > 0")

    @property
    def support_dim(self) -> int:
        return self.d


@dataclass(frozen=True)
class PointMass:
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(-1))

    @property
    def support_dim(self) -> int:
        return self.theta.size


ProductPrior = Union[TwoPointSym, Ternary, PointMass]


def sample_theta(prior: ProductPrior, dim: int, stream: RngStream | int) -> np.ndarray:
    if prior.support_dim > dim:
        raise ValueError("prior support exceeds the requested dimension")
    gen = as_stream(stream).generator()
    out = np.zeros(dim)
    if isinstance(prior, PointMass):
        out[: prior.support_dim] = prior.theta
    elif isinstance(prior, TwoPointSym):
        signs = gen.choice(np.array([-1.0, 1.0]), size=prior.support_dim)
        out[: prior.support_dim] = signs * prior.theta_star
    elif isinstance(prior, Ternary):
        u = gen.random(prior.d)
        nonzero = u < prior.h
        signs = np.where(gen.random(prior.d) < 0.5, -1.0, 1.0)
        out[: prior.d] = np.where(nonzero, signs * prior.r, 0.0)
    else:
        raise TypeError(f"unknown prior {prior!r}")
    return out


# ------------------------------------------------------- exact divergences


def _log_cosh(x: np.ndarray) -> np.ndarray:
    x = np.abs(np.asarray(x, dtype=float))
    # log1p(2 sinh^2(x/2)) keeps relative accuracy for small x
    small = np.log1p(2.0 * np.sinh(np.minimum(x, 1.0) / 2.0) ** 2)
    large = x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)
    return np.where(x < 1.0, small, large)


def _expm1(x: float) -> float:
    """``expm1`` that saturates at infinity instead of raising."""
    return math.expm1(x) if x < 709.0 else math.inf


def log1p_chi2_two_point(theta_star, n: int) -> float:
    """``log(1 + chi2)`` for the symmetric two-point product prior."""
    t = np.asarray(theta_star, dtype=float).reshape(-1)
    return float(np.sum(_log_cosh(n * t * t)))


def chi2_two_point_exact(theta_star, n: int) -> float:
    """``prod_i cosh(n theta*_i^2) - 1``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _expm1(log1p_chi2_two_point(theta_star, n))


def _log_ternary_factor(h: float, r: float, m: int) -> float:
    # log(1 + h^2 (cosh(x) - 1)) with cosh(x) - 1 = 2 sinh(x/2)^2, exact for small x
    x = m * r * r
    if h == 0.0:
        return 0.0
    if x < 700.0:
        return math.log1p(h * h * 2.0 * math.sinh(x / 2.0) ** 2)
    log_excess = 2.0 * math.log(h) + x - math.log(2.0) + math.log1p(-2.0 * math.exp(-x))
    return float(np.logaddexp(0.0, log_excess))


def log1p_chi2_ternary(d: int, h: float, r: float, m: int) -> float:
    Ternary(d, h, r)
    return d * _log_ternary_factor(h, r, m)


def chi2_ternary_exact(d: int, h: float, r: float, m: int) -> float:
    """``prod_{i<=d} (1 - h^2 + h^2 cosh(m r^2)) - 1``."""
    return _expm1(log1p_chi2_ternary(d, h, r, m))


def _support(prior: ProductPrior) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-coordinate (values, probabilities)."""
    if isinstance(prior, PointMass):
        return [(np.array([v]), np.array([1.0])) for v in prior.theta]
    if isinstance(prior, TwoPointSym):
        return [(np.array([t, -t]), np.array([0.5, 0.5])) for t in prior.theta_star]
    if isinstance(prior, Ternary):
        vals = np.array([0.0, prior.r, -prior.r])
        probs = np.array([1.0 - prior.h, prior.h / 2.0, prior.h / 2.0])
        return [(vals, probs)] * prior.d
    raise TypeError(f"unknown prior {prior!r}")


def _expm1_minus_x(x: np.ndarray) -> np.ndarray:
    """``exp(x) - 1 - x`` without cancellation near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    xs = np.where(small, x, 0.0)
    series = xs**2 * (1 / 2 + xs * (1 / 6 + xs * (1 / 24 + xs * (1 / 120 + xs / 720))))
    with np.errstate(over="ignore"):
        direct = np.expm1(np.where(small, 0.0, x)) - np.where(small, 0.0, x)
    return np.where(small, series, direct)


def chi2_bruteforce_enum(prior: ProductPrior, m: int) -> float:
    """``E exp(m <theta, theta'>) - 1`` by enumerating every joint support pair.

    Enumerates the full product support (not coordinate by coordinate), so it
    is independent of the factorization used by the closed forms.  The sum is
    split as ``m |E theta|^2 + E[exp(x) - 1 - x]`` with ``x = m <theta, theta'>``
    so that every term is non-negative and tiny divergences keep full
    relative accuracy.
    """
    coords = _support(prior)
    size = 1
    for vals, _ in coords:
        size *= vals.size
    if size * size > ENUM_LIMIT:
        raise ValueError(f"support has {size * size} pairs, above the {ENUM_LIMIT} limit")
    points, weights = [], []
    for combo in itertools.product(*[range(v.size) for v, _ in coords]):
        points.append([coords[j][0][k] for j, k in enumerate(combo)])
        weights.append(math.prod(coords[j][1][k] for j, k in enumerate(combo)))
    pts = np.array(points, dtype=float).reshape(len(points), -1)
    w = np.array(weights)
    keep = w > 0
    pts, w = pts[keep], w[keep]
    x = m * (pts @ pts.T)
    if x.max() > 700.0:
        return _expm1(float(logsumexp(x + np.log(w)[:, None] + np.log(w)[None, :])))
    mean = np.array([math.fsum(w * pts[:, j]) for j in range(pts.shape[1])])
    linear = m * math.fsum(mean * mean)
    quad = math.fsum((np.outer(w, w) * _expm1_minus_x(x)).ravel())
    return linear + quad


class TvBound(NamedTuple):
    value: float
    applicable: bool


def tv_upper_bound_gof(d: float, h: float, r: float, n: float) -> TvBound:
    """``sqrt(d h^2 n^2 r^4)`` clipped to [0, 1].

    ``applicable`` is False when ``n r^2 > 1`` or ``d h^2 n^2 r^4 > 1``, where
    the cosh expansion behind the bound no longer holds.
    """
    q = d * h * h * n * n * r**4
    applicable = bool(n * r * r <= 1.0 + 1e-12 and q <= 1.0 + 1e-12)
    return TvBound(min(max(math.sqrt(max(q, 0.0)), 0.0), 1.0), applicable)


# ------------------------------------------- conditional chi-square by MC


def _ternary_posteriors(S: np.ndarray, h: float, r: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Posterior masses of +r and -r given the coordinate sum S of n draws."""
    with np.errstate(divide="ignore"):
        log_zero = math.log1p(-h) + n * r * r / 2.0 if h < 1 else -np.inf
    log_half_h = math.log(h / 2.0)
    lp = log_half_h + r * S
    lm = log_half_h - r * S
    l0 = np.broadcast_to(log_zero, S.shape)
    norm = logsumexp(np.stack([l0, lp, lm]), axis=0)
    return np.exp(lp - norm), np.exp(lm - norm)


def lfht_conditional_chi2_mc(
    d: int,
    h: float,
    r: float,
    n: int,
    m: int,
    trials: int,
    stream: RngStream | int,
    theta_star=None,
    workers: int = 1,
) -> MCEstimate:
    """Monte Carlo estimate of ``1 + chi2(P0_{Z|X} || P1_{Z|X} | P0_X)``.

    Each trial draws X from the prior mixture through its per-coordinate
    sufficient statistic ``S_j = sum_i X_j^i``, forms the posterior of
    ``theta_j`` given ``S_j`` and multiplies the per-coordinate brackets
    ``E[exp(m theta_j theta'_j) | X]`` over j.  With ``theta_star`` given, the
    two-point prior ``+-theta_star`` is used instead of the ternary one (``d``,
    ``h``, ``r`` are then ignored).
    """
    if trials < 100:
        raise ValueError("trials must be >= 100")
    stream = as_stream(stream)
    if m == 0:
        return MCEstimate(1.0, 0.0, trials, 0.0)

    if theta_star is not None:
        t = np.asarray(theta_star, dtype=float).reshape(-1)
        up, down = np.exp(m * t * t), np.exp(-m * t * t)

        def block(gen, size):
            signs = np.where(gen.random((size, t.size)) < 0.5, -1.0, 1.0)
            S = n * signs * t + math.sqrt(n) * gen.standard_normal((size, t.size))
            p = expit(2.0 * t * S)
            bracket = (p * p + (1 - p) ** 2) * up + 2 * p * (1 - p) * down
            return np.prod(bracket, axis=1)
    else:
        Ternary(d, h, r)
        if h == 0.0:
            return MCEstimate(1.0, 0.0, trials, 0.0)
        up, down = math.expm1(m * r * r), math.expm1(-m * r * r)

        def block(gen, size):
            u = gen.random((size, d))
            sign = np.where(gen.random((size, d)) < 0.5, -1.0, 1.0)
            theta = np.where(u < h, sign * r, 0.0)
            S = n * theta + math.sqrt(n) * gen.standard_normal((size, d))
            p, q = _ternary_posteriors(S, h, r, n)
            bracket = 1.0 + (p * p + q * q) * up + 2.0 * p * q * down
            return np.prod(bracket, axis=1)

    values = map_blocks(block, trials, stream, workers)
    finite = np.isfinite(values)
    rejected = int(values.size - finite.sum())
    if rejected:
        log.warning("rejected %d non-finite trials", rejected)
        if rejected > 0.01 * values.size:
            raise FloatingPointError(f"{rejected} of {values.size} trials were non-finite")
    return MCEstimate.from_values(values[finite])


def two_point_lfht_bound(theta_star, m: int, n: int) -> float:
    """Analytic bound ``prod_j (1 + 4 m^2 t_j^4 + 4 m n t_j^4) - 1``."""
    t4 = np.asarray(theta_star, dtype=float) ** 4
    return _expm1(float(np.sum(np.log1p(4.0 * m * m * t4 + 4.0 * m * n * t4))))


# ------------------------------------------------ least-favourable theta*


def theta_star_construct(body: LpBody, cap: float) -> np.ndarray:
    """Maximizer of ``sum_i min(theta_i^2, cap)`` over the body.

    For p <= 2 the objective is convex in the per-coordinate budget
    ``(|theta_i|/a_i)^p``, so an optimum saturates coordinates at ``sqrt(cap)``
    in order of decreasing radius and leaves at most one partial coordinate.
    For p > 2 it is concave and the budget is water-filled.
    """
    if cap <= 0:
        raise ValueError("cap must be positive")
    a, p = body.radii, body.p
    level = math.sqrt(cap)
    full_cost = (level / a) ** p  # budget needed to saturate each coordinate
    theta = np.zeros(body.ambient_dim)
    if p <= 2.0:
        budget = 1.0
        for i in np.argsort(-a, kind="stable"):
            if full_cost[i] <= budget:
                theta[i] = level
                budget -= full_cost[i]
            else:
                theta[i] = a[i] * budget ** (1.0 / p)
                break
    else:
        if full_cost.sum() <= 1.0:
            theta[:] = level
        else:
            # KKT: c_i = min(full_cost_i, (mu / a_i^2)^(p/(2-p))) with sum c_i = 1
            expo = p / (2.0 - p)

            def spent(mu):
                with np.errstate(over="ignore"):  # tiny mu saturates at full_cost
                    return np.minimum(full_cost, (mu / a**2) ** expo).sum()

            lo, hi = 1e-300, 1.0
            while spent(hi) > 1.0:
                hi *= 2.0
            for _ in range(200):
                mid = math.sqrt(lo * hi) if lo > 0 else hi / 2
                if spent(mid) > 1.0:
                    lo = mid
                else:
                    hi = mid
            c = np.minimum(full_cost, (hi / a**2) ** expo)
            theta = a * c ** (1.0 / p)
    # land exactly inside despite rounding
    if not membership(body, theta):
        theta = theta * boundary_scale(body, theta)
    return np.minimum(theta, level)


def capped_energy(theta, cap: float) -> float:
    t = np.asarray(theta, dtype=float)
    return float(np.sum(np.minimum(t * t, cap)))
