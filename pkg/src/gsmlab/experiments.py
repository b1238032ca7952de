"""Monte Carlo orchestration: error rates, sample-complexity search, rate fits, region maps.

Error rates are ratios of integer rejection counters.  Trial blocks draw from
streams keyed by their block index, so counts do not depend on worker count.
"""

from __future__ import annotations

import inspect
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import stats

from .bodies import LpBody, boundary_scale, membership, pad
from .montecarlo import MCEstimate, RngStream, as_stream, map_blocks, parallel_map, proportion_radius
from .tests import (
    DEFAULT_DELTA,
    RegionKind,
    gof_projection_statistic,
    gof_two_part_kernel,
    lfht_full_kernel,
    lfht_plan,
    lfht_region_predicate,
    lfht_statistic,
    two_part_params,
)

log = logging.getLogger(__name__)

FEASIBLE_ERROR = 0.25


@dataclass(frozen=True)
class ErrorEstimate:
    """Type-I / type-II rates; ``type2`` is the worst case over the alternatives."""

    type1: float
    type2: float
    trials: int
    ci_radius: float
    seed: RngStream | None = None
    per_alternative: tuple = ()

    @classmethod
    def from_counts(cls, rejects_h0: Sequence[int], accepts_h1: Sequence[int], trials: int,
                    seed: RngStream | None = None) -> "ErrorEstimate":
        t1 = max(int(c) for c in rejects_h0) / trials
        per = tuple(int(c) / trials for c in accepts_h1)
        t2 = max(per) if per else 0.0
        return cls(t1, t2, trials, proportion_radius(max(t1, t2), trials), seed, per)

    @property
    def max_error(self) -> float:
        return max(self.type1, self.type2)

    @property
    def criterion(self) -> float:
        return self.max_error + self.ci_radius


# ------------------------------------------------------------ alternatives


def energy_fill(body: LpBody, eps: float) -> np.ndarray:
    """Uniform vector of norm eps on the most coordinates the body allows."""
    best = None
    for k in range(1, body.ambient_dim + 1):
        v = np.zeros(body.ambient_dim)
        v[:k] = eps / math.sqrt(k)
        if membership(body, v):
            best = v
        elif best is not None:
            break
    if best is None:
        raise ValueError(f"eps={eps:g} exceeds the body's largest radius {body.radii[0]:g}")
    return best


def h1_spikes(body: LpBody, eps: float) -> list[np.ndarray]:
    """Single spikes ``eps e_i`` for every coordinate whose radius allows it."""
    out = []
    for i in np.flatnonzero(body.radii >= eps):
        v = np.zeros(body.ambient_dim)
        v[i] = eps
        out.append(v)
    return out


def worst_case_alternative(body: LpBody, eps: float, kind: str, margin: float = 0.05):
    """Boundary witnesses for the sup over alternatives.

    ``GofEnergy``: uniform fill with norm exactly eps.
    ``GofSpike``: spike of height ``eps^(6/5) (1 + margin)`` on coordinate
    ``ceil(eps^-4/5) + 1``; it sits just above the max-branch threshold of the
    two-part test and its norm is below eps, so it stresses that branch rather
    than being a member of the norm-eps alternative.
    ``LfhtPair``: ``(energy_fill, 0)`` with separation eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if kind == "GofEnergy":
        return energy_fill(body, eps)
    if kind == "GofSpike":
        prm = two_part_params(eps)
        if prm.d + 1 > body.ambient_dim:
            raise ValueError("body is too short for the spike coordinate")
        v = np.zeros(body.ambient_dim)
        v[prm.d] = prm.max_threshold * (1.0 + margin)
        if not membership(body, v):
            raise ValueError(f"spike of height {v[prm.d]:.4g} at coordinate {prm.d + 1} leaves the body")
        return v
    if kind == "LfhtPair":
        return energy_fill(body, eps), np.zeros(body.ambient_dim)
    raise ValueError(f"unknown alternative kind {kind!r}")


# ----------------------------------------------------------------- problems


@dataclass(frozen=True)
class GofProblem:
    """``test`` is "two_part" (needs eps) or "projection" (needs d and threshold)."""

    alternatives: tuple
    dim: int
    test: str = "two_part"
    eps: float | None = None
    d: int | None = None
    threshold: float | None = None

    def __post_init__(self):
        alts = tuple(pad(a, self.dim) for a in self.alternatives)
        object.__setattr__(self, "alternatives", alts)
        if self.test == "two_part":
            if self.eps is None:
                raise ValueError("two_part needs eps")
            if self.dim < two_part_params(self.eps).D:
                raise ValueError("dim too small for the two-part test")
        elif self.test == "projection":
            if self.d is None or self.threshold is None:
                raise ValueError("projection needs d and threshold")
        else:
            raise ValueError(f"unknown GoF test {self.test!r}")

    def decide(self, means: np.ndarray) -> np.ndarray:
        if self.test == "two_part":
            return gof_two_part_kernel(means, self.eps)[0]
        return gof_projection_statistic(means, self.d) >= self.threshold


@dataclass(frozen=True)
class LfhtProblem:
    """``test`` is "full" (split scheme on ``body``) or "projection" (first d coordinates)."""

    pairs: tuple
    body: LpBody | None = None
    eps: float | None = None
    test: str = "full"
    d: int | None = None
    delta: float = DEFAULT_DELTA
    truncate: bool = True

    def __post_init__(self):
        if self.test == "full" and (self.body is None or self.eps is None):
            raise ValueError("full scheme needs body and eps")
        if self.test == "projection" and self.d is None:
            raise ValueError("projection test needs d")
        if self.test not in ("full", "projection"):
            raise ValueError(f"unknown LFHT test {self.test!r}")


Problem = Union[GofProblem, LfhtProblem]


def _gof_counts(problem: GofProblem, theta, n, trials, stream, workers) -> int:
    scale = 1.0 / math.sqrt(n)

    def block(gen, size):
        means = theta + scale * gen.standard_normal((size, problem.dim))
        return problem.decide(means)

    return int(np.sum(map_blocks(block, trials, stream, workers)))


def _lfht_counts(problem: LfhtProblem, tx, ty, tz, n, m, trials, stream, workers) -> int:
    """Number of trials with ``reject`` when Z has mean ``tz``."""
    if problem.test == "projection":
        d = problem.d
        tx, ty, tz = tx[:d], ty[:d], tz[:d]
        sn, sm = 1.0 / math.sqrt(n), 1.0 / math.sqrt(m)

        def block(gen, size):
            mx = tx + sn * gen.standard_normal((size, d))
            my = ty + sn * gen.standard_normal((size, d))
            mz = tz + sm * gen.standard_normal((size, d))
            return lfht_statistic(mx, my, mz) >= 0.0
    else:
        plan = lfht_plan(problem.body, n, problem.eps, problem.delta, problem.truncate)
        D = plan.D
        tx, ty, tz = (pad(v[:D], D) for v in (tx, ty, tz))
        s0, s1, sm = 1.0 / math.sqrt(plan.n0), 1.0 / math.sqrt(plan.N), 1.0 / math.sqrt(m)

        def block(gen, size):
            g = gen.standard_normal((5, size, D))
            return lfht_full_kernel(
                plan, tx + s0 * g[0], ty + s0 * g[1], tx + s1 * g[2], ty + s1 * g[3], tz + sm * g[4]
            )[0]

    return int(np.sum(map_blocks(block, trials, stream, workers)))


def estimate_error_rates(
    problem: Problem,
    n: int,
    m: int | None = None,
    trials: int = 2000,
    stream: RngStream | int = 0,
    workers: int = 1,
) -> ErrorEstimate:
    """Type-I and worst type-II error of the problem's test at sample sizes (n, m)."""
    if trials < 100:
        raise ValueError("trials must be >= 100")
    stream = as_stream(stream)
    if isinstance(problem, GofProblem):
        null = _gof_counts(problem, np.zeros(problem.dim), n, trials, stream.child(0), workers)
        acc = [trials - _gof_counts(problem, a, n, trials, stream.child(1 + k), workers)
               for k, a in enumerate(problem.alternatives)]
        return ErrorEstimate.from_counts([null], acc, trials, stream)
    if m is None or m < 1:
        raise ValueError("LFHT needs m >= 1")
    rej0, acc1 = [], []
    for k, (tx, ty) in enumerate(problem.pairs):
        tx = np.asarray(tx, dtype=float)
        ty = np.asarray(ty, dtype=float)
        rej0.append(_lfht_counts(problem, tx, ty, tx, n, m, trials, stream.child(k, 0), workers))
        acc1.append(trials - _lfht_counts(problem, tx, ty, ty, n, m, trials, stream.child(k, 1), workers))
    return ErrorEstimate.from_counts(rej0, acc1, trials, stream)


# ---------------------------------------------------------------- search


def criterion_value(x) -> float:
    """Scalar pass/fail value of an oracle output (smaller is better)."""
    if isinstance(x, ErrorEstimate):
        return x.criterion
    if isinstance(x, MCEstimate):
        return x.mean + x.ci_radius
    return float(x)


@dataclass
class SearchResult:
    n: int | None
    resolved: bool
    probes: list = field(default_factory=list)
    validation: object = None
    validated: bool | None = None


def _call(fn: Callable, n: int, salt: int):
    try:
        nparams = len(inspect.signature(fn).parameters)
    except (TypeError, ValueError):
        nparams = 2
    return fn(n, salt) if nparams >= 2 else fn(n)


def sample_complexity_search(
    error_fn: Callable,
    target: float,
    n_max: int,
    n_min: int = 1,
    validate: bool = True,
) -> SearchResult:
    """Smallest n whose oracle value passes ``target``: doubling, then bisection.

    ``error_fn(n)`` or ``error_fn(n, salt)`` returns an ErrorEstimate, an
    MCEstimate or a float; each probe gets a fresh salt so Monte Carlo oracles
    can use independent streams.  The pass rule is ``criterion_value <= target``.
    When n_max fails the result is unresolved with ``n = None``.
    """
    if target <= 0:
        raise ValueError("target must be positive")
    if n_min < 1 or n_max < n_min:
        raise ValueError("need 1 <= n_min <= n_max")
    probes: list = []
    salt = iter(range(1, 10**9))

    def passes(n: int) -> bool:
        out = _call(error_fn, n, next(salt))
        ok = criterion_value(out) <= target
        probes.append((n, criterion_value(out), ok))
        return ok

    lo, hi = n_min - 1, n_min  # lo fails (or is below range), hi is the probe
    while not passes(hi):
        lo = hi
        if hi >= n_max:
            log.warning("sample-complexity search reached n_max=%d without passing", n_max)
            return SearchResult(None, False, probes)
        hi = min(2 * hi, n_max)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    res = SearchResult(hi, True, probes)
    if validate:
        out = _call(error_fn, hi, next(salt))
        res.validation = out
        res.validated = criterion_value(out) <= target
    return res


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr: float
    points: tuple


def rate_exponent_fit(points: Sequence[tuple[float, float]]) -> FitResult:
    """Least squares of ``log n*`` on ``log(1/eps)``."""
    pts = [(float(e), float(n)) for e, n in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(e <= 0 or n <= 0 for e, n in pts):
        raise ValueError("eps and n* must be positive")
    x = np.array([math.log(1.0 / e) for e, _ in pts])
    y = np.array([math.log(n) for _, n in pts])
    if np.ptp(x) == 0:
        raise ValueError("all eps values are equal")
    fit = stats.linregress(x, y)
    return FitResult(float(fit.slope), float(fit.intercept), float(max(fit.stderr, 0.0)),
                     tuple(zip(x.tolist(), y.tolist())))


# ----------------------------------------------------------- region maps


def lfht_pairs(body: LpBody, eps: float) -> tuple:
    """Energy-fill pair plus the deepest admissible single-spike pair."""
    zero = np.zeros(body.ambient_dim)
    pairs = [(energy_fill(body, eps), zero)]
    spikes = h1_spikes(body, eps)
    if spikes and not np.allclose(spikes[-1], pairs[0][0]):
        pairs.append((spikes[-1], zero))
    return tuple(pairs)


@dataclass(frozen=True)
class RegionCell:
    m: int
    n: int
    feasible: bool
    error_hat: float
    type1: float
    type2: float
    ci_radius: float
    sufficient_quad: bool
    sufficient_lp: bool
    necessary_lp: bool


@dataclass(frozen=True)
class RegionMap:
    eps: float
    grid: tuple


def lfht_region_map(
    body: LpBody,
    eps: float,
    m_grid: Sequence[int],
    n_grid: Sequence[int],
    trials: int,
    stream: RngStream | int,
    delta: float = DEFAULT_DELTA,
    workers: int = 1,
    pairs=None,
) -> RegionMap:
    """Empirical feasibility of the split scheme on an (m, n) grid with analytic overlays."""
    if not m_grid or not n_grid:
        raise ValueError("grids must be non-empty")
    stream = as_stream(stream)
    problem = LfhtProblem(lfht_pairs(body, eps) if pairs is None else tuple(pairs),
                          body=body, eps=eps, delta=delta)
    cells = [(i, j, int(m), int(n)) for i, n in enumerate(n_grid) for j, m in enumerate(m_grid)]
    if len({(m, n) for _, _, m, n in cells}) != len(cells):
        raise ValueError("grid points must be distinct")

    def one(cell):
        i, j, m, n = cell
        est = estimate_error_rates(problem, n, m, trials, stream.child(i, j))
        return RegionCell(
            m, n, est.criterion <= FEASIBLE_ERROR, est.max_error, est.type1, est.type2, est.ci_radius,
            lfht_region_predicate(RegionKind.SUFFICIENT_QUAD, body, m, n, eps, delta),
            lfht_region_predicate(RegionKind.SUFFICIENT_LP, body, m, n, eps, delta),
            lfht_region_predicate(RegionKind.NECESSARY_LP, body, m, n, eps, delta),
        )

    return RegionMap(float(eps), tuple(parallel_map(one, cells, workers)))


def lfht_min_m_curve(
    body: LpBody,
    eps: float,
    n_grid: Sequence[int],
    trials: int,
    stream: RngStream | int,
    m_max: int = 1 << 20,
    delta: float = DEFAULT_DELTA,
    workers: int = 1,
    pairs=None,
) -> list[tuple[int, SearchResult]]:
    """Smallest feasible m at each n of the grid."""
    stream = as_stream(stream)
    problem = LfhtProblem(lfht_pairs(body, eps) if pairs is None else tuple(pairs),
                          body=body, eps=eps, delta=delta)

    def one(item):
        i, n = item
        fn = lambda m, salt: estimate_error_rates(problem, n, m, trials, stream.child(i, salt))
        return int(n), sample_complexity_search(fn, FEASIBLE_ERROR, m_max)

    return parallel_map(one, list(enumerate(n_grid)), workers)


# ------------------------------------------------- rate-fit drivers


def gof_alternatives(body: LpBody, eps: float) -> tuple:
    """Energy fill plus the deepest admissible norm-eps spike."""
    alts = [energy_fill(body, eps)]
    spikes = h1_spikes(body, eps)
    if spikes:
        alts.append(spikes[-1])
    return tuple(alts)


def gof_sample_complexity(body: LpBody, eps: float, trials: int, stream: RngStream | int,
                          n_max: int = 1 << 22, workers: int = 1, alternatives=None) -> SearchResult:
    stream = as_stream(stream)
    prm = two_part_params(eps)
    dim = max(prm.D, body.ambient_dim)
    alts = gof_alternatives(body, eps) if alternatives is None else alternatives
    problem = GofProblem(alts, dim, "two_part", eps=eps)
    fn = lambda n, salt: estimate_error_rates(problem, n, None, trials, stream.child(salt), workers)
    return sample_complexity_search(fn, FEASIBLE_ERROR, n_max)


def estimation_sample_complexity(body: LpBody, eps: float, spec, trials: int,
                                 stream: RngStream | int, n_max: int = 1 << 24,
                                 workers: int = 1) -> SearchResult:
    """Smallest n at which the worst candidate risk (plus its radius) is <= eps^2."""
    from .estimators import risk_candidates, worst_case_risk_search

    stream = as_stream(stream)
    cands = risk_candidates(body)
    fn = lambda n, salt: worst_case_risk_search(body, spec, n, trials, stream.child(salt),
                                                workers, cands).risk
    return sample_complexity_search(fn, eps * eps, n_max)
