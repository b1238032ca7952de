"""Mean estimators for the Gaussian sequence model and their risk.

Monte Carlo risk draws the column-mean vector directly: for n i.i.d. rows of
``N(theta, I)`` the empirical mean is exactly ``N(theta, I/n)`` and every
estimator here is a function of it, so the per-trial loss has the same law as
with full sample matrices at a fraction of the cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .bodies import LpBody, boundary_scale, membership, pad
from .montecarlo import MCEstimate, RngStream, as_stream, map_blocks, parallel_map
from .sampling_priors import Dataset, sample_dataset, theta_star_construct


def sth(x, lam):
    """Soft thresholding ``sign(x) * max(|x| - lam, 0)``; works elementwise."""
    if np.any(np.asarray(lam) < 0):
        raise ValueError("lambda must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)
    return float(out) if out.ndim == 0 else out


def lambda_schedule(n: int, D: int, eps: float) -> float:
    """``sqrt(max(2 log(2D / (n eps^2)), 0) / n)``."""
    if n < 1 or D < 1 or eps <= 0:
        raise ValueError("need n >= 1, D >= 1, eps > 0")
    arg = 2.0 * math.log(2.0 * D / (n * eps * eps))
    return math.sqrt(max(arg, 0.0) / n)


def counter_est_lambda(eps: float) -> float:
    """Fixed threshold ``(eps/8)^(4/3)`` for the counterexample body."""
    return (eps / 8.0) ** (4.0 / 3.0)


def counter_est_truncation(eps: float) -> int:
    return math.ceil(2.0 / eps)


def counter_est_n(eps: float) -> int:
    return math.ceil((eps / 8.0) ** (-8.0 / 3.0) * 4.0 * math.log(1.0 / eps))


@dataclass(frozen=True)
class EmpiricalMean:
    pass


@dataclass(frozen=True)
class Projection:
    d: int

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("d must be >= 0")


@dataclass(frozen=True)
class SoftThreshold:
    lam: float
    d_trunc: int

    def __post_init__(self):
        if self.lam < 0 or self.d_trunc < 0:
            raise ValueError("lambda and d_trunc must be >= 0")


EstimatorSpec = Union[EmpiricalMean, Projection, SoftThreshold]


def apply_to_means(spec: EstimatorSpec, means: np.ndarray) -> np.ndarray:
    """Estimator as a map on column means; ``means`` may be a batch (trials x dim)."""
    means = np.asarray(means, dtype=float)
    if isinstance(spec, EmpiricalMean):
        return means.copy()
    out = np.zeros_like(means)
    if isinstance(spec, Projection):
        k = min(spec.d, means.shape[-1])
        out[..., :k] = means[..., :k]
    elif isinstance(spec, SoftThreshold):
        k = min(spec.d_trunc, means.shape[-1])
        out[..., :k] = sth(means[..., :k], spec.lam)
    else:
        raise TypeError(f"unknown estimator {spec!r}")
    return out


def estimate(spec: EstimatorSpec, data: Dataset) -> np.ndarray:
    return apply_to_means(spec, data.mean())


def per_coord_risk_bound(theta_i: float, n: int, lam: float) -> float:
    """``exp(-n lam^2 / 2) / n + min(theta_i^2, 1/n + lam^2)``."""
    if n < 1 or lam < 0:
        raise ValueError("need n >= 1 and lambda >= 0")
    return math.exp(-n * lam * lam / 2.0) / n + min(theta_i * theta_i, 1.0 / n + lam * lam)


def soft_threshold_risk_bound(theta, n: int, lam: float, d_trunc: int) -> float:
    """Per-coordinate bounds on the kept coordinates plus the exact tail energy."""
    t = np.asarray(theta, dtype=float).reshape(-1)
    kept = sum(per_coord_risk_bound(x, n, lam) for x in pad(t, max(d_trunc, t.size))[:d_trunc])
    return float(kept + np.sum(t[d_trunc:] ** 2))


def soft_threshold_risk_lower(theta, n: int, lam: float, d_trunc: int) -> float:
    """``1/2 sum_{i <= d_trunc} min(theta_i^2, 1/n + lam^2)`` plus the tail energy."""
    t = pad(theta, max(d_trunc, np.size(theta)))
    kept = 0.5 * np.sum(np.minimum(t[:d_trunc] ** 2, 1.0 / n + lam * lam))
    return float(kept + np.sum(t[d_trunc:] ** 2))


def projection_risk_exact(theta, d: int, n: int) -> float:
    """``d/n + sum_{t>d} theta_t^2``."""
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")
    t = np.asarray(theta, dtype=float).reshape(-1)
    return d / n + float(np.sum(t[d:] ** 2))


def _dim_for(spec: EstimatorSpec, theta: np.ndarray, dim: int | None) -> int:
    need = theta.size
    if isinstance(spec, Projection):
        need = max(need, spec.d)
    elif isinstance(spec, SoftThreshold):
        need = max(need, spec.d_trunc)
    return need if dim is None else int(dim)


def mc_risk(
    spec: EstimatorSpec,
    theta,
    n: int,
    trials: int,
    stream: RngStream | int,
    dim: int | None = None,
    workers: int = 1,
    full_samples: bool = False,
) -> MCEstimate:
    """Mean squared l2 error over ``trials`` with a 95% normal radius.

    ``dim`` is the observed dimension (default: enough to cover theta and the
    estimator).  With ``full_samples`` every trial draws the n x dim matrix;
    otherwise the column means are drawn directly.
    """
    if trials < 100:
        raise ValueError("trials must be >= 100")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    dim = _dim_for(spec, theta, dim)
    mean = pad(theta, dim)
    stream = as_stream(stream)

    if full_samples:
        def block(gen, size):
            losses = np.empty(size)
            for k in range(size):
                x = mean + gen.standard_normal((n, dim))
                losses[k] = np.sum((apply_to_means(spec, x.mean(axis=0)) - mean) ** 2)
            return losses
    else:
        scale = 1.0 / math.sqrt(n)

        def block(gen, size):
            means = mean + scale * gen.standard_normal((size, dim))
            return np.sum((apply_to_means(spec, means) - mean) ** 2, axis=1)

    return MCEstimate.from_values(map_blocks(block, trials, stream, workers))


def risk_candidates(
    body: LpBody,
    caps=None,
    spike_scales=(1.0, 0.5, 0.25),
    max_fill: int | None = None,
) -> list[tuple[str, np.ndarray]]:
    """Structured witnesses for the worst-case risk over the body.

    Single spikes ``s a_i e_i``, maximizers of ``sum min(theta_i^2, cap)`` over
    a cap grid, and boundary-scaled uniform fills of the first k coordinates.
    """
    D = body.ambient_dim
    out: list[tuple[str, np.ndarray]] = []
    for i in range(D):
        for s in spike_scales:
            v = np.zeros(D)
            v[i] = s * body.radii[i]
            out.append((f"spike[{i + 1}]x{s:g}", v))
    if caps is None:
        caps = np.geomspace(body.radii[-1] ** 2, body.radii[0] ** 2, 12)
    for c in caps:
        out.append((f"capped[{c:.3g}]", theta_star_construct(body, float(c))))
    for k in range(1, (max_fill or D) + 1):
        v = np.zeros(D)
        v[:k] = 1.0
        out.append((f"fill[{k}]", v * boundary_scale(body, v)))
    for name, v in out:
        assert membership(body, v), name
    return out


@dataclass(frozen=True)
class WorstCase:
    theta: np.ndarray
    risk: MCEstimate
    label: str
    all_risks: tuple


def worst_case_risk_search(
    body: LpBody,
    spec: EstimatorSpec,
    n: int,
    trials: int,
    stream: RngStream | int,
    workers: int = 1,
    candidates=None,
) -> WorstCase:
    """Largest Monte Carlo risk over the candidate family.

    This is a lower bound on the supremum over the body, since only finitely
    many witnesses are evaluated.
    """
    stream = as_stream(stream)
    cands = risk_candidates(body) if candidates is None else candidates

    def one(k):
        _, v = cands[k]
        return mc_risk(spec, v, n, trials, stream.child(k), dim=body.ambient_dim)

    risks = parallel_map(one, list(range(len(cands))), workers)
    k = int(np.argmax([r.mean for r in risks]))
    return WorstCase(cands[k][1], risks[k], cands[k][0],
                     tuple((c[0], r) for c, r in zip(cands, risks)))


def sample_and_estimate(spec: EstimatorSpec, theta, n: int, dim: int, stream) -> np.ndarray:
    """Convenience wrapper: draw a dataset and apply the estimator."""
    return estimate(spec, sample_dataset(theta, n, dim, stream))
