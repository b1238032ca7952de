"""Goodness-of-fit and likelihood-free hypothesis tests, plus region predicates.

Each test has a dataset-level entry point and a vectorized kernel that works
on column means.  The kernels are what the Monte Carlo loops call: the
statistics depend on the data only through the means, whose law is exactly
``N(theta, I/n)``.

Orientation for LFHT: H0 is ``theta_Z = theta_X`` and the decision is
``reject = T_LF >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from .bodies import LpBody, coordinate_kolmogorov_dim, d_l, d_u, truncation_dim
from .montecarlo import RngStream, as_stream, map_blocks
from .sampling_priors import Dataset, LfhtDataset

DEFAULT_DELTA = 1.0 / 32.0


@dataclass(frozen=True)
class TestDecision:
    reject: bool
    statistic: float
    threshold: float
    extras: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting the class

    @property
    def value(self) -> str:
        return "RejectH0" if self.reject else "AcceptH0"


# ------------------------------------------------------------- GoF tests


def gof_projection_statistic(means: np.ndarray, d: int) -> np.ndarray:
    means = np.asarray(means, dtype=float)
    return np.sum(means[..., :d] ** 2, axis=-1)


def gof_projection_test(data: Dataset, d: int, threshold: float) -> TestDecision:
    """Reject when the squared norm of the first d column means reaches ``threshold``."""
    if not 0 <= d <= data.dim:
        raise ValueError(f"d must lie in [0, {data.dim}]")
    stat = float(gof_projection_statistic(data.mean(), d))
    return TestDecision(stat >= threshold, stat, float(threshold), {"d": d})


def gof_threshold_chi2(d: int, n: int, level: float) -> float:
    """``chi2_d`` upper ``level`` quantile divided by n."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if d == 0:
        return 0.0
    return float(stats.chi2.isf(level, d)) / n


def calibrate_gof_threshold(
    d: int,
    n: int,
    level: float,
    trials: int | None = None,
    stream: RngStream | int | None = None,
    method: str = "mc",
    workers: int = 1,
) -> float:
    """Upper ``level`` quantile of the projection statistic under ``theta = 0``.

    ``method="mc"`` takes the empirical quantile over ``trials`` null draws;
    ``method="chi2"`` uses the exact chi-square quantile.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if method == "chi2":
        return gof_threshold_chi2(d, n, level)
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if trials is None or stream is None:
        raise ValueError("the Monte Carlo path needs trials and a stream")
    if d == 0:
        return 0.0
    scale = 1.0 / math.sqrt(n)
    null = map_blocks(
        lambda gen, size: gof_projection_statistic(scale * gen.standard_normal((size, d)), d),
        trials, as_stream(stream), workers,
    )
    return float(np.quantile(null, 1.0 - level))


@dataclass(frozen=True)
class TwoPartParams:
    d: int
    D: int
    energy_threshold: float
    max_threshold: float


def two_part_params(eps: float) -> TwoPartParams:
    if eps <= 0:
        raise ValueError("eps must be positive")
    # small epsilon guard so exact powers like 0.5^(-4/5) do not round up
    d = math.ceil(eps ** (-4.0 / 5.0) - 1e-9)
    D = math.ceil(2.0 / eps - 1e-9)
    return TwoPartParams(d, max(D, d), eps * eps / 2.0, eps ** (6.0 / 5.0))


def gof_two_part_kernel(means: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized two-part decision on a batch of mean vectors.

    Returns (reject, energy statistic, max statistic).
    """
    prm = two_part_params(eps)
    means = np.asarray(means, dtype=float)
    energy = np.sum(means[..., : prm.d] ** 2, axis=-1)
    if prm.D > prm.d:
        peak = np.max(np.abs(means[..., prm.d : prm.D]), axis=-1)
    else:
        peak = np.zeros(energy.shape)
    reject = (energy > prm.energy_threshold) | (peak > prm.max_threshold)
    return reject, energy, peak


def gof_two_part_test(data: Dataset, eps: float) -> TestDecision:
    """Energy test on the first ``ceil(eps^-4/5)`` coordinates OR a max test up to ``ceil(2/eps)``."""
    prm = two_part_params(eps)
    if data.dim < prm.D:
        raise ValueError(f"need at least {prm.D} coordinates, got {data.dim}")
    reject, energy, peak = gof_two_part_kernel(data.mean(), eps)
    return TestDecision(
        bool(reject),
        float(energy),
        prm.energy_threshold,
        {
            "energy": float(energy),
            "energy_threshold": prm.energy_threshold,
            "max": float(peak),
            "max_threshold": prm.max_threshold,
            "d": prm.d,
            "D": prm.D,
        },
    )


# ------------------------------------------------------------ LFHT tests


def lfht_statistic(mx, my, mz, mask=None) -> np.ndarray:
    """``sum_t mask_t [(mx_t - mz_t)^2 - (my_t - mz_t)^2]`` over the last axis."""
    mx, my, mz = (np.asarray(a, dtype=float) for a in (mx, my, mz))
    diff = (mx - mz) ** 2 - (my - mz) ** 2
    if mask is not None:
        diff = diff * mask
    return np.sum(diff, axis=-1)


def lfht_projection_test(data: LfhtDataset, d: int) -> TestDecision:
    """Compare distances of the Z mean to the X and Y means on the first d coordinates."""
    if not 0 <= d <= data.dim:
        raise ValueError(f"d must lie in [0, {data.dim}]")
    sl = slice(0, d)
    stat = float(lfht_statistic(data.X.mean()[sl], data.Y.mean()[sl], data.Z.mean()[sl]))
    return TestDecision(stat >= 0.0, stat, 0.0, {"d": d})


def lfht_moments_h0(theta_x, theta_y, d: int, n: int, m: int) -> tuple[float, float]:
    """Mean and variance of the projection statistic when ``theta_Z = theta_X``."""
    diff = np.asarray(theta_x, dtype=float)[:d] - np.asarray(theta_y, dtype=float)[:d]
    s = float(np.sum(diff**2))
    return -s, (4.0 / m + 4.0 / n) * s + 4.0 * d / n**2 + 8.0 * d / (m * n)


@dataclass(frozen=True)
class CoordinateSelection:
    """``T = T1 ∪ T3`` as 0-based sorted indices."""

    selected: tuple[int, ...]
    d_u_used: int
    delta_used: float
    D: int
    t3_threshold: float

    @property
    def t3(self) -> tuple[int, ...]:
        return tuple(t for t in self.selected if t >= self.d_u_used)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.D)
        out[list(self.selected)] = 1.0
        return out

    def __len__(self) -> int:
        return len(self.selected)


def t3_threshold(n: int, D: int, delta: float) -> float:
    return 4.0 * math.sqrt(2.0 * math.log(2.0 * D / delta) / n)


def _selection_masks(mx1, my1, du: int, thr: float) -> np.ndarray:
    """Batch version of the selection rule; returns a 0/1 mask over coordinates."""
    mx1, my1 = np.asarray(mx1, dtype=float), np.asarray(my1, dtype=float)
    mask = (np.abs(mx1 - my1) >= thr).astype(float)
    mask[..., :du] = 1.0
    return mask


def lfht_select_coordinates(
    X1: Dataset,
    Y1: Dataset,
    body: LpBody,
    n: int,
    eps: float,
    delta: float = DEFAULT_DELTA,
    d_u_eps: float | None = None,
) -> CoordinateSelection:
    """Keep the leading d_u coordinates plus every later one with a large first-half gap.

    ``n`` is the full per-distribution sample size before splitting;
    ``d_u_eps`` overrides the scale used inside d_u (the truncated scheme for
    infinite bodies evaluates it at eps/3).
    """
    if X1.n != Y1.n or X1.n != n // 2:
        raise ValueError("first halves must each hold floor(n/2) samples")
    D = X1.dim
    du = d_u(body, n, eps if d_u_eps is None else d_u_eps, delta, D)
    thr = t3_threshold(n, D, delta)
    mask = _selection_masks(X1.mean(), Y1.mean(), du, thr)
    return CoordinateSelection(tuple(int(i) for i in np.flatnonzero(mask)), du, float(delta), D, thr)


def lfht_selected_test(X2: Dataset, Y2: Dataset, Z: Dataset, selection: CoordinateSelection) -> TestDecision:
    if len(selection) == 0:
        raise ValueError("selection is empty")
    idx = list(selection.selected)
    stat = float(lfht_statistic(X2.mean()[idx], Y2.mean()[idx], Z.mean()[idx]))
    return TestDecision(stat >= 0.0, stat, 0.0, {"selected": len(idx)})


@dataclass(frozen=True)
class LfhtPlan:
    """Everything the full scheme fixes before looking at data."""

    D: int
    n0: int
    N: int
    d_u: int
    t3_threshold: float


def lfht_plan(body: LpBody, n: int, eps: float, delta: float = DEFAULT_DELTA,
              truncate: bool = True) -> LfhtPlan:
    if n < 2:
        raise ValueError("the full scheme needs n >= 2 to split the samples")
    if truncate:
        D = min(coordinate_kolmogorov_dim(body, eps / 3.0), body.ambient_dim)
        du = d_u(body, n, eps / 3.0, delta, D)
    else:
        D = body.ambient_dim
        du = d_u(body, n, eps, delta, D)
    n0 = n // 2
    return LfhtPlan(D, n0, n - n0, du, t3_threshold(n, D, delta))


def lfht_full_kernel(plan: LfhtPlan, mx1, my1, mx2, my2, mz) -> tuple[np.ndarray, np.ndarray]:
    """Batch decision of the split scheme from half-sample means.

    Inputs are arrays with the last axis of length ``plan.D``.  Returns
    (reject, statistic).
    """
    mask = _selection_masks(mx1, my1, plan.d_u, plan.t3_threshold)
    stat = lfht_statistic(mx2, my2, mz, mask)
    return stat >= 0.0, stat


def lfht_full_test(data: LfhtDataset, body: LpBody, eps: float, delta: float = DEFAULT_DELTA,
                   truncate: bool = True) -> TestDecision:
    """Split X and Y in halves, select on the first halves, test on the rest plus Z.

    With ``truncate`` every sample is cut to ``D_c(body, eps/3)`` coordinates
    first, and d_u is evaluated at scale ``eps/3``.
    """
    plan = lfht_plan(body, data.n, eps, delta, truncate)
    if data.dim < plan.D:
        raise ValueError(f"data has {data.dim} coordinates, the scheme needs {plan.D}")
    cut = slice(0, plan.D)
    X = Dataset(data.X.samples[:, cut])
    Y = Dataset(data.Y.samples[:, cut])
    Z = Dataset(data.Z.samples[:, cut])
    X1, X2 = X.split(plan.n0)
    Y1, Y2 = Y.split(plan.n0)
    mask = _selection_masks(X1.mean(), Y1.mean(), plan.d_u, plan.t3_threshold)
    stat = float(lfht_statistic(X2.mean(), Y2.mean(), Z.mean(), mask))
    return TestDecision(stat >= 0.0, stat, 0.0, {
        "D": plan.D, "d_u": plan.d_u, "selected": int(mask.sum()),
    })


# ------------------------------------------------------ region predicates


class RegionKind(str, Enum):
    SUFFICIENT_QUAD = "SufficientQuad"
    SUFFICIENT_LP = "SufficientLp"
    NECESSARY_LP = "NecessaryLp"


def lfht_region_predicate(
    kind: RegionKind | str,
    body: LpBody,
    m: int,
    n: int,
    eps: float,
    delta: float = DEFAULT_DELTA,
    truncate: bool = True,
) -> bool:
    """Evaluate one of the three analytic (m, n) regions.

    SufficientQuad uses the truncation dimension at eps/3.  SufficientLp uses
    d_u (at eps/3 over ``D_c(body, eps/3)`` coordinates when ``truncate``);
    NecessaryLp uses d_l.
    """
    kind = RegionKind(kind)
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    e2, e4 = eps * eps, eps**4
    if kind is RegionKind.SUFFICIENT_QUAD:
        d = truncation_dim(body, eps / 3.0)
        return m >= 96.0 / e2 and n >= 96.0 * math.sqrt(d) / e2 and m * n >= 768.0 * d / e4
    if kind is RegionKind.SUFFICIENT_LP:
        d = lfht_plan(body, max(n, 2), eps, delta, truncate).d_u if truncate else d_u(body, n, eps, delta)
        return m >= 32.0 / e2 and n >= 32.0 * math.sqrt(d) / e2 and m * n >= 512.0 * d / e4
    d = d_l(body, n, eps)
    return m >= 1.0 / e2 and n >= math.sqrt(d) / (2.0 * e2) and m * n >= d / (96.0 * e4)
