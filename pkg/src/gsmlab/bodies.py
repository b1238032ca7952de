"""Geometry of weighted l_p bodies.

A body is ``{theta : sum_t |theta_t|^p / a_t^p <= 1}`` with non-increasing
positive radii ``a_1 >= a_2 >= ... >= a_D``.  Infinite bodies are handled
through a finite prefix of the radius sequence.

Mean vectors are plain 1-D numpy arrays; a vector shorter than the body is
read as zero-padded.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

MEMBERSHIP_RTOL = 1e-12
_CMP_RTOL = 1e-12


class PrefixTooShortWarning(UserWarning):
    """The finite radius prefix ended before a defining condition was met."""


@dataclass(frozen=True)
class LpBody:
    p: float
    radii: np.ndarray = field(repr=False)

    def __post_init__(self):
        radii = np.array(self.radii, dtype=float).reshape(-1)
        radii.setflags(write=False)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "p", float(self.p))
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if radii.size == 0:
            raise ValueError("radii must be non-empty")
        if np.any(radii <= 0) or not np.all(np.isfinite(radii)):
            raise ValueError("radii must be finite and strictly positive")
        if np.any(np.diff(radii) > 0):
            raise ValueError("radii must be non-increasing")

    @property
    def ambient_dim(self) -> int:
        return int(self.radii.size)

    def radius(self, t: int) -> float:
        """1-based radius ``a_t``."""
        return float(self.radii[t - 1])

    def truncated(self, dim: int) -> "LpBody":
        return LpBody(self.p, self.radii[: max(1, min(dim, self.ambient_dim))])

    @classmethod
    def one_over_t(cls, dim: int, p: float = 1.0) -> "LpBody":
        return cls(p, 1.0 / np.arange(1, dim + 1))

    @classmethod
    def constant(cls, dim: int, value: float = 1.0, p: float = 2.0) -> "LpBody":
        return cls(p, np.full(dim, float(value)))

    def __eq__(self, other):
        if not isinstance(other, LpBody):
            return NotImplemented
        return self.p == other.p and np.array_equal(self.radii, other.radii)

    def __hash__(self):
        return hash((self.p, self.radii.tobytes()))

    def __repr__(self):
        return f"LpBody(p={self.p:g}, D={self.ambient_dim}, a_1={self.radii[0]:g})"


@dataclass(frozen=True)
class DimProfile:
    d_coordinate_kolmogorov: int
    d_truncation: int
    d_u: int
    d_l: int
    at_epsilon: float
    at_n: int


def _coords(body: LpBody, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size > body.ambient_dim:
        raise ValueError(
            f"vector has {theta.size} coordinates but the body has dimension {body.ambient_dim}"
        )
    return theta


def gauge(body: LpBody, theta) -> float:
    """``sum_t |theta_t|^p / a_t^p``; the body is the sub-level set at 1."""
    theta = _coords(body, theta)
    return float(np.sum((np.abs(theta) / body.radii[: theta.size]) ** body.p))


def membership(body: LpBody, theta) -> bool:
    return gauge(body, theta) <= 1.0 + MEMBERSHIP_RTOL


def boundary_scale(body: LpBody, direction) -> float:
    """Largest ``s >= 0`` with ``s * direction`` in the body."""
    direction = _coords(body, direction)
    peak = float(np.max(np.abs(direction))) if direction.size else 0.0
    if peak == 0.0:
        raise ValueError("direction must be non-zero")
    # rescale first so tiny or huge directions do not under/overflow the gauge
    return gauge(body, direction / peak) ** (-1.0 / body.p) / peak


def tail_sup_energy(body: LpBody, d: int) -> float:
    """``sup_{theta in body} sum_{t > d} theta_t^2``.

    For p <= 2 a single spike on coordinate d+1 is optimal.  For p > 2 the
    Hoelder dual norm gives ``(sum_{t>d} a_t^{2p/(p-2)})^{(p-2)/p}``.
    """
    if not 0 <= d <= body.ambient_dim:
        raise ValueError(f"d must lie in [0, {body.ambient_dim}], got {d}")
    if d == body.ambient_dim:
        return 0.0
    tail = body.radii[d:]
    if body.p <= 2.0:
        return float(tail[0] ** 2)
    q = body.p / (body.p - 2.0)
    # factor out the leading radius to avoid overflow for large q
    lead = tail[0]
    return float(lead**2 * np.sum((tail / lead) ** (2.0 * q)) ** (1.0 / q))


def _leq(x: float, y: float) -> bool:
    return x <= y * (1.0 + _CMP_RTOL)


def _geq(x: float, y: float) -> bool:
    return x >= y * (1.0 - _CMP_RTOL)


def coordinate_kolmogorov_dim(body: LpBody, eps: float) -> int:
    """``min{D >= 1 : a_D <= eps}``, clamped to the prefix length."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    hits = np.nonzero([_leq(a, eps) for a in body.radii])[0]
    if hits.size == 0:
        warnings.warn(
            f"no radius <= {eps:g} within the first {body.ambient_dim} coordinates; "
            "returning the prefix length",
            PrefixTooShortWarning,
            stacklevel=2,
        )
        return body.ambient_dim
    return int(hits[0]) + 1


def truncation_dim(body: LpBody, eps: float) -> int:
    """Smallest coordinate cut ``d`` whose worst-case tail energy is <= eps^2."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    target = eps * eps
    for d in range(body.ambient_dim + 1):
        if _leq(tail_sup_energy(body, d), target):
            return d
    return body.ambient_dim  # unreachable: tail energy is 0 at d = D


def effective_dim(body: LpBody, n: int, threshold: float) -> int:
    """``max{d : a_d^p * n^((p-2)/2) >= threshold}``, 0 when empty."""
    scale = float(n) ** ((body.p - 2.0) / 2.0)
    values = body.radii**body.p * scale
    ok = [_geq(v, threshold) for v in values]
    # radii are non-increasing, so the admissible set is a prefix
    return int(np.sum(ok))


def d_u_threshold(n_coords: int, eps: float, delta: float) -> float:
    return eps * eps / (576.0 * math.log(4.0 * n_coords / delta))


def d_u(body: LpBody, n: int, eps: float, delta: float = 1 / 32, D: int | None = None) -> int:
    """Upper-bound effective dimension (selection size of the LFHT scheme)."""
    if n < 1 or eps <= 0 or not 0 < delta < 1:
        raise ValueError("need n >= 1, eps > 0, 0 < delta < 1")
    D = body.ambient_dim if D is None else int(D)
    if D < 1:
        raise ValueError("D must be >= 1")
    return min(effective_dim(body, n, d_u_threshold(D, eps, delta)), D)


def d_l(body: LpBody, n: int, eps: float) -> int:
    """Lower-bound effective dimension: ``a_d^p n^((p-2)/2) >= 192 eps^2``."""
    if n < 1 or eps <= 0:
        raise ValueError("need n >= 1 and eps > 0")
    return effective_dim(body, n, 192.0 * eps * eps)


def counterexample_body(D_max: int) -> LpBody:
    """The weighted l_1 body ``sum_i i |theta_i| <= 1`` truncated to D_max."""
    if D_max < 1:
        raise ValueError("D_max must be >= 1")
    return LpBody.one_over_t(D_max, p=1.0)


def kol_inequality_check(body: LpBody, eps: float) -> bool:
    dc = coordinate_kolmogorov_dim(body, eps)
    return truncation_dim(body, eps / dc) >= dc / 2.0 - 2.0


def dim_profile(body: LpBody, n: int, eps: float, delta: float = 1 / 32) -> DimProfile:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PrefixTooShortWarning)
        dc = coordinate_kolmogorov_dim(body, eps)
    return DimProfile(
        d_coordinate_kolmogorov=dc,
        d_truncation=truncation_dim(body, eps),
        d_u=d_u(body, n, eps, delta),
        d_l=d_l(body, n, eps),
        at_epsilon=float(eps),
        at_n=int(n),
    )


def pad(theta, dim: int) -> np.ndarray:
    """Zero-pad (or check) a mean vector to ``dim`` coordinates."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size > dim:
        if np.any(theta[dim:] != 0):
            raise ValueError(f"vector has non-zero coordinates beyond {dim}")
        return theta[:dim].copy()
    out = np.zeros(dim)
    out[: theta.size] = theta
    return out
