"""Independent reference computations used by the test-suite.

Nothing here calls into the closed forms under test; each oracle goes back to
a definition (enumeration, quadrature, brute-force optimization).
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate, optimize, stats


def tail_energy_bruteforce(p: float, radii, d: int, resolution: int = 12) -> float:
    """``max sum_{t>d} theta_t^2`` over the body by simplex grid plus local polish.

    Head coordinates contribute nothing, so only budget shares ``c`` on the
    tail are searched: ``theta_t = a_t c_t^(1/p)`` with ``sum c = 1``.
    """
    a = np.asarray(radii, dtype=float)[d:]
    k = a.size
    if k == 0:
        return 0.0

    def energy(c):
        c = np.clip(c, 0.0, None)
        return float(np.sum(a**2 * c ** (2.0 / p)))

    best_c, best = None, -1.0
    for combo in itertools.combinations_with_replacement(range(k), resolution):
        c = np.bincount(combo, minlength=k) / resolution
        e = energy(c)
        if e > best:
            best, best_c = e, c
    if k > 1:
        res = optimize.minimize(
            lambda c: -energy(c), best_c, method="SLSQP",
            bounds=[(0.0, 1.0)] * k,
            constraints=[{"type": "eq", "fun": lambda c: np.sum(c) - 1.0}],
            options={"ftol": 1e-15, "maxiter": 500},
        )
        if res.success:
            best = max(best, -res.fun)
    return best


def chi2_two_point_quadrature(theta: float, n: int) -> float:
    """One-coordinate mixture chi-square through the sufficient statistic S ~ N(n theta, n)."""
    sd = math.sqrt(n)

    def integrand(s):
        # likelihood ratio of the two-component mixture against the null, squared
        lr = 0.5 * math.exp(theta * s - n * theta**2 / 2) + 0.5 * math.exp(-theta * s - n * theta**2 / 2)
        return stats.norm.pdf(s, 0.0, sd) * lr * lr

    width = 12 * sd + 2 * n * abs(theta)
    val, _ = integrate.quad(integrand, -width, width, epsabs=1e-14, epsrel=1e-12, limit=400)
    return val - 1.0


def conditional_chi2_quadrature(values, probs, n: int, m: int) -> float:
    """``E_S[ sum_kl w_k(S) w_l(S) exp(m v_k v_l) ]`` for one coordinate.

    The posterior ``w(S)`` comes from Bayes with Gaussian likelihoods of the
    sum ``S | theta ~ N(n theta, n)``; S is integrated against its marginal.
    """
    v = np.asarray(values, dtype=float)
    pi = np.asarray(probs, dtype=float)
    sd = math.sqrt(n)
    kernel = np.exp(m * np.outer(v, v))

    def integrand(s):
        lik = stats.norm.pdf(s, n * v, sd)
        joint = pi * lik
        marg = joint.sum()
        if marg == 0.0:
            return 0.0
        w = joint / marg
        return marg * float(w @ kernel @ w)

    lo = n * v.min() - 12 * sd
    hi = n * v.max() + 12 * sd
    val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=400)
    return val


def grid_capped_objective(p: float, radii, cap: float, steps: int = 801) -> float:
    """Max of ``sum min(theta_i^2, cap)`` over a non-negative coordinate grid (D <= 3)."""
    a = np.asarray(radii, dtype=float)
    axes = [np.linspace(0.0, ai, steps) for ai in a]
    mesh = np.meshgrid(*axes, indexing="ij")
    g = sum((m / ai) ** p for m, ai in zip(mesh, a))
    obj = sum(np.minimum(m**2, cap) for m in mesh)
    return float(np.max(np.where(g <= 1.0 + 1e-12, obj, -np.inf)))
