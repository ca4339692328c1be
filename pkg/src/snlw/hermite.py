"""Hermite polynomials with a variance parameter and Gaussian chaos identities.

``H_l(x; sigma)`` is defined through the generating function
``exp(t x - sigma t^2 / 2) = sum_l t^l / l! H_l(x; sigma)`` and evaluated by the
recurrence ``H_{l+1} = x H_l - l sigma H_{l-1}``. The recurrence never forms
``sigma^(l/2)``, so large variances do not overflow, and ``sigma = 0`` gives
``x^l`` exactly.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels

MAX_ORDER = 16


def _check_order(ell):
    if not (0 <= int(ell) <= MAX_ORDER) or int(ell) != ell:
        raise ValueError(f"order must be an integer in [0, {MAX_ORDER}], got {ell}")
    return int(ell)


def _check_sigma(sigma):
    if not sigma >= 0:
        raise ValueError(f"variance must be >= 0, got {sigma}")


def hermite(ell, x, sigma):
    """``H_ell(x; sigma)``, elementwise over ``x``.

    Returns a float for scalar ``x`` and an array otherwise.
    """
    ell = _check_order(ell)
    _check_sigma(sigma)
    out = kernels.hermite_eval(np.asarray(x, dtype=np.float64), float(sigma), ell)
    return float(out) if np.ndim(out) == 0 else out


def hermite_translate(k, x, y, sigma):
    """``sum_l C(k, l) x^(k-l) H_l(y; sigma)``, which equals ``H_k(x + y; sigma)``."""
    k = _check_order(k)
    _check_sigma(sigma)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    total = np.zeros(np.broadcast(x, y).shape)
    for ell in range(k + 1):
        total = total + math.comb(k, ell) * x ** (k - ell) * kernels.hermite_eval(y, float(sigma), ell)
    return float(total) if total.ndim == 0 else total


def monomial_expansion(k, sigma):
    """Coefficients ``c_m`` with ``x^k = sum_m c_m H_{k-2m}(x; sigma)``.

    Returns
    -------
    list of (m, c_m) for ``m = 0 .. k // 2``.
    """
    k = _check_order(k)
    _check_sigma(sigma)
    out = []
    for m in range(k // 2 + 1):
        pairings = math.factorial(2 * m) // (2 ** m * math.factorial(m))
        out.append((m, math.comb(k, 2 * m) * pairings * sigma ** m))
    return out


def wick_pair_expectation(k, m, covariance):
    """``E[H_k(f; s_f) H_m(g; s_g)]`` for jointly Gaussian centered ``f, g``
    with ``E f^2 = s_f``, ``E g^2 = s_g`` and ``E fg = covariance``."""
    if k != m:
        return 0.0
    return math.factorial(k) * float(covariance) ** k


def hypercontractivity_bound(k, p, l2norm):
    """Upper bound ``(p-1)^(k/2) * l2norm`` on the ``L^p`` norm of a k-th chaos
    element with the given ``L^2`` norm."""
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    if l2norm < 0:
        raise ValueError("l2norm must be >= 0")
    return (p - 1.0) ** (0.5 * k) * l2norm


def gaussian_moment(ell, p, sigma=1.0, nodes=64):
    """``E |H_ell(g; sigma)|^p`` for ``g ~ N(0, sigma)`` and even integer ``p``,
    by Gauss-Hermite quadrature (exact for polynomial integrands of degree
    below ``2 * nodes``)."""
    if p % 2 or ell * p >= 2 * nodes:
        raise ValueError("need even p and ell * p < 2 * nodes")
    t, w = np.polynomial.hermite_e.hermegauss(nodes)
    x = math.sqrt(sigma) * t
    vals = kernels.hermite_eval(x, float(sigma), _check_order(ell)) ** p
    return float(np.dot(w, vals) / math.sqrt(2.0 * math.pi))


def hermite_coefficients(ell, sigma):
    """Monomial coefficients of ``H_ell(.; sigma)``, lowest degree first."""
    ell = _check_order(ell)
    _check_sigma(sigma)
    prev = np.array([1.0])
    if ell == 0:
        return prev
    cur = np.array([0.0, 1.0])
    for j in range(1, ell):
        nxt = np.zeros(j + 2)
        nxt[1:] = cur
        nxt[: j] -= j * sigma * prev
        prev, cur = cur, nxt
    return cur
