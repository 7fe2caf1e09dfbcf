"""Antibunching dip models.

``eval_convolved_g2`` is the ideal dip ``1 - a exp(-|tau - t0| / tau0)``
convolved with a normalized Gaussian of standard deviation ``sigma``. With
``u = tau - t0`` the closed form is ``1 - a * F(u)`` where

    F(u) = 1/2 [E(u) + E(-u)],
    E(u) = exp(s^2 / (2 tau0^2) - u / tau0) * erfc(s / (sqrt2 tau0) - u / (sqrt2 s)).

``E`` is evaluated through ``erfcx`` where its erfc argument is non-negative
and directly otherwise, so neither factor can overflow.
"""

import numpy as np
from scipy.special import erfc, erfcx

from ..source import theoretical_g2

_SQRT2 = np.sqrt(2.0)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


def _half_term(u, tau0, sigma):
    x = sigma / (_SQRT2 * tau0) - u / (_SQRT2 * sigma)
    out = np.empty_like(u)
    pos = x >= 0
    up = u[pos]
    out[pos] = np.exp(-up * up / (2.0 * sigma * sigma)) * erfcx(x[pos])
    un = u[~pos]
    out[~pos] = np.exp(sigma * sigma / (2.0 * tau0 * tau0) - un / tau0) * erfc(x[~pos])
    return out


def dip_shape(u, tau0, sigma):
    """Normalized dip profile F(u); equals exp(-|u|/tau0) when sigma == 0."""
    u = np.asarray(u, dtype=float)
    if sigma == 0:
        return np.exp(-np.abs(u) / tau0)
    u1 = np.atleast_1d(u)
    f = 0.5 * (_half_term(u1, tau0, sigma) + _half_term(-u1, tau0, sigma))
    return f.reshape(u.shape)


def dip_shape_grad(u, tau0, sigma):
    """Return ``(F, dF/dtau0, dF/du)``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if sigma == 0:
        f = np.exp(-np.abs(u) / tau0)
        return f, f * np.abs(u) / tau0**2, -np.sign(u) * f / tau0
    e1 = _half_term(u, tau0, sigma)
    e2 = _half_term(-u, tau0, sigma)
    gauss = _SQRT_2_OVER_PI * np.exp(-u * u / (2.0 * sigma * sigma))
    f = 0.5 * (e1 + e2)
    d_tau0 = 0.5 * ((e1 - e2) * u / tau0**2 - (e1 + e2) * sigma**2 / tau0**3) + gauss * sigma / tau0**2
    d_u = 0.5 * (e2 - e1) / tau0
    return f, d_tau0, d_u


def eval_convolved_g2(a, tau0, t0, sigma, tau):
    """Jitter-broadened dip: the ideal dip convolved with a Gaussian of width ``sigma``."""
    if tau0 <= 0:
        raise ValueError("tau0 must be > 0")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    tau = np.asarray(tau, dtype=float)
    if sigma == 0:
        return theoretical_g2(a, tau0, t0, tau)
    return 1.0 - a * dip_shape(tau - t0, tau0, sigma)


def bin_averaged_g2(a, tau0, t0, sigma, edges, nodes=24):
    """Mean of ``eval_convolved_g2`` over each bin ``[edges[k], edges[k+1])``.

    Uses Gauss-Legendre quadrature per bin, with the bin containing ``t0``
    split at the cusp when ``sigma == 0``.
    """
    edges = np.asarray(edges, dtype=float)
    x, w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = edges[:-1], edges[1:]
    out = np.empty(lo.size)
    for k in range(lo.size):
        pieces = [(lo[k], hi[k])]
        if lo[k] < t0 < hi[k]:
            pieces = [(lo[k], t0), (t0, hi[k])]
        acc = 0.0
        for p, q in pieces:
            pts = 0.5 * (q - p) * x + 0.5 * (q + p)
            acc += 0.5 * (q - p) * np.dot(w, eval_convolved_g2(a, tau0, t0, sigma, pts))
        out[k] = acc / (hi[k] - lo[k])
    return out
