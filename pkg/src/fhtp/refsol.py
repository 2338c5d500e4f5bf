"""
Constant-drift reference solution.

For constant drift ``v0`` the problem

    u_t = u_xx + v0 u_x   on (0, T] x (0, 1),
    u(t, 0) = 1,  u(t, 1) = 0,  u(0, x) = 0,

has two fast series representations:

* spectral (large t): ``u = u_s + exp(-v0 x / 2) sum_k c_k exp(-(k^2 pi^2 + v0^2 / 4) t) sin(k pi x)``
  with steady state ``u_s`` and ``c_k = -2 k pi / (k^2 pi^2 + v0^2 / 4)``;
* images (small t): with ``s = v0 / 2``,
  ``u = sum_{n>=0} [G(x + 2n) - G(2n + 2 - x)]`` and
  ``G(y) = (exp(-s(x+y)) erfc(y/(2 sqrt t) - s sqrt t) + exp(s(y-x)) erfc(y/(2 sqrt t) + s sqrt t)) / 2``.

Each image pair solves the drifted equation; the sum telescopes to 1 at
``x = 0`` and vanishes at ``x = 1``.  Products of exponentials and erfc are
evaluated through ``erfcx`` so that every term stays bounded by one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx

# prefactor exponent above which the spectral sum loses digits to cancellation
_SPECTRAL_MAX_EXPONENT = 10.0


class SeriesConvergenceError(RuntimeError):
    """A truncated series did not meet its tolerance within the term cap."""


@dataclass(frozen=True)
class ConstDriftSolution:
    """Parameters of the constant-drift reference solution on ``(0, T]``."""

    v0: float
    T: float = 1.0
    spectral_tol: float = 1e-10
    t_cross: float = 0.1 / np.pi**2
    max_terms: int = 20000


def u_heat_layer(t, x):
    """Half-line heat solution ``erfc(x / (2 sqrt(t)))``; requires ``t > 0``."""
    t = np.asarray(t, float)
    if np.any(t <= 0):
        raise ValueError("u_heat_layer requires t > 0")
    return erfc(np.asarray(x, float) / (2.0 * np.sqrt(t)))


def steady_state(v0: float, x):
    """``(exp(-v0 x) - exp(-v0)) / (1 - exp(-v0))``, equal to ``1 - x`` at ``v0 = 0``."""
    x = np.asarray(x, float)
    if v0 == 0.0:
        return 1.0 - x
    if v0 > 0:
        return np.exp(-v0 * x) * np.expm1(-v0 * (1.0 - x)) / np.expm1(-v0)
    return np.expm1(v0 * (1.0 - x)) / np.expm1(v0)


def _exp_erfc(a, z):
    """``exp(a) erfc(z)`` without overflow when ``a - z^2`` is moderate."""
    z = np.asarray(z, float)
    a = np.asarray(a, float)
    pos = z > 0
    out = np.empty(np.broadcast(a, z).shape)
    zp = np.where(pos, z, 0.0)
    out[...] = np.where(pos, np.exp(a - zp**2) * erfcx(zp), np.exp(np.where(pos, 0.0, a)) * erfc(z))
    return out


def _image_kernel(s, sqt, x, y):
    z = y / (2.0 * sqt)
    return 0.5 * (_exp_erfc(-s * (x + y), z - s * sqt) + _exp_erfc(s * (y - x), z + s * sqt))


def u_const_images(v0: float, t: float, x, tol: float = 1e-10, max_terms: int = 20000):
    """Image-series representation, accurate for small ``t``."""
    x = np.asarray(x, float)
    s = 0.5 * v0
    sqt = np.sqrt(t)
    total = np.zeros_like(x)
    for n in range(max_terms):
        pair = _image_kernel(s, sqt, x, x + 2.0 * n) - _image_kernel(s, sqt, x, 2.0 * n + 2.0 - x)
        total = total + pair
        # outermost image argument past 8 and the pair negligible
        z_out = (2.0 * n + 2.0 - np.max(x, initial=0.0)) / (2.0 * sqt) - abs(s) * sqt
        if z_out > 8.0 and np.max(np.abs(pair), initial=0.0) < 0.1 * tol:
            return total
    raise SeriesConvergenceError(f"image series for v0={v0}, t={t} did not converge in {max_terms} terms")


def _spectral_exponent(v0: float, t: float) -> float:
    return max(0.0, -0.5 * v0) - 0.25 * v0 * v0 * t


def u_const_spectral(v0: float, t: float, x, tol: float = 1e-10, max_terms: int = 20000):
    """Eigenfunction representation, accurate for moderate and large ``t``."""
    x = np.asarray(x, float)
    pref_exp = _spectral_exponent(v0, t)
    q = v0 * v0 / 4.0
    # first neglected term below tol / 10
    K = 1
    while True:
        k1 = K + 1
        bound = np.exp(pref_exp - (k1 * np.pi) ** 2 * t) * 2.0 * k1 * np.pi / ((k1 * np.pi) ** 2 + q)
        if bound < 0.1 * tol:
            break
        K += 1
        if K > max_terms:
            raise SeriesConvergenceError(f"spectral series for v0={v0}, t={t} needs more than {max_terms} terms")
    k = np.arange(1, K + 1, dtype=float)
    kp = k * np.pi
    ck = -2.0 * kp / (kp**2 + q)
    decay = np.exp(-(kp**2) * t)
    modes = np.sin(np.multiply.outer(x, kp))
    series = modes @ (ck * decay)
    return steady_state(v0, x) + np.exp(-0.5 * v0 * x - q * t) * series


def uses_spectral(s: ConstDriftSolution, t: float) -> bool:
    """Representation choice: spectral above ``t_cross`` unless its prefactor would amplify rounding."""
    return t >= s.t_cross and _spectral_exponent(s.v0, t) <= _SPECTRAL_MAX_EXPONENT


def eval_u_const(s: ConstDriftSolution, t: float, x):
    """Evaluate ``u(v0)`` at scalar time ``t`` and state(s) ``x`` in ``[0, 1]``.

    At ``t <= 0`` the initial/boundary data are returned: 1 at ``x = 0``, 0
    elsewhere.
    """
    t = float(t)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, float))
    if t <= 0.0:
        out = np.where(xa <= 0.0, 1.0, 0.0)
    elif uses_spectral(s, t):
        out = u_const_spectral(s.v0, t, xa, s.spectral_tol, s.max_terms)
    else:
        out = u_const_images(s.v0, t, xa, s.spectral_tol, s.max_terms)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def eval_u_const_grid(s: ConstDriftSolution, times, xs) -> np.ndarray:
    """Matrix with entry ``(i, j) = eval_u_const(s, times[i], xs[j])``."""
    times = np.atleast_1d(np.asarray(times, float))
    xs = np.atleast_1d(np.asarray(xs, float))
    out = np.empty((times.size, xs.size))
    for i, t in enumerate(times):
        out[i] = eval_u_const(s, t, xs)
    return out
