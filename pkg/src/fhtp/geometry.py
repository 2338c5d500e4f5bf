"""
Moving-boundary to fixed-rectangle transformation.

The backward equation for the lower-boundary hitting probability lives on a
space-time region bounded by two moving curves.  This module maps it in two
steps:

1. :func:`to_tilde` reverses time and rescales it so that the diffusion
   coefficient is one, giving a problem on ``a(tt) < xt < b(tt)``.
2. :func:`solve_time_change` and :func:`transform_drift` straighten the
   region to ``[0, T] x [0, 1]`` by the time change ``theta' = (b - a)^2``
   and the affine space map ``xi = (1 - x) a + x b``.

The resulting :class:`TransformedProblem` also carries the unit-time drift
``vhat(t, x) = v(t T, x)`` used by the space-time solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy.integrate import solve_ivp

Convention = Literal["paper-compat", "sde-consistent"]
CONVENTIONS: tuple[str, ...] = ("paper-compat", "sde-consistent")

Field2 = Callable[[np.ndarray, np.ndarray], np.ndarray]
Curve = Callable[[np.ndarray], np.ndarray]

_FD_STEP = 1e-6


def _central_diff_curve(f: Curve) -> Curve:
    def df(t):
        t = np.asarray(t, dtype=float)
        step = _FD_STEP * np.maximum(1.0, np.abs(t))
        return (f(t + step) - f(t - step)) / (2.0 * step)

    return df


def _central_diff_x(f: Field2) -> Field2:
    def df(t, x):
        x = np.asarray(x, dtype=float)
        step = _FD_STEP * np.maximum(1.0, np.abs(x))
        return (f(t, x + step) - f(t, x - step)) / (2.0 * step)

    return df


@dataclass(frozen=True)
class ConstantBoundaries:
    """Descriptor for boundaries that do not move: ``alpha = lo``, ``beta = hi``."""

    lo: float
    hi: float


@dataclass(frozen=True)
class CollapsingBoundaries:
    """Descriptor for linearly collapsing boundaries.

    ``alpha(t) = beta0 t / (2 T0)`` and ``beta(t) = beta0 (1 - t / (2 T0))``.
    """

    beta0: float
    T0: float


BoundaryForm = ConstantBoundaries | CollapsingBoundaries | None


@dataclass(frozen=True)
class FPProblem:
    """Original hitting problem for ``dX = mu(t, X) dt + sigma dW``.

    Callables must accept numpy arrays and broadcast.  Derivatives that are
    not supplied are replaced by central differences.  ``boundary_form``
    enables closed-form time changes; it is trusted, not checked against
    ``alpha``/``beta``.
    """

    mu: Field2
    sigma: float
    alpha: Curve
    beta: Curve
    tau: float
    dmu_dx: Field2 | None = None
    dalpha: Curve | None = None
    dbeta: Curve | None = None
    boundary_form: BoundaryForm = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        ts = np.linspace(0.0, self.tau, 257)
        gap = np.asarray(self.beta(ts), float) - np.asarray(self.alpha(ts), float)
        if np.any(gap <= 0):
            bad = ts[np.argmin(gap)]
            raise ValueError(f"boundaries touch or cross at t={bad:.6g} (need alpha < beta on [0, tau])")


@dataclass(frozen=True)
class TildeProblem:
    """Time-reversed problem with unit diffusion on ``a(tt) < xt < b(tt)``."""

    a: Curve
    b: Curve
    da: Curve
    db: Curve
    vtilde: Field2
    dvtilde_dx: Field2
    Ttilde: float
    convention: str = "paper-compat"
    # scale c in orig_time = (2 / c) (Ttilde - tt); c = sigma or sigma^2
    time_scale: float = 1.0
    boundary_form: BoundaryForm = None

    def width(self, tt):
        return np.asarray(self.b(tt), float) - np.asarray(self.a(tt), float)


@dataclass(frozen=True)
class TimeChange:
    """Monotone map ``theta: [0, T] -> [0, Ttilde]`` solving ``theta' = (b - a)^2(theta)``."""

    theta: Curve
    theta_prime: Curve
    theta_inv: Curve
    T: float
    Ttilde: float
    method: str = "ode"


@dataclass(frozen=True)
class TransformedProblem:
    """Drift on the rectangle ``[0, T] x [0, 1]`` and its unit-time version.

    ``vhat(t, x) = v(t T, x)`` and ``v0 = v(0, 0)``.  ``dvhat_dx`` is the
    closed-form spatial derivative used by the load assembly.
    """

    v: Field2
    dv_dx: Field2
    T: float
    v0: float
    tilde: TildeProblem | None = field(default=None, repr=False)
    timechange: TimeChange | None = field(default=None, repr=False)

    def vhat(self, t, x):
        return self.v(np.asarray(t, float) * self.T, x)

    def dvhat_dx(self, t, x):
        return self.dv_dx(np.asarray(t, float) * self.T, x)


def to_tilde(p: FPProblem, convention: str = "paper-compat") -> TildeProblem:
    """Reverse and rescale time so the diffusion coefficient becomes one.

    With ``s(tt) = (2 / c) (Ttilde - tt)`` the original time, the boundaries
    are ``a = alpha(s)``, ``b = beta(s)`` and the drift is ``k mu(s, xt)``.

    ``paper-compat`` uses ``c = sigma``, ``k = 1`` and ``Ttilde = sigma tau / 2``.
    ``sde-consistent`` uses ``c = sigma^2``, ``k = 2 / sigma^2`` and
    ``Ttilde = sigma^2 tau / 2``, which is the backward equation of the SDE
    ``dX = mu dt + sigma dW``.
    """
    if convention == "paper-compat":
        c, k = p.sigma, 1.0
    elif convention == "sde-consistent":
        c, k = p.sigma**2, 2.0 / p.sigma**2
    else:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    Tt = c * p.tau / 2.0
    ds = -2.0 / c

    alpha, beta, mu = p.alpha, p.beta, p.mu
    dalpha = p.dalpha or _central_diff_curve(alpha)
    dbeta = p.dbeta or _central_diff_curve(beta)
    dmu_dx = p.dmu_dx or _central_diff_x(mu)

    def orig(tt):
        return (2.0 / c) * (Tt - np.asarray(tt, float))

    tp = TildeProblem(
        a=lambda tt: alpha(orig(tt)),
        b=lambda tt: beta(orig(tt)),
        da=lambda tt: ds * dalpha(orig(tt)),
        db=lambda tt: ds * dbeta(orig(tt)),
        vtilde=lambda tt, xt: k * mu(orig(tt), xt),
        dvtilde_dx=lambda tt, xt: k * dmu_dx(orig(tt), xt),
        Ttilde=Tt,
        convention=convention,
        time_scale=c,
        boundary_form=p.boundary_form,
    )
    ts = np.linspace(0.0, Tt, 257)
    if np.any(tp.width(ts) <= 0):
        raise ValueError("transformed boundaries satisfy a >= b somewhere on [0, Ttilde]")
    return tp


def _inverse_newton(theta, theta_prime, T, Tt, targets, tol=1e-14, maxiter=100):
    """Safeguarded Newton for ``theta(t) = targets`` on the bracket ``[0, T]``."""
    y = np.atleast_1d(np.asarray(targets, dtype=float))
    lo = np.zeros_like(y)
    hi = np.full_like(y, T)
    t = np.clip(y * (T / Tt), 0.0, T)
    for _ in range(maxiter):
        r = np.asarray(theta(t), float) - y
        lo = np.where(r < 0, t, lo)
        hi = np.where(r > 0, t, hi)
        d = np.asarray(theta_prime(t), float)
        step = np.where(d > 0, r / np.where(d > 0, d, 1.0), np.inf)
        t_new = t - step
        outside = ~((t_new > lo) & (t_new < hi))
        t_new = np.where(outside, 0.5 * (lo + hi), t_new)
        done = np.abs(t_new - t) <= tol * max(T, 1.0)
        t = t_new
        if np.all(done):
            break
    return t


def _collapsing_time_change(tp: TildeProblem, form: CollapsingBoundaries) -> TimeChange:
    c = tp.time_scale
    b0, T0, Tt = form.beta0, form.T0, tp.Ttilde
    D = c * T0 - 2.0 * Tt
    if D <= 0:
        raise ValueError(f"collapsing boundaries meet before the horizon (need Ttilde < c T0 / 2, got D={D})")
    K = b0**2 / (c * T0) ** 2
    T = c * T0 * Tt / (b0**2 * D)

    def theta(t):
        t = np.asarray(t, float)
        return b0**2 * D**2 * t / ((c * T0) ** 2 - 2.0 * b0**2 * D * t)

    def theta_prime(t):
        return K * (D + 2.0 * theta(t)) ** 2

    def theta_inv(tt):
        tt = np.asarray(tt, float)
        return (c * T0) ** 2 * tt / (b0**2 * D * (D + 2.0 * tt))

    return TimeChange(theta, theta_prime, theta_inv, T, Tt, method="collapsing")


def solve_time_change(
    tp: TildeProblem,
    ode_tol: float = 1e-10,
    max_span: float | None = None,
    analytic: bool = True,
) -> TimeChange:
    """Solve ``theta' = (b(theta) - a(theta))^2``, ``theta(0) = 0`` up to ``theta = Ttilde``.

    Parameters
    ----------
    tp : TildeProblem
        Problem supplying ``a``, ``b`` and ``Ttilde``.
    ode_tol : float
        Target accuracy of ``theta``; the integrator runs at ``ode_tol / 10``.
    max_span : float, optional
        Largest integration time before giving up; defaults to
        ``1e4 Ttilde / min(b - a)^2`` estimated on a coarse grid.
    analytic : bool
        Use closed forms when ``tp.boundary_form`` allows it.

    Returns
    -------
    TimeChange
        ``T`` is the time with ``theta(T) = Ttilde``.

    Raises
    ------
    RuntimeError
        If ``theta`` does not reach ``Ttilde`` within ``max_span``.
    """
    Tt = tp.Ttilde
    form = tp.boundary_form
    if analytic and isinstance(form, ConstantBoundaries):
        w2 = (form.hi - form.lo) ** 2
        return TimeChange(
            theta=lambda t: w2 * np.asarray(t, float),
            theta_prime=lambda t: np.full_like(np.asarray(t, float), w2),
            theta_inv=lambda tt: np.asarray(tt, float) / w2,
            T=Tt / w2,
            Ttilde=Tt,
            method="constant",
        )
    if analytic and isinstance(form, CollapsingBoundaries):
        return _collapsing_time_change(tp, form)

    def rhs(_t, y):
        return [float(tp.width(y[0])) ** 2]

    def reach(_t, y):
        return y[0] - Tt

    reach.terminal = True
    reach.direction = 1

    if max_span is None:
        wmin = float(np.min(tp.width(np.linspace(0.0, Tt, 129))))
        max_span = 1e4 * Tt / wmin**2
    sol = solve_ivp(
        rhs,
        (0.0, max_span),
        [0.0],
        method="DOP853",
        # a tenth of the tolerance leaves room for global error growth and the dense output
        rtol=0.1 * ode_tol,
        atol=0.1 * ode_tol * 1e-3 * Tt,
        dense_output=True,
        events=reach,
    )
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        raise RuntimeError(
            f"time change did not reach Ttilde={Tt} within span {max_span:.3g}; boundaries nearly touch?"
        )
    T = float(sol.t_events[0][0])
    dense = sol.sol

    def theta(t):
        t = np.asarray(t, float)
        out = np.minimum(dense(np.clip(t.ravel(), 0.0, T))[0], Tt).reshape(t.shape)
        return out if t.ndim else float(out)

    def theta_prime(t):
        return tp.width(theta(t)) ** 2

    def theta_inv(tt):
        scalar = np.ndim(tt) == 0
        out = _inverse_newton(theta, theta_prime, T, Tt, tt)
        return float(out[0]) if scalar else out.reshape(np.shape(tt))

    return TimeChange(theta, theta_prime, theta_inv, T, Tt, method="ode")


def transform_drift(tp: TildeProblem, tc: TimeChange) -> TransformedProblem:
    """Drift of the straightened problem.

    ``v(t, x) = w [vtilde(theta, xi) + (1 - x) a'(theta) + x b'(theta)]`` with
    ``w = b(theta) - a(theta)`` and ``xi = (1 - x) a(theta) + x b(theta)``.
    The spatial derivative is ``w [w dvtilde/dx(theta, xi) + b'(theta) - a'(theta)]``.
    """

    def v(t, x):
        th = tc.theta(t)
        x = np.asarray(x, float)
        a, b = tp.a(th), tp.b(th)
        w = b - a
        xi = (1.0 - x) * a + x * b
        return w * (tp.vtilde(th, xi) + (1.0 - x) * tp.da(th) + x * tp.db(th))

    def dv_dx(t, x):
        th = tc.theta(t)
        x = np.asarray(x, float)
        a, b = tp.a(th), tp.b(th)
        w = b - a
        xi = (1.0 - x) * a + x * b
        return w * (w * tp.dvtilde_dx(th, xi) + tp.db(th) - tp.da(th))

    v0 = float(v(0.0, 0.0))
    return TransformedProblem(v=v, dv_dx=dv_dx, T=float(tc.T), v0=v0, tilde=tp, timechange=tc)


def forward_point(tc: TimeChange, tp: TildeProblem, t, x):
    """Map ``(t, x)`` in the rectangle to ``(theta(t), xi(theta(t), x))``."""
    th = tc.theta(t)
    return th, (1.0 - np.asarray(x, float)) * tp.a(th) + np.asarray(x, float) * tp.b(th)


def pullback_point(tc: TimeChange, tp: TildeProblem, tt, xt, tol: float = 1e-12):
    """Inverse of :func:`forward_point`; rejects points outside the closed moving domain."""
    tt_arr = np.asarray(tt, float)
    xt_arr = np.asarray(xt, float)
    if np.any(tt_arr < -tol) or np.any(tt_arr > tp.Ttilde * (1 + tol) + tol):
        raise ValueError("time outside [0, Ttilde]")
    ttc = np.clip(tt_arr, 0.0, tp.Ttilde)
    a, b = np.asarray(tp.a(ttc), float), np.asarray(tp.b(ttc), float)
    scale = tol * np.maximum(1.0, b - a)
    if np.any(xt_arr < a - scale) or np.any(xt_arr > b + scale):
        raise ValueError("state outside the moving domain [a(tt), b(tt)]")
    t = tc.theta_inv(ttc)
    return t, (xt_arr - a) / (b - a)
