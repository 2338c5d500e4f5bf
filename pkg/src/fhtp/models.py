"""
Decision-model families and their parameter boxes.

Each family maps a point ``rho`` of the cube ``[-1, 1]^N`` affinely onto a
box of physical parameters, builds the hitting problem with ``sigma = 1``
and pushes it through :mod:`fhtp.geometry` to a unit-time drift.

hyperbolic
    ``mu(t, x) = mu0 + mu1 t / (t + t0)``, boundaries ``0`` and ``beta0``.
linear_drift
    ``mu(t, x) = mu0 + mu1 (beta0 - x)``, boundaries ``0`` and ``beta0``, ``tau = 2.5``.
collapsing
    ``mu = mu0``, boundaries ``beta0 t / (2 T0)`` and ``beta0 (1 - t / (2 T0))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    CollapsingBoundaries,
    ConstantBoundaries,
    FPProblem,
    TransformedProblem,
    solve_time_change,
    to_tilde,
    transform_drift,
)
from .refsol import ConstDriftSolution


@dataclass(frozen=True)
class ParameterBox:
    names: tuple[str, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.lo) == len(self.hi)):
            raise ValueError("names, lo and hi must have equal length")
        if any(lo >= hi for lo, hi in zip(self.lo, self.hi)):
            raise ValueError("each lower bound must be below its upper bound")

    @property
    def N(self) -> int:
        return len(self.names)

    def to_physical(self, rho) -> dict[str, float]:
        rho = np.asarray(rho, dtype=float).reshape(-1)
        if rho.size != self.N:
            raise ValueError(f"expected {self.N} parameters, got {rho.size}")
        if np.any(np.abs(rho) > 1.0 + 1e-14):
            raise ValueError(f"rho={rho.tolist()} lies outside [-1, 1]^{self.N}")
        lo, hi = np.array(self.lo), np.array(self.hi)
        vals = 0.5 * (lo + hi) + rho * 0.5 * (hi - lo)
        return dict(zip(self.names, (float(v) for v in vals)))


@dataclass(frozen=True)
class ModelFamily:
    name: str
    box: ParameterBox
    sigma: float = 1.0
    fixed: dict[str, float] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.box.N

    def with_ranges(self, ranges: dict[str, tuple[float, float]]) -> "ModelFamily":
        """Copy with some parameter ranges overridden."""
        unknown = set(ranges) - set(self.box.names)
        if unknown:
            raise ValueError(f"unknown parameters for {self.name}: {sorted(unknown)}")
        lo = tuple(ranges.get(n, (l, h))[0] for n, l, h in zip(self.box.names, self.box.lo, self.box.hi))
        hi = tuple(ranges.get(n, (l, h))[1] for n, l, h in zip(self.box.names, self.box.lo, self.box.hi))
        return replace(self, box=ParameterBox(self.box.names, lo, hi))

    def problem(self, params: dict[str, float]) -> FPProblem:
        """Hitting problem for named physical parameters."""
        q = {**self.fixed, **params}
        sigma = self.sigma
        if self.name == "hyperbolic":
            mu0, mu1, t0, b0 = q["mu0"], q["mu1"], q["t0"], q["beta0"]
            return FPProblem(
                mu=lambda t, x: mu0 + mu1 * t / (t + t0) + 0.0 * x,
                dmu_dx=lambda t, x: 0.0 * (t + x),
                sigma=sigma,
                alpha=lambda t: 0.0 * np.asarray(t, float),
                beta=lambda t: b0 + 0.0 * np.asarray(t, float),
                dalpha=lambda t: 0.0 * np.asarray(t, float),
                dbeta=lambda t: 0.0 * np.asarray(t, float),
                tau=q["tau"],
                boundary_form=ConstantBoundaries(0.0, b0),
            )
        if self.name == "linear_drift":
            mu0, mu1, b0 = q["mu0"], q["mu1"], q["beta0"]
            return FPProblem(
                mu=lambda t, x: mu0 + mu1 * (b0 - x) + 0.0 * t,
                dmu_dx=lambda t, x: -mu1 + 0.0 * (t + x),
                sigma=sigma,
                alpha=lambda t: 0.0 * np.asarray(t, float),
                beta=lambda t: b0 + 0.0 * np.asarray(t, float),
                dalpha=lambda t: 0.0 * np.asarray(t, float),
                dbeta=lambda t: 0.0 * np.asarray(t, float),
                tau=q["tau"],
                boundary_form=ConstantBoundaries(0.0, b0),
            )
        if self.name == "collapsing":
            mu0, b0, T0 = q["mu0"], q["beta0"], q["T0"]
            return FPProblem(
                mu=lambda t, x: mu0 + 0.0 * (t + x),
                dmu_dx=lambda t, x: 0.0 * (t + x),
                sigma=sigma,
                alpha=lambda t: b0 * np.asarray(t, float) / (2.0 * T0),
                beta=lambda t: b0 * (1.0 - np.asarray(t, float) / (2.0 * T0)),
                dalpha=lambda t: b0 / (2.0 * T0) + 0.0 * np.asarray(t, float),
                dbeta=lambda t: -b0 / (2.0 * T0) + 0.0 * np.asarray(t, float),
                tau=q["tau"],
                boundary_form=CollapsingBoundaries(b0, T0),
            )
        raise ValueError(f"unknown model family {self.name!r}")


FAMILIES: dict[str, ModelFamily] = {
    "hyperbolic": ModelFamily(
        "hyperbolic",
        ParameterBox(
            ("mu0", "mu1", "t0", "beta0", "tau"),
            (-1.97, -2.31, 0.13, 1.38, 0.1),
            (-1.64, -0.99, 0.40, 2.26, 2.5),
        ),
    ),
    "linear_drift": ModelFamily(
        "linear_drift",
        ParameterBox(("mu0", "mu1", "beta0"), (-2.0, -4.0, 0.5), (2.0, 4.0, 2.0)),
        fixed={"tau": 2.5},
    ),
    "collapsing": ModelFamily(
        "collapsing",
        ParameterBox(
            ("mu0", "beta0", "T0", "tau"),
            (-5.86, 0.56, 3.0, 0.1),
            (0.0, 3.93, 20.0, 2.5),
        ),
    ),
}


def get_family(name: str) -> ModelFamily:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown model family {name!r}; choose from {sorted(FAMILIES)}") from None


def physical_params(m: ModelFamily, rho) -> dict[str, float]:
    """Affine image of ``rho`` in the family's box, plus fixed parameters."""
    return {**m.fixed, **m.box.to_physical(rho)}


def instantiate(
    m: ModelFamily,
    rho,
    convention: str = "paper-compat",
    ode_tol: float = 1e-10,
    spectral_tol: float = 1e-10,
) -> tuple[TransformedProblem, ConstDriftSolution]:
    """Transformed drift on the rectangle and the matching constant-drift reference."""
    params = physical_params(m, rho)
    if m.name == "collapsing":
        # boundaries meet at t = T0; the horizon must stay below
        if not params["tau"] < params["T0"]:
            raise ValueError(f"collapsing boundaries meet before tau: tau={params['tau']}, T0={params['T0']}")
    return instantiate_problem(m.problem(params), convention, ode_tol, spectral_tol)


def instantiate_problem(
    p: FPProblem,
    convention: str = "paper-compat",
    ode_tol: float = 1e-10,
    spectral_tol: float = 1e-10,
) -> tuple[TransformedProblem, ConstDriftSolution]:
    """Same as :func:`instantiate` for an arbitrary hitting problem."""
    tp = to_tilde(p, convention)
    tc = solve_time_change(tp, ode_tol=ode_tol)
    tr = transform_drift(tp, tc)
    ref = ConstDriftSolution(v0=tr.v0, T=tr.T, spectral_tol=spectral_tol)
    return tr, ref
