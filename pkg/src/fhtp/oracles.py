"""
Independent reference computations.

* :func:`cn_solve` -- Crank-Nicolson finite differences for the straightened
  problem on the unit square, either with the full data (``u = 1`` at
  ``x = 0``) or for the remainder with the forcing used by the space-time
  solver.
* :func:`mc_first_hit` -- Euler-Maruyama simulation of the hitting event
  with an optional Brownian-bridge crossing test.
* :func:`first_hitting_prob` -- the pipeline answer ``ehat_h + uhat(v0)`` at
  the transformed end time, mapped from a start state.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_banded

from .geometry import FPProblem
from .models import ModelFamily, instantiate, instantiate_problem, physical_params
from .pipeline import SolverSettings, solve_remainder
from .refsol import ConstDriftSolution, eval_u_const, eval_u_const_grid

RNG_ALGORITHM = "Philox4x64-10"


@dataclass(frozen=True)
class CNConfig:
    nx: int = 512
    nt: int = 512
    theta_scheme: float = 0.5
    rannacher_steps: int = 2

    def __post_init__(self):
        if self.nx < 4 or self.nt < 4:
            raise ValueError("nx and nt must be >= 4")
        if self.theta_scheme != 0.5:
            raise ValueError("only theta_scheme = 1/2 is supported")


@dataclass(frozen=True)
class CNResult:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray  # shape (nt + 1, nx + 1)

    def at_final(self, x) -> np.ndarray:
        """Linear interpolation of the last time row."""
        return np.interp(x, self.x, self.u[-1])


def _operator_bands(v: np.ndarray, T: float, dx: float):
    # interior rows of L u = T (u_xx + v u_x): sub, diag, super
    lo = T * (1.0 / dx**2 - v / (2.0 * dx))
    di = np.full_like(v, -2.0 * T / dx**2)
    up = T * (1.0 / dx**2 + v / (2.0 * dx))
    return lo, di, up


def cn_solve(
    vhat,
    T: float,
    cfg: CNConfig = CNConfig(),
    homogeneous: bool = False,
    v0: float | None = None,
    refsol: ConstDriftSolution | None = None,
    dvhat_dx=None,
) -> CNResult:
    """Solve ``u_t = T (u_xx + vhat u_x) + g`` on ``[0, 1]^2``.

    ``homogeneous=False``: ``u(t, 0) = 1``, ``u(t, 1) = 0``, ``u(0, x) = 0`` and
    ``g = 0``.  ``homogeneous=True``: zero data and the remainder forcing
    ``g = T (vhat - v0) d_x uhat(v0)``, with ``d_x uhat`` by central differences
    of the reference solution (``refsol`` is then required).  ``dvhat_dx`` is
    accepted for signature symmetry with the load assembly and unused.

    The first ``rannacher_steps`` steps are each replaced by two backward
    Euler half steps to damp the corner discontinuity.
    """
    nx, nt = cfg.nx, cfg.nt
    x = np.linspace(0.0, 1.0, nx + 1)
    t = np.linspace(0.0, 1.0, nt + 1)
    dx = 1.0 / nx
    xi = x[1:-1]
    if homogeneous and refsol is None:
        raise ValueError("homogeneous=True needs refsol for the forcing")
    if homogeneous and v0 is None:
        v0 = refsol.v0

    def drift(tk):
        return np.broadcast_to(np.asarray(vhat(tk, xi), float), xi.shape)

    def forcing(tk):
        if not homogeneous or tk <= 0.0:
            return np.zeros_like(xi)
        ur = eval_u_const(refsol, tk * T, x)
        dux = (ur[2:] - ur[:-2]) / (2.0 * dx)
        return T * (drift(tk) - v0) * dux

    bc_left = 0.0 if homogeneous else 1.0
    u = np.zeros((nt + 1, nx + 1))
    u[0, 0] = bc_left
    cur = u[0].copy()

    def implicit(cur, t0, t1, weight):
        # (I - weight dt L(t1)) new = (I + (1 - weight) dt L(t0)) cur + dt [w g1 + (1-w) g0]
        h = t1 - t0
        lo1, di1, up1 = _operator_bands(drift(t1), T, dx)
        rhs = cur[1:-1].copy()
        if weight < 1.0:
            lo0, di0, up0 = _operator_bands(drift(t0), T, dx)
            c = (1.0 - weight) * h
            rhs += c * (lo0 * cur[:-2] + di0 * cur[1:-1] + up0 * cur[2:])
            rhs += c * forcing(t0)
        rhs += weight * h * forcing(t1)
        rhs[0] += weight * h * lo1[0] * bc_left
        ab = np.zeros((3, nx - 1))
        ab[0, 1:] = -weight * h * up1[:-1]
        ab[1] = 1.0 - weight * h * di1
        ab[2, :-1] = -weight * h * lo1[1:]
        new = np.empty_like(cur)
        new[0], new[-1] = bc_left, 0.0
        try:
            new[1:-1] = solve_banded((1, 1), ab, rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise RuntimeError(f"tridiagonal solve failed: {exc}") from exc
        if not np.all(np.isfinite(new)):
            raise RuntimeError("tridiagonal solve produced non-finite values")
        return new

    for k in range(nt):
        t0, t1 = t[k], t[k + 1]
        if k < cfg.rannacher_steps:
            tm = 0.5 * (t0 + t1)
            cur = implicit(cur, t0, tm, 1.0)
            cur = implicit(cur, tm, t1, 1.0)
        else:
            cur = implicit(cur, t0, t1, 0.5)
        u[k + 1] = cur
    return CNResult(t=t, x=x, u=u)


@dataclass(frozen=True)
class MCConfig:
    paths: int = 200_000
    dt: float = 1e-4
    seed: int = 0
    bridge_correction: bool = True
    chunk: int = 50_000
    threads: int = 1

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.chunk < 1 or self.threads < 1:
            raise ValueError("chunk and threads must be >= 1")


def _simulate_chunk(p: FPProblem, y: float, n: int, cfg: MCConfig, seq: np.random.SeedSequence) -> int:
    """Number of paths absorbed at the lower boundary before the horizon or the upper boundary."""
    rng = np.random.Generator(np.random.Philox(seq))
    sig = p.sigma
    x = np.full(n, float(y))
    a0, b0 = float(p.alpha(0.0)), float(p.beta(0.0))
    hits = 0
    lower = x <= a0
    hits += int(lower.sum())
    alive = ~lower & (x < b0)
    x = x[alive]
    n_steps = int(np.ceil(p.tau / cfg.dt - 1e-9))
    t = 0.0
    for k in range(n_steps):
        if x.size == 0:
            break
        t1 = min((k + 1) * cfg.dt, p.tau)
        h = t1 - t
        xn = x + np.asarray(p.mu(t, x), float) * h + sig * np.sqrt(h) * rng.standard_normal(x.size)
        a1, b1 = float(p.alpha(t1)), float(p.beta(t1))
        lo = xn <= a1
        hi = ~lo & (xn >= b1)
        if cfg.bridge_correction:
            a_t, b_t = float(p.alpha(t)), float(p.beta(t))
            s2h = sig * sig * h
            d_lo = (x - a_t) * (xn - a1)
            d_hi = (b_t - x) * (b1 - xn)
            # crossing probabilities below exp(-40) are skipped
            near = np.flatnonzero(~(lo | hi) & (np.minimum(d_lo, d_hi) < 20.0 * s2h))
            if near.size:
                u = rng.random((2, near.size))
                p_lo = np.exp(-2.0 * np.maximum(d_lo[near], 0.0) / s2h)
                p_hi = np.exp(-2.0 * np.maximum(d_hi[near], 0.0) / s2h)
                cross_lo = u[0] < p_lo
                cross_hi = ~cross_lo & (u[1] < p_hi)
                lo[near[cross_lo]] = True
                hi[near[cross_hi]] = True
        hits += int(lo.sum())
        keep = ~(lo | hi)
        x = xn[keep]
        t = t1
    return hits


def mc_first_hit(p: FPProblem, y: float, cfg: MCConfig = MCConfig()) -> tuple[float, float]:
    """Monte Carlo estimate of ``P[lower boundary hit before min(tau, upper hit)]``.

    Paths are split into chunks of ``cfg.chunk``; chunk ``c`` draws from a
    Philox generator seeded by the ``c``-th spawned child of ``cfg.seed``, so
    the estimate depends only on the seed and not on ``cfg.threads``.
    """
    a0, b0 = float(p.alpha(0.0)), float(p.beta(0.0))
    if not a0 <= y <= b0:
        raise ValueError(f"start state {y} outside [{a0}, {b0}]")
    sizes = [cfg.chunk] * (cfg.paths // cfg.chunk)
    if cfg.paths % cfg.chunk:
        sizes.append(cfg.paths % cfg.chunk)
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    jobs = list(zip(sizes, seqs))
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            counts = list(ex.map(lambda j: _simulate_chunk(p, y, j[0], cfg, j[1]), jobs))
    else:
        counts = [_simulate_chunk(p, y, n, cfg, s) for n, s in jobs]
    phat = sum(counts) / cfg.paths
    se = float(np.sqrt(phat * (1.0 - phat) / cfg.paths))
    return phat, se


def sde_equivalent(p: FPProblem, convention: str) -> FPProblem:
    """The diffusion whose hitting probability the given convention computes.

    ``sde-consistent`` describes ``dX = mu dt + sigma dW`` itself.  Under
    ``paper-compat`` the backward equation ``u_t = u_xx + mu u_x`` on
    ``[0, sigma tau / 2]`` is the law of ``dX = (sigma mu / 2) dt + sqrt(sigma) dW``.
    """
    if convention == "sde-consistent":
        return p
    if convention != "paper-compat":
        raise ValueError(f"unknown convention {convention!r}")
    s = p.sigma
    mu, dmu = p.mu, p.dmu_dx
    return replace(
        p,
        mu=lambda t, x: 0.5 * s * np.asarray(mu(t, x), float),
        dmu_dx=None if dmu is None else (lambda t, x: 0.5 * s * np.asarray(dmu(t, x), float)),
        sigma=float(np.sqrt(s)),
    )


def problem_hitting_prob(
    p: FPProblem,
    y: float,
    n: int = 64,
    convention: str = "paper-compat",
    settings: SolverSettings = SolverSettings(),
) -> float:
    """Pipeline probability for an arbitrary hitting problem started at ``y``."""
    a0, b0 = float(p.alpha(0.0)), float(p.beta(0.0))
    if not a0 <= y <= b0:
        raise ValueError(f"start state {y} outside [{a0}, {b0}]")
    xs = (y - a0) / (b0 - a0)
    tr, ref = instantiate_problem(p, convention)
    e = solve_remainder(tr, ref, n, settings)
    return float(e(1.0, xs) + eval_u_const(ref, tr.T, xs))


def first_hitting_prob(
    m: ModelFamily,
    rho,
    y: float,
    n: int = 64,
    convention: str = "paper-compat",
    settings: SolverSettings = SolverSettings(),
) -> float:
    """``ehat_h(1, x*) + uhat(v0)(1, x*)`` with ``x* = (y - alpha(0)) / (beta(0) - alpha(0))``."""
    return problem_hitting_prob(m.problem(physical_params(m, rho)), y, n, convention, settings)


def first_hitting_profile(
    m: ModelFamily,
    rho,
    xs,
    n: int = 64,
    convention: str = "paper-compat",
    settings: SolverSettings = SolverSettings(),
) -> np.ndarray:
    """Total solution at the transformed end time for unit-interval states ``xs``."""
    tr, ref = instantiate(m, rho, convention)
    e = solve_remainder(tr, ref, n, settings)
    xs = np.asarray(xs, float)
    return e(1.0, xs) + eval_u_const_grid(ref, [tr.T], xs)[0]
