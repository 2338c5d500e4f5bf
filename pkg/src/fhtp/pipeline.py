"""Glue between :mod:`fhtp.models` and :mod:`fhtp.fem`: one remainder solve per parameter point."""
from __future__ import annotations

from dataclasses import dataclass

from .fem import (
    FORCING_QUAD,
    FORCING_QUAD_FIRST_ROW,
    OPERATOR_QUAD,
    CoeffGrid,
    Mesh,
    SaddleSystem,
    SolveInfo,
    assemble,
    assemble_norm,
    assemble_rhs,
    choose_shift,
    prolong,
    solve_mrm,
    xnorm,
)
from .geometry import TransformedProblem
from .refsol import ConstDriftSolution, eval_u_const


@dataclass(frozen=True)
class SolverSettings:
    cg_tol: float = 1e-11
    quad: int = OPERATOR_QUAD
    forcing_quad: int = FORCING_QUAD
    forcing_quad_first_row: int = FORCING_QUAD_FIRST_ROW
    method: str = "auto"


def solve_remainder(
    tr: TransformedProblem,
    ref: ConstDriftSolution,
    n: int,
    settings: SolverSettings = SolverSettings(),
    info: SolveInfo | None = None,
) -> CoeffGrid:
    """Discrete remainder ``ehat_h`` on the ``n x n`` mesh, shift already undone."""
    mesh = Mesh(n)
    lam = choose_shift(tr.vhat, tr.dvhat_dx, tr.T)
    sys = assemble(tr.vhat, tr.T, mesh, lam=lam, quad=settings.quad)
    f = assemble_rhs(
        sys, ref, tr.vhat, tr.dvhat_dx, tr.v0, tr.T,
        quad=settings.forcing_quad, quad_first_row=settings.forcing_quad_first_row,
    )
    return solve_mrm(sys, f, tol=settings.cg_tol, method=settings.method, info=info)


def norm_system(tr: TransformedProblem, n: int, settings: SolverSettings = SolverSettings()) -> SaddleSystem:
    return assemble_norm(tr.vhat, tr.T, Mesh(n), quad=settings.quad)


def xdiff(fine: CoeffGrid, coarse: CoeffGrid, norm_sys: SaddleSystem) -> float:
    """``||fine - coarse||`` in the discrete norm of the finer mesh."""
    return xnorm(fine - prolong(coarse, fine.mesh), norm_sys)


def total_solution(tr: TransformedProblem, ref: ConstDriftSolution, e: CoeffGrid, t: float, x):
    """``ehat_h(t, x) + uhat(v0)(t, x)`` on the unit square."""
    return e(t, x) + eval_u_const(ref, t * tr.T, x)
