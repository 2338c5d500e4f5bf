"""Fast built-in checks with exactly known answers, run by ``fhtp selftest``."""
from __future__ import annotations

import math
from typing import Callable, TextIO

import numpy as np

from .fem import Mesh, assemble, solve_mrm, xnorm, assemble_norm, CoeffGrid
from .geometry import CollapsingBoundaries, ConstantBoundaries, FPProblem, solve_time_change, to_tilde, pullback_point
from .models import get_family, physical_params
from .oracles import CNConfig, MCConfig, cn_solve, mc_first_hit
from .refsol import ConstDriftSolution, eval_u_const, u_heat_layer
from .sparsegrid import cc_abscissae, sparse_points


def _unit_problem(tau=1.0, mu=0.0):
    return FPProblem(
        mu=lambda t, x: mu + 0.0 * x,
        sigma=1.0,
        alpha=lambda t: 0.0 * np.asarray(t, float),
        beta=lambda t: 1.0 + 0.0 * np.asarray(t, float),
        tau=tau,
        boundary_form=ConstantBoundaries(0.0, 1.0),
    )


def _collapsing():
    b0, T0 = 1.0, 3.0
    return FPProblem(
        mu=lambda t, x: 0.0 * x,
        sigma=1.0,
        alpha=lambda t: b0 * np.asarray(t, float) / (2 * T0),
        beta=lambda t: b0 * (1 - np.asarray(t, float) / (2 * T0)),
        tau=1.0,
        boundary_form=CollapsingBoundaries(b0, T0),
    )


def _check_ttilde():
    assert to_tilde(_unit_problem(tau=1.0)).Ttilde == 0.5


def _check_identity_time_change():
    tc = solve_time_change(to_tilde(_unit_problem()))
    assert tc.T == 0.5 and float(tc.theta(0.3)) == 0.3


def _check_collapsing_end_time():
    tc = solve_time_change(to_tilde(_collapsing()))
    assert abs(tc.T - 0.75) < 1e-14


def _check_pullback_identity():
    tp = to_tilde(_unit_problem())
    t, x = pullback_point(solve_time_change(tp), tp, 0.3, 0.4)
    assert abs(t - 0.3) < 1e-15 and abs(x - 0.4) < 1e-15


def _check_heat_layer():
    assert u_heat_layer(0.01, 0.0) == 1.0 and u_heat_layer(0.01, 10.0) < 1e-300


def _check_steady_state():
    assert abs(eval_u_const(ConstDriftSolution(0.0, 10.0), 10.0, 0.5) - 0.5) < 1e-12


def _check_trace_gram():
    sys = assemble(lambda t, x: 0.0 * x, 1.0, Mesh(2))
    assert abs(sys.C[0, 0] - 1.0 / 3.0) < 1e-15


def _check_zero_load():
    sys = assemble(lambda t, x: 0.0 * x, 1.0, Mesh(4))
    w = solve_mrm(sys, np.zeros(sys.mesh.n_test))
    assert not np.any(w.values)


def _check_zero_norm():
    mesh = Mesh(4)
    ns = assemble_norm(lambda t, x: 0.0 * x, 1.0, mesh)
    assert xnorm(CoeffGrid(np.zeros((5, 3)), mesh), ns) == 0.0


def _check_cc_levels():
    assert list(cc_abscissae(1)) == [0.0] and list(cc_abscissae(2)) == [-1.0, 0.0, 1.0]


def _check_sparse_count():
    assert len(sparse_points(2, 3)) == 5


def _check_parameter_map():
    m = get_family("hyperbolic")
    assert math.isclose(physical_params(m, [-1.0] * m.N)["mu0"], -1.97, rel_tol=1e-15)


def _check_immediate_absorption():
    assert mc_first_hit(_unit_problem(), 0.0, MCConfig(paths=100, dt=1e-2)) == (1.0, 0.0)


def _check_cn_zero_forcing():
    ref = ConstDriftSolution(1.5, 0.3)
    r = cn_solve(lambda t, x: 1.5 + 0.0 * x, 0.3, CNConfig(16, 16), homogeneous=True, refsol=ref)
    assert not np.any(r.u)


CHECKS: list[tuple[str, Callable[[], None]]] = [
    ("end time Ttilde = sigma tau / 2", _check_ttilde),
    ("unit-width boundaries give theta(t) = t", _check_identity_time_change),
    ("collapsing boundaries give T = 0.75", _check_collapsing_end_time),
    ("pullback is the identity for the unit strip", _check_pullback_identity),
    ("heat layer boundary and tail values", _check_heat_layer),
    ("zero-drift steady state 1 - x", _check_steady_state),
    ("initial trace Gram entry 1/3", _check_trace_gram),
    ("zero load gives zero solution", _check_zero_load),
    ("norm of zero is zero", _check_zero_norm),
    ("Clenshaw-Curtis levels 1 and 2", _check_cc_levels),
    ("sparse grid N=2, q=3 has 5 points", _check_sparse_count),
    ("parameter map lower corner", _check_parameter_map),
    ("start on the lower boundary is absorbed", _check_immediate_absorption),
    ("Crank-Nicolson with zero forcing stays zero", _check_cn_zero_forcing),
]


def run_checks(stream: TextIO) -> bool:
    ok = True
    for name, check in CHECKS:
        try:
            check()
        except Exception as exc:  # report every failure, keep going
            ok = False
            print(f"FAIL  {name}: {exc!r}", file=stream)
        else:
            print(f"PASS  {name}", file=stream)
    return ok
