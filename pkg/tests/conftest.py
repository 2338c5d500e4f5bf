import numpy as np
import pytest

from fhtp.geometry import CollapsingBoundaries, ConstantBoundaries, FPProblem


def const(c):
    return lambda t: c + 0.0 * np.asarray(t, float)


def strip_problem(mu=0.0, lo=0.0, hi=1.0, tau=1.0, sigma=1.0, descriptor=True):
    """Constant drift between constant boundaries."""
    return FPProblem(
        mu=lambda t, x: mu + 0.0 * (np.asarray(t, float) + np.asarray(x, float)),
        dmu_dx=lambda t, x: 0.0 * (np.asarray(t, float) + np.asarray(x, float)),
        sigma=sigma,
        alpha=const(lo),
        beta=const(hi),
        dalpha=const(0.0),
        dbeta=const(0.0),
        tau=tau,
        boundary_form=ConstantBoundaries(lo, hi) if descriptor else None,
    )


def collapsing_problem(beta0=1.0, T0=3.0, tau=1.0, mu=0.0, sigma=1.0, descriptor=True):
    return FPProblem(
        mu=lambda t, x: mu + 0.0 * (np.asarray(t, float) + np.asarray(x, float)),
        dmu_dx=lambda t, x: 0.0 * (np.asarray(t, float) + np.asarray(x, float)),
        sigma=sigma,
        alpha=lambda t: beta0 * np.asarray(t, float) / (2 * T0),
        beta=lambda t: beta0 * (1 - np.asarray(t, float) / (2 * T0)),
        dalpha=const(beta0 / (2 * T0)),
        dbeta=const(-beta0 / (2 * T0)),
        tau=tau,
        boundary_form=CollapsingBoundaries(beta0, T0) if descriptor else None,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def record(request):
    """Store a one-line verdict for an acceptance criterion."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def rec(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[number] = line
        print(line)
        return ok

    return rec


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if store:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(store):
            terminalreporter.write_line(store[k])
