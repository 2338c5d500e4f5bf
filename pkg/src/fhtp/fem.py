"""
Space-time minimal residual discretisation on the unit square.

Solves the homogeneous-data problem

    d_t e = T (e_xx + vhat e_x) + f,   e(t, 0) = e(t, 1) = 0,   e(0, x) = 0

by minimising ``||B w - f||^2_{Y_h'} + ||w(0, .)||^2_{L2}`` over the trial
space ``X_h`` of continuous piecewise bilinears vanishing at ``x = 0, 1``.
The test space ``Y_h`` is piecewise linear and discontinuous in time,
tensorised with the same spatial hats, so that ``X_h`` is a subspace of it.
Both spaces use the same local basis ``{1 - s, s}`` in time on each cell,
which makes the inclusion explicit.

Degree-of-freedom layout
------------------------
trial ``(k, j)``    -> ``k (n - 1) + j - 1``,        k = 0..n, j = 1..n-1
test  ``(k, p, j)`` -> ``(2k + p) (n - 1) + j - 1``, k = 0..n-1, p = 0, 1
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .refsol import ConstDriftSolution, eval_u_const_grid

logger = logging.getLogger(__name__)

Field2 = Callable[[np.ndarray, np.ndarray], np.ndarray]

OPERATOR_QUAD = 3
FORCING_QUAD = 3
FORCING_QUAD_FIRST_ROW = 6
DENSE_MAX_N = 8


class AssemblyError(RuntimeError):
    """Raised for inconsistent inputs or a singular reduced system."""


@dataclass(frozen=True)
class Mesh:
    """Uniform ``n x n`` tensor mesh of the unit space-time square."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"mesh needs an integer n >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_trial(self) -> int:
        return (self.n + 1) * (self.n - 1)

    @property
    def n_test(self) -> int:
        return 2 * self.n * (self.n - 1)

    @property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 1)

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 1)


@dataclass(frozen=True)
class CoeffGrid:
    """Nodal values of a trial function; boundary columns ``x = 0, 1`` are implicitly zero."""

    values: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        shape = (self.mesh.n + 1, self.mesh.n - 1)
        if self.values.shape != shape:
            raise ValueError(f"coefficient array has shape {self.values.shape}, expected {shape}")

    @classmethod
    def from_vector(cls, vec, mesh: Mesh) -> "CoeffGrid":
        return cls(np.asarray(vec, float).reshape(mesh.n + 1, mesh.n - 1), mesh)

    @property
    def vector(self) -> np.ndarray:
        return self.values.ravel()

    def full(self) -> np.ndarray:
        """Nodal values including the zero boundary columns, shape ``(n+1, n+1)``."""
        return np.pad(self.values, ((0, 0), (1, 1)))

    def __call__(self, t, x):
        """Bilinear evaluation at points ``(t, x)`` (broadcast)."""
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        n = self.mesh.n
        st, sx = np.clip(t, 0, 1) * n, np.clip(x, 0, 1) * n
        k = np.minimum(st.astype(int), n - 1)
        j = np.minimum(sx.astype(int), n - 1)
        a, b = st - k, sx - j
        F = self.full()
        return (
            (1 - a) * (1 - b) * F[k, j]
            + (1 - a) * b * F[k, j + 1]
            + a * (1 - b) * F[k + 1, j]
            + a * b * F[k + 1, j + 1]
        )

    def __add__(self, other: "CoeffGrid") -> "CoeffGrid":
        _check_same_mesh(self, other)
        return CoeffGrid(self.values + other.values, self.mesh)

    def __sub__(self, other: "CoeffGrid") -> "CoeffGrid":
        _check_same_mesh(self, other)
        return CoeffGrid(self.values - other.values, self.mesh)

    def __mul__(self, c: float) -> "CoeffGrid":
        return CoeffGrid(self.values * c, self.mesh)

    __rmul__ = __mul__


def _check_same_mesh(a: CoeffGrid, b: CoeffGrid):
    if a.mesh != b.mesh:
        raise ValueError(f"coefficient grids live on different meshes (n={a.mesh.n} vs n={b.mesh.n})")


@dataclass
class SaddleSystem:
    """Blocks of the minimal residual normal equations.

    ``A_s`` (test x test) is the Gram matrix of the test-space energy inner
    product, ``B`` (test x trial) the space-time operator, ``C`` (trial x
    trial) the initial-trace Gram matrix and ``f`` the test-space load.
    """

    mesh: Mesh
    A_s: sp.csc_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    lam: float = 0.0
    T: float = 1.0
    f: np.ndarray | None = None
    _lu: object = field(default=None, repr=False)

    def A_solve(self, r: np.ndarray) -> np.ndarray:
        if self._lu is None:
            self._lu = spla.splu(sp.csc_matrix(self.A_s))
        return self._lu.solve(r)

    def with_rhs(self, f: np.ndarray) -> "SaddleSystem":
        if f.shape != (self.mesh.n_test,):
            raise ValueError(f"load vector has shape {f.shape}, expected ({self.mesh.n_test},)")
        return replace(self, f=np.asarray(f, float))


def gauss_unit(nq: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on ``[0, 1]``."""
    s, w = np.polynomial.legendre.leggauss(nq)
    return 0.5 * (s + 1.0), 0.5 * w


def _local_basis(nq: int):
    s, w = gauss_unit(nq)
    L = np.stack([1.0 - s, s], axis=1)  # (nq, 2)
    return s, w, L


def _test_rows(n: int):
    """Row indices for local test blocks indexed ``[k, j, p, r]`` plus validity mask."""
    k = np.arange(n)[:, None, None, None]
    j = np.arange(n)[None, :, None, None]
    p = np.arange(2)[None, None, :, None]
    r = np.arange(2)[None, None, None, :]
    jj = j + r
    idx = (2 * k + p) * (n - 1) + jj - 1
    valid = (jj >= 1) & (jj <= n - 1)
    return np.broadcast_to(idx, (n, n, 2, 2)), np.broadcast_to(valid, (n, n, 2, 2))


def _trial_cols(n: int):
    """Column indices for local trial blocks indexed ``[k, j, c, d]`` plus validity mask."""
    k = np.arange(n)[:, None, None, None]
    j = np.arange(n)[None, :, None, None]
    c = np.arange(2)[None, None, :, None]
    d = np.arange(2)[None, None, None, :]
    jj = j + d
    idx = (k + c) * (n - 1) + jj - 1
    valid = (jj >= 1) & (jj <= n - 1)
    return np.broadcast_to(idx, (n, n, 2, 2)), np.broadcast_to(valid, (n, n, 2, 2))


def _scatter(local, rows, rvalid, cols, cvalid, shape):
    """Assemble ``local[k, j, p, r, c, d]`` into a sparse matrix."""
    n = local.shape[0]
    R = np.broadcast_to(rows[:, :, :, :, None, None], (n, n, 2, 2, 2, 2))
    Cc = np.broadcast_to(cols[:, :, None, None, :, :], (n, n, 2, 2, 2, 2))
    mask = rvalid[:, :, :, :, None, None] & cvalid[:, :, None, None, :, :]
    M = sp.coo_matrix((local[mask], (R[mask], Cc[mask])), shape=shape)
    return M.tocsr()


def _eval_on_cells(func: Field2, mesh: Mesh, nq: int, t_cells=None):
    """Values of ``func`` at tensor Gauss points, shape ``(kt, nq, n, nq)``."""
    n, h = mesh.n, mesh.h
    s, _ = gauss_unit(nq)
    if t_cells is None:
        t_cells = np.arange(n)
    tq = ((np.asarray(t_cells)[:, None] + s[None, :]) * h).ravel()
    xq = ((np.arange(n)[:, None] + s[None, :]) * h).ravel()
    vals = np.asarray(func(tq[:, None], xq[None, :]), float)
    vals = np.broadcast_to(vals, (tq.size, xq.size))
    return vals.reshape(len(t_cells), nq, n, nq), tq.reshape(len(t_cells), nq), xq.reshape(n, nq)


def sup_norm(func: Field2, n_sample: int = 65) -> float:
    g = np.linspace(0.0, 1.0, n_sample)
    return float(np.max(np.abs(np.broadcast_to(func(g[:, None], g[None, :]), (n_sample, n_sample)))))


def needs_shift(vhat: Field2, dvhat_dx: Field2 | None, n_sample: int = 65) -> bool:
    """Whether ``int eta'^2 - vhat eta' eta`` may fail to be coercive on ``H^1_0``.

    Coercive if ``||vhat||_inf / pi < 0.9`` or if the symmetric part
    ``int eta'^2 + dvhat_dx eta^2 / 2`` keeps at least a tenth of the Poincare
    constant, i.e. ``min dvhat_dx >= -1.8 pi^2``.
    """
    if sup_norm(vhat, n_sample) / np.pi < 0.9:
        return False
    if dvhat_dx is None:
        return True
    g = np.linspace(0.0, 1.0, n_sample)
    dmin = float(np.min(np.broadcast_to(dvhat_dx(g[:, None], g[None, :]), (n_sample, n_sample))))
    return dmin < -1.8 * np.pi**2


def choose_shift(vhat: Field2, dvhat_dx: Field2 | None, T: float, n_sample: int = 65) -> float:
    """Exponential shift: 0 when coercive, otherwise ``T ||vhat||^2 / 4 + 1``."""
    if not needs_shift(vhat, dvhat_dx, n_sample):
        return 0.0
    return T * sup_norm(vhat, n_sample) ** 2 / 4.0 + 1.0


def assemble(
    vhat: Field2,
    T: float,
    mesh: Mesh,
    lam: float = 0.0,
    quad: int = OPERATOR_QUAD,
    strict: bool = False,
    dvhat_dx: Field2 | None = None,
) -> SaddleSystem:
    """Assemble ``A_s``, ``B`` and ``C`` (no load).

    ``B`` encodes ``int int d_t w z + T (w_x z_x - vhat w_x z) + lam w z`` and
    ``A_s`` the symmetric part ``T (z_x zb_x - vhat (z_x zb + z zb_x) / 2) + lam z zb``.
    With ``strict=True`` a zero shift is rejected when coercivity of the
    spatial form is not guaranteed.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if strict and lam == 0.0 and needs_shift(vhat, dvhat_dx):
        raise AssemblyError("spatial form may not be coercive; use a positive shift lam")
    n, h = mesh.n, mesh.h
    _, w, L = _local_basis(quad)
    dL = np.array([-1.0, 1.0]) / h
    hw = h * w
    # 1D element matrices: M[p, c] = int L_p L_c, D[p, c] = int L_p L_c'
    M1 = np.einsum("a,ap,ac->pc", hw, L, L)
    D1 = np.einsum("a,ap,c->pc", hw, L, dL)
    K1 = np.outer(dL, dL) * h

    V, _, _ = _eval_on_cells(vhat, mesh, quad)  # (k, a, j, b)
    # W[k, j, p, c, r] = int int V L_p L_c N_r; spatial hat slopes are constant per cell
    W = np.einsum("kajb,a,b,ap,ac,br->kjpcr", V, hw, hw, L, L, L, optimize=True)

    # local B[k, j, p, r, c, d]: test (p, r), trial (c, d)
    base = (
        np.einsum("pc,rd->prcd", D1, M1)
        + T * np.einsum("pc,rd->prcd", M1, K1)
        + lam * np.einsum("pc,rd->prcd", M1, M1)
    )
    Bloc = base[None, None] - T * np.einsum("kjpcr,d->kjprcd", W, dL)

    # local A_s over test x test: -T/2 int int V (z_x zb + z zb_x)
    baseA = T * np.einsum("pc,rd->prcd", M1, K1) + lam * np.einsum("pc,rd->prcd", M1, M1)
    z_x = np.einsum("kjpcd,r->kjprcd", W, dL)
    zb_x = np.einsum("kjpcr,d->kjprcd", W, dL)
    Aloc = baseA[None, None] - 0.5 * T * (z_x + zb_x)

    trows, tvalid = _test_rows(n)
    tcols, cvalid = _trial_cols(n)
    B = _scatter(Bloc, trows, tvalid, tcols, cvalid, (mesh.n_test, mesh.n_trial))
    A_s = _scatter(Aloc, trows, tvalid, trows, tvalid, (mesh.n_test, mesh.n_test)).tocsc()
    C = initial_trace_gram(mesh)
    return SaddleSystem(mesh=mesh, A_s=A_s, B=B, C=C, lam=float(lam), T=float(T))


def initial_trace_gram(mesh: Mesh) -> sp.csr_matrix:
    """``C_ij = int psi_j(0, x) psi_i(0, x) dx``; nonzero only on the ``t = 0`` trial nodes."""
    n, h = mesh.n, mesh.h
    m = n - 1
    Mx = sp.diags([np.full(m - 1, h / 6), np.full(m, 2 * h / 3), np.full(m - 1, h / 6)], [-1, 0, 1])
    C = sp.lil_matrix((mesh.n_trial, mesh.n_trial))
    C[:m, :m] = Mx
    return C.tocsr()


def assemble_norm(vhat: Field2, T: float, mesh: Mesh, quad: int = OPERATOR_QUAD) -> SaddleSystem:
    """System for the discrete ``X``-norm: ``B`` with zero shift, ``A`` the plain stiffness Gram."""
    sys = assemble(vhat, T, mesh, lam=0.0, quad=quad)
    n, h = mesh.n, mesh.h
    _, w, L = _local_basis(quad)
    dL = np.array([-1.0, 1.0]) / h
    M1 = np.einsum("a,ap,ac->pc", h * w, L, L)
    K1 = np.outer(dL, dL) * h
    loc = np.broadcast_to(np.einsum("pc,rd->prcd", M1, K1), (n, n, 2, 2, 2, 2))
    rows, valid = _test_rows(n)
    A = _scatter(np.ascontiguousarray(loc), rows, valid, rows, valid, (mesh.n_test, mesh.n_test))
    return SaddleSystem(mesh=mesh, A_s=A.tocsc(), B=sys.B, C=sys.C, lam=0.0, T=float(T))


def _rhs_rows(
    mesh: Mesh,
    cells: np.ndarray,
    nq: int,
    uref_grid: Callable[[np.ndarray, np.ndarray], np.ndarray],
    vhat: Field2,
    dvhat_dx: Field2,
    v0: float,
    T: float,
    lam: float,
) -> np.ndarray:
    n, h = mesh.n, mesh.h
    _, w, L = _local_basis(nq)
    dL = np.array([-1.0, 1.0]) / h
    hw = h * w
    V, tq, xq = _eval_on_cells(vhat, mesh, nq, cells)
    DV, _, _ = _eval_on_cells(dvhat_dx, mesh, nq, cells)
    G = np.asarray(uref_grid(tq.ravel(), xq.ravel()), float).reshape(V.shape)
    G = G * np.exp(-lam * tq)[:, :, None, None]
    # f[k, j, p, r] = T int int G (-DV L_p N_r - (V - v0) L_p dN_r)
    mass = np.einsum("kajb,a,b,ap,br->kjpr", -G * DV, hw, hw, L, L, optimize=True)
    adv = np.einsum("kajb,a,b,ap->kjp", -G * (V - v0), hw, hw, L, optimize=True)
    # the dN_r factor is constant per cell, so only the b-sum of the rest is needed
    loc = T * (mass + adv[..., None] * dL[None, None, None, :])
    return loc


def assemble_rhs(
    sys: SaddleSystem,
    refsol: ConstDriftSolution | None,
    vhat: Field2,
    dvhat_dx: Field2,
    v0: float,
    T: float,
    quad: int = FORCING_QUAD,
    quad_first_row: int = FORCING_QUAD_FIRST_ROW,
    uref_grid: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Load vector ``f_i = T int int uhat(v0) (-d_x vhat phi_i - (vhat - v0) d_x phi_i) e^{-lam t}``.

    ``uhat(v0)(t, x) = u(v0)(t T, x)`` comes from ``refsol`` unless an explicit
    ``uref_grid(ts, xs) -> matrix`` is passed.
    """
    mesh = sys.mesh
    n = mesh.n
    if uref_grid is None:
        if refsol is None:
            raise ValueError("either refsol or uref_grid is required")

        def uref_grid(ts, xs):
            return eval_u_const_grid(refsol, np.asarray(ts) * T, xs)

    loc = np.empty((n, n, 2, 2))
    loc[:1] = _rhs_rows(mesh, np.arange(1), quad_first_row, uref_grid, vhat, dvhat_dx, v0, T, sys.lam)
    loc[1:] = _rhs_rows(mesh, np.arange(1, n), quad, uref_grid, vhat, dvhat_dx, v0, T, sys.lam)
    rows, valid = _test_rows(n)
    f = np.zeros(mesh.n_test)
    np.add.at(f, rows[valid], loc[valid])
    return f


def schur_operator(sys: SaddleSystem) -> spla.LinearOperator:
    """``w -> B^T A_s^{-1} B w + C w`` without forming the product."""
    B, C = sys.B, sys.C
    BT = B.T.tocsr()

    def mv(w):
        w = np.ravel(w)
        return BT @ sys.A_solve(B @ w) + C @ w

    m = sys.mesh.n_trial
    return spla.LinearOperator((m, m), matvec=mv, dtype=float)


def _dense_schur(sys: SaddleSystem) -> np.ndarray:
    A = sys.A_s.toarray()
    B = sys.B.toarray()
    return B.T @ la.solve(A, B, assume_a="sym") + sys.C.toarray()


def normal_residual(sys: SaddleSystem, w: CoeffGrid, f: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the discrete least-squares functional, ``B^T A_s^{-1}(B w - f) + C w``."""
    f = sys.f if f is None else f
    x = w.vector
    return sys.B.T @ sys.A_solve(sys.B @ x - f) + sys.C @ x


@dataclass
class SolveInfo:
    method: str
    iterations: int


def solve_mrm(
    sys: SaddleSystem,
    f: np.ndarray | None = None,
    tol: float = 1e-11,
    method: str = "auto",
    maxiter: int | None = None,
    unshift: bool = True,
    info: SolveInfo | None = None,
) -> CoeffGrid:
    """Minimiser of ``||B w - f||^2_{Y_h'} + ||w(0)||^2`` over the trial space.

    Solves ``(B^T A_s^{-1} B + C) w = B^T A_s^{-1} f`` by conjugate gradients
    (``method="cg"``) or a dense Cholesky factorisation (``method="dense"``,
    default for ``n <= 8``).  When the system carries a shift ``lam > 0`` and
    ``unshift`` is set, the nodal values are multiplied by ``exp(lam t)``.
    """
    f = sys.f if f is None else np.asarray(f, float)
    if f is None:
        raise ValueError("no load vector: pass f or use sys.with_rhs")
    mesh = sys.mesh
    if method == "auto":
        method = "dense" if mesh.n <= DENSE_MAX_N else "cg"
    rhs = sys.B.T @ sys.A_solve(f)
    iters = 0
    if not np.any(rhs):
        x = np.zeros(mesh.n_trial)
    elif method == "dense":
        S = _dense_schur(sys)
        try:
            x = la.cho_solve(la.cho_factor(S), rhs)
        except la.LinAlgError as exc:
            raise AssemblyError("reduced system is not positive definite") from exc
    elif method == "cg":
        count = [0]

        def cb(_xk):
            count[0] += 1

        S = schur_operator(sys)
        x, status = spla.cg(
            S, rhs, rtol=tol, atol=0.0, maxiter=maxiter or 20 * mesh.n_trial, callback=cb
        )
        iters = count[0]
        if status != 0:
            raise AssemblyError(f"CG on the reduced system did not converge (status {status}, {iters} iterations)")
    else:
        raise ValueError(f"unknown method {method!r}")
    logger.debug("solve_mrm n=%d method=%s iterations=%d", mesh.n, method, iters)
    if info is not None:
        info.method, info.iterations = method, iters
    w = CoeffGrid.from_vector(x, mesh)
    if unshift and sys.lam > 0:
        w = CoeffGrid(w.values * np.exp(sys.lam * mesh.t_nodes)[:, None], mesh)
    return w


def xnorm(w: CoeffGrid, norm_sys: SaddleSystem) -> float:
    """Discrete ``X``-norm ``sqrt(w^T B^T A^{-1} B w + w^T C w)``."""
    if w.mesh != norm_sys.mesh:
        raise ValueError("coefficient grid and norm system use different meshes; prolong first")
    x = w.vector
    r = norm_sys.B @ x
    val = r @ norm_sys.A_solve(r) + x @ (norm_sys.C @ x)
    return float(np.sqrt(max(val, 0.0)))


def _prolong_1d(n: int, m: int) -> np.ndarray:
    """Linear interpolation from ``n + 1`` to ``m + 1`` uniform nodes on ``[0, 1]``."""
    coarse = np.linspace(0.0, 1.0, n + 1)
    fine = np.linspace(0.0, 1.0, m + 1)
    P = np.empty((m + 1, n + 1))
    for i in range(n + 1):
        e = np.zeros(n + 1)
        e[i] = 1.0
        P[:, i] = np.interp(fine, coarse, e)
    return P


def prolong(w: CoeffGrid, target: Mesh) -> CoeffGrid:
    """Exact embedding of a bilinear trial function into a nested finer mesh."""
    n, m = w.mesh.n, target.n
    if m % n:
        raise ValueError(f"mesh n={m} is not a refinement of n={n}")
    if m == n:
        return w
    P = _prolong_1d(n, m)
    full = P @ w.full() @ P.T
    return CoeffGrid(full[:, 1:-1], target)


def interpolate(func: Field2, mesh: Mesh) -> CoeffGrid:
    """Nodal interpolant of ``func(t, x)`` (boundary values are dropped)."""
    t = mesh.t_nodes[:, None]
    x = mesh.x_nodes[None, 1:-1]
    vals = np.broadcast_to(np.asarray(func(t, x), float), (mesh.n + 1, mesh.n - 1))
    return CoeffGrid(np.array(vals), mesh)


def load_from_function(sys: SaddleSystem, g: Field2, quad: int = 6) -> np.ndarray:
    """Test-space load ``int int g phi_i`` for a smooth source ``g`` (manufactured solutions)."""
    mesh = sys.mesh
    n, h = mesh.n, mesh.h
    _, w, L = _local_basis(quad)
    hw = h * w
    G, tq, _ = _eval_on_cells(g, mesh, quad)
    G = G * np.exp(-sys.lam * tq)[:, :, None, None]
    loc = np.einsum("kajb,a,b,ap,br->kjpr", G, hw, hw, L, L, optimize=True)
    rows, valid = _test_rows(n)
    f = np.zeros(mesh.n_test)
    np.add.at(f, rows[valid], loc[valid])
    return f


def l2norm(w: CoeffGrid) -> float:
    """Exact ``L2`` norm of the bilinear function over the unit square."""
    n, h = w.mesh.n, w.mesh.h
    m1 = sp.diags([np.full(n, h / 6), np.r_[h / 3, np.full(n - 1, 2 * h / 3), h / 3], np.full(n, h / 6)], [-1, 0, 1])
    F = w.full()
    return float(np.sqrt(max(np.sum(F * (m1 @ F @ m1)), 0.0)))
