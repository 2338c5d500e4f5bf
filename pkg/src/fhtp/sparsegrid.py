"""
Smolyak interpolation on ``[-1, 1]^N`` with nested Clenshaw-Curtis points.

Level ``i`` has ``m_1 = 1`` point (the origin) and ``m_i = 2^(i-1) + 1``
points ``cos(j pi / (m_i - 1))`` for ``i >= 2``.  The interpolant is built
by the combination technique

    I_q = sum_{q-N+1 <= |i| <= q} (-1)^(q-|i|) binom(N-1, q-|i|) (I_{i_1} x ... x I_{i_N}),

which equals the difference formula over ``|i| <= q``.  Payloads may be
scalars or arrays (for instance the nodal values of a coefficient grid);
evaluation is linear in them.
"""
from __future__ import annotations

import base64
import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Any, Callable

import numpy as np


class EvaluatorError(RuntimeError):
    """The payload evaluator failed at a grid point; ``rho`` holds that point."""

    def __init__(self, rho, cause: BaseException):
        self.rho = tuple(float(r) for r in rho)
        super().__init__(f"evaluator failed at rho={list(self.rho)}: {cause!r}")


def cc_size(i: int) -> int:
    if i < 1:
        raise ValueError("level must be >= 1")
    return 1 if i == 1 else 2 ** (i - 1) + 1


def _angles(i: int) -> list[Fraction]:
    """Point angles as exact fractions of pi, in ascending order of the point."""
    m = cc_size(i)
    if m == 1:
        return [Fraction(1, 2)]
    return [Fraction(m - 1 - j, m - 1) for j in range(m)]


def _cos_pi(a: Fraction) -> float:
    # exact zero at pi/2 and symmetric values about it
    if a == Fraction(1, 2):
        return 0.0
    if a > Fraction(1, 2):
        return -_cos_pi(1 - a)
    return float(np.cos(np.pi * float(a)))


def cc_abscissae(i: int) -> np.ndarray:
    """Sorted nested Clenshaw-Curtis points of level ``i``."""
    return np.array([_cos_pi(a) for a in _angles(i)])


def _bary_weights(m: int) -> np.ndarray:
    # Chebyshev extreme points: (-1)^j, halved at the ends
    if m == 1:
        return np.ones(1)
    w = (-1.0) ** np.arange(m)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


_SNAP = 1e-250


def lagrange_row(i: int, x: float) -> np.ndarray:
    """Values of the level-``i`` Lagrange basis at ``x`` (barycentric form)."""
    pts = cc_abscissae(i)
    if pts.size == 1:
        return np.ones(1)
    diff = x - pts
    # snap near-node points so that w / diff cannot overflow
    hit = np.flatnonzero(np.abs(diff) <= _SNAP)
    out = np.zeros(pts.size)
    if hit.size:
        out[hit[0]] = 1.0
        return out
    w = _bary_weights(pts.size)
    # weights of ascending points: the sign pattern is symmetric so order is irrelevant
    terms = w / diff
    return terms / terms.sum()


def admissible_indices(N: int, q: int) -> list[tuple[int, ...]]:
    """Multi-indices ``i >= 1`` with ``q - N + 1 <= |i| <= q`` and their combination weights."""
    out = []
    for i in itertools.product(range(1, q - N + 2), repeat=N):
        s = sum(i)
        if q - N + 1 <= s <= q:
            out.append(i)
    return out


def combination_coefficient(N: int, q: int, i: tuple[int, ...]) -> int:
    d = q - sum(i)
    return (-1) ** d * comb(N - 1, d)


def _check_levels(N: int, q: int):
    if N < 1:
        raise ValueError("N must be >= 1")
    if q < N:
        raise ValueError(f"sparse level q={q} must be >= N={N}")


def sparse_points(N: int, q: int) -> list[tuple[Fraction, ...]]:
    """Distinct grid points as exact angle keys, in canonical sorted order."""
    _check_levels(N, q)
    keys = set()
    for i in admissible_indices(N, q):
        keys.update(itertools.product(*(_angles(l) for l in i)))
    # sort by coordinate value (descending angle means ascending coordinate)
    return sorted(keys, key=lambda k: tuple(-a for a in k))


def key_to_point(key: tuple[Fraction, ...]) -> np.ndarray:
    return np.array([_cos_pi(a) for a in key])


@dataclass(frozen=True)
class SparseInterpolant:
    """Smolyak interpolant with one payload per distinct grid point."""

    N: int
    q: int
    keys: tuple[tuple[Fraction, ...], ...]
    payloads: np.ndarray  # shape (n_points, *payload_shape)

    @property
    def points(self) -> np.ndarray:
        return np.array([key_to_point(k) for k in self.keys]).reshape(len(self.keys), self.N)

    @property
    def n_points(self) -> int:
        return len(self.keys)

    @property
    def payload_shape(self) -> tuple[int, ...]:
        return self.payloads.shape[1:]

    def weights(self, rho) -> np.ndarray:
        """Coefficients ``c_p`` with ``I_q f(rho) = sum_p c_p f(p)``."""
        rho = np.asarray(rho, float).reshape(-1)
        if rho.size != self.N:
            raise ValueError(f"expected a point in {self.N} dimensions")
        if np.any(~np.isfinite(rho)) or np.any(np.abs(rho) > 1.0):
            raise ValueError(f"rho={rho.tolist()} lies outside [-1, 1]^{self.N}")
        index = {k: p for p, k in enumerate(self.keys)}
        rows: dict[tuple[int, int], np.ndarray] = {}
        out = np.zeros(self.n_points)
        for i in admissible_indices(self.N, self.q):
            c = combination_coefficient(self.N, self.q, i)
            if c == 0:
                continue
            axes = []
            for d, l in enumerate(i):
                if (d, l) not in rows:
                    rows[d, l] = lagrange_row(l, rho[d])
                axes.append(rows[d, l])
            tensor = axes[0]
            for a in axes[1:]:
                tensor = np.multiply.outer(tensor, a)
            for pos, key in zip(
                itertools.product(*(range(cc_size(l)) for l in i)),
                itertools.product(*(_angles(l) for l in i)),
            ):
                val = tensor[pos] if self.N > 1 else tensor[pos[0]]
                if val != 0.0:
                    out[index[key]] += c * val
        return out

    def to_json(self) -> str:
        data = {
            "format": "fhtp-sparse-interpolant",
            "version": 1,
            "N": self.N,
            "q": self.q,
            "keys": [[[a.numerator, a.denominator] for a in k] for k in self.keys],
            "payload_shape": list(self.payload_shape),
            "payloads": base64.b64encode(np.ascontiguousarray(self.payloads, dtype="<f8").tobytes()).decode("ascii"),
        }
        return json.dumps(data, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SparseInterpolant":
        data = json.loads(text)
        if data.get("format") != "fhtp-sparse-interpolant":
            raise ValueError("not a serialised sparse interpolant")
        keys = tuple(tuple(Fraction(a, b) for a, b in k) for k in data["keys"])
        raw = np.frombuffer(base64.b64decode(data["payloads"]), dtype="<f8")
        payloads = raw.reshape((len(keys), *data["payload_shape"])).astype(float)
        si = cls(int(data["N"]), int(data["q"]), keys, payloads)
        if set(keys) != set(sparse_points(si.N, si.q)):
            raise ValueError("stored point set does not match (N, q)")
        return si


def build_interpolant(
    N: int,
    q: int,
    evaluator: Callable[[np.ndarray], Any],
    map_fn: Callable[[Callable, list], list] | None = None,
) -> SparseInterpolant:
    """Evaluate ``evaluator`` once per distinct grid point and store the results.

    ``map_fn(func, points)`` may dispatch the independent calls concurrently
    (e.g. ``executor.map``); results are kept in canonical point order.
    """
    keys = sparse_points(N, q)
    pts = [key_to_point(k) for k in keys]

    def call(rho):
        try:
            return np.asarray(evaluator(rho), float)
        except Exception as exc:
            raise EvaluatorError(rho, exc) from exc

    results = list(map_fn(call, pts)) if map_fn is not None else [call(p) for p in pts]
    return SparseInterpolant(N, q, tuple(keys), np.stack(results))


def eval_interpolant(si: SparseInterpolant, rho) -> np.ndarray | float:
    """``I_q f(rho)``; returns a float for scalar payloads."""
    c = si.weights(rho)
    val = np.tensordot(c, si.payloads, axes=(0, 0))
    return float(val) if val.ndim == 0 else val
