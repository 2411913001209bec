"""Truncated Hermite-function model of test functions and their dual.

The orthonormal Hermite functions

    h_k(x) = (2^k k! sqrt(pi))^(-1/2) H_k(x) e^(-x^2/2),   k = 0, 1, ...

form an orthonormal basis of L^2(R) consisting of smooth, rapidly decaying
functions.  Truncating at ``size = N`` modes gives a finite-dimensional model
in which every object of interest is a coefficient vector:

* a test function ``phi = sum_k c_k h_k`` (:class:`TestFunction`),
* a distribution ``f`` acting by ``<f, phi> = sum_k f_k c_k``
  (:class:`DualElement`),
* the graded norm ladder ``p_r(phi)^2 = sum_k (2k+1)^(2r) c_k^2`` and its
  dual ``p'_r(f)^2 = sum_k (2k+1)^(-2r) f_k^2`` (:class:`SeminormIndex`),
* the derivative, the 1-d Laplacian and the heat semigroup as ``N x N``
  matrices acting on coefficients.

Integrals are computed with a ``quad_order = Q``-point Gauss-Hermite rule.
With ``Q >= 2N`` every product of two basis elements is integrated exactly,
so the empirical Gram matrix is the identity to rounding error.

All matrices and value objects are immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.linalg import expm

__all__ = [
    "BasisSpec",
    "TestFunction",
    "DualElement",
    "SeminormIndex",
    "SeminormFamily",
    "hermite_functions",
    "hermite_polynomials",
    "quadrature_nodes",
    "quadrature_weights",
    "project_function",
    "reconstruct",
    "eval_series",
    "derivative_op",
    "laplacian_op",
    "heat_matrix",
    "seminorm",
    "dual_norm",
    "hs_norm",
    "hs_inclusion_converges",
    "hs_tail_bound",
    "pairing",
    "heat_flow_ground_state",
    "write_matrix_csv",
]


@dataclass(frozen=True)
class BasisSpec:
    """Truncation parameters: ``size`` Hermite modes, ``quad_order`` nodes.

    ``quad_order >= 2 * size`` guarantees exact integration of products of
    basis elements.
    """

    size: int
    quad_order: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValueError("basis size must be >= 2")
        if self.quad_order < 2 * self.size:
            raise ValueError("quad_order must be >= 2 * size")


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A function ``phi = sum_k coeffs[k] h_k`` in the truncated span."""

    __test__ = False  # not a pytest class, despite the name

    basis: BasisSpec
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.basis.size,):
            raise ValueError(
                f"expected {self.basis.size} coefficients, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", _as_readonly(c))

    def __call__(self, x) -> np.ndarray:
        return eval_series(self.coeffs, x)


@dataclass(frozen=True, eq=False)
class DualElement:
    """A distribution acting on the truncated span by coefficient pairing."""

    basis: BasisSpec
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.basis.size,):
            raise ValueError(
                f"expected {self.basis.size} coefficients, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", _as_readonly(c))


@dataclass(frozen=True)
class SeminormIndex:
    """Regularity index ``r`` for the weight rule ``w_k = (2k+1)^r``."""

    r: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.r) or self.r < 0:
            raise ValueError("regularity index must be finite and >= 0")

    def weights(self, size: int) -> np.ndarray:
        k = np.arange(size)
        return (2.0 * k + 1.0) ** self.r

    def dual_weights(self, size: int) -> np.ndarray:
        k = np.arange(size)
        return (2.0 * k + 1.0) ** (-self.r)


@dataclass(frozen=True)
class SeminormFamily:
    """Increasing ladder of regularity indices with Hilbert-Schmidt gaps.

    Consecutive gaps must exceed 1/2 so that each inclusion between adjacent
    rungs has a finite Hilbert-Schmidt norm in the infinite-size limit.
    """

    indices: tuple[float, ...]

    def __post_init__(self) -> None:
        rs = tuple(float(r) for r in self.indices)
        if len(rs) < 2:
            raise ValueError("a seminorm family needs at least two indices")
        if any(r < 0 for r in rs):
            raise ValueError("regularity indices must be >= 0")
        gaps = np.diff(rs)
        if np.any(gaps <= 0.5):
            raise ValueError("consecutive index gaps must exceed 1/2")
        object.__setattr__(self, "indices", rs)

    def inclusion_norms(self, n_terms: int) -> list[float]:
        """Truncated Hilbert-Schmidt norms of the consecutive inclusions."""
        return [
            hs_norm(lo, hi, n_terms)
            for lo, hi in zip(self.indices[:-1], self.indices[1:])
        ]


def _index_value(r) -> float:
    r = r.r if isinstance(r, SeminormIndex) else float(r)
    if not np.isfinite(r) or r < 0:
        raise ValueError("regularity index must be finite and >= 0")
    return r


# ---------------------------------------------------------------------------
# evaluation and quadrature
# ---------------------------------------------------------------------------


def _hermite_modes_first(x: np.ndarray, count: int) -> np.ndarray:
    """Recurrence workhorse; shape ``(count,) + x.shape``, contiguous writes."""
    out = np.empty((count,) + x.shape)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if count == 1:
        return out
    np.multiply(np.sqrt(2.0) * x, out[0], out=out[1])
    for k in range(1, count - 1):
        np.multiply(np.sqrt(2.0 / (k + 1)) * x, out[k], out=out[k + 1])
        out[k + 1] -= np.sqrt(k / (k + 1.0)) * out[k - 1]
    return out


def hermite_functions(x, count: int) -> np.ndarray:
    """Values ``h_k(x)`` for ``k < count``; shape ``x.shape + (count,)``.

    Uses the three-term recurrence on the orthonormal functions themselves,

        h_{k+1}(x) = sqrt(2/(k+1)) x h_k(x) - sqrt(k/(k+1)) h_{k-1}(x),

    which is stable and overflow-free because |h_k| <= 0.816 for all k, x.
    """
    x = np.asarray(x, dtype=float)
    if count < 1:
        raise ValueError("count must be >= 1")
    return np.moveaxis(_hermite_modes_first(x, count), 0, -1)


def hermite_polynomials(x, count: int) -> np.ndarray:
    """Orthonormalized Hermite polynomials ``p_k = h_k exp(x^2/2)``.

    Same recurrence as :func:`hermite_functions` but without the Gaussian
    factor; orthonormal against the weight ``exp(-x^2)``.  Used where the
    weight is carried by a quadrature rule instead of the integrand.
    """
    x = np.asarray(x, dtype=float)
    if count < 1:
        raise ValueError("count must be >= 1")
    out = np.empty(x.shape + (count,))
    p_prev = np.full(x.shape, np.pi ** -0.25)
    out[..., 0] = p_prev
    if count == 1:
        return out
    p_cur = np.sqrt(2.0) * x * p_prev
    out[..., 1] = p_cur
    for k in range(1, count - 1):
        p_next = np.sqrt(2.0 / (k + 1)) * x * p_cur - np.sqrt(k / (k + 1.0)) * p_prev
        out[..., k + 1] = p_next
        p_prev, p_cur = p_cur, p_next
    return out


def eval_series(coeffs, x) -> np.ndarray:
    """Evaluate ``sum_k coeffs[k] h_k(x)``; trailing zeros are skipped."""
    c = np.asarray(coeffs, dtype=float)
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return np.zeros(np.shape(x))
    top = int(nz[-1]) + 1
    x = np.asarray(x, dtype=float)
    return np.tensordot(c[:top], _hermite_modes_first(x, top), axes=(0, 0))


@lru_cache(maxsize=32)
def _gh_rule(order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes, weights and ``w * exp(x^2)`` (all read-only).

    The modified weights integrate plain functions of moderate growth against
    the basis: ``int f(x) h_k(x) dx ~= sum_i w~_i f(x_i) h_k(x_i)``, exact
    whenever ``f * h_k * exp(x^2)`` is a polynomial of degree < 2 * order.
    The product is computed through logs so it stays finite for every order
    at which the plain weights are representable.
    """
    x, w = hermgauss(order)
    w_mod = np.exp(np.log(w) + x * x)
    return _as_readonly(x), _as_readonly(w), _as_readonly(w_mod)


def quadrature_nodes(basis: BasisSpec) -> np.ndarray:
    """The ``quad_order`` Gauss-Hermite nodes used by :func:`project_function`."""
    return _gh_rule(basis.quad_order)[0]


def quadrature_weights(basis: BasisSpec) -> np.ndarray:
    """Modified weights ``w_i exp(x_i^2)`` matching :func:`quadrature_nodes`."""
    return _gh_rule(basis.quad_order)[2]


@lru_cache(maxsize=32)
def _basis_at_nodes(basis: BasisSpec) -> np.ndarray:
    h = hermite_functions(quadrature_nodes(basis), basis.size)
    return _as_readonly(h)


def project_function(samples, basis: BasisSpec) -> TestFunction:
    """Project node samples onto the basis: ``c_k = int phi h_k`` by quadrature.

    ``samples`` must hold the values of the target function at
    :func:`quadrature_nodes`.  Reconstruction at the nodes reproduces the
    input up to quadrature error.
    """
    s = np.asarray(samples, dtype=float)
    if s.shape != (basis.quad_order,):
        raise ValueError(
            f"expected {basis.quad_order} node samples, got shape {s.shape}"
        )
    if not np.all(np.isfinite(s)):
        raise ValueError("node samples must be finite")
    w_mod = quadrature_weights(basis)
    coeffs = _basis_at_nodes(basis).T @ (w_mod * s)
    return TestFunction(basis, coeffs)


def reconstruct(phi: TestFunction, x) -> np.ndarray:
    """Pointwise values of ``phi`` at arbitrary locations ``x``."""
    return eval_series(phi.coeffs, x)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def derivative_op(basis: BasisSpec) -> np.ndarray:
    """Matrix of d/dx on coefficients: skew-symmetric, bidiagonal.

    Column ``k`` carries ``sqrt(k/2)`` in row ``k-1`` and ``-sqrt((k+1)/2)``
    in row ``k+1`` (the ladder identity for the derivative of ``h_k``).
    """
    n = basis.size
    d = np.zeros((n, n))
    k = np.arange(1, n)
    d[k - 1, k] = np.sqrt(k / 2.0)
    d[k, k - 1] = -np.sqrt(k / 2.0)
    return _as_readonly(d)


@lru_cache(maxsize=32)
def laplacian_op(basis: BasisSpec) -> np.ndarray:
    """Second-derivative matrix ``L = D @ D``: symmetric, <= 0, bandwidth 2."""
    d = derivative_op(basis)
    return _as_readonly(d @ d)


def heat_matrix(t: float, basis: BasisSpec) -> np.ndarray:
    """Heat semigroup ``E(t) = exp(t L)`` on coefficients.

    Computed by scaling-and-squaring matrix exponential of the banded
    truncated Laplacian, so the semigroup law holds to rounding error.
    """
    if t < 0:
        raise ValueError("time must be >= 0")
    if t == 0.0:
        return np.eye(basis.size)
    return expm(t * laplacian_op(basis))


def heat_flow_ground_state(t: float, x) -> np.ndarray:
    """Closed form of the heat flow applied to ``h_0`` (Gaussian convolution).

    Convolving the variance-1 Gaussian profile of ``h_0`` with the heat
    kernel of variance ``2t`` adds variances:

        (mu_t * h_0)(x) = pi^(-1/4) (1+2t)^(-1/2) exp(-x^2 / (2 (1+2t))).

    Serves as an independent oracle for :func:`heat_matrix`; it is never used
    in the implementation path.
    """
    if t < 0:
        raise ValueError("time must be >= 0")
    x = np.asarray(x, dtype=float)
    s = 1.0 + 2.0 * t
    return np.pi ** -0.25 * s ** -0.5 * np.exp(-x * x / (2.0 * s))


# ---------------------------------------------------------------------------
# norms and pairings
# ---------------------------------------------------------------------------


def seminorm(phi: TestFunction, r) -> float:
    """Graded norm ``p_r(phi) = (sum_k (2k+1)^(2r) c_k^2)^(1/2)``."""
    rv = _index_value(r)
    w = SeminormIndex(rv).weights(phi.basis.size)
    return float(np.sqrt(np.sum((w * phi.coeffs) ** 2)))


def dual_norm(f: DualElement, r) -> float:
    """Dual graded norm ``p'_r(f) = (sum_k (2k+1)^(-2r) f_k^2)^(1/2)``."""
    rv = _index_value(r)
    w = SeminormIndex(rv).dual_weights(f.basis.size)
    return float(np.sqrt(np.sum((w * f.coeffs) ** 2)))


def pairing(f: DualElement, phi: TestFunction) -> float:
    """Canonical pairing ``<f, phi> = sum_k f_k c_k`` (same basis required)."""
    if f.basis != phi.basis:
        raise ValueError("pairing requires matching bases")
    return float(f.coeffs @ phi.coeffs)


def hs_norm(r, s, n_terms: int) -> float:
    """Hilbert-Schmidt norm of the truncated inclusion from rung s down to r.

    Equals ``(sum_{k < n_terms} (2k+1)^(-2(s-r)))^(1/2)``; as ``n_terms`` grows
    it converges exactly when ``s - r > 1/2``.
    """
    rv, sv = _index_value(r), _index_value(s)
    if sv <= rv:
        raise ValueError("need s > r: the identity inclusion is never Hilbert-Schmidt")
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    k = np.arange(n_terms)
    return float(np.sqrt(np.sum((2.0 * k + 1.0) ** (-2.0 * (sv - rv)))))


def hs_inclusion_converges(r, s) -> bool:
    """Whether the inclusion's Hilbert-Schmidt norm stays finite as size grows."""
    rv, sv = _index_value(r), _index_value(s)
    if sv <= rv:
        raise ValueError("need s > r")
    return (sv - rv) > 0.5


def hs_tail_bound(r, s, n_terms: int) -> float:
    """Integral bound on the squared-norm tail beyond ``n_terms`` terms.

    For gap ``g = s - r > 1/2`` the tail ``sum_{k >= n} (2k+1)^(-2g)`` is
    dominated by ``(2n+1)^(1-2g) / (2g-1)`` (integral comparison).
    """
    rv, sv = _index_value(r), _index_value(s)
    g = sv - rv
    if g <= 0.5:
        raise ValueError("tail bound requires gap > 1/2")
    return float((2.0 * n_terms + 1.0) ** (1.0 - 2.0 * g) / (2.0 * g - 1.0))


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    """Dump a matrix as CSV rows ``i,j,value`` in row-major order."""
    m = np.asarray(matrix)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i,j,value\n")
        for i in range(m.shape[0]):
            for j in range(m.shape[1]):
                fh.write(f"{i},{j},{float(m[i, j])!r}\n")
