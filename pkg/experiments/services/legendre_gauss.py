"""
Shifted orthonormal Legendre polynomials on [0, 1] and Gauss-Legendre rules.

P_j(x) = sqrt(2j + 1) * L_j(2x - 1), with L_j the classical Legendre polynomial,
so that the integral of P_i * P_j over [0, 1] is delta_ij.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def k(self) -> int:
        return self.nodes.size

    @property
    def order(self) -> int:
        return 2 * self.k

    def integrate(self, values) -> float:
        """Apply the rule to samples taken at ``nodes`` (last axis)."""
        return np.asarray(values) @ self.weights


def xi_coefficients(n: int) -> np.ndarray:
    """xi_i = (2 sqrt|4i^2 - 1|)^-1 for i = 0..n-1."""
    i = np.arange(n, dtype=float)
    return 1.0 / (2.0 * np.sqrt(np.abs(4.0 * i * i - 1.0)))


@lru_cache(maxsize=None)
def _gauss_rule_cached(k: int) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(k)
    c = 0.5 * (x + 1.0)
    b = 0.5 * w
    # leggauss is symmetric up to round-off; enforce c_i + c_{k+1-i} = 1 exactly
    c = 0.5 * (c + (1.0 - c[::-1]))
    b = 0.5 * (b + b[::-1])
    b = b / b.sum()
    c.setflags(write=False)
    b.setflags(write=False)
    return QuadratureRule(nodes=c, weights=b)


def gauss_rule(k: int) -> QuadratureRule:
    """k-point Gauss-Legendre rule on [0, 1]: the nodes are the roots of P_k."""
    if int(k) != k or k < 1:
        raise InvalidArgumentError(f"Gauss rule needs k >= 1, got {k}")
    return _gauss_rule_cached(int(k))


def _check_unit_interval(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"{name} must lie in [0, 1], got {x}")
    return x


def _legendre_table(n: int, x: np.ndarray) -> np.ndarray:
    """Rows P_0..P_{n-1} evaluated at x (no domain check)."""
    t = 2.0 * x - 1.0
    table = np.empty((n,) + t.shape)
    if n == 0:
        return table
    l_prev = np.ones_like(t)
    table[0] = l_prev
    if n == 1:
        return table
    l_curr = t.copy()
    table[1] = np.sqrt(3.0) * l_curr
    for j in range(1, n - 1):
        l_next = ((2 * j + 1) * t * l_curr - j * l_prev) / (j + 1)
        l_prev, l_curr = l_curr, l_next
        table[j + 1] = np.sqrt(2 * j + 3.0) * l_curr
    return table


def legendre_table(n: int, x) -> np.ndarray:
    """Orthonormal shifted Legendre polynomials P_0..P_{n-1} at x, shape (n,) + x.shape."""
    x = _check_unit_interval(x, 'x')
    return _legendre_table(n, x)


def legendre_eval(j: int, x):
    if j < 0:
        raise InvalidArgumentError(f"Legendre degree must be >= 0, got {j}")
    values = legendre_table(j + 1, x)[j]
    return float(values) if values.ndim == 0 else values


def legendre_integral_table(n: int, c) -> np.ndarray:
    """Rows int_0^c P_j(x) dx for j = 0..n-1.

    Uses int_0^c P_j = xi_{j+1} P_{j+1}(c) - xi_j P_{j-1}(c) for j >= 1 and
    xi_1 P_1(c) + xi_0 for j = 0, the lower-limit constants vanishing otherwise.
    """
    c = _check_unit_interval(c, 'c')
    p = _legendre_table(n + 1, c)
    xi = xi_coefficients(n + 1)
    table = np.empty((n,) + c.shape)
    if n == 0:
        return table
    table[0] = xi[1] * p[1] + xi[0]
    for j in range(1, n):
        table[j] = xi[j + 1] * p[j + 1] - xi[j] * p[j - 1]
    return table


def legendre_integral(j: int, c):
    if j < 0:
        raise InvalidArgumentError(f"Legendre degree must be >= 0, got {j}")
    values = legendre_integral_table(j + 1, c)[j]
    return float(values) if values.ndim == 0 else values
