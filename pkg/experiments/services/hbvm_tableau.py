"""
HBVM(k,s) methods: k-stage Runge-Kutta methods whose stage polynomial has degree s.

The stepper never forms the Butcher matrix; it works with the s Legendre
coefficients gamma_0..gamma_{s-1} of the stage polynomial, so only the
matrices below are needed:

    mat_Is[i, j] = int_0^{c_i} P_j,   mat_Ps[i, j] = P_j(c_i),   Omega = diag(b),
    X_s = mat_Ps^T Omega mat_Is.
"""
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import linalg

from .exceptions import InvalidArgumentError
from .legendre_gauss import (
    QuadratureRule,
    gauss_rule,
    legendre_integral_table,
    legendre_table,
    xi_coefficients,
)


def xs_matrix(s: int) -> np.ndarray:
    """The s x s matrix X_s built directly from the xi_i values."""
    if s < 1:
        raise InvalidArgumentError(f"X_s needs s >= 1, got {s}")
    xi = xi_coefficients(s)
    xs = np.zeros((s, s))
    xs[0, 0] = xi[0]
    for i in range(1, s):
        xs[i, i - 1] = xi[i]
        xs[i - 1, i] = -xi[i]
    return xs


@dataclass(frozen=True, eq=False)
class HBVMethod:
    k: int
    s: int
    rule: QuadratureRule
    mat_Is: np.ndarray
    mat_Ps: np.ndarray
    mat_Xs: np.ndarray
    rho_s: float

    @property
    def nodes(self) -> np.ndarray:
        return self.rule.nodes

    @property
    def weights(self) -> np.ndarray:
        return self.rule.weights

    @property
    def weights_diag(self) -> np.ndarray:
        return np.diag(self.rule.weights)

    @cached_property
    def projection(self) -> np.ndarray:
        """P_s^T Omega, shape (s, k): maps stage values to Legendre coefficients."""
        return self.mat_Ps.T * self.rule.weights

    @cached_property
    def xs_inv_scaled(self) -> np.ndarray:
        """rho_s X_s^{-1}."""
        return self.rho_s * linalg.inv(self.mat_Xs)

    @property
    def is_gauss(self) -> bool:
        return self.k == self.s

    @property
    def label(self) -> str:
        if self.is_gauss:
            return f"Gauss {self.s}"
        return f"HBVM({self.k},{self.s})"

    def butcher_tableau(self):
        """(A, b, c) with A = I_s P_s^T Omega; materialized for checks only."""
        return self.mat_Is @ self.projection, self.rule.weights.copy(), self.rule.nodes.copy()


@lru_cache(maxsize=64)
def _build_hbvm_cached(k: int, s: int) -> HBVMethod:
    rule = gauss_rule(k)
    mat_ps = legendre_table(s, rule.nodes).T
    mat_is = legendre_integral_table(s, rule.nodes).T
    mat_xs = xs_matrix(s)
    rho_s = float(np.min(np.abs(linalg.eigvals(mat_xs))))
    for array in (mat_ps, mat_is, mat_xs):
        array.setflags(write=False)
    return HBVMethod(k=k, s=s, rule=rule, mat_Is=mat_is, mat_Ps=mat_ps, mat_Xs=mat_xs, rho_s=rho_s)


def build_hbvm(k: int, s: int) -> HBVMethod:
    if s < 1:
        raise InvalidArgumentError(f"HBVM needs s >= 1, got s={s}")
    if s > k:
        raise InvalidArgumentError(f"HBVM({k},{s}) needs k >= s")
    return _build_hbvm_cached(int(k), int(s))


def gauss_method(s: int) -> HBVMethod:
    return build_hbvm(s, s)


def energy_conserving_stages(s: int) -> int:
    """Smallest k that makes HBVM(k,s) exact for a cubic Hamiltonian: ceil(3s/2)."""
    return math.ceil(1.5 * s)
