"""
Fourier semi-discretization of the "good" Boussinesq equation

    u_t = v_x,    v_t = -u_xxx + (u^2)_x,    periodic on [a, b].

Fields are expanded as u = uhat0 + omega(x)^T q and v = vhat0 + omega(x)^T p, with
omega = (s_1, c_1, ..., s_N, c_N), s_j = sqrt(2/L) sin(2 pi j (x-a)/L) and
c_j = sqrt(2/L) cos(2 pi j (x-a)/L). Coefficient vectors are interleaved per
frequency (sine slot, then cosine slot), so D (x) J_2 acts on independent
2 x 2 blocks.

Integrals are evaluated with the composite trapezoidal rule at
x_i = a + i L / m; for periodic integrands only i = 0..m-1 are needed.
"""
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .exceptions import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    a: float
    b: float
    N: int

    def __post_init__(self):
        if not self.b > self.a:
            raise InvalidArgumentError(f"Domain needs b > a, got [{self.a}, {self.b}]")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidArgumentError(f"Truncation index N must be >= 1, got {self.N}")

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def size(self) -> int:
        """Length of q (and of p)."""
        return 2 * self.N

    @cached_property
    def freq_diag(self) -> np.ndarray:
        return 2.0 * math.pi / self.length * np.arange(1, self.N + 1, dtype=float)

    @property
    def rhs_points(self) -> int:
        return 2 * self.N + 1

    @property
    def ham_points(self) -> int:
        return 3 * self.N + 1

    def quad_points(self, m: int) -> np.ndarray:
        """The m + 1 evenly spaced points x_0 = a, ..., x_m = b."""
        return self.a + np.arange(m + 1) * (self.length / m)

    @property
    def quad_pts_rhs(self) -> np.ndarray:
        return self.quad_points(self.rhs_points)

    @property
    def quad_pts_ham(self) -> np.ndarray:
        return self.quad_points(self.ham_points)

    @property
    def amplitude(self) -> float:
        return math.sqrt(2.0 / self.length)

    def basis_matrix(self, xs) -> np.ndarray:
        """omega(x)^T for each x, shape (len(xs), 2N). Points outside [a, b] wrap."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        theta = 2.0 * math.pi * np.outer(np.mod(xs - self.a, self.length) / self.length,
                                         np.arange(1, self.N + 1))
        out = np.empty((xs.size, self.size))
        out[:, 0::2] = self.amplitude * np.sin(theta)
        out[:, 1::2] = self.amplitude * np.cos(theta)
        return out

    def synthesize(self, coeffs, m: int) -> np.ndarray:
        """omega(x_i)^T coeffs at x_i = a + i L/m, i < m, via an inverse real FFT.

        Works on the last axis, so a (k, 2N) batch of stage vectors is handled at once.
        """
        if m <= 2 * self.N:
            raise InvalidArgumentError(f"FFT synthesis needs m > 2N, got m={m}, N={self.N}")
        coeffs = np.asarray(coeffs, dtype=float)
        spectrum = np.zeros(coeffs.shape[:-1] + (m // 2 + 1,), dtype=complex)
        scale = 0.5 * m * self.amplitude
        spectrum[..., 1:self.N + 1] = scale * (coeffs[..., 1::2] - 1j * coeffs[..., 0::2])
        return np.fft.irfft(spectrum, n=m, axis=-1)

    def analyze(self, values) -> np.ndarray:
        """(L/m) sum_i omega(x_i) values_i for m samples on the last axis."""
        values = np.asarray(values, dtype=float)
        m = values.shape[-1]
        if m <= 2 * self.N:
            raise InvalidArgumentError(f"FFT analysis needs m > 2N, got m={m}, N={self.N}")
        spectrum = np.fft.rfft(values, axis=-1)[..., 1:self.N + 1]
        scale = self.length / m * self.amplitude
        out = np.empty(values.shape[:-1] + (self.size,))
        out[..., 0::2] = -scale * spectrum.imag
        out[..., 1::2] = scale * spectrum.real
        return out

    def direct_synthesis(self, m: int) -> np.ndarray:
        """Matrix of omega(x_i)^T, i < m: the O(N m) path and oracle for the FFT one."""
        return self.basis_matrix(self.quad_points(m)[:-1])


@dataclass(frozen=True, eq=False)
class SpectralState:
    grid: SpectralGrid
    q: np.ndarray
    p: np.ndarray
    uhat0: float
    vhat0: float

    def __post_init__(self):
        n = self.grid.size
        if self.q.shape != (n,) or self.p.shape != (n,):
            raise InvalidArgumentError(
                f"q and p must have length 2N={n}, got {self.q.shape} and {self.p.shape}")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    def with_vector(self, y) -> 'SpectralState':
        """A new state with (q, p) taken from y; the mean modes are carried over untouched."""
        n = self.grid.size
        y = np.asarray(y, dtype=float)
        return replace(self, q=y[:n].copy(), p=y[n:].copy())

    def reversed(self) -> 'SpectralState':
        """(q, p) -> (q, -p), which reverses time for this system."""
        return replace(self, p=-self.p, vhat0=-self.vhat0)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p)))


def basis_eval(grid: SpectralGrid, x: float) -> np.ndarray:
    return grid.basis_matrix([x])[0]


def apply_dj(diag: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """(diag (x) J_2^T) vec on the last axis: each (sine, cosine) pair (x, y) -> diag*(-y, x)."""
    out = np.empty_like(vec)
    out[..., 0::2] = -diag * vec[..., 1::2]
    out[..., 1::2] = diag * vec[..., 0::2]
    return out


def apply_diag(diag: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """(diag (x) I_2) vec on the last axis."""
    return np.repeat(diag, 2) * vec


def nonlinear_term(grid: SpectralGrid, q, uhat0: float, m: int = None, method: str = 'fft') -> np.ndarray:
    """Trapezoidal projection of (uhat0 + omega^T q)^2 onto the basis.

    The integrand has degree 3N, so the default m = 3N + 1 makes the rule exact.
    ``method='direct'`` uses the dense O(N m) synthesis/analysis matrices.
    """
    m = grid.ham_points if m is None else m
    q = np.asarray(q, dtype=float)
    if method == 'fft':
        u = uhat0 + grid.synthesize(q, m)
        return grid.analyze(u * u)
    if method == 'direct':
        basis = grid.direct_synthesis(m)
        u = uhat0 + q @ basis.T
        return (grid.length / m) * ((u * u) @ basis)
    raise InvalidArgumentError(f"Unknown nonlinear_term method {method!r}")


class BoussinesqField:
    """Right-hand side f(y), y = (q, p), evaluated on the last axis of y.

    ``nonlinear=False`` drops the projected (u^2)_x term, leaving the linear
    dispersive part that also defines the blended-iteration Jacobian.
    """

    def __init__(self, grid: SpectralGrid, uhat0: float, nonlinear: bool = True, method: str = 'fft'):
        self.grid = grid
        self.uhat0 = uhat0
        self.nonlinear = nonlinear
        self.method = method
        self._d = grid.freq_diag
        self._d2 = self._d ** 2

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        n = self.grid.size
        q, p = y[..., :n], y[..., n:]
        force = apply_diag(self._d2, q)
        if self.nonlinear:
            force = force + nonlinear_term(self.grid, q, self.uhat0, method=self.method)
        return np.concatenate([apply_dj(self._d, p), apply_dj(self._d, force)], axis=-1)

    def linear_matrix(self) -> np.ndarray:
        """Dense [[0, D(x)J_2^T], [D^3(x)J_2^T, 0]]; small N only."""
        n = self.grid.size
        dj = np.zeros((n, n))
        for j, d in enumerate(self._d):
            dj[2 * j, 2 * j + 1] = -d
            dj[2 * j + 1, 2 * j] = d
        out = np.zeros((2 * n, 2 * n))
        out[:n, n:] = dj
        out[n:, :n] = dj @ np.diag(np.repeat(self._d2, 2))
        return out


def rhs(state: SpectralState, nonlinear: bool = True):
    """(qdot, pdot) of the semi-discrete Hamiltonian system."""
    ydot = BoussinesqField(state.grid, state.uhat0, nonlinear=nonlinear)(state.as_vector())
    n = state.grid.size
    return ydot[:n], ydot[n:]


def cubic_integral(grid: SpectralGrid, q, uhat0: float) -> np.ndarray:
    """int_a^b (uhat0 + omega^T q)^3 dx with the exact m = 3N + 1 rule (last axis of q)."""
    m = grid.ham_points
    u = uhat0 + grid.synthesize(q, m)
    return (grid.length / m) * np.sum(u ** 3, axis=-1)


def hamiltonian_qp(grid: SpectralGrid, q, p, uhat0: float):
    """H(q, p) for a single state or a batch of states on the leading axis."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    d2 = np.repeat(grid.freq_diag ** 2, 2)
    quadratic = np.sum(p * p, axis=-1) + np.sum(d2 * q * q, axis=-1)
    return 0.5 * (quadratic + (2.0 / 3.0) * cubic_integral(grid, q, uhat0))


def hamiltonian(state: SpectralState) -> float:
    return float(hamiltonian_qp(state.grid, state.q, state.p, state.uhat0))


def momentum(state: SpectralState) -> float:
    return float(state.q @ state.p)


def linear_invariants(state: SpectralState):
    """The conserved integrals of u and v over [a, b]."""
    return state.grid.length * state.uhat0, state.grid.length * state.vhat0


def default_projection_points(N: int) -> int:
    """max(4N, 1024) rounded up to a power of two."""
    return 1 << (max(4 * N, 1024) - 1).bit_length()


def project_initial(grid: SpectralGrid, u0, v0, quad_points: int = None) -> SpectralState:
    """L2 projection of (u0, v0) onto the truncated basis by the trapezoidal rule."""
    m = default_projection_points(grid.N) if quad_points is None else int(quad_points)
    if m < grid.rhs_points:
        raise InvalidArgumentError(
            f"Projection needs at least 2N+1={grid.rhs_points} points, got {m}")
    xs = grid.quad_points(m)[:-1]
    u_vals = np.asarray(u0(xs), dtype=float) * np.ones_like(xs)
    v_vals = np.asarray(v0(xs), dtype=float) * np.ones_like(xs)
    return SpectralState(
        grid=grid,
        q=grid.analyze(u_vals),
        p=grid.analyze(v_vals),
        uhat0=float(np.mean(u_vals)),
        vhat0=float(np.mean(v_vals)),
    )


def reconstruct(state: SpectralState, xs):
    """Pointwise u = uhat0 + omega^T q and v = vhat0 + omega^T p."""
    basis = state.grid.basis_matrix(xs)
    return state.uhat0 + basis @ state.q, state.vhat0 + basis @ state.p


def reconstruct_uniform(grid: SpectralGrid, q, p, uhat0: float, vhat0: float, m: int):
    """Fields at the m points a + i L/m (i < m) via FFT; q, p may be batches."""
    return uhat0 + grid.synthesize(q, m), vhat0 + grid.synthesize(p, m)


def continuous_hamiltonian(state: SpectralState, points: int = 8192) -> float:
    """(1/2) int (v^2 + (2/3) u^3 + u_x^2) dx by fine quadrature of the reconstructed fields."""
    grid = state.grid
    u, v = reconstruct_uniform(grid, state.q, state.p, state.uhat0, state.vhat0, points)
    u_x = grid.synthesize(apply_dj(grid.freq_diag, state.q), points)
    integrand = v * v + (2.0 / 3.0) * u ** 3 + u_x * u_x
    return 0.5 * grid.length / points * float(np.sum(integrand))


def continuous_momentum(state: SpectralState, points: int = 8192) -> float:
    """int u v dx by fine quadrature of the reconstructed fields."""
    u, v = reconstruct_uniform(state.grid, state.q, state.p, state.uhat0, state.vhat0, points)
    return state.grid.length / points * float(np.sum(u * v))
