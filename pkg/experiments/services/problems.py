"""
Benchmark problems for the shifted variable u = w + 1/2 and their error metrics.

The domains are wide enough for the sech^2 tails to sit below double-precision
resolution at the boundary, so the data are periodic to machine accuracy.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .blended_integrator import HBVMIntegrator, StepperConfig, Trajectory, shbvm_select
from .boussinesq_system import (
    SpectralGrid,
    SpectralState,
    hamiltonian,
    momentum,
    project_initial,
    reconstruct,
    reconstruct_uniform,
)
from .exceptions import InvalidArgumentError, MissingReferenceError
from .hbvm_tableau import build_hbvm

logger = logging.getLogger(__name__)

DEFAULT_EVAL_POINTS = 2048
CHUNK_ROWS = 256


def sech2(z):
    return 1.0 / np.cosh(z) ** 2


def wave_speed(A: float, sign: int = 1) -> float:
    """c = +-sqrt(1 - 2A/3)."""
    if not 0.0 < A < 1.5:
        raise InvalidArgumentError(f"Amplitude must satisfy 0 < A < 3/2, got {A}")
    return math.copysign(math.sqrt(1.0 - 2.0 * A / 3.0), sign)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    name: str
    a: float
    b: float
    T: float
    N: int
    u0: Callable
    v0: Callable
    exact: Optional[Callable] = None
    exact_v: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidArgumentError(f"Final time must be positive, got {self.T}")
        if not self.b > self.a:
            raise InvalidArgumentError(f"Domain needs b > a, got [{self.a}, {self.b}]")

    @property
    def grid(self) -> SpectralGrid:
        return SpectralGrid(self.a, self.b, self.N)

    def initial_state(self, quad_points: int = None) -> SpectralState:
        return project_initial(self.grid, self.u0, self.v0, quad_points)

    def invariant_refs(self):
        """(H0, M0) of the projected initial data."""
        state = self.initial_state()
        return hamiltonian(state), momentum(state)

    def with_overrides(self, **overrides) -> 'ProblemSpec':
        params = dict(self.params, **overrides)
        return PROBLEMS[self.name](**params)


def solitary_wave(A: float = 3 / 8, xi0: float = 0.0, speed_sign: int = 1,
                  a: float = -120.0, b: float = 80.0, T: float = 80.0, N: int = 300) -> ProblemSpec:
    """u = 1/2 - A sech^2(sqrt(A/6)(x + ct - xi0)), v = c (u - 1/2)."""
    c = wave_speed(A, speed_sign)
    kappa = math.sqrt(A / 6.0)

    def exact(x, t):
        return 0.5 - A * sech2(kappa * (np.asarray(x) + c * t - xi0))

    def exact_v(x, t):
        return c * (exact(x, t) - 0.5)

    return ProblemSpec(
        name='solitary', a=a, b=b, T=T, N=N,
        u0=lambda x: exact(x, 0.0),
        v0=lambda x: exact_v(x, 0.0),
        exact=exact, exact_v=exact_v,
        params=dict(A=A, xi0=xi0, speed_sign=speed_sign, a=a, b=b, T=T, N=N),
    )


def wave_spread(A: float = 3 / 32, a: float = -150.0, b: float = 150.0,
                T: float = 50.0, N: int = 300) -> ProblemSpec:
    """A single sech^2 bump at rest that splits into two counter-moving waves."""
    if not A > 0:
        raise InvalidArgumentError(f"Amplitude must be positive, got {A}")
    kappa = math.sqrt(A / 6.0)
    return ProblemSpec(
        name='spread', a=a, b=b, T=T, N=N,
        u0=lambda x: 0.5 - A * sech2(kappa * np.asarray(x)),
        v0=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        params=dict(A=A, a=a, b=b, T=T, N=N),
    )


def wave_collision(A: float = 0.369, xi1: float = -50.0, xi2: float = 50.0,
                   a: float = -150.0, b: float = 150.0, T: float = 120.0, N: int = 300) -> ProblemSpec:
    """Two solitary waves heading towards each other; they meet near t = 60."""
    if xi1 == xi2:
        raise InvalidArgumentError("Collision problem needs two distinct wave centres")
    c = wave_speed(A)
    kappa = math.sqrt(A / 6.0)

    def u0(x):
        x = np.asarray(x)
        return 0.5 - A * sech2(kappa * (x - xi2)) - A * sech2(kappa * (x - xi1))

    def v0(x):
        x = np.asarray(x)
        # left wave moves right, right wave moves left
        return c * (A * sech2(kappa * (x - xi1)) - A * sech2(kappa * (x - xi2)))

    return ProblemSpec(
        name='collision', a=a, b=b, T=T, N=N, u0=u0, v0=v0,
        params=dict(A=A, xi1=xi1, xi2=xi2, a=a, b=b, T=T, N=N),
    )


PROBLEMS = {
    'solitary': solitary_wave,
    'spread': wave_spread,
    'collision': wave_collision,
}


def build_problem(name: str, **overrides) -> ProblemSpec:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise InvalidArgumentError(f"Unknown problem {name!r}, expected one of {sorted(PROBLEMS)}")
    return factory(**{key: value for key, value in overrides.items() if value is not None})


def evaluation_points(spec: ProblemSpec, points: int = DEFAULT_EVAL_POINTS) -> np.ndarray:
    """``points`` evenly spaced abscissae a + i L/points, i < points."""
    return spec.a + np.arange(points) * ((spec.b - spec.a) / points)


def projection_error(spec: ProblemSpec, state: SpectralState, points: int = DEFAULT_EVAL_POINTS) -> float:
    """e_0: max-norm error of the projected initial fields on the evaluation grid."""
    xs = evaluation_points(spec, points)
    u, v = reconstruct_uniform(state.grid, state.q, state.p, state.uhat0, state.vhat0, points)
    u_ref = np.asarray(spec.u0(xs), dtype=float) * np.ones_like(xs)
    v_ref = np.asarray(spec.v0(xs), dtype=float) * np.ones_like(xs)
    return float(max(np.max(np.abs(u - u_ref)), np.max(np.abs(v - v_ref))))


def reference_solution(spec: ProblemSpec, n_steps: int, tol: float = 1e-12, s_max: int = 20,
                       iter_tol: float = 1e-14, max_iters: int = 100) -> Trajectory:
    """SHBVM on the doubled mesh (h/2), stored at the coarse times."""
    state = spec.initial_state()
    h = spec.T / (2 * n_steps)
    selection = shbvm_select(state, h, tol=tol, s_max=s_max, iter_tol=iter_tol, max_iters=max_iters)
    config = StepperConfig(h=h, method=build_hbvm(selection.k, selection.s),
                           iter_tol=iter_tol, max_iters=max_iters)
    logger.info(f"Reference for {spec.name}: SHBVM (k={selection.k},s={selection.s}), {2 * n_steps} steps")
    return HBVMIntegrator(config, state.grid, state.uhat0).integrate(state, 2 * n_steps, stride=2)


@dataclass
class ErrorMetrics:
    e_u: float
    e_H: float
    e_M: float
    e_0: float


def _align(times: np.ndarray, reference_times: np.ndarray) -> np.ndarray:
    index = np.searchsorted(reference_times, times)
    index = np.clip(index, 0, reference_times.size - 1)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(reference_times))))
    if not np.all(np.abs(reference_times[index] - times) <= tol):
        raise MissingReferenceError("Reference trajectory does not cover the stored times")
    return index


def error_metrics(trajectory: Trajectory, spec: ProblemSpec, eval_grid=None,
                  reference: Trajectory = None) -> ErrorMetrics:
    """(e_u, e_H, e_M, e_0) in the max norm over stored times and evaluation points.

    ``eval_grid`` is either a point count (evenly spaced, FFT evaluation) or an
    explicit array of abscissae.
    """
    grid = trajectory.grid
    if eval_grid is None or np.isscalar(eval_grid):
        points = DEFAULT_EVAL_POINTS if eval_grid is None else int(eval_grid)
        xs = evaluation_points(spec, points)

        def fields(q):
            return grid.synthesize(q, points) + trajectory.uhat0
    else:
        xs = np.asarray(eval_grid, dtype=float)
        basis = grid.basis_matrix(xs)

        def fields(q):
            return q @ basis.T + trajectory.uhat0

    if reference is not None:
        index = _align(trajectory.times, reference.times)

        def reference_fields(rows):
            return fields(reference.q[index[rows]])
    elif spec.exact is not None:
        def reference_fields(rows):
            return np.stack([spec.exact(xs, t) for t in trajectory.times[rows]])
    else:
        raise MissingReferenceError(
            f"Problem {spec.name!r} has no exact solution and no reference trajectory was given")

    e_u = 0.0
    for start in range(0, trajectory.times.size, CHUNK_ROWS):
        rows = slice(start, start + CHUNK_ROWS)
        diff = fields(trajectory.q[rows]) - reference_fields(rows)
        e_u = max(e_u, float(np.max(np.abs(diff))))

    initial = trajectory.state_at(0)
    u0_num, v0_num = reconstruct(initial, xs)
    u0_ref = np.asarray(spec.u0(xs), dtype=float) * np.ones_like(xs)
    v0_ref = np.asarray(spec.v0(xs), dtype=float) * np.ones_like(xs)
    e_0 = float(max(np.max(np.abs(u0_num - u0_ref)), np.max(np.abs(v0_num - v0_ref))))

    return ErrorMetrics(
        e_u=e_u,
        e_H=float(np.max(trajectory.hamiltonian_error)),
        e_M=float(np.max(trajectory.momentum_error)),
        e_0=e_0,
    )
