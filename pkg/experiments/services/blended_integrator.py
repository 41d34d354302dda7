"""
Time stepping with HBVM(k,s) in gamma-space.

One step solves F(gamma) = gamma - P_s^T Omega (x) I f(e (x) y0 + h I_s (x) I gamma) = 0
for the s Legendre coefficients of the stage polynomial, then sets
y1 = y0 + h gamma_0. The nonlinear system is solved by the blended iteration,
which only needs Sigma^{-1}, Sigma = I - h rho_s J, with J the linear part of
the Boussinesq vector field; Sigma^{-1} is applied in O(N) from three
diagonals.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import linalg

from .boussinesq_system import (
    BoussinesqField,
    SpectralGrid,
    SpectralState,
    apply_diag,
    apply_dj,
    hamiltonian_qp,
)
from .exceptions import InvalidArgumentError, NonConvergenceError
from .hbvm_tableau import HBVMethod, build_hbvm, energy_conserving_stages

logger = logging.getLogger(__name__)

SOLVERS = ('blended', 'fixed_point')


@dataclass(frozen=True, eq=False)
class StepperConfig:
    h: float
    method: HBVMethod
    iter_tol: float = 1e-14
    max_iters: int = 100
    floor_tol: float = 1e-12
    solver: str = 'blended'

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidArgumentError(f"Step size must be positive, got {self.h}")
        if not self.iter_tol > 0:
            raise InvalidArgumentError(f"iter_tol must be positive, got {self.iter_tol}")
        if self.max_iters < 1:
            raise InvalidArgumentError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.solver not in SOLVERS:
            raise InvalidArgumentError(f"Unknown solver {self.solver!r}, expected one of {SOLVERS}")


@dataclass
class IterationStats:
    iterations: int
    residual: float
    stagnated: bool = False


class _Workspace:
    """Buffers and rho_s X_s^{-1} shared by both Sigma^{-1} implementations."""

    def __init__(self, method: HBVMethod, h: float, size: int):
        self.method = method
        self.h = h
        self.tau = method.rho_s * h
        self.size = size
        self.xs_inv_scaled = method.xs_inv_scaled
        self.gamma = np.zeros((method.s, size))
        self.eta = np.zeros((method.s, size))
        self.eta1 = np.zeros((method.s, size))

    def sigma_inverse(self, r):
        raise NotImplementedError


class BlendedWorkspace(_Workspace):
    """Sigma^{-1} for the Boussinesq linear part, stored as three N-vectors."""

    def __init__(self, grid: SpectralGrid, method: HBVMethod, h: float):
        super().__init__(method, h, 2 * grid.size)
        self.grid = grid
        d = grid.freq_diag
        denom = 1.0 + self.tau ** 2 * d ** 4
        self.d1_diag = 1.0 / denom
        self.d1d_diag = self.tau * d / denom
        self.d1d3_diag = self.tau * d ** 3 / denom

    def sigma_inverse(self, r):
        return sigma_inverse_apply(self, r)

    def sigma_apply(self, r):
        """Sigma r, matrix-free."""
        r = self._split_check(r)
        n = self.grid.size
        rq, rp = r[..., :n], r[..., n:]
        d = self.grid.freq_diag
        out_q = rq - self.tau * apply_dj(d, rp)
        out_p = rp - self.tau * apply_dj(d ** 3, rq)
        return np.concatenate([out_q, out_p], axis=-1)

    def _split_check(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape[-1] != self.size:
            raise InvalidArgumentError(
                f"Sigma acts on vectors of length 4N={self.size}, got {r.shape[-1]}")
        return r


class DenseBlendedWorkspace(_Workspace):
    """Sigma = I - h rho_s J for an explicit Jacobian, LU-factored once."""

    def __init__(self, jacobian, method: HBVMethod, h: float):
        jacobian = np.atleast_2d(np.asarray(jacobian, dtype=float))
        super().__init__(method, h, jacobian.shape[0])
        self.sigma = np.eye(self.size) - self.tau * jacobian
        self._lu = linalg.lu_factor(self.sigma)

    def sigma_inverse(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape[-1] != self.size:
            raise InvalidArgumentError(f"Sigma acts on vectors of length {self.size}, got {r.shape[-1]}")
        flat = r.reshape(-1, self.size)
        return linalg.lu_solve(self._lu, flat.T).T.reshape(r.shape)


def sigma_inverse_apply(ws: BlendedWorkspace, r):
    """Sigma^{-1} r in O(N); r may carry leading block axes."""
    r = ws._split_check(r)
    n = ws.grid.size
    rq, rp = r[..., :n], r[..., n:]
    out_q = apply_diag(ws.d1_diag, rq) + apply_dj(ws.d1d_diag, rp)
    out_p = apply_dj(ws.d1d3_diag, rq) + apply_diag(ws.d1_diag, rp)
    return np.concatenate([out_q, out_p], axis=-1)


def _as_vector(y0):
    if isinstance(y0, SpectralState):
        return y0.as_vector()
    return np.atleast_1d(np.asarray(y0, dtype=float))


def _default_field(y0, field_fn):
    if field_fn is not None:
        return field_fn
    if isinstance(y0, SpectralState):
        return BoussinesqField(y0.grid, y0.uhat0)
    raise InvalidArgumentError("A vector field is required when y0 is not a SpectralState")


def residual(method: HBVMethod, y0, h: float, gamma, field_fn: Callable = None):
    """F(gamma); the k stage values are evaluated as one batch."""
    y0v = _as_vector(y0)
    f = _default_field(y0, field_fn)
    gamma = np.asarray(gamma, dtype=float)
    stages = y0v + h * (method.mat_Is @ gamma)
    return gamma - method.projection @ f(stages)


def stage_values(method: HBVMethod, y0, h: float, gamma):
    """Y_i = sigma(c_i h), shape (k, len(y0))."""
    return _as_vector(y0) + h * (method.mat_Is @ np.asarray(gamma, dtype=float))


def blended_sweep(ws: _Workspace, method: HBVMethod, gamma, F_val):
    """One blended update from the residual F_val at gamma.

    eta = -F, eta1 = rho_s X_s^{-1} eta,
    gamma <- gamma + Sigma^{-1} [eta1 + Sigma^{-1}(eta - eta1)]   (block-wise).
    """
    eta = np.negative(F_val, out=ws.eta)
    eta1 = np.matmul(method.xs_inv_scaled, eta, out=ws.eta1)
    inner = ws.sigma_inverse(eta - eta1)
    return gamma + ws.sigma_inverse(eta1 + inner)


def solve_stage_coefficients(method: HBVMethod, y0, h: float, field_fn: Callable,
                             workspace: Optional[_Workspace], iter_tol: float = 1e-14,
                             max_iters: int = 100, floor_tol: float = 1e-12,
                             solver: str = 'blended', step_index=None):
    """Iterate from gamma = 0 until ||F||_max <= iter_tol (1 + ||gamma||_max)."""
    y0v = _as_vector(y0)
    gamma = np.zeros((method.s, y0v.size))
    previous = np.inf
    err = np.inf
    for iteration in range(max_iters + 1):
        F_val = residual(method, y0v, h, gamma, field_fn)
        err = float(np.max(np.abs(F_val)))
        if not np.isfinite(err):
            raise NonConvergenceError(
                f"Stage iteration diverged at step {step_index}", err, iteration, step_index)
        scale = 1.0 + float(np.max(np.abs(gamma)))
        if err <= iter_tol * scale:
            return gamma, IterationStats(iteration, err)
        if iteration > 0 and err >= previous and err <= floor_tol * scale:
            logger.debug(f"Residual stagnated at {err:.3e} after {iteration} iterations")
            return gamma, IterationStats(iteration, err, stagnated=True)
        if iteration == max_iters:
            break
        if solver == 'blended':
            gamma = blended_sweep(workspace, method, gamma, F_val)
        else:
            gamma = gamma - F_val
        previous = err
    raise NonConvergenceError(
        f"{method.label}: no convergence in {max_iters} iterations "
        f"(residual {err:.3e}, step {step_index})",
        err, max_iters, step_index)


def simplified_newton_solve(method: HBVMethod, y0, h: float, field_fn: Callable, jacobian,
                            iter_tol: float = 1e-14, max_iters: int = 50):
    """Dense simplified Newton with [I - h X_s (x) J]; a small-N oracle."""
    y0v = _as_vector(y0)
    jacobian = np.atleast_2d(np.asarray(jacobian, dtype=float))
    m = y0v.size
    lu = linalg.lu_factor(np.eye(method.s * m) - h * np.kron(method.mat_Xs, jacobian))
    gamma = np.zeros((method.s, m))
    for _ in range(max_iters):
        F_val = residual(method, y0v, h, gamma, field_fn)
        if np.max(np.abs(F_val)) <= iter_tol * (1.0 + np.max(np.abs(gamma))):
            break
        gamma = gamma - linalg.lu_solve(lu, F_val.reshape(-1)).reshape(gamma.shape)
    return gamma


def step(cfg: StepperConfig, y0: SpectralState, field_fn: Callable = None):
    """One HBVM step from y0; returns (y1, IterationStats)."""
    f = _default_field(y0, field_fn)
    workspace = BlendedWorkspace(y0.grid, cfg.method, cfg.h)
    gamma, stats = solve_stage_coefficients(
        cfg.method, y0, cfg.h, f, workspace, cfg.iter_tol, cfg.max_iters, cfg.floor_tol, cfg.solver)
    return y0.with_vector(y0.as_vector() + cfg.h * gamma[0]), stats


@dataclass
class Trajectory:
    """States at a stride plus per-step invariants and iteration counts."""
    grid: SpectralGrid
    uhat0: float
    vhat0: float
    h: float
    method_label: str
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    step_times: np.ndarray
    hamiltonian: np.ndarray
    momentum: np.ndarray
    iterations: np.ndarray
    snapshot_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    snapshot_q: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    snapshot_p: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    wall_time_seconds: float = 0.0
    stagnated_steps: int = 0

    def state_at(self, index: int) -> SpectralState:
        return SpectralState(grid=self.grid, q=self.q[index].copy(), p=self.p[index].copy(),
                             uhat0=self.uhat0, vhat0=self.vhat0)

    @property
    def final_state(self) -> SpectralState:
        return self.state_at(-1)

    @property
    def hamiltonian_error(self) -> np.ndarray:
        return np.abs(self.hamiltonian - self.hamiltonian[0])

    @property
    def momentum_error(self) -> np.ndarray:
        return np.abs(self.momentum - self.momentum[0])


class HBVMIntegrator:
    """Integrates one SpectralState stream with a fixed method and step size."""

    def __init__(self, config: StepperConfig, grid: SpectralGrid, uhat0: float, nonlinear: bool = True):
        self.config = config
        self.grid = grid
        self.field = BoussinesqField(grid, uhat0, nonlinear=nonlinear)
        self.workspace = BlendedWorkspace(grid, config.method, config.h)

    def advance(self, state: SpectralState, step_index=None):
        cfg = self.config
        gamma, stats = solve_stage_coefficients(
            cfg.method, state, cfg.h, self.field, self.workspace,
            cfg.iter_tol, cfg.max_iters, cfg.floor_tol, cfg.solver, step_index)
        new_state = state.with_vector(state.as_vector() + cfg.h * gamma[0])
        if not new_state.is_finite():
            raise NonConvergenceError(
                f"Non-finite state after step {step_index}", float('nan'), stats.iterations, step_index)
        return new_state, stats, gamma

    def integrate(self, state: SpectralState, n_steps: int, stride: int = 1,
                  snapshot_stride: int = None) -> Trajectory:
        if n_steps < 1:
            raise InvalidArgumentError(f"n_steps must be >= 1, got {n_steps}")
        if stride < 1:
            raise InvalidArgumentError(f"stride must be >= 1, got {stride}")
        if not state.is_finite():
            raise InvalidArgumentError("Initial state has non-finite entries")
        cfg = self.config
        stored = sorted(set(range(0, n_steps + 1, stride)) | {n_steps})
        snapshots = []
        if snapshot_stride:
            snapshots = sorted(set(range(0, n_steps + 1, snapshot_stride)) | {n_steps})
        size = self.grid.size
        q_store = np.empty((len(stored), size))
        p_store = np.empty((len(stored), size))
        snap_q = np.empty((len(snapshots), size))
        snap_p = np.empty((len(snapshots), size))
        ham = np.empty(n_steps + 1)
        mom = np.empty(n_steps + 1)
        iterations = np.zeros(n_steps, dtype=int)
        stagnated = 0

        def record(n, current):
            ham[n] = hamiltonian_qp(self.grid, current.q, current.p, current.uhat0)
            mom[n] = current.q @ current.p
            if n in stored_index:
                q_store[stored_index[n]] = current.q
                p_store[stored_index[n]] = current.p
            if n in snapshot_index:
                snap_q[snapshot_index[n]] = current.q
                snap_p[snapshot_index[n]] = current.p

        stored_index = {n: i for i, n in enumerate(stored)}
        snapshot_index = {n: i for i, n in enumerate(snapshots)}
        logger.info(f"Integrating {cfg.method.label}, h={cfg.h:g}, {n_steps} steps, N={self.grid.N}")
        started = time.perf_counter()
        current = state
        record(0, current)
        for n in range(1, n_steps + 1):
            current, stats, _ = self.advance(current, step_index=n)
            iterations[n - 1] = stats.iterations
            stagnated += int(stats.stagnated)
            record(n, current)
            logger.debug(f"step {n}: {stats.iterations} iterations, residual {stats.residual:.2e}")
        wall = time.perf_counter() - started
        logger.info(f"{cfg.method.label} finished in {wall:.2f}s, "
                    f"mean {iterations.mean():.1f} iterations/step")
        return Trajectory(
            grid=self.grid,
            uhat0=state.uhat0,
            vhat0=state.vhat0,
            h=cfg.h,
            method_label=cfg.method.label,
            times=cfg.h * np.array(stored, dtype=float),
            q=q_store,
            p=p_store,
            step_times=cfg.h * np.arange(n_steps + 1, dtype=float),
            hamiltonian=ham,
            momentum=mom,
            iterations=iterations,
            snapshot_times=cfg.h * np.array(snapshots, dtype=float),
            snapshot_q=snap_q,
            snapshot_p=snap_p,
            wall_time_seconds=wall,
            stagnated_steps=stagnated,
        )


@dataclass
class ShbvmSelection:
    s: int
    k: int
    gamma_norms: List[float]
    capped: bool = False
    stagnated: bool = False


def _plateau_start(norms: np.ndarray, tol: float):
    """Index of the first of three trailing norms that sit within a factor 2 of each
    other well below the leading coefficient, or None."""
    if norms.size < 3:
        return None
    tail = norms[-3:]
    top = float(np.max(norms))
    if np.min(tail) <= 0.0:
        return None
    small = np.max(tail) <= np.sqrt(tol) * top
    flat = np.max(tail) <= 2.0 * np.min(tail)
    return norms.size - 3 if small and flat else None


def shbvm_select(y0, h: float, tol: float = 1e-11, s_max: int = 20, s_min: int = 2,
                 stages_for: Callable[[int], int] = energy_conserving_stages,
                 field_fn: Callable = None, jacobian=None, iter_tol: float = 1e-14,
                 max_iters: int = 100, floor_tol: float = 1e-12) -> ShbvmSelection:
    """Pick the polynomial degree s for a spectral HBVM.

    Trial steps with s = s_min, s_min+1, ... (k = stages_for(s)) until the last
    Legendre coefficient satisfies ||gamma_{s-1}|| <= tol max_j ||gamma_j||, or
    the trailing coefficients stagnate on a round-off plateau.
    """
    if not 0.0 < tol < 1.0:
        raise InvalidArgumentError(f"SHBVM tolerance must lie in (0, 1), got {tol}")
    if s_max < 2 or s_min < 1 or s_min > s_max:
        raise InvalidArgumentError(f"Invalid SHBVM range s_min={s_min}, s_max={s_max}")
    f = _default_field(y0, field_fn)
    norms = np.zeros(0)
    for s in range(s_min, s_max + 1):
        method = build_hbvm(stages_for(s), s)
        if jacobian is not None:
            workspace = DenseBlendedWorkspace(jacobian, method, h)
        else:
            workspace = BlendedWorkspace(y0.grid, method, h)
        gamma, _ = solve_stage_coefficients(
            method, y0, h, f, workspace, iter_tol, max_iters, floor_tol)
        norms = np.max(np.abs(gamma), axis=1)
        if norms[-1] <= tol * np.max(norms):
            logger.info(f"SHBVM order selection: s={s}, k={method.k}")
            return ShbvmSelection(s=s, k=method.k, gamma_norms=norms.tolist())
        start = _plateau_start(norms, tol)
        if start is not None:
            chosen = start + 1
            logger.info(f"SHBVM order selection: coefficients stagnate, s={chosen}")
            return ShbvmSelection(s=chosen, k=stages_for(chosen), gamma_norms=norms.tolist(),
                                  stagnated=True)
    logger.warning(f"SHBVM order selection reached s_max={s_max} without meeting tol={tol:g}")
    return ShbvmSelection(s=s_max, k=stages_for(s_max), gamma_norms=norms.tolist(), capped=True)
