"""
Experiment runner: one integration per RunConfig, convergence sweeps over a
list of step counts, and plot-data export from stored snapshots.

Every run leaves a directory under the output root containing the config
echo, the report in two CSV precisions, the JSON record, the field snapshots
and the Hamiltonian error series. The same report is stored as an
ExperimentRun row.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import yaml
from django.conf import settings
from rest_framework.renderers import JSONRenderer

from .blended_integrator import HBVMIntegrator, StepperConfig, Trajectory, shbvm_select
from .boussinesq_system import BoussinesqField, SpectralGrid, SpectralState, reconstruct
from .exceptions import InvalidArgumentError, NonConvergenceError, SnapshotError
from .hbvm_tableau import build_hbvm
from .problems import build_problem, error_metrics, reference_solution

logger = logging.getLogger(__name__)

ROUND_OFF_FLOOR = 1e-13
SATURATION_FACTOR = 5.0
CSV_COLUMNS = ['method', 'k', 's', 'N', 'n', 'time_s', 'e_u', 'rate_u', 'e_H', 'rate_H', 'e_M', 'rate_M']
METHOD_KINDS = ('gauss', 'hbvm', 'shbvm')


def solver_settings() -> dict:
    return getattr(settings, 'BOUSSINESQ', {})


@dataclass
class RunConfig:
    problem: str
    method_kind: str
    n_steps: int
    problem_params: Dict[str, float] = field(default_factory=dict)
    k: Optional[int] = None
    s: Optional[int] = None
    tol: Optional[float] = None
    s_max: int = 20
    N: Optional[int] = None
    output_dir: Optional[str] = None
    stride: int = 1
    snapshot_stride: Optional[int] = None

    def __post_init__(self):
        if self.n_steps < 1:
            raise InvalidArgumentError(f"time.n must be >= 1, got {self.n_steps}")
        if self.method_kind not in METHOD_KINDS:
            raise InvalidArgumentError(f"Unknown method kind {self.method_kind!r}")
        if self.method_kind == 'gauss':
            if not self.s:
                raise InvalidArgumentError("Gauss methods need method.s")
            self.k = self.s
        elif self.method_kind == 'hbvm':
            if not self.k or not self.s or self.k < self.s:
                raise InvalidArgumentError(f"HBVM needs k >= s >= 1, got k={self.k}, s={self.s}")
        elif self.tol is None or not 0.0 < self.tol < 1.0:
            raise InvalidArgumentError(f"SHBVM needs method.tol in (0, 1), got {self.tol}")

    @classmethod
    def from_validated(cls, data: dict) -> 'RunConfig':
        """Build from RunConfigSerializer.validated_data (nested key groups)."""
        problem = dict(data['problem'])
        method = data['method']
        output = data.get('output') or {}
        return cls(
            problem=problem.pop('name'),
            problem_params=problem,
            method_kind=method['kind'],
            k=method.get('k'),
            s=method.get('s'),
            tol=method.get('tol'),
            s_max=method.get('s_max', 20),
            N=(data.get('grid') or {}).get('N'),
            n_steps=data['time']['n'],
            output_dir=output.get('dir'),
            stride=output.get('stride', 1),
            snapshot_stride=output.get('snapshot_stride'),
        )

    def as_flat(self) -> dict:
        flat = {f'problem.{key}': value for key, value in self.problem_params.items()}
        flat.update({
            'problem.name': self.problem,
            'method.kind': self.method_kind,
            'method.k': self.k,
            'method.s': self.s,
            'method.tol': self.tol,
            'method.s_max': self.s_max,
            'grid.N': self.N,
            'time.n': self.n_steps,
            'output.dir': self.output_dir,
            'output.stride': self.stride,
            'output.snapshot_stride': self.snapshot_stride,
        })
        return {key: value for key, value in sorted(flat.items()) if value is not None}

    def with_steps(self, n_steps: int) -> 'RunConfig':
        data = asdict(self)
        data['n_steps'] = n_steps
        return RunConfig(**data)

    @property
    def label(self) -> str:
        if self.method_kind == 'gauss':
            method = f"gauss{self.s}"
        elif self.method_kind == 'hbvm':
            method = f"hbvm{self.k}-{self.s}"
        else:
            method = 'shbvm'
        grid = f"_N{self.N}" if self.N else ''
        return f"{self.problem}_{method}{grid}_n{self.n_steps}"


def unflatten(flat: dict) -> dict:
    """{'problem.name': 'solitary'} -> {'problem': {'name': 'solitary'}}."""
    nested = {}
    for key, value in flat.items():
        if value is None:
            continue
        group, _, name = str(key).partition('.')
        if not name:
            raise InvalidArgumentError(f"Config keys must look like 'group.key', got {key!r}")
        nested.setdefault(group, {})[name] = value
    return nested


def load_config_file(path) -> dict:
    """Flat dotted-key YAML mapping."""
    with open(path) as handle:
        data = yaml.safe_load(handle) or {}
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"Config file {path} must hold a mapping")
    return data


@dataclass
class RateEntry:
    value: Optional[float]
    saturated: bool = False

    def display(self) -> str:
        if self.value is None:
            return '---'
        if self.saturated:
            return '**'
        return f"{self.value:.1f}"

    def full(self) -> str:
        if self.value is None:
            return '---'
        if self.saturated:
            return '**'
        return repr(self.value)


def is_saturated(error: float) -> bool:
    return error <= SATURATION_FACTOR * ROUND_OFF_FLOOR


def convergence_rate(e_prev: float, e_cur: float, n_prev: int, n_cur: int) -> RateEntry:
    """log(e_prev/e_cur) / log(n_cur/n_prev), flagged once the error sits at round-off."""
    if e_prev is None or e_cur is None:
        return RateEntry(None)
    if e_prev == e_cur:
        return RateEntry(0.0, saturated=True)
    if e_prev <= 0.0 or e_cur <= 0.0:
        return RateEntry(0.0, saturated=True)
    value = math.log(e_prev / e_cur) / math.log(n_cur / n_prev)
    return RateEntry(value, saturated=is_saturated(e_cur))


@dataclass
class RunReport:
    problem: str
    method_kind: str
    method: str
    k: int
    s: int
    N: int
    n: int
    h: float
    status: str = 'completed'
    e_u: Optional[float] = None
    e_H: Optional[float] = None
    e_M: Optional[float] = None
    e_0: Optional[float] = None
    wall_time_seconds: Optional[float] = None
    iterations_mean: Optional[float] = None
    iterations_max: Optional[int] = None
    selected_s: Optional[int] = None
    selected_k: Optional[int] = None
    rate_u: RateEntry = field(default_factory=lambda: RateEntry(None))
    rate_H: RateEntry = field(default_factory=lambda: RateEntry(None))
    rate_M: RateEntry = field(default_factory=lambda: RateEntry(None))
    diagnostics: dict = field(default_factory=dict)
    run_dir: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.status == 'failed'


def _fmt_error(value: Optional[float], full: bool) -> str:
    if value is None:
        return 'nan'
    return repr(float(value)) if full else f"{value:.2e}"


def report_table(reports: List[RunReport], full: bool = False) -> pd.DataFrame:
    """Rows in the fixed CSV schema; ``full`` keeps every digit."""
    rows = []
    for report in reports:
        rows.append({
            'method': report.method,
            'k': report.k,
            's': report.s,
            'N': report.N,
            'n': report.n,
            'time_s': 'nan' if report.wall_time_seconds is None else (
                repr(report.wall_time_seconds) if full else f"{report.wall_time_seconds:.1f}"),
            'e_u': _fmt_error(report.e_u, full),
            'rate_u': report.rate_u.full() if full else report.rate_u.display(),
            'e_H': _fmt_error(report.e_H, full),
            'rate_H': report.rate_H.full() if full else report.rate_H.display(),
            'e_M': _fmt_error(report.e_M, full),
            'rate_M': report.rate_M.full() if full else report.rate_M.display(),
        })
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def write_tables(reports: List[RunReport], directory: Path, stem: str):
    directory.mkdir(parents=True, exist_ok=True)
    report_table(reports).to_csv(directory / f"{stem}.csv", index=False, lineterminator='\n')
    report_table(reports, full=True).to_csv(directory / f"{stem}_full.csv", index=False, lineterminator='\n')


class ExperimentService:
    """Runs experiments and writes their artifacts and records."""

    def __init__(self, output_dir=None, persist: bool = True):
        config = solver_settings()
        self.output_dir = Path(output_dir or config.get('OUTPUT_DIR') or 'runs')
        self.iter_tol = float(config.get('ITER_TOL', 1e-14))
        self.max_iters = int(config.get('MAX_ITERS', 100))
        self.eval_points = int(config.get('EVAL_POINTS', 2048))
        self.default_snapshot_stride = int(config.get('SNAPSHOT_STRIDE', 50))
        self.persist = persist
        self._references: Dict[tuple, Trajectory] = {}

    def _run_directory(self, config: RunConfig) -> Path:
        root = Path(config.output_dir) if config.output_dir else self.output_dir
        return root / config.label

    def _reference(self, spec, n_steps: int) -> Trajectory:
        key = (spec.name, tuple(sorted(spec.params.items())), n_steps)
        if key not in self._references:
            self._references[key] = reference_solution(
                spec, n_steps, iter_tol=self.iter_tol, max_iters=self.max_iters)
        return self._references[key]

    def _resolve_method(self, config: RunConfig, state: SpectralState, h: float):
        if config.method_kind != 'shbvm':
            return build_hbvm(config.k, config.s), None
        selection = shbvm_select(state, h, tol=config.tol, s_max=config.s_max,
                                 iter_tol=self.iter_tol, max_iters=self.max_iters)
        return build_hbvm(selection.k, selection.s), selection

    def integrate(self, config: RunConfig):
        """Integrate without metrics: returns (spec, trajectory, method, selection)."""
        overrides = dict(config.problem_params)
        if config.N:
            overrides['N'] = config.N
        spec = build_problem(config.problem, **overrides)
        state = spec.initial_state()
        h = spec.T / config.n_steps
        method, selection = self._resolve_method(config, state, h)
        stepper = StepperConfig(h=h, method=method, iter_tol=self.iter_tol, max_iters=self.max_iters)
        snapshot_stride = config.snapshot_stride or self.default_snapshot_stride
        trajectory = HBVMIntegrator(stepper, state.grid, state.uhat0).integrate(
            state, config.n_steps, stride=config.stride, snapshot_stride=snapshot_stride)
        return spec, trajectory, method, selection

    def run(self, config: RunConfig, sweep=None, write: bool = True) -> RunReport:
        """One integration; non-convergence marks the report failed instead of raising."""
        spec = build_problem(config.problem, **dict(config.problem_params, N=config.N))
        report = RunReport(
            problem=config.problem, method_kind=config.method_kind,
            method=build_hbvm(config.k, config.s).label if config.method_kind != 'shbvm' else 'SHBVM',
            k=config.k or 0, s=config.s or 0, N=spec.N, n=config.n_steps, h=spec.T / config.n_steps,
        )
        run_dir = self._run_directory(config)
        try:
            spec, trajectory, method, selection = self.integrate(config)
            reference = None if spec.exact is not None else self._reference(spec, config.n_steps)
            metrics = error_metrics(trajectory, spec, eval_grid=self.eval_points, reference=reference)
        except NonConvergenceError as e:
            logger.error(f"Run {config.label} failed: {e}")
            report.status = 'failed'
            report.diagnostics = e.diagnostics()
        else:
            report.k, report.s = method.k, method.s
            if selection is not None:
                report.method = f"SHBVM (k={method.k},s={method.s})"
                report.selected_s, report.selected_k = selection.s, selection.k
                report.diagnostics['gamma_norms'] = selection.gamma_norms
                report.diagnostics['selection_capped'] = selection.capped
            else:
                report.method = method.label
            report.e_u, report.e_H, report.e_M, report.e_0 = metrics.e_u, metrics.e_H, metrics.e_M, metrics.e_0
            report.wall_time_seconds = trajectory.wall_time_seconds
            report.iterations_mean = float(trajectory.iterations.mean())
            report.iterations_max = int(trajectory.iterations.max())
            report.diagnostics['stagnated_steps'] = trajectory.stagnated_steps
            if write:
                self._write_run_artifacts(run_dir, trajectory, spec)
            logger.info(f"{report.method} on {spec.name}, n={config.n_steps}: e_u={report.e_u:.2e} "
                        f"e_H={report.e_H:.2e} e_M={report.e_M:.2e}")
        if write:
            report.run_dir = str(run_dir)
            run_dir.mkdir(parents=True, exist_ok=True)
            with open(run_dir / 'config.yaml', 'w') as handle:
                yaml.safe_dump(config.as_flat(), handle, sort_keys=True)
            write_tables([report], run_dir, 'report')
        if self.persist:
            record = self._persist(report, config, sweep)
            if write:
                self._write_record(run_dir / 'report.json', self._run_record(record))
        return report

    def convergence_sweep(self, base: RunConfig, n_list: List[int]) -> List[RunReport]:
        """Runs base at every n in n_list and fills the rate columns."""
        if len(n_list) < 2 or any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise InvalidArgumentError(f"n_list must be ascending with at least two entries, got {n_list}")
        sweep = self._create_sweep(base) if self.persist else None
        reports = []
        for n_steps in n_list:
            report = self.run(base.with_steps(n_steps), sweep=sweep)
            if report.failed:
                logger.warning(f"Sweep row n={n_steps} failed: {report.diagnostics.get('error')}")
            reports.append(report)
        for previous, current in zip(reports, reports[1:]):
            current.rate_u = convergence_rate(previous.e_u, current.e_u, previous.n, current.n)
            current.rate_H = convergence_rate(previous.e_H, current.e_H, previous.n, current.n)
            current.rate_M = convergence_rate(previous.e_M, current.e_M, previous.n, current.n)
        sweep_dir = (Path(base.output_dir) if base.output_dir else self.output_dir) / \
            f"{base.with_steps(n_list[0]).label.rsplit('_n', 1)[0]}_sweep"
        write_tables(reports, sweep_dir, 'sweep')
        if sweep is not None:
            self._store_rates(sweep, reports)
            self._write_record(sweep_dir / 'sweep.json', self._sweep_record(sweep))
        return reports

    def _write_run_artifacts(self, run_dir: Path, trajectory: Trajectory, spec):
        run_dir.mkdir(parents=True, exist_ok=True)
        grid = trajectory.grid
        np.savez(
            run_dir / 'fields.npz',
            a=grid.a, b=grid.b, N=grid.N, T=spec.T,
            uhat0=trajectory.uhat0, vhat0=trajectory.vhat0,
            times=trajectory.snapshot_times, q=trajectory.snapshot_q, p=trajectory.snapshot_p,
        )
        series = np.column_stack([trajectory.step_times, trajectory.hamiltonian_error,
                                  trajectory.momentum_error])
        np.savetxt(run_dir / 'invariants.txt', series, fmt='%.17e', header='t |H-H0| |M-M0|')

    def _persist(self, report: RunReport, config: RunConfig, sweep=None):
        from ..models import ExperimentRun

        return ExperimentRun.objects.create(
            sweep=sweep,
            problem=report.problem,
            method_kind=report.method_kind,
            method_label=report.method,
            k=report.k,
            s=report.s,
            N=report.N,
            n_steps=report.n,
            step_size=report.h,
            e_u=report.e_u,
            e_H=report.e_H,
            e_M=report.e_M,
            e_0=report.e_0,
            wall_time_seconds=report.wall_time_seconds,
            iterations_mean=report.iterations_mean,
            iterations_max=report.iterations_max,
            selected_s=report.selected_s,
            selected_k=report.selected_k,
            status=report.status,
            diagnostics=report.diagnostics,
            config=config.as_flat(),
        )

    def _create_sweep(self, base: RunConfig):
        from ..models import ConvergenceSweep

        return ConvergenceSweep.objects.create(
            problem=base.problem, method_kind=base.method_kind,
            label=base.label.rsplit('_n', 1)[0])

    def _store_rates(self, sweep, reports: List[RunReport]):
        runs = list(sweep.runs.order_by('n_steps', 'created_at'))
        for run, report in zip(runs, reports):
            for name in ('u', 'H', 'M'):
                entry = getattr(report, f"rate_{name}")
                setattr(run, f"rate_{name}", entry.value)
                setattr(run, f"saturated_{name}", entry.saturated)
            run.save()

    @staticmethod
    def _write_record(path: Path, data):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(JSONRenderer().render(data, renderer_context={'indent': 2}))

    @staticmethod
    def _run_record(run) -> dict:
        from ..serializers import ExperimentRunSerializer

        return ExperimentRunSerializer(run).data

    @staticmethod
    def _sweep_record(sweep) -> dict:
        from ..serializers import ConvergenceSweepSerializer

        sweep.refresh_from_db()
        return ConvergenceSweepSerializer(sweep).data


def _load_snapshots(run_dir: Path):
    path = Path(run_dir) / 'fields.npz'
    if not path.exists():
        raise SnapshotError(f"No field snapshots stored in {run_dir}")
    data = np.load(path)
    if data['times'].size == 0:
        raise SnapshotError(f"No field snapshots stored in {run_dir}")
    return data


def export_field(run_dir, times: List[float], output=None, points: int = 2048) -> Path:
    """Write (x, t, 1/2 - u(x, t)) triples from the snapshots nearest to ``times``."""
    data = _load_snapshots(run_dir)
    grid = SpectralGrid(float(data['a']), float(data['b']), int(data['N']))
    stored = data['times']
    final_time = float(data['T'])
    xs = grid.a + np.arange(points) * (grid.length / points)
    blocks = []
    used = []
    for requested in times:
        if requested < 0.0 or requested > final_time * (1.0 + 1e-12):
            raise SnapshotError(f"Requested time {requested} lies outside [0, {final_time}]")
        index = int(np.argmin(np.abs(stored - requested)))
        state = SpectralState(grid=grid, q=data['q'][index], p=data['p'][index],
                              uhat0=float(data['uhat0']), vhat0=float(data['vhat0']))
        u, _ = reconstruct(state, xs)
        blocks.append(np.column_stack([xs, np.full(points, stored[index]), 0.5 - u]))
        used.append(f"{requested!r}->{float(stored[index])!r}")
    output = Path(output) if output else Path(run_dir) / 'field.txt'
    header = 'x t 1/2-u\nrequested->stored times: ' + ' '.join(used)
    np.savetxt(output, np.vstack(blocks), fmt='%.17e', header=header)
    logger.info(f"Exported {len(times)} field slices to {output}")
    return output


def export_hamiltonian_error(run_dir, output=None) -> Path:
    """(t, |H - H0|) pairs for plotting the energy error along a run."""
    source = Path(run_dir) / 'invariants.txt'
    if not source.exists():
        raise SnapshotError(f"No invariant series stored in {run_dir}")
    series = np.loadtxt(source)
    output = Path(output) if output else Path(run_dir) / 'hamiltonian_error.txt'
    np.savetxt(output, series[:, :2], fmt='%.17e', header='t |H-H0|')
    return output


@dataclass
class SelfTestResult:
    name: str
    passed: bool
    detail: str


def _check(name: str, value: float, limit: float) -> SelfTestResult:
    return SelfTestResult(name, bool(value <= limit), f"{value:.3e} (limit {limit:.0e})")


def run_selftest(n_steps: int = 2000) -> List[SelfTestResult]:
    """Fast consistency checks plus the reduced energy-drift run (N=100 over a quarter of T)."""
    from .blended_integrator import BlendedWorkspace
    from .boussinesq_system import hamiltonian_qp
    from .legendre_gauss import gauss_rule

    results = []
    rule = gauss_rule(4)
    results.append(_check('gauss_rule_exactness', abs(rule.integrate(rule.nodes ** 7) - 0.125), 1e-15))

    rng = np.random.default_rng(7)
    grid = SpectralGrid(-10.0, 10.0, 8)
    workspace = BlendedWorkspace(grid, build_hbvm(3, 2), 0.5)
    r = rng.standard_normal((2, 2 * grid.size))
    roundtrip = workspace.sigma_inverse(workspace.sigma_apply(r)) - r
    results.append(_check('sigma_inverse', float(np.max(np.abs(roundtrip))), 1e-13))

    q = 0.1 * rng.standard_normal(grid.size)
    p = 0.1 * rng.standard_normal(grid.size)
    direction = rng.standard_normal(grid.size)
    eps = 1e-5
    numeric = (hamiltonian_qp(grid, q + eps * direction, p, 0.5)
               - hamiltonian_qp(grid, q - eps * direction, p, 0.5)) / (2 * eps)
    ydot = BoussinesqField(grid, 0.5)(np.concatenate([q, p]))
    # pdot = (D (x) J2^T) grad_q H, and D (x) J2^T is invertible for a nonzero grid
    grad_q = _undo_dj(grid.freq_diag, ydot[grid.size:])
    results.append(_check('gradient_consistency', abs(numeric - grad_q @ direction), 1e-6))

    spec = build_problem('solitary', N=100, T=20.0)
    state = spec.initial_state()
    stepper = StepperConfig(h=spec.T / n_steps, method=build_hbvm(2, 1))
    trajectory = HBVMIntegrator(stepper, state.grid, state.uhat0).integrate(state, n_steps, stride=n_steps)
    drift = _check('reduced_energy_drift', float(np.max(trajectory.hamiltonian_error)), 1e-12)
    drift.detail += f", {trajectory.wall_time_seconds:.1f}s"
    results.append(drift)

    for result in results:
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(level, f"selftest {result.name}: {'PASS' if result.passed else 'FAIL'} {result.detail}")
    return results


def _undo_dj(diag: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Inverse of apply_dj: diag * (-y, x) -> (x, y)."""
    out = np.empty_like(vec)
    out[..., 0::2] = vec[..., 1::2] / diag
    out[..., 1::2] = -vec[..., 0::2] / diag
    return out
