import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, tag
from numpy.testing import assert_allclose

from experiments.models import ConvergenceSweep, ExperimentRun
from experiments.serializers import RunConfigSerializer
from experiments.services.boussinesq_system import SpectralGrid, SpectralState, reconstruct
from experiments.services.exceptions import InvalidArgumentError, SnapshotError
from experiments.services.harness import (
    CSV_COLUMNS,
    ExperimentService,
    RunConfig,
    convergence_rate,
    export_field,
    export_hamiltonian_error,
    report_table,
    run_selftest,
    unflatten,
)
from experiments.services.problems import build_problem, wave_speed

SMALL_RUN = {
    'problem.name': 'solitary',
    'problem.T': 1.0,
    'method.kind': 'hbvm',
    'method.k': 2,
    'method.s': 1,
    'grid.N': 32,
    'time.n': 10,
    'output.snapshot_stride': 5,
}


def validated(flat):
    serializer = RunConfigSerializer(data=unflatten(flat))
    serializer.is_valid(raise_exception=True)
    return RunConfig.from_validated(serializer.validated_data)


class ConvergenceRateTests(TestCase):
    def test_second_order(self):
        entry = convergence_rate(4e-6, 1e-6, 1000, 2000)
        self.assertAlmostEqual(entry.value, 2.0, delta=1e-12)
        self.assertFalse(entry.saturated)
        self.assertEqual(entry.display(), '2.0')

    def test_identical_errors(self):
        entry = convergence_rate(3e-14, 3e-14, 100, 200)
        self.assertEqual(entry.value, 0.0)
        self.assertTrue(entry.saturated)
        self.assertEqual(entry.display(), '**')

    def test_round_off_floor(self):
        self.assertTrue(convergence_rate(1e-12, 4e-13, 100, 200).saturated)
        self.assertFalse(convergence_rate(1e-11, 6e-13, 100, 200).saturated)

    def test_first_row(self):
        entry = convergence_rate(None, 1e-6, 100, 200)
        self.assertIsNone(entry.value)
        self.assertEqual(entry.display(), '---')


class RunConfigTests(TestCase):
    def test_unflatten(self):
        self.assertEqual(unflatten({'problem.name': 'spread', 'time.n': 5, 'grid.N': None}),
                         {'problem': {'name': 'spread'}, 'time': {'n': 5}})
        with self.assertRaises(InvalidArgumentError):
            unflatten({'name': 'spread'})

    def test_from_validated(self):
        config = validated(dict(SMALL_RUN, **{'problem.A': 0.25}))
        self.assertEqual(config.problem, 'solitary')
        self.assertEqual(config.problem_params, {'T': 1.0, 'A': 0.25})
        self.assertEqual((config.k, config.s, config.N, config.n_steps), (2, 1, 32, 10))
        self.assertEqual(config.label, 'solitary_hbvm2-1_N32_n10')
        self.assertEqual(config.as_flat()['method.kind'], 'hbvm')

    def test_gauss_sets_k(self):
        config = validated(dict(SMALL_RUN, **{'method.kind': 'gauss', 'method.s': 2, 'method.k': None}))
        self.assertEqual(config.k, 2)

    def test_speed_sign(self):
        config = validated(dict(SMALL_RUN, **{'problem.speed_sign': -1}))
        self.assertEqual(config.problem_params['speed_sign'], -1)
        spec = build_problem(config.problem, **config.problem_params)
        self.assertLess(wave_speed(0.375, spec.params['speed_sign']), 0.0)

    def test_serializer_rejects_bad_values(self):
        bad = [
            {'time.n': 0},
            {'method.k': 1, 'method.s': 2},
            {'method.kind': 'shbvm', 'method.tol': 1.5},
            {'problem.name': 'kdv'},
            {'grid.N': 0},
            {'problem.A': 2.0},
            {'problem.xi1': 3.0},
            {'problem.speed_sign': 2},
            {'problem.name': 'spread', 'problem.speed_sign': 1},
            {'method.order': 4},
        ]
        for override in bad:
            serializer = RunConfigSerializer(data=unflatten(dict(SMALL_RUN, **override)))
            self.assertFalse(serializer.is_valid(), override)

    def test_direct_construction_is_checked(self):
        with self.assertRaises(InvalidArgumentError):
            RunConfig(problem='solitary', method_kind='hbvm', n_steps=10, k=1, s=2)
        with self.assertRaises(InvalidArgumentError):
            RunConfig(problem='solitary', method_kind='shbvm', n_steps=10)


class ExperimentServiceTests(TestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.output = Path(tmp.name)
        self.service = ExperimentService(output_dir=self.output)

    def test_run_writes_every_artifact(self):
        report = self.service.run(validated(SMALL_RUN))
        self.assertEqual(report.status, 'completed')
        self.assertEqual(report.method, 'HBVM(2,1)')
        self.assertLess(report.e_H, 1e-12)
        self.assertGreater(report.wall_time_seconds, 0.0)
        run_dir = Path(report.run_dir)
        for name in ('config.yaml', 'report.csv', 'report_full.csv', 'report.json', 'fields.npz', 'invariants.txt'):
            self.assertTrue((run_dir / name).exists(), name)
        table = pd.read_csv(run_dir / 'report.csv')
        self.assertEqual(list(table.columns), CSV_COLUMNS)
        full = pd.read_csv(run_dir / 'report_full.csv', float_precision='round_trip')
        self.assertEqual(full['e_u'][0], report.e_u)
        with open(run_dir / 'config.yaml') as handle:
            self.assertEqual(yaml.safe_load(handle)['time.n'], 10)
        record = json.loads((run_dir / 'report.json').read_text())
        self.assertEqual(record['status'], 'completed')
        self.assertEqual(record['n_steps'], 10)

        row = ExperimentRun.objects.get()
        self.assertEqual(row.method_label, 'HBVM(2,1)')
        self.assertEqual(row.e_u, report.e_u)
        self.assertIsNone(row.sweep)

    def test_runs_are_deterministic(self):
        first = self.service.run(validated(dict(SMALL_RUN, **{'output.dir': str(self.output / 'a')})))
        second = self.service.run(validated(dict(SMALL_RUN, **{'output.dir': str(self.output / 'b')})))
        for name in ('report.csv', 'report_full.csv'):
            left = pd.read_csv(Path(first.run_dir) / name, dtype=str).drop(columns='time_s')
            right = pd.read_csv(Path(second.run_dir) / name, dtype=str).drop(columns='time_s')
            pd.testing.assert_frame_equal(left, right)

    def test_non_convergence_marks_run_failed(self):
        self.service.max_iters = 1
        report = self.service.run(validated(dict(SMALL_RUN, **{'problem.T': 10.0})))
        self.assertTrue(report.failed)
        self.assertIn('residual', report.diagnostics)
        row = ExperimentRun.objects.get()
        self.assertEqual(row.status, 'failed')
        self.assertIsNone(row.e_u)
        self.assertEqual(pd.read_csv(Path(report.run_dir) / 'report.csv')['rate_u'][0], '---')

    def test_shbvm_run_records_selection(self):
        report = self.service.run(validated({
            'problem.name': 'solitary', 'problem.T': 2.0, 'grid.N': 32, 'time.n': 4,
            'method.kind': 'shbvm', 'method.tol': 1e-11,
        }))
        self.assertEqual(report.selected_s, report.s)
        self.assertEqual(report.selected_k, math.ceil(1.5 * report.s))
        self.assertTrue(report.method.startswith('SHBVM (k='))
        self.assertIn('gamma_norms', ExperimentRun.objects.get().diagnostics)

    def test_convergence_sweep(self):
        base = validated({
            'problem.name': 'spread', 'problem.T': 1.0, 'grid.N': 32, 'time.n': 10,
            'method.kind': 'gauss', 'method.s': 1,
        })
        reports = self.service.convergence_sweep(base, [10, 20, 40])
        self.assertEqual([report.n for report in reports], [10, 20, 40])
        self.assertIsNone(reports[0].rate_u.value)
        self.assertAlmostEqual(reports[2].rate_u.value, 2.0, delta=0.2)
        sweep = ConvergenceSweep.objects.get()
        self.assertEqual(sweep.runs.count(), 3)
        self.assertAlmostEqual(sweep.runs.last().rate_u, reports[2].rate_u.value, delta=1e-12)
        sweep_dir = self.output / 'spread_gauss1_N32_sweep'
        table = pd.read_csv(sweep_dir / 'sweep.csv')
        self.assertEqual(table['rate_u'][0], '---')
        record = json.loads((sweep_dir / 'sweep.json').read_text())
        self.assertEqual(len(record['runs']), 3)

    def test_sweep_needs_ascending_list(self):
        with self.assertRaises(InvalidArgumentError):
            self.service.convergence_sweep(validated(SMALL_RUN), [20, 10])
        with self.assertRaises(InvalidArgumentError):
            self.service.convergence_sweep(validated(SMALL_RUN), [10])

    def test_report_table_formatting(self):
        report = self.service.run(validated(SMALL_RUN), write=False)
        table = report_table([report])
        self.assertRegex(table['e_u'][0], r'^\d\.\d\de[+-]\d\d$')


class ExportFieldTests(TestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.output = Path(tmp.name)
        report = ExperimentService(output_dir=self.output).run(validated(SMALL_RUN))
        self.run_dir = Path(report.run_dir)
        self.e_0 = report.e_0

    def test_initial_slice_is_the_wave(self):
        path = export_field(self.run_dir, [0.0], points=512)
        data = np.loadtxt(path)
        kappa = math.sqrt(0.375 / 6)
        expected = 0.375 / np.cosh(kappa * data[:, 0]) ** 2
        self.assertTrue(np.all(data[:, 1] == 0.0))
        self.assertLessEqual(np.max(np.abs(data[:, 2] - expected)), self.e_0 + 1e-15)

    def test_round_trip_is_bit_exact(self):
        path = export_field(self.run_dir, [0.4, 1.0], output=self.output / 'slices.txt', points=256)
        data = np.loadtxt(path)
        stored = np.load(self.run_dir / 'fields.npz')
        grid = SpectralGrid(float(stored['a']), float(stored['b']), int(stored['N']))
        xs = grid.a + np.arange(256) * (grid.length / 256)
        # nearest stored snapshot to t = 0.4 is t = 0.5
        state = SpectralState(grid=grid, q=stored['q'][1], p=stored['p'][1],
                              uhat0=float(stored['uhat0']), vhat0=float(stored['vhat0']))
        u, _ = reconstruct(state, xs)
        self.assertTrue(np.array_equal(data[:256, 2], 0.5 - u))
        assert_allclose(data[:256, 1], 0.5)
        assert_allclose(data[256:, 1], 1.0)

    def test_time_beyond_final_time(self):
        with self.assertRaises(SnapshotError):
            export_field(self.run_dir, [1.5])

    def test_missing_snapshots(self):
        with self.assertRaises(SnapshotError):
            export_field(self.output, [0.0])

    def test_hamiltonian_series(self):
        data = np.loadtxt(export_hamiltonian_error(self.run_dir))
        self.assertEqual(data.shape, (11, 2))
        self.assertEqual(data[0, 1], 0.0)


class CommandTests(TestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.output = Path(tmp.name)

    def write_config(self, values):
        path = self.output / 'config.yaml'
        with open(path, 'w') as handle:
            yaml.safe_dump(values, handle)
        return str(path)

    def test_run_command_with_overrides(self):
        config = self.write_config(dict(SMALL_RUN, **{'output.dir': str(self.output)}))
        call_command('run', '--config', config, '--time.n', '5')
        row = ExperimentRun.objects.get()
        self.assertEqual(row.n_steps, 5)
        self.assertTrue((self.output / 'solitary_hbvm2-1_N32_n5' / 'report.csv').exists())

    def test_invalid_config_is_rejected(self):
        config = self.write_config(dict(SMALL_RUN, **{'method.k': 0}))
        with self.assertRaises(CommandError):
            call_command('run', '--config', config)
        self.assertFalse(ExperimentRun.objects.exists())

    def test_export_field_command_errors(self):
        with self.assertRaises(CommandError):
            call_command('export_field', str(self.output), '--times', '0')
        with self.assertRaises(CommandError):
            call_command('export_field', str(self.output))

    def test_sweep_command(self):
        config = self.write_config({
            'problem.name': 'solitary', 'problem.T': 1.0, 'grid.N': 32,
            'method.kind': 'gauss', 'method.s': 2, 'output.dir': str(self.output),
        })
        call_command('sweep', '--config', config, '--n-list', '5,10')
        self.assertEqual(ConvergenceSweep.objects.get().runs.count(), 2)


class SelfTestTests(TestCase):
    def test_selftest_passes(self):
        results = run_selftest()
        failed = [(result.name, result.detail) for result in results if not result.passed]
        self.assertEqual(failed, [])

    def test_selftest_command(self):
        call_command('selftest', '--steps', '200')


@tag('slow')
class PublishedSweepTests(TestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.service = ExperimentService(output_dir=tmp.name)

    def test_second_order_methods(self):
        for kind, k, s in (('gauss', 1, 1), ('hbvm', 2, 1)):
            base = validated({'problem.name': 'solitary', 'method.kind': kind, 'method.k': k,
                              'method.s': s, 'time.n': 8000})
            reports = self.service.convergence_sweep(base, [8000, 9600, 11200])
            for report in reports[1:]:
                self.assertAlmostEqual(report.rate_u.value, 2.0, delta=0.2)

    def test_fourth_order_methods(self):
        for kind, k, s in (('gauss', 2, 2), ('hbvm', 3, 2)):
            base = validated({'problem.name': 'solitary', 'method.kind': kind, 'method.k': k,
                              'method.s': s, 'time.n': 1000})
            reports = self.service.convergence_sweep(base, [1000, 1200, 1400])
            for report in reports[1:]:
                self.assertAlmostEqual(report.rate_u.value, 4.0, delta=0.2)

    def test_energy_conservation_on_every_problem(self):
        ladders = {'solitary': 8000, 'spread': 1000, 'collision': 1200}
        for problem, n in ladders.items():
            for k, s in ((2, 1), (3, 2)):
                report = self.service.run(validated({'problem.name': problem, 'method.kind': 'hbvm',
                                                     'method.k': k, 'method.s': s, 'time.n': n}))
                self.assertLess(report.e_H, 5e-13, (problem, k, s))

    def test_spectral_hbvm_end_to_end(self):
        for problem, n, accepted in (('solitary', 80, (9, 10, 11)), ('collision', 60, (11, 12, 13))):
            report = self.service.run(validated({'problem.name': problem, 'method.kind': 'shbvm',
                                                 'method.tol': 1e-11, 'time.n': n}))
            self.assertIn(report.selected_s, accepted)
            self.assertLess(max(report.e_u, report.e_H, report.e_M), 1e-12)
