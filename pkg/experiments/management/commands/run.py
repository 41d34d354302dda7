from django.core.management.base import BaseCommand, CommandError

from experiments.services.exceptions import SolverError
from experiments.services.harness import ExperimentService

from ._options import add_config_arguments, config_from_options


class Command(BaseCommand):
    help = "Integrate one benchmark problem and write its report, record and snapshots"

    def add_arguments(self, parser):
        add_config_arguments(parser)

    def handle(self, *args, **options):
        config = config_from_options(options)
        try:
            report = ExperimentService().run(config)
        except SolverError as e:
            raise CommandError(str(e))
        if report.failed:
            raise CommandError(f"{report.method} failed: {report.diagnostics.get('error')}")
        self.stdout.write(
            f"{report.method} {report.problem} N={report.N} n={report.n}: "
            f"e_u={report.e_u:.2e} e_H={report.e_H:.2e} e_M={report.e_M:.2e} e_0={report.e_0:.2e} "
            f"({report.wall_time_seconds:.1f}s)"
        )
        self.stdout.write(self.style.SUCCESS(f"Results written to {report.run_dir}"))
