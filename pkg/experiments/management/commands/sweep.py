from django.core.management.base import BaseCommand, CommandError

from experiments.services.exceptions import SolverError
from experiments.services.harness import ExperimentService, report_table

from ._options import add_config_arguments, config_from_options


def parse_int_list(text: str):
    try:
        return [int(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise CommandError(f"Expected a comma-separated list of integers, got {text!r}")


class Command(BaseCommand):
    help = "Run a convergence sweep over several step counts and tabulate errors and rates"

    def add_arguments(self, parser):
        add_config_arguments(parser, skip=('time.n',))
        parser.add_argument('--n-list', required=True, help="Step counts, e.g. 8000,9600,11200")

    def handle(self, *args, **options):
        n_list = parse_int_list(options['n_list'])
        if not n_list:
            raise CommandError("--n-list is empty")
        config = config_from_options(options, **{'time.n': n_list[0]})
        try:
            reports = ExperimentService().convergence_sweep(config, n_list)
        except SolverError as e:
            raise CommandError(str(e))
        self.stdout.write(report_table(reports).to_string(index=False))
        failed = [report.n for report in reports if report.failed]
        if failed:
            raise CommandError(f"Sweep rows failed for n={failed}")
