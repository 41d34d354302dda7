from django.core.management.base import BaseCommand, CommandError

from experiments.services.exceptions import SolverError
from experiments.services.harness import export_field, export_hamiltonian_error


class Command(BaseCommand):
    help = "Write (x, t, 1/2 - u) plot triples from a finished run's snapshots"

    def add_arguments(self, parser):
        parser.add_argument('run_dir', help="Run directory containing fields.npz")
        parser.add_argument('--times', default='', help="Comma-separated output times, e.g. 0,40,80")
        parser.add_argument('--points', type=int, default=2048)
        parser.add_argument('--output', help="Target file (default <run_dir>/field.txt)")
        parser.add_argument('--hamiltonian', action='store_true',
                            help="Also write the (t, |H - H0|) series")

    def handle(self, *args, **options):
        try:
            times = [float(item) for item in options['times'].split(',') if item.strip()]
        except ValueError:
            raise CommandError(f"Invalid --times {options['times']!r}")
        if not times and not options['hamiltonian']:
            raise CommandError("Nothing to export: give --times and/or --hamiltonian")
        try:
            if times:
                path = export_field(options['run_dir'], times, output=options['output'],
                                    points=options['points'])
                self.stdout.write(self.style.SUCCESS(f"Field written to {path}"))
            if options['hamiltonian']:
                path = export_hamiltonian_error(options['run_dir'])
                self.stdout.write(self.style.SUCCESS(f"Hamiltonian error written to {path}"))
        except SolverError as e:
            raise CommandError(str(e))
