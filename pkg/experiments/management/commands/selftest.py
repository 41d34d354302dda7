from django.core.management.base import BaseCommand, CommandError

from experiments.services.harness import run_selftest


class Command(BaseCommand):
    help = "Quick numerical consistency checks and a reduced energy-drift run"

    def add_arguments(self, parser):
        parser.add_argument('--steps', type=int, default=2000)

    def handle(self, *args, **options):
        results = run_selftest(n_steps=options['steps'])
        for result in results:
            style = self.style.SUCCESS if result.passed else self.style.ERROR
            self.stdout.write(style(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail}"))
        failed = [result.name for result in results if not result.passed]
        if failed:
            raise CommandError(f"Self-test failed: {', '.join(failed)}")
