"""Shared --config / --group.key handling for the experiment commands."""
from django.core.management.base import CommandError

from experiments.serializers import RunConfigSerializer
from experiments.services.exceptions import InvalidArgumentError
from experiments.services.harness import RunConfig, load_config_file, unflatten

CONFIG_KEYS = {
    'problem.name': str,
    'problem.A': float,
    'problem.xi0': float,
    'problem.speed_sign': int,
    'problem.xi1': float,
    'problem.xi2': float,
    'problem.T': float,
    'problem.a': float,
    'problem.b': float,
    'method.kind': str,
    'method.k': int,
    'method.s': int,
    'method.tol': float,
    'method.s_max': int,
    'grid.N': int,
    'time.n': int,
    'output.dir': str,
    'output.stride': int,
    'output.snapshot_stride': int,
}


def add_config_arguments(parser, skip=()):
    parser.add_argument('--config', help="YAML file of flat dotted keys, e.g. 'method.kind: hbvm'")
    for key, kind in CONFIG_KEYS.items():
        if key in skip:
            continue
        parser.add_argument(f'--{key}', dest=key, type=kind, default=None,
                            help=f"Overrides {key} from --config")


def config_from_options(options, **extra) -> RunConfig:
    """YAML first, then command-line flags, then ``extra``; validated by RunConfigSerializer."""
    try:
        flat = load_config_file(options['config']) if options.get('config') else {}
    except (OSError, InvalidArgumentError) as e:
        raise CommandError(f"Cannot read config: {e}")
    flat.update({key: options[key] for key in CONFIG_KEYS if options.get(key) is not None})
    flat.update(extra)
    try:
        nested = unflatten(flat)
    except InvalidArgumentError as e:
        raise CommandError(str(e))
    serializer = RunConfigSerializer(data=nested)
    if not serializer.is_valid():
        raise CommandError(f"Invalid config: {serializer.errors}")
    try:
        return RunConfig.from_validated(serializer.validated_data)
    except InvalidArgumentError as e:
        raise CommandError(str(e))
