"""
Punto de entrada programatico: run_command(argv) devuelve el codigo de
salida (0 ok, 1 uso, 2 datos) en lugar de terminar el proceso.
"""
import os
import sys

import django
from django.apps import apps
from django.core.management import load_command_class
from django.core.management.base import CommandError

COMMANDS = ('simulate', 'histogram', 'analyze', 'sweep', 'spectrum', 'guard')


def _setup():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'backflash.settings')
    if not apps.ready:
        django.setup()


def run_command(argv, stdout=None, stderr=None):
    _setup()
    stderr = stderr or sys.stderr
    argv = list(argv)
    if not argv or argv[0] not in COMMANDS:
        stderr.write('Uso: <comando> [opciones]; comandos: {}\n'.format(', '.join(COMMANDS)))
        return 1

    name = argv[0]
    command = load_command_class('cli', name)
    parser = command.create_parser('backflash', name)
    try:
        options = vars(parser.parse_args(argv[1:]))
        args = options.pop('args', ())
        command.execute(*args, stdout=stdout, stderr=stderr, **options)
    except CommandError as exc:
        stderr.write('{}: {}\n'.format(name, exc))
        return exc.returncode
    except SystemExit as exc:
        # --help termina el parser con codigo 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == '__main__':
    main()
