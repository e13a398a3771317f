import logging
import sys

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

logger = logging.getLogger(__name__)

USAGE_ERROR = 1
DATA_ERROR = 2


def _validation_message(exc):
    if hasattr(exc, 'message_dict'):
        return '; '.join('{}: {}'.format(path, ' '.join(messages))
                         for path, messages in sorted(exc.message_dict.items()))
    return ' '.join(exc.messages)


def float_list(text):
    """'3,4.5,7' -> [3.0, 4.5, 7.0]"""
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise CommandError('Lista de valores invalida: {!r}'.format(text), returncode=USAGE_ERROR)


class BackflashCommand(BaseCommand):
    """
    Base de los comandos. Las rutas van siempre por opciones; los errores
    de datos terminan con codigo 2 y los de uso con codigo 1.
    """
    requires_system_checks = []

    def run_from_argv(self, argv):
        from .runner import run_command
        sys.exit(run_command(argv[1:]))

    def add_seed_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=0, help='Semilla unica de toda la corrida')
        parser.add_argument('--workers', type=int, default=None, help='Hilos (por defecto BACKFLASH_THREADS)')

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except CommandError:
            raise
        except ValidationError as exc:
            logger.error('Configuracion invalida: %s', _validation_message(exc))
            raise CommandError('Configuracion invalida: {}'.format(_validation_message(exc)), returncode=DATA_ERROR)
        except KeyError as exc:
            logger.error('Documento incompleto: falta %s', exc)
            raise CommandError('Documento incompleto: falta {}'.format(exc), returncode=DATA_ERROR)
        except (ValueError, TypeError, OSError) as exc:
            logger.error('%s', exc)
            raise CommandError(str(exc), returncode=DATA_ERROR)

    def run(self, **options):
        raise NotImplementedError('Los comandos deben implementar run()')
