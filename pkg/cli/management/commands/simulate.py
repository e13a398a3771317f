import logging

from django.core.management.base import CommandError

from cli.base import USAGE_ERROR, BackflashCommand
from cli.reports import metadata_path, run_metadata, write_json
from cli.tagfile import write_provenance, write_tags
from model.forms import load_bench
from photonsim.engine import simulate
from photonsim.models import SimRun

logger = logging.getLogger(__name__)


class Command(BackflashCommand):
    help = 'Simula un banco y escribe los time tags (.bftt) con su archivo de metadatos.'

    def add_arguments(self, parser):
        parser.add_argument('--bench', required=True, help='Documento JSON del banco')
        parser.add_argument('--out', required=True, help='Archivo de tags de salida')
        parser.add_argument('--pulses', type=int, default=None, help='Numero de pulsos del laser')
        parser.add_argument('--duration', type=float, default=None, help='Duracion en segundos')
        parser.add_argument('--gates-off', action='store_true', help='Corrida de referencia sin puertas')
        parser.add_argument('--filter-center', type=float, default=None, help='Centro del filtro (nm)')
        parser.add_argument('--laser-sync', action='store_true', help='Emitir un tag de sincronismo por pulso')
        parser.add_argument('--debug', action='store_true', help='Escribir el origen de cada tag OTDR (.prov)')
        self.add_seed_arguments(parser)

    def run(self, **options):
        if (options['pulses'] is None) == (options['duration'] is None):
            raise CommandError('Indique exactamente uno de --pulses o --duration', returncode=USAGE_ERROR)
        config = load_bench(options['bench'])
        run = SimRun(
            config=config,
            seed=options['seed'],
            pulse_count=options['pulses'],
            duration_s=options['duration'],
            gates_enabled=not options['gates_off'],
            filter_center_nm=options['filter_center'],
            emit_laser_sync=options['laser_sync'],
        )
        output = simulate(run, workers=options['workers'])
        out = options['out']
        write_tags(out, output.tag_array())
        write_json(metadata_path(out), run_metadata(output, output.run.config))
        if options['debug']:
            write_provenance(out, output.provenance)
        self.stdout.write('{}: {} tags OTDR, {} avalanchas del DUT, semilla {}'.format(
            out, output.otdr_timestamps.size, output.dut_click_count, output.seed))
