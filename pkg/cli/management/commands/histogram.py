from django.conf import settings
from django.core.management.base import CommandError

from cli.base import USAGE_ERROR, BackflashCommand
from cli.reports import HISTOGRAM_COLUMNS, read_run_metadata, table_metadata, write_histogram_csv
from cli.tagfile import read_tags
from model.forms import load_bench
from model.models import Channel
from tracelab.analysis import build_histogram


class Command(BackflashCommand):
    help = 'Pliega un archivo de tags en un histograma de correlacion (CSV delay_ps,counts).'

    def add_arguments(self, parser):
        parser.add_argument('--tags', required=True)
        parser.add_argument('--out', required=True)
        parser.add_argument('--bench', default=None, help='Banco del que tomar el periodo')
        parser.add_argument('--period-ps', type=int, default=None)
        parser.add_argument('--bin-width', type=int, default=settings.BACKFLASH_BIN_WIDTH_PS)
        parser.add_argument('--origin', type=int, default=0)
        parser.add_argument('--channel', type=int, default=int(Channel.OTDR), choices=[int(c) for c in Channel])

    def run(self, **options):
        meta = read_run_metadata(options['tags'])
        config = None
        if options['bench'] is not None:
            config = load_bench(options['bench'])
        elif meta is not None:
            config = load_bench(meta['config'])

        period = options['period_ps']
        if period is None:
            if config is None:
                raise CommandError('Indique --period-ps o --bench: no hay metadatos junto a los tags',
                                   returncode=USAGE_ERROR)
            period = config.period_ps

        hist = build_histogram(
            read_tags(options['tags']), period, options['bin_width'], options['origin'],
            total_triggers=meta['pulse_count'] if meta else 0, channel=options['channel'],
        )
        metadata = table_metadata(
            'histogram', HISTOGRAM_COLUMNS, config, meta['seed'] if meta else None,
            period_ps=period, bin_width_ps=hist.bin_width, origin_ps=options['origin'],
            channel=options['channel'], total_triggers=hist.total_triggers,
        )
        write_histogram_csv(options['out'], hist, metadata)
        self.stdout.write('{}: {} bins, {} cuentas'.format(options['out'], hist.n_bins, hist.total))
