import numpy as np
from django.conf import settings
from django.core.management.base import CommandError

from cli.base import USAGE_ERROR, BackflashCommand, float_list
from cli.experiments import spectrum_scan
from cli.reports import SPECTRUM_COLUMNS, table_metadata, write_table
from model.forms import load_bench


class Command(BackflashCommand):
    help = 'Recorre el filtro sintonizable y escribe cuentas frente al centro de banda (CSV).'

    def add_arguments(self, parser):
        parser.add_argument('--bench', required=True)
        parser.add_argument('--out', required=True)
        parser.add_argument('--centers', type=float_list, default=None, help='Centros en nm separados por comas')
        parser.add_argument('--start', type=float, default=1535.0)
        parser.add_argument('--stop', type=float, default=1595.0)
        parser.add_argument('--step', type=float, default=10.0)
        parser.add_argument('--bandwidth', type=float, default=None, help='Ancho de banda (nm); por defecto el del banco')
        parser.add_argument('--pulses', type=int, default=1000000)
        parser.add_argument('--bin-width', type=int, default=settings.BACKFLASH_BIN_WIDTH_PS)
        self.add_seed_arguments(parser)

    def run(self, **options):
        config = load_bench(options['bench'])
        centers = options['centers']
        if centers is None:
            if options['step'] <= 0:
                raise CommandError('--step debe ser positivo', returncode=USAGE_ERROR)
            count = int(np.floor((options['stop'] - options['start']) / options['step'] + 1e-9)) + 1
            centers = [options['start'] + i * options['step'] for i in range(count)]
        bandwidth = options['bandwidth']
        if bandwidth is None:
            bandwidth = config.filter.bandwidth_nm if config.filter is not None else 10.0
        rows = spectrum_scan(config, centers, bandwidth, options['seed'], options['pulses'],
                             options['bin_width'], workers=options['workers'])
        metadata = table_metadata(
            'spectrum', SPECTRUM_COLUMNS, config, options['seed'],
            bandwidth_nm=bandwidth, pulse_count=options['pulses'], bin_width_ps=options['bin_width'],
            laser_wavelength_nm=config.laser.wavelength_nm,
        )
        write_table(options['out'], SPECTRUM_COLUMNS, rows, metadata)
        self.stdout.write('{}: {} bandas de {} nm'.format(options['out'], len(rows), bandwidth))
