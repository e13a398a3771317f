from django.conf import settings

from cli.base import BackflashCommand, float_list
from cli.experiments import leakage_sweep
from cli.reports import SWEEP_COLUMNS, sweep_rows, table_metadata, write_table
from model.forms import load_bench
from model.models import SWEEP_AXES
from tracelab.analysis import CI_METHODS


class Command(BackflashCommand):
    help = 'Barre un parametro del banco y escribe P_L por punto (CSV).'

    def add_arguments(self, parser):
        parser.add_argument('--bench', required=True)
        parser.add_argument('--axis', required=True, choices=SWEEP_AXES)
        parser.add_argument('--values', required=True, type=float_list, help='Valores separados por comas')
        parser.add_argument('--pulses', type=int, default=1000000)
        parser.add_argument('--out', required=True)
        parser.add_argument('--bin-width', type=int, default=settings.BACKFLASH_BIN_WIDTH_PS)
        parser.add_argument('--region', choices=('auto', 'config'), default='config')
        parser.add_argument('--ci', choices=CI_METHODS, default='normal')
        self.add_seed_arguments(parser)

    def run(self, **options):
        config = load_bench(options['bench'])
        points = leakage_sweep(
            config, options['axis'], options['values'], options['seed'], options['pulses'],
            workers=options['workers'], region=options['region'], bin_width=options['bin_width'],
            ci_method=options['ci'],
        )
        rows = sweep_rows(options['axis'], [(p.value, p.result.report) for p in points])
        metadata = table_metadata(
            'sweep', SWEEP_COLUMNS, config, options['seed'],
            axis=options['axis'], pulse_count=options['pulses'], bin_width_ps=options['bin_width'],
            region=options['region'], ci_method=options['ci'],
            point_seeds=[{'value': p.value, 'gated': p.gated_seed, 'reference': p.reference_seed} for p in points],
        )
        write_table(options['out'], SWEEP_COLUMNS, rows, metadata)
        for row in rows:
            self.stdout.write('{} = {}: P_L = {:.4g}'.format(row[0], row[1], row[2]))
