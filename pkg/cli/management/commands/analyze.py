from django.conf import settings
from django.core.management.base import CommandError

from cli.base import USAGE_ERROR, BackflashCommand
from cli.reports import read_run_metadata, report_document, write_json
from cli.tagfile import read_tags
from model.forms import load_bench
from tracelab.analysis import CI_METHODS
from tracelab.pipeline import analyze_traces


def region_option(text):
    if text in ('auto', 'config'):
        return text
    try:
        start, end = (float(v) for v in text.split(':'))
    except ValueError:
        raise CommandError('--region debe ser auto, config o INICIO:FIN en ps', returncode=USAGE_ERROR)
    return start, end


class Command(BackflashCommand):
    help = 'Calcula P_L a partir de tags con puerta y de referencia; escribe un informe JSON.'

    def add_arguments(self, parser):
        parser.add_argument('--gated', required=True, help='Tags con las puertas del DUT activas')
        parser.add_argument('--reference', required=True, help='Tags con las puertas apagadas')
        parser.add_argument('--out', required=True)
        parser.add_argument('--bench', default=None, help='Banco; por defecto el de los metadatos de --gated')
        parser.add_argument('--bin-width', type=int, default=settings.BACKFLASH_BIN_WIDTH_PS)
        parser.add_argument('--region', default='auto')
        parser.add_argument('--ci', choices=CI_METHODS, default='normal')
        parser.add_argument('--n-dut-counts', type=int, default=None, help='N_P externo')
        parser.add_argument('--subtract-dut-dark', action='store_true')

    def run(self, **options):
        region = region_option(options['region'])
        gated_meta = read_run_metadata(options['gated'])
        reference_meta = read_run_metadata(options['reference'])
        if options['bench'] is not None:
            config = load_bench(options['bench'])
        elif gated_meta is not None:
            config = load_bench(gated_meta['config'])
        else:
            raise CommandError('Indique --bench: no hay metadatos junto a --gated', returncode=USAGE_ERROR)

        result = analyze_traces(
            config, read_tags(options['gated']), read_tags(options['reference']),
            bin_width=options['bin_width'], region=region, ci_method=options['ci'],
            gated_triggers=gated_meta['pulse_count'] if gated_meta else None,
            reference_triggers=reference_meta['pulse_count'] if reference_meta else None,
            n_dut_counts=options['n_dut_counts'], subtract_dut_dark=options['subtract_dut_dark'],
        )
        seeds = {
            'gated': gated_meta['seed'] if gated_meta else None,
            'reference': reference_meta['seed'] if reference_meta else None,
        }
        inputs = {
            'gated_config_hash': gated_meta['config_hash'] if gated_meta else None,
            'reference_config_hash': reference_meta['config_hash'] if reference_meta else None,
        }
        write_json(options['out'], report_document(result, config, seeds, inputs))
        report = result.report
        self.stdout.write('P_L = {:.4g} [{:.4g}, {:.4g}], N_B = {:.1f}, N_P = {}'.format(
            report.p_leak, report.ci_low, report.ci_high, report.n_backflash, report.n_dut_counts))
