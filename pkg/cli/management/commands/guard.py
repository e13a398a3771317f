from cli.base import BackflashCommand
from cli.reports import guard_document, read_report, report_from_document, write_json
from model.forms import validate_bench
from sidechannel.analysis import countermeasure_factors, residual_leakage
from sidechannel.forms import load_countermeasure


class Command(BackflashCommand):
    help = 'Aplica una contramedida a un informe de fuga y escribe la fuga residual.'

    def add_arguments(self, parser):
        parser.add_argument('--report', required=True, help='Informe backflash-report/1')
        parser.add_argument('--countermeasure', required=True, help='Documento backflash-cm/1')
        parser.add_argument('--out', required=True)
        parser.add_argument('--avalanche-offset-ns', type=float, default=0.0,
                            help='Inicio de la avalancha respecto a la apertura de la puerta')

    def run(self, **options):
        source = read_report(options['report'])
        config = validate_bench(source['config'])
        cm = load_countermeasure(options['countermeasure'])
        profile = config.dut.backflash
        wavelength = config.laser.wavelength_nm
        report = report_from_document(source)
        factors = countermeasure_factors(cm, profile.spectral_density, profile, wavelength,
                                         options['avalanche_offset_ns'])
        residual = residual_leakage(report, cm, profile.spectral_density, profile, wavelength,
                                    options['avalanche_offset_ns'])
        document = guard_document(source, cm, factors, residual)
        document['avalanche_offset_ns'] = options['avalanche_offset_ns']
        write_json(options['out'], document)
        if factors.blocks_signal:
            self.stderr.write('Aviso: la contramedida bloquea la longitud de onda del laser')
        self.stdout.write('P_L residual = {:.4g} (factor {:.4g})'.format(residual.p_leak, residual.factor))
