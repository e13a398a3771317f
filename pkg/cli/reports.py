"""
Artefactos de salida: CSV para graficadores externos y documentos JSON
autodescriptivos (esquema, hash de configuracion, semilla).
"""
import csv
import json
import logging

from django.conf import settings
from django.core.exceptions import ValidationError

from bases.models import SchemaVersionError, check_schema, stable_hash
from model.forms import bench_to_dict, config_hash
from model.models import LeakageReport
from sidechannel.forms import countermeasure_to_dict

logger = logging.getLogger(__name__)

SCHEMA_REPORT = 'backflash-report/1'
SCHEMA_GUARD = 'backflash-guard/1'
SCHEMA_RUN = 'backflash-run/1'
SCHEMA_TABLE = 'backflash-table/1'

RUN_KEYS = ('pulse_count', 'period_ps', 'seed', 'config_hash', 'config')
REPORT_KEYS = ('config', 'report')
SUMMARY_KEYS = ('n_backflash', 'n_backflash_std_error', 'n_dut_counts', 'eta_det', 'eta_ch', 'ci_low', 'ci_high')

HISTOGRAM_COLUMNS = ('delay_ps', 'counts')
SWEEP_COLUMNS = ('axis', 'value', 'p_leak', 'ci_low', 'ci_high', 'n_backflash', 'n_dut_counts')
SPECTRUM_COLUMNS = ('center_nm', 'gross_counts', 'backflash_counts', 'reflection_counts')

PRIVACY_NOTE = ('P_L acota la probabilidad de interceptar un backflash por deteccion valida; '
                'su composicion con la amplificacion de privacidad no se evalua aqui.')


def write_csv(path, columns, rows):
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row)
    logger.info('CSV %s: %d filas', path, len(rows))


def read_csv(path, columns):
    with open(path, newline='', encoding='utf-8') as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != tuple(columns):
            raise SchemaVersionError(','.join(columns), ','.join(header))
        return [row for row in reader]


def table_metadata(kind, columns, config, seed, **extra):
    """Sidecar de un CSV: config resuelta, su hash y la semilla que lo produjo."""
    document = {
        'schema': SCHEMA_TABLE,
        'kind': kind,
        'columns': list(columns),
        'seed': seed,
        'config_hash': config_hash(config) if config is not None else None,
        'config': bench_to_dict(config) if config is not None else None,
    }
    document.update(extra)
    return document


def write_table(path, columns, rows, metadata):
    write_csv(path, columns, rows)
    write_json(metadata_path(path), metadata)


def write_histogram_csv(path, hist, metadata):
    rows = list(zip(hist.delays().tolist(), hist.counts.tolist()))
    write_table(path, HISTOGRAM_COLUMNS, rows, metadata)


def sweep_rows(axis, points):
    return [(axis, value, r.p_leak, r.ci_low, r.ci_high, r.n_backflash, r.n_dut_counts) for value, r in points]


def write_json(path, document):
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(document, fh, indent=2, sort_keys=True)
        fh.write('\n')


def read_json(path, schema):
    with open(path, encoding='utf-8') as fh:
        return check_schema(json.load(fh), schema)


def require_keys(document, keys, prefix=''):
    """ValidationError por cada campo obligatorio ausente, con su ruta."""
    if not isinstance(document, dict):
        raise ValidationError({prefix.rstrip('.') or 'documento': 'Debe ser un objeto JSON.'})
    missing = [key for key in keys if key not in document]
    if missing:
        raise ValidationError({prefix + key: 'Campo obligatorio.' for key in missing})
    return document


def read_report(path):
    """Informe backflash-report/1 con los campos que necesita guard."""
    document = read_json(path, SCHEMA_REPORT)
    require_keys(document, REPORT_KEYS)
    require_keys(document['report'], SUMMARY_KEYS, prefix='report.')
    return document


def report_document(result, config, seeds=None, inputs=None):
    """Documento backflash-report/1 con la configuracion resuelta completa."""
    report = result.report
    bin_width = result.gated.bin_width
    return {
        'schema': SCHEMA_REPORT,
        'config_hash': config_hash(config),
        'config': bench_to_dict(config),
        'seeds': seeds or {},
        'inputs': inputs or {},
        'report': report.summary(),
        'measured': {
            'n_backflash': report.measured_n_backflash,
            'std_error': report.measured_std_error,
            'ci_low': report.measured_ci_low,
            'ci_high': report.measured_ci_high,
        },
        'region': {'start_ps': result.region[0], 'end_ps': result.region[1], 'source': result.region_source},
        'histogram': {
            'bin_width_ps': bin_width,
            'bin_width_is_default': bin_width == settings.BACKFLASH_BIN_WIDTH_PS,
            'gated_triggers': result.gated.total_triggers,
            'reference_triggers': result.reference.total_triggers,
        },
        'features': result.features.as_dict(),
        'note': PRIVACY_NOTE,
    }


def report_from_document(document):
    """Reconstruye el LeakageReport medido de un documento de informe o de guardia."""
    report = document['report']
    measured = document.get('measured', {})
    return LeakageReport(
        measured_n_backflash=measured.get('n_backflash', report['n_backflash']),
        measured_std_error=measured.get('std_error', report['n_backflash_std_error']),
        n_dut_counts=report['n_dut_counts'],
        eta_det=report['eta_det'],
        eta_ch=report['eta_ch'],
        measured_ci_low=measured.get('ci_low', report['ci_low']),
        measured_ci_high=measured.get('ci_high', report['ci_high']),
        ci_method=report.get('ci_method', 'normal'),
        suppression=tuple(document.get('suppression', ())),
    )


def guard_document(source, cm, factors, residual):
    return {
        'schema': SCHEMA_GUARD,
        'config_hash': source.get('config_hash'),
        'seeds': source.get('seeds', {}),
        'inputs': {
            'report_hash': stable_hash(source),
            'countermeasure_hash': stable_hash(countermeasure_to_dict(cm)),
        },
        'countermeasure': countermeasure_to_dict(cm),
        'factors': factors.as_dict(),
        'blocks_signal': factors.blocks_signal,
        'original': source['report'],
        'report': residual.summary(),
        'measured': source.get('measured', {}),
        'suppression': list(residual.suppression),
        'note': PRIVACY_NOTE,
    }


def metadata_path(path):
    return '{}.meta.json'.format(path)


def run_metadata(output, config):
    return {
        'schema': SCHEMA_RUN,
        'pulse_count': output.pulse_count,
        'period_ps': config.period_ps,
        'seed': output.seed,
        'gates_enabled': output.run.gates_enabled,
        'filter_center_nm': output.run.filter_center_nm,
        'dut_click_count': output.dut_click_count,
        'expected_backflash': output.expected_backflash,
        'config_hash': config_hash(config),
        'config': bench_to_dict(config),
    }


def read_run_metadata(path):
    """Metadatos del archivo de tags, o None si no hay sidecar."""
    try:
        document = read_json(metadata_path(path), SCHEMA_RUN)
    except FileNotFoundError:
        return None
    return require_keys(document, RUN_KEYS)
