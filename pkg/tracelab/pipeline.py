"""
Cadena completa de analisis: histograma con puerta y de referencia,
resta de fondo, deteccion de la region de backflash, integracion y P_L.
"""
import logging

import numpy as np
from django.conf import settings

from bases.models import OutOfRangeError
from model.models import TAG_DTYPE, Channel
from .analysis import (
    HistogramBuilder, detect_features, estimate_leakage, integrate_backflash, subtract_background,
)
from .models import AnalysisResult

logger = logging.getLogger(__name__)

REGION_SOURCES = ('auto', 'config')


class TraceScan:
    """Una pasada sobre un flujo de tags: histograma OTDR y contadores de sincronismo."""

    def __init__(self, period, bin_width, origin=0):
        self.builder = HistogramBuilder(period, bin_width, origin, Channel.OTDR)
        self.period = int(period)
        self.dut_counts = 0
        self.laser_syncs = 0
        self.last_timestamp = -1

    def add(self, chunk):
        chunk = np.asarray(chunk)
        if chunk.dtype != TAG_DTYPE:
            raise OutOfRangeError('Se esperaban registros con canal y timestamp')
        self.builder.add(chunk)
        channels = chunk['channel']
        self.dut_counts += int(np.count_nonzero(channels == Channel.DUT_SYNC))
        self.laser_syncs += int(np.count_nonzero(channels == Channel.LASER_SYNC))
        if chunk.size:
            self.last_timestamp = max(self.last_timestamp, int(chunk['timestamp'].max()))
        return self

    def consume(self, tags):
        if hasattr(tags, 'tag_array'):
            tags = tags.tag_array()
        if isinstance(tags, np.ndarray):
            return self.add(tags)
        for chunk in tags:
            self.add(chunk)
        return self

    def triggers(self, declared=None):
        if declared is not None:
            return int(declared)
        if self.laser_syncs:
            return self.laser_syncs
        # sin sincronismo del laser: periodos cubiertos por el ultimo tag
        return self.last_timestamp // self.period + 1 if self.last_timestamp >= 0 else 0


def _trigger_hint(tags, declared):
    if declared is None and hasattr(tags, 'pulse_count'):
        return tags.pulse_count
    return declared


def expected_backflash_window(config):
    """
    [2*d, 2*d + emision) en ps de retardo: la emision dura lo que la
    avalancha o el perfil, y se corta con el cierre de la puerta.
    """
    path, dut = config.optical_path, config.dut
    start = path.dut_round_trip_ps
    gate_close = path.dut_delay_ps + (dut.gate_width_ns - dut.gate_delay_offset_ns) * 1000.0
    emission = min(dut.avalanche_duration_ns, dut.backflash.duration_ns) * 1000.0
    emission = min(emission, max(0.0, gate_close - path.dut_delay_ps))
    return float(start), float(start + emission)


def _padded(region, span, pad):
    start, end = region
    end = end + pad if span is None else min(float(span), end + pad)
    return max(0.0, start - pad), end


def choose_region(features, config, region='auto', span=None, pad=None):
    """Devuelve ((inicio, fin), origen) para integrar."""
    if pad is None:
        pad = settings.BACKFLASH_REGION_PAD_PS
    if not isinstance(region, str):
        start, end = region
        return (float(start), float(end)), 'explicit'
    if region not in REGION_SOURCES:
        raise OutOfRangeError('Region desconocida: {!r}'.format(region))
    if region == 'auto':
        strongest = features.strongest_region()
        if strongest is not None:
            logger.info('Region de backflash detectada: [%d, %d) ps, exceso %.1f',
                        strongest.start, strongest.end, strongest.excess)
            return _padded((strongest.start, strongest.end), span, pad), 'auto'
        logger.warning('No se detecto region de backflash; se usa la ventana del banco')
    window = expected_backflash_window(config)
    return _padded(window, span, pad), 'config'


def analyze_traces(config, gated, reference, bin_width=None, region='auto', ci_method='normal',
                   gated_triggers=None, reference_triggers=None, n_dut_counts=None,
                   subtract_dut_dark=False, peak_max_width=None):
    """
    gated y reference pueden ser SimOutput, arrays de registros o
    iterables de bloques (lectura en streaming de un archivo de tags).
    N_P cuenta los tags DUT_SYNC del flujo con puerta salvo que se indique.
    """
    if bin_width is None:
        bin_width = settings.BACKFLASH_BIN_WIDTH_PS
    period = config.period_ps
    gated_scan = TraceScan(period, bin_width).consume(gated)
    reference_scan = TraceScan(period, bin_width).consume(reference)
    gated_hist = gated_scan.builder.result(gated_scan.triggers(_trigger_hint(gated, gated_triggers)))
    reference_hist = reference_scan.builder.result(
        reference_scan.triggers(_trigger_hint(reference, reference_triggers)))
    logger.info('Histogramas: %d tags con puerta (%d disparos), %d de referencia (%d disparos)',
                gated_hist.total, gated_hist.total_triggers, reference_hist.total, reference_hist.total_triggers)

    residual = subtract_background(gated_hist, reference_hist)
    features = detect_features(gated_hist, peak_max_width=peak_max_width)
    chosen, source = choose_region(features, config, region, span=residual.span)
    n_backflash, std_error = integrate_backflash(residual, chosen)

    n_p = gated_scan.dut_counts if n_dut_counts is None else n_dut_counts
    if subtract_dut_dark:
        dut = config.dut
        darks = dut.dark_count_rate_in_gate_hz * dut.gate_width_ns * 1e-9 * gated_hist.total_triggers
        logger.info('Se restan %.1f oscuras esperadas del DUT de N_P=%d', darks, n_p)
        n_p = int(round(n_p - darks))

    report = estimate_leakage(
        n_backflash, n_p, config.meas_detector.efficiency, config.optical_path.channel_transmission,
        std_error=std_error, n_triggers=gated_hist.total_triggers, ci_method=ci_method,
    )
    logger.info('P_L = %.4g [%.4g, %.4g] en [%.0f, %.0f) ps (%s)',
                report.p_leak, report.ci_low, report.ci_high, chosen[0], chosen[1], source)
    return AnalysisResult(report=report, features=features, region=chosen, region_source=source,
                          gated=gated_hist, reference=reference_hist, residual=residual)
