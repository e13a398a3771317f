import logging
import math

import numpy as np
from django.conf import settings
from scipy import stats
from scipy.ndimage import uniform_filter1d

from bases.models import EmptyRegionError, OutOfRangeError, ZeroTriggersError
from model.models import TAG_DTYPE, Channel, LeakageReport
from .models import BackflashRegion, CorrelationHistogram, FeatureSet, Peak, ResidualHistogram

logger = logging.getLogger(__name__)

CI_METHODS = ('normal', 'garwood')
Z_95 = stats.norm.ppf(0.975)


def _timestamps(chunk, channel):
    chunk = np.asarray(chunk)
    if chunk.dtype == TAG_DTYPE:
        chunk = chunk['timestamp'][chunk['channel'] == channel]
    return chunk.astype(np.int64, copy=False)


class HistogramBuilder:
    """Acumulador de una sola pasada; admite bloques de cualquier tamano."""

    def __init__(self, period, bin_width, origin=0, channel=Channel.OTDR):
        if period <= 0 or bin_width <= 0:
            raise OutOfRangeError('period y bin_width deben ser positivos')
        self.period = int(period)
        self.bin_width = int(bin_width)
        self.origin = int(origin)
        self.channel = channel
        self.n_bins = -(-self.period // self.bin_width)
        if self.period % self.bin_width:
            logger.debug('bin_width %d no divide el periodo %d: ultimo bin parcial', bin_width, period)
        self.counts = np.zeros(self.n_bins, dtype=np.int64)
        self.tags = 0

    def add(self, chunk):
        timestamps = _timestamps(chunk, self.channel)
        delay = np.mod(timestamps - self.origin, self.period)
        self.counts += np.bincount(delay // self.bin_width, minlength=self.n_bins)
        self.tags += timestamps.size
        return self

    def result(self, total_triggers=0):
        return CorrelationHistogram(self.bin_width, self.origin, self.period, self.counts.copy(), int(total_triggers))


def build_histogram(tags, period, bin_width, origin=0, total_triggers=0, channel=Channel.OTDR):
    """Pliega tags (array o iterable de bloques) en un histograma de correlacion."""
    builder = HistogramBuilder(period, bin_width, origin, channel)
    if isinstance(tags, np.ndarray):
        builder.add(tags)
    else:
        for chunk in tags:
            builder.add(chunk)
    return builder.result(total_triggers)


def empty_like(hist):
    return CorrelationHistogram(hist.bin_width, hist.origin, hist.period, np.zeros_like(hist.counts), 0)


def merge(h1, h2):
    h1.same_geometry(h2)
    return CorrelationHistogram(h1.bin_width, h1.origin, h1.period, h1.counts + h2.counts,
                                h1.total_triggers + h2.total_triggers)


def subtract_background(gated, reference):
    """
    residual[i] = gated[i] - reference[i] * (T_gated / T_ref)
    La varianza por bin propaga Poisson: gated + reference * escala^2.
    """
    gated.same_geometry(reference)
    if reference.total_triggers <= 0:
        raise ZeroTriggersError('La referencia no tiene disparos acumulados')
    scale = gated.total_triggers / reference.total_triggers
    g = gated.counts.astype(float)
    r = reference.counts.astype(float)
    return ResidualHistogram(
        bin_width=gated.bin_width,
        origin=gated.origin,
        period=gated.period,
        values=g - r * scale,
        variance=g + r * scale * scale,
        scale=scale,
        gated_triggers=gated.total_triggers,
        reference_triggers=reference.total_triggers,
    )


def _runs(mask, merge_gap):
    """Intervalos [a, b) de True contiguos, fusionando huecos <= merge_gap."""
    padded = np.concatenate(([0], mask.astype(np.int8), [0]))
    edges = np.flatnonzero(np.diff(padded))
    runs = list(zip(edges[::2].tolist(), edges[1::2].tolist()))
    merged = []
    for a, b in runs:
        if merged and a - merged[-1][1] <= merge_gap:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return merged


def detect_features(hist, peak_min_prominence=None, peak_max_width=None, smooth_bins=3, n_sigma=4.0,
                    merge_gap_bins=2):
    """
    Clasifica tramos contiguos sobre la linea base (mediana de los bins).
    El ancho efectivo de un tramo cuenta los bins cuyo exceso supera la
    mitad de la mediana de excesos del tramo: un pico estrecho queda en
    pocos bins aunque sus colas crucen el umbral, una meseta conserva su
    duracion aunque tenga un pico encima.
    """
    if peak_max_width is None:
        peak_max_width = settings.BACKFLASH_PEAK_MAX_WIDTH_PS
    counts = np.asarray(hist.counts, dtype=float)
    if counts.size == 0:
        return FeatureSet()
    baseline = float(np.median(counts))
    noise = math.sqrt(max(baseline, 1.0))
    if peak_min_prominence is None:
        peak_min_prominence = 5.0 * noise
    smooth = uniform_filter1d(counts, size=smooth_bins, mode='wrap')
    above = smooth > baseline + n_sigma * noise / math.sqrt(smooth_bins)

    peaks, regions = [], []
    width = hist.bin_width
    for a, b in _runs(above, merge_gap_bins):
        segment = counts[a:b]
        excess = segment - baseline
        positive = excess[excess > 0]
        if positive.size == 0:
            continue
        level = 0.5 * float(np.median(positive))
        effective = int(np.count_nonzero(excess >= level)) * width
        if effective <= peak_max_width:
            if excess.max() >= peak_min_prominence:
                top = a + int(np.argmax(segment))
                peaks.append(Peak(delay=(top + 0.5) * width, width=float(effective), counts=int(segment.sum())))
        else:
            regions.append(BackflashRegion(start=a * width, end=b * width, gross_counts=int(segment.sum()),
                                           background_estimate=baseline * (b - a)))
    return FeatureSet(peaks=tuple(peaks), backflash_regions=tuple(regions), baseline=baseline)


def region_bins(span_bins, bin_width, region):
    start, end = region
    if end <= start:
        raise EmptyRegionError('Region vacia: [{}, {})'.format(start, end))
    if start < 0 or end > span_bins * bin_width:
        raise OutOfRangeError('Region [{}, {}) fuera del histograma'.format(start, end))
    return int(start // bin_width), int(math.ceil(end / bin_width))


def integrate_backflash(residual, region):
    """Suma el residuo en la region; error estandar por propagacion de Poisson."""
    if isinstance(region, BackflashRegion):
        region = (region.start, region.end)
    i0, i1 = region_bins(residual.n_bins, residual.bin_width, region)
    n_backflash = math.fsum(residual.values[i0:i1])
    std_error = math.sqrt(math.fsum(residual.variance[i0:i1]))
    if n_backflash < 0:
        logger.warning('N_B negativo (%.1f) en [%s, %s) ps; se reporta sin recortar', n_backflash, *region)
    return n_backflash, std_error


def estimate_leakage(n_backflash, n_dut_counts, eta_det, eta_ch, std_error=0.0, n_triggers=None,
                     ci_method='normal'):
    """
    P_L = N_B / (N_P * eta_det * eta_ch), intervalo del 95 %.

    normal: propagacion del error de N_B y de N_P binomial (Poisson si no
    se conocen los disparos). garwood: intervalo exacto de Poisson sobre
    N_B, para pocas cuentas.
    """
    if n_dut_counts <= 0:
        raise OutOfRangeError('N_P debe ser positivo')
    if not (0 < eta_det <= 1 and 0 < eta_ch <= 1):
        raise OutOfRangeError('Las eficiencias deben estar en (0, 1]')
    if ci_method not in CI_METHODS:
        raise OutOfRangeError('Metodo de intervalo desconocido: {}'.format(ci_method))

    denominator = n_dut_counts * eta_det * eta_ch
    p_leak = n_backflash / denominator
    if ci_method == 'normal':
        if n_triggers:
            var_np = n_dut_counts * max(0.0, 1.0 - n_dut_counts / n_triggers)
        else:
            var_np = float(n_dut_counts)
        sigma = math.sqrt((std_error / denominator) ** 2 + p_leak ** 2 * var_np / n_dut_counts ** 2)
        low, high = p_leak - Z_95 * sigma, p_leak + Z_95 * sigma
    else:
        counts = max(n_backflash, 0.0)
        low = stats.chi2.ppf(0.025, 2 * counts) / 2.0 if counts > 0 else 0.0
        high = stats.chi2.ppf(0.975, 2 * counts + 2) / 2.0
        low, high = low / denominator, high / denominator
    return LeakageReport(
        measured_n_backflash=float(n_backflash),
        measured_std_error=float(std_error),
        n_dut_counts=int(n_dut_counts),
        eta_det=float(eta_det),
        eta_ch=float(eta_ch),
        measured_ci_low=float(min(low, p_leak)),
        measured_ci_high=float(max(high, p_leak)),
        ci_method=ci_method,
    )
