"""
Experimentos de lazo cerrado: cada punto simula la corrida con puertas
y su referencia con puertas apagadas, y los analiza.
"""
import logging
from dataclasses import dataclass

from bases.rng import reference_seed
from photonsim.engine import apply_filter, simulate, simulate_sweep
from photonsim.models import SimRun
from tracelab.analysis import detect_features, integrate_backflash, subtract_background
from tracelab.pipeline import TraceScan, analyze_traces, choose_region

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepPoint:
    value: float
    result: object
    gated_seed: int
    reference_seed: int


def simulate_pair(config, seed, pulse_count, workers=None):
    gated = simulate(SimRun(config, seed, pulse_count=pulse_count, gates_enabled=True), workers=workers)
    reference = simulate(SimRun(config, reference_seed(seed), pulse_count=pulse_count, gates_enabled=False),
                         workers=workers)
    return gated, reference


def leakage_sweep(config, axis, values, seed, pulse_count, workers=None, region='config', **analysis):
    """
    Un SweepPoint por valor. Las corridas con puertas y las de referencia
    salen de simulate_sweep con semillas base seed y reference_seed(seed).
    """
    gated = simulate_sweep(SimRun(config, seed, pulse_count=pulse_count), axis, values, workers=workers)
    reference = simulate_sweep(SimRun(config, reference_seed(seed), pulse_count=pulse_count, gates_enabled=False),
                               axis, values, workers=workers)
    points = []
    for value, g, r in zip(values, gated, reference):
        result = analyze_traces(g.run.config, g, r, region=region, **analysis)
        logger.info('%s = %s: P_L = %.4g', axis, value, result.report.p_leak)
        points.append(SweepPoint(value, result, g.seed, r.seed))
    return points


def _histogram(output, bin_width):
    scan = TraceScan(output.run.config.period_ps, bin_width).consume(output)
    return scan.builder.result(output.pulse_count)


def spectrum_point(config, gated, reference, center_nm, bandwidth_nm, bin_width, region='config'):
    """
    Filtra las dos corridas ya simuladas con la banda centrada en center_nm.
    Devuelve (cuentas brutas en la region, N_B, cuentas de picos de reflexion).
    """
    spectrum = config.dut.backflash.spectral_density
    wavelength = config.laser.wavelength_nm
    gated_hist = _histogram(apply_filter(gated, center_nm, bandwidth_nm, spectrum, wavelength), bin_width)
    reference_hist = _histogram(apply_filter(reference, center_nm, bandwidth_nm, spectrum, wavelength), bin_width)
    residual = subtract_background(gated_hist, reference_hist)
    chosen, _ = choose_region(detect_features(gated_hist), config, region, span=residual.span)
    n_backflash, _ = integrate_backflash(residual, chosen)
    i0, i1 = int(chosen[0] // bin_width), int(-(-chosen[1] // bin_width))
    gross = int(gated_hist.counts[i0:i1].sum())
    reflections = sum(p.counts for p in detect_features(reference_hist).peaks)
    return gross, n_backflash, reflections


def spectrum_scan(config, centers, bandwidth_nm, seed, pulse_count, bin_width, workers=None):
    # una sola simulacion sin filtro; cada banda la adelgaza por separado
    config = config.replace(filter=None)
    gated, reference = simulate_pair(config, seed, pulse_count, workers)
    rows = []
    for center in centers:
        gross, n_backflash, reflections = spectrum_point(gated.run.config, gated, reference, center,
                                                         bandwidth_nm, bin_width)
        logger.info('Filtro en %.1f nm: %d brutas, N_B %.1f, reflexiones %d', center, gross, n_backflash, reflections)
        rows.append((center, gross, n_backflash, reflections))
    return rows
