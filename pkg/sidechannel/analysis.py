"""
Ventaja de un espia pasivo que recoge backflash: distincion entre
detectores por su perfil temporal, identificacion del tipo de detector
y fuga residual bajo contramedidas.
"""
import logging
import math

import numpy as np
from scipy import stats
from scipy.special import xlog1py

from bases.models import OutOfRangeError
from model.models import FWHM_TO_SIGMA
from .models import CountermeasureFactors, DiscriminationResult, RankedMatch

logger = logging.getLogger(__name__)

QUADRATURE_GRID_PS = 10.0
CONVERGENCE_TOLERANCE = 1e-4
MAX_HALVINGS = 4
TIE_TOLERANCE = 1e-12


def _cell_masses(profile, n_cells, cell_ps):
    edges_ns = np.arange(n_cells + 1, dtype=float) * cell_ps / 1000.0
    return np.diff(profile.cdf(edges_ns))


def gaussian_kernel(jitter_fwhm_ps, cell_ps):
    """Masas de una gaussiana centrada en celdas de ancho cell_ps (+/- 6 sigma)."""
    sigma = jitter_fwhm_ps * FWHM_TO_SIGMA
    if sigma <= 0:
        return np.ones(1)
    half = int(math.ceil(6.0 * sigma / cell_ps))
    edges = (np.arange(-half, half + 2) - 0.5) * cell_ps / sigma
    kernel = np.diff(stats.norm.cdf(edges))
    return kernel / kernel.sum()


def _smeared(profile, n_cells, cell_ps, kernel):
    masses = _cell_masses(profile, n_cells, cell_ps)
    if kernel.size > 1:
        masses = np.convolve(masses, kernel, mode='full')
    return masses


def _normalized(masses):
    masses = np.clip(masses, 0.0, None)
    return masses / math.fsum(masses)


def tv_distance(pa, pb):
    """Distancia de variacion total entre dos vectores de masa en la misma rejilla."""
    size = max(pa.size, pb.size)
    pa = np.pad(pa, (0, size - pa.size))
    pb = np.pad(pb, (0, size - pb.size))
    if math.fsum(np.minimum(pa, pb)) == 0.0:
        return 1.0
    return min(1.0, 0.5 * math.fsum(np.abs(pa - pb)))


def _tv_on_grid(profile_a, profile_b, jitter_fwhm_ps, cell_ps):
    duration_ps = max(profile_a.duration_ns, profile_b.duration_ns) * 1000.0
    n_cells = int(math.ceil(duration_ps / cell_ps - 1e-9))
    kernel = gaussian_kernel(jitter_fwhm_ps, cell_ps)
    pa = _normalized(_smeared(profile_a, n_cells, cell_ps, kernel))
    pb = _normalized(_smeared(profile_b, n_cells, cell_ps, kernel))
    return tv_distance(pa, pb)


def binary_leakage_bits(tv):
    """1 - H2((1 - tv) / 2): informacion del canal binario simetrico."""
    if tv <= 0.0:
        return 0.0
    x = min(float(tv), 1.0)
    bits = (xlog1py(1.0 + x, x) + xlog1py(1.0 - x, -x)) / (2.0 * math.log(2.0))
    return float(min(1.0, max(0.0, bits)))


def discriminate(profile_a, profile_b, arrival_jitter_fwhm_ps, grid_ps=QUADRATURE_GRID_PS,
                 tolerance=CONVERGENCE_TOLERANCE):
    """
    TV entre los perfiles convolucionados con el jitter de llegada. La
    rejilla se reduce a la mitad hasta que la TV cambia menos que la
    tolerancia; se reporta la ultima rejilla usada.
    """
    if arrival_jitter_fwhm_ps < 0:
        raise OutOfRangeError('El jitter no puede ser negativo')
    tv = _tv_on_grid(profile_a, profile_b, arrival_jitter_fwhm_ps, grid_ps)
    converged = False
    for _ in range(MAX_HALVINGS):
        finer = _tv_on_grid(profile_a, profile_b, arrival_jitter_fwhm_ps, grid_ps / 2.0)
        if abs(finer - tv) <= tolerance:
            converged = True
            break
        tv, grid_ps = finer, grid_ps / 2.0
    if not converged:
        logger.warning('La TV no convergio: rejilla final %.3f ps, TV %.6f', grid_ps, tv)
    return DiscriminationResult(
        guess_probability=(1.0 + tv) / 2.0,
        tv_distance=tv,
        leaked_bits_per_detection=binary_leakage_bits(tv),
        grid_ps=grid_ps,
        converged=converged,
    )


def countermeasure_factors(cm, spectrum, temporal, laser_wavelength_nm, avalanche_offset_ns=0.0):
    isolation = 10.0 ** (-cm.isolation_db / 10.0)
    spectral, blocks_signal = 1.0, False
    if cm.filter_passbands:
        spectral = min(1.0, sum(spectrum.fraction_in(b.low, b.high) for b in cm.filter_passbands))
        blocks_signal = not any(b.contains(laser_wavelength_nm) for b in cm.filter_passbands)
    temporal_factor = 1.0
    if cm.gate_width_override_ns is not None:
        temporal_factor = temporal.fraction_within(max(0.0, cm.gate_width_override_ns - avalanche_offset_ns))
    return CountermeasureFactors(isolation, spectral, temporal_factor, blocks_signal)


def residual_leakage(report, cm, spectrum, temporal, laser_wavelength_nm, avalanche_offset_ns=0.0):
    """
    P_L' = P_L * aislamiento * fraccion espectral * fraccion temporal.
    El intervalo se escala con el mismo factor.
    """
    factors = countermeasure_factors(cm, spectrum, temporal, laser_wavelength_nm, avalanche_offset_ns)
    if factors.blocks_signal:
        logger.warning('Ninguna banda deja pasar %.1f nm: la contramedida bloquea la senal', laser_wavelength_nm)
    result = report.attenuated(*factors.as_tuple())
    logger.info('Fuga residual %.4g (aislamiento %.3g, espectral %.3g, temporal %.3g)',
                result.p_leak, *factors.as_tuple())
    return result


def _template(profile, bin_width, kernel):
    n_cells = int(math.ceil(profile.duration_ns * 1000.0 / bin_width - 1e-9))
    masses = _smeared(profile, n_cells, bin_width, kernel)
    return masses / math.fsum(masses)


def _centroid(masses):
    return float(np.dot(np.arange(masses.size), masses))


def _placed_distance(measured, template, offset):
    # masa del modelo fuera de la ventana cuenta como diferencia completa
    placed = np.zeros(measured.size)
    lo, hi = max(0, offset), min(measured.size, offset + template.size)
    if hi > lo:
        placed[lo:hi] = template[lo - offset:hi - offset]
    outside = 1.0 - math.fsum(placed)
    return min(1.0, 0.5 * (math.fsum(np.abs(measured - placed)) + max(0.0, outside)))


def identify_detector_type(region, catalog, jitter_fwhm_ps=0.0, max_shift_bins=5):
    """
    Ordena el catalogo por TV entre la forma medida y cada perfil
    convolucionado. El modelo se alinea por centroide y se busca el
    mejor desplazamiento en +/- max_shift_bins.
    """
    entries = list(catalog.items()) if isinstance(catalog, dict) else list(catalog)
    if not entries:
        raise OutOfRangeError('El catalogo esta vacio')
    measured = region.normalized()
    kernel = gaussian_kernel(jitter_fwhm_ps, region.bin_width)

    matches = []
    for name, profile in entries:
        template = _template(profile, region.bin_width, kernel)
        nominal = int(round(_centroid(measured) - _centroid(template)))
        best = min((_placed_distance(measured, template, nominal + s), abs(s), s)
                   for s in range(-max_shift_bins, max_shift_bins + 1))
        matches.append(RankedMatch(name=str(name), distance=best[0], shift_bins=nominal + best[2]))

    matches.sort(key=lambda m: (m.distance, m.name))
    ranked = []
    for i, match in enumerate(matches):
        neighbours = matches[max(0, i - 1):i] + matches[i + 1:i + 2]
        tied = any(abs(match.distance - other.distance) <= TIE_TOLERANCE for other in neighbours)
        ranked.append(match.replace(tied=tied))
    if len(ranked) > 1 and ranked[0].tied:
        logger.info('Empate en la identificacion entre %s',
                    ', '.join(m.name for m in ranked if m.tied and abs(m.distance - ranked[0].distance) <= TIE_TOLERANCE))
    return ranked
