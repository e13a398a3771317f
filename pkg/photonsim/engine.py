"""
Generador Monte Carlo de time tags para el banco OTDR.

Cada bloque de BACKFLASH_CHUNK_PERIODS periodos usa su propio sub-flujo
Philox (seed, etapa, bloque), asi la salida es identica con 1 o N hilos.
Etapas:
  1. luz del laser (reflexiones, candidatos de avalancha) y oscuras del OTDR
  2. tiempo muerto no paralizable, secuencial sobre todos los candidatos
  3. fotones de backflash de las avalanchas aceptadas
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from bases.models import OutOfRangeError
from bases.rng import STREAM_BACKFLASH, STREAM_FILTER, STREAM_LIGHT, derive_seed, substream
from model.forms import validate_bench
from model.models import SWEEP_AXES, efficiency_at
from .models import Provenance, SimOutput, SimRun

logger = logging.getLogger(__name__)

MAX_TIMESTAMP = 2 ** 63 - 1


@dataclass(frozen=True)
class _Plan:
    """Escalares derivados del banco, en ps."""
    period_ps: int
    laser_sigma_ps: float
    det_sigma_ps: float
    arrival_ps: float
    gate_open_ps: float
    gate_close_ps: float
    p_photon: float
    p_dark: float
    reflections: tuple
    backflash_mean: float
    profile: object
    avalanche_ps: float
    return_ps: float
    dead_time_ps: int
    otdr_dark_per_period: float
    gates_enabled: bool

    @classmethod
    def build(cls, config, gates_enabled):
        laser, dut, meas = config.laser, config.dut, config.meas_detector
        path = config.optical_path
        mu = laser.mean_photon_number_at_dut
        eta_det = meas.efficiency
        gate_open = path.dut_delay_ps - dut.gate_delay_offset_ns * 1000.0
        in_gate = gates_enabled and dut.arrival_in_gate

        reflections = [(float(p.round_trip_delay_ps), mu * p.reflectance * eta_det)
                       for p in path.reflection_points]
        surface = dut.surface_reflectance.gated_on if in_gate else dut.surface_reflectance.gated_off
        reflections.append((float(path.dut_round_trip_ps), mu * surface * path.channel_transmission * eta_det))

        profile = dut.backflash_at(dut.excess_bias_v)
        return cls(
            period_ps=laser.period_ps,
            laser_sigma_ps=laser.pulse_sigma_ps,
            det_sigma_ps=meas.jitter_sigma_ps,
            arrival_ps=float(path.dut_delay_ps),
            gate_open_ps=gate_open,
            gate_close_ps=gate_open + dut.gate_width_ns * 1000.0,
            # probabilidad de al menos una absorcion; expm1 por estabilidad
            p_photon=-math.expm1(-mu * efficiency_at(dut, dut.excess_bias_v)) if in_gate else 0.0,
            p_dark=-math.expm1(-dut.dark_count_rate_in_gate_hz * dut.gate_width_ns * 1e-9) if gates_enabled else 0.0,
            reflections=tuple(reflections),
            backflash_mean=profile.mean_photons_per_avalanche * path.channel_transmission * eta_det,
            profile=profile,
            avalanche_ps=dut.avalanche_duration_ns * 1000.0,
            return_ps=float(path.dut_delay_ps),
            dead_time_ps=int(round(dut.dead_time_ns * 1000.0)),
            otdr_dark_per_period=meas.dark_count_rate_hz * laser.period_ps * 1e-12,
            gates_enabled=gates_enabled,
        )


def _absolute(periods, relative, period_ps):
    times = periods * period_ps + np.rint(relative).astype(np.int64)
    return np.maximum(times, 0)


def _light_chunk(plan, seed, index, start, stop):
    rng = substream(seed, STREAM_LIGHT, index)
    n = stop - start
    periods = np.arange(start, stop, dtype=np.int64)
    times, labels = [], []

    sigma = math.hypot(plan.laser_sigma_ps, plan.det_sigma_ps)
    for delay, mean in plan.reflections:
        counts = rng.poisson(mean, n)
        owner = np.repeat(periods, counts)
        relative = delay + rng.normal(0.0, sigma, owner.size)
        times.append(_absolute(owner, relative, plan.period_ps))
        labels.append(np.full(owner.size, Provenance.REFLECTION, dtype=np.uint8))

    # candidatos de avalancha: el primer evento de la puerta gana
    photon = rng.random(n) < plan.p_photon
    t_photon = plan.arrival_ps + rng.normal(0.0, plan.laser_sigma_ps, n)
    photon &= (t_photon >= plan.gate_open_ps) & (t_photon < plan.gate_close_ps)
    dark = rng.random(n) < plan.p_dark
    t_dark = plan.gate_open_ps + rng.random(n) * (plan.gate_close_ps - plan.gate_open_ps)
    dark_first = dark & (~photon | (t_dark < t_photon))
    fired = photon | dark
    av_relative = np.where(dark_first, t_dark, t_photon)[fired]
    av_periods = periods[fired]
    av_dark = dark_first[fired]

    n_dark = rng.poisson(plan.otdr_dark_per_period * n)
    dark_times = np.sort(rng.integers(start * plan.period_ps, stop * plan.period_ps, n_dark, dtype=np.int64))
    times.append(dark_times)
    labels.append(np.full(n_dark, Provenance.DARK, dtype=np.uint8))

    logger.debug('Bloque %d: %d periodos, %d candidatos', index, n, av_periods.size)
    return {
        'times': np.concatenate(times),
        'labels': np.concatenate(labels),
        'av_periods': av_periods,
        'av_relative': av_relative,
        'av_dark': av_dark,
    }


def _apply_dead_time(times, dead_time_ps):
    """Mascara de avalanchas aceptadas con tiempo muerto no paralizable."""
    keep = np.ones(times.size, dtype=bool)
    if times.size < 2 or dead_time_ps <= 0:
        return keep
    if np.diff(times).min() >= dead_time_ps:
        return keep
    values = times.tolist()
    last = values[0]
    for i in range(1, len(values)):
        if values[i] - last < dead_time_ps:
            keep[i] = False
        else:
            last = values[i]
    return keep


def _backflash_chunk(plan, seed, index, av_periods, av_relative):
    rng = substream(seed, STREAM_BACKFLASH, index)
    counts = rng.poisson(plan.backflash_mean, av_periods.size)
    owner = np.repeat(np.arange(av_periods.size), counts)
    tau = plan.profile.sample(rng, owner.size) * 1000.0
    jitter = rng.normal(0.0, plan.det_sigma_ps, owner.size)

    # la emision termina con la avalancha o con el flanco de cierre de la puerta
    limit = np.minimum(plan.avalanche_ps, plan.gate_close_ps - av_relative)
    emitted = tau <= limit[owner]
    relative = av_relative[owner] + tau + plan.return_ps + jitter
    times = _absolute(av_periods[owner][emitted], relative[emitted], plan.period_ps)
    expected = plan.backflash_mean * float(np.sum(plan.profile.cdf(limit / 1000.0)))
    return times, expected


def _worker_count(workers):
    """Hilos pedidos, acotados por BACKFLASH_THREADS."""
    cap = max(1, int(getattr(settings, 'BACKFLASH_THREADS', 1)))
    if workers is None:
        return cap
    return max(1, min(int(workers), cap))


def _map(function, items, workers):
    if workers == 1 or len(items) < 2:
        return [function(*item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda item: function(*item), items))


def simulate(run: SimRun, workers=None) -> SimOutput:
    config = validate_bench(run.config)
    plan = _Plan.build(config, run.gates_enabled)
    periods = run.periods
    if periods * plan.period_ps + plan.period_ps > MAX_TIMESTAMP:
        raise OutOfRangeError('pulse_count={} desborda los timestamps de 64 bits'.format(periods))

    chunk = max(1, int(getattr(settings, 'BACKFLASH_CHUNK_PERIODS', 65536)))
    bounds = [(k0, min(k0 + chunk, periods)) for k0 in range(0, periods, chunk)]
    workers = _worker_count(workers)
    logger.info('Simulando %s: %d periodos, %d bloques, %d hilos, puertas %s',
                config.name, periods, len(bounds), workers, 'activas' if run.gates_enabled else 'apagadas')

    light = _map(_light_chunk, [(plan, run.seed, i, k0, k1) for i, (k0, k1) in enumerate(bounds)], workers)

    candidates = np.concatenate([c['av_periods'] * plan.period_ps + np.rint(c['av_relative']).astype(np.int64)
                                 for c in light]) if light else np.empty(0, dtype=np.int64)
    keep = _apply_dead_time(candidates, plan.dead_time_ps)

    jobs, offset, dut_dark = [], 0, 0
    for i, c in enumerate(light):
        size = c['av_periods'].size
        mask = keep[offset:offset + size]
        offset += size
        dut_dark += int(np.count_nonzero(c['av_dark'][mask]))
        jobs.append((plan, run.seed, i, c['av_periods'][mask], c['av_relative'][mask]))
    backflash = _map(_backflash_chunk, jobs, workers)

    parts_t, parts_l = [], []
    for c, (times, _) in zip(light, backflash):
        parts_t.extend([c['times'], times])
        parts_l.extend([c['labels'], np.full(times.size, Provenance.BACKFLASH, dtype=np.uint8)])
    otdr = np.concatenate(parts_t) if parts_t else np.empty(0, dtype=np.int64)
    labels = np.concatenate(parts_l) if parts_l else np.empty(0, dtype=np.uint8)
    order = np.argsort(otdr, kind='stable')

    output = SimOutput(
        run=run.replace(config=config),
        otdr_timestamps=otdr[order],
        provenance=labels[order],
        dut_timestamps=candidates[keep],
        dut_dark_count=dut_dark,
        expected_backflash=float(sum(e for _, e in backflash)),
    )
    logger.info('Fin de simulacion: %d tags OTDR, %d avalanchas del DUT',
                output.otdr_timestamps.size, output.dut_click_count)

    center = run.filter_center_nm
    if center is None and config.filter is not None:
        center = config.filter.center_nm
    if center is not None:
        bandwidth = config.filter.bandwidth_nm if config.filter is not None else 10.0
        output = apply_filter(output, center, bandwidth, config.dut.backflash.spectral_density,
                              config.laser.wavelength_nm)
    return output


def apply_filter(output, center, bandwidth, spectrum, laser_wavelength, seed=None):
    """
    Filtro sintonizable antes del detector OTDR: adelgaza el backflash por la
    fraccion espectral en la banda, deja pasar las reflexiones solo si la
    longitud de onda del laser cae en [low, high) y no toca las oscuras.
    """
    if bandwidth <= 0:
        raise OutOfRangeError('El ancho de banda del filtro debe ser positivo')
    low, high = center - bandwidth / 2.0, center + bandwidth / 2.0
    fraction = spectrum.fraction_in(low, high)
    laser_passes = low <= laser_wavelength < high

    rng = substream(output.seed if seed is None else seed, STREAM_FILTER, int(round(center * 1000)))
    labels = output.provenance
    is_backflash = labels == Provenance.BACKFLASH
    draws = rng.random(int(np.count_nonzero(is_backflash)))
    keep = np.ones(labels.size, dtype=bool)
    keep[is_backflash] = draws < fraction
    if not laser_passes:
        keep[labels == Provenance.REFLECTION] = False
    logger.debug('Filtro %.1f nm +/- %.1f: fraccion espectral %.4f, laser %s',
                 center, bandwidth / 2.0, fraction, 'dentro' if laser_passes else 'fuera')
    return output.replace(
        otdr_timestamps=output.otdr_timestamps[keep],
        provenance=labels[keep],
        expected_backflash=output.expected_backflash * fraction,
    )


def simulate_sweep(base: SimRun, axis, values, workers=None):
    """Una corrida independiente por valor; semillas derivadas de (semilla base, indice)."""
    if axis not in SWEEP_AXES:
        raise OutOfRangeError('Eje de barrido desconocido: {!r}'.format(axis))
    outputs = []
    for index, value in enumerate(values):
        config = base.config.with_axis(axis, value)
        run = base.replace(config=config, seed=derive_seed(base.seed, index))
        if axis == 'filter_center':
            run = run.replace(filter_center_nm=float(value))
        outputs.append(simulate(run, workers=workers))
    return outputs
