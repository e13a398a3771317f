"""
Tipos de dominio del banco OTDR de fotones individuales.

Unidades segun el nombre del campo: _ps, _ns, _nm, _hz, _db, _v.
Las instancias se construyen desde model.forms.validate_bench y no se
modifican despues.
"""
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from bases.models import ClaseModelo, OutOfRangeError

SCHEMA_BENCH = 'backflash-bench/1'

# FWHM -> sigma de una gaussiana
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299792458.0


class Channel(enum.IntEnum):
    OTDR = 0
    DUT_SYNC = 1
    LASER_SYNC = 2


# Registro empaquetado: canal u8 + timestamp u64, little-endian (9 bytes)
TAG_DTYPE = np.dtype([('channel', '<u1'), ('timestamp', '<u8')])


@dataclass(frozen=True)
class TimeTag(ClaseModelo):
    channel: Channel
    timestamp: int

    @classmethod
    def from_record(cls, record):
        """Un registro de TAG_DTYPE como TimeTag."""
        return cls(Channel(int(record['channel'])), int(record['timestamp']))

    def __str__(self):
        return '{} @ {} ps'.format(self.channel.name, self.timestamp)


@dataclass(frozen=True)
class LaserConfig(ClaseModelo):
    wavelength_nm: float
    pulse_width_fwhm_ps: float
    repetition_rate_hz: float
    mean_photon_number_at_dut: float

    @property
    def period_ps(self):
        return int(round(1e12 / self.repetition_rate_hz))

    @property
    def pulse_sigma_ps(self):
        return self.pulse_width_fwhm_ps * FWHM_TO_SIGMA


@dataclass(frozen=True)
class AttenuationChain(ClaseModelo):
    variable_attenuation_db: float
    coupler_attenuation_db: float = 20.0

    @property
    def transmission(self):
        return 10.0 ** (-(self.variable_attenuation_db + self.coupler_attenuation_db) / 10.0)


def photons_per_pulse(pulse_energy_fj, wavelength_nm, transmission):
    """Numero medio de fotones tras la cadena de atenuacion."""
    photon_energy = PLANCK * LIGHT_SPEED / (wavelength_nm * 1e-9)
    return pulse_energy_fj * 1e-15 / photon_energy * transmission


@dataclass(frozen=True)
class ReflectionPoint(ClaseModelo):
    round_trip_delay_ps: int
    reflectance: float


@dataclass(frozen=True)
class OpticalPath(ClaseModelo):
    reflection_points: tuple
    channel_transmission: float
    dut_delay_ps: int

    @property
    def dut_round_trip_ps(self):
        return 2 * self.dut_delay_ps


@dataclass(frozen=True)
class SpectralDensity(ClaseModelo):
    """Densidad espectral constante por tramos, normalizada sobre su soporte."""
    edges_nm: tuple
    densities: tuple

    @classmethod
    def from_bins(cls, edges_nm, weights):
        edges = np.asarray(edges_nm, dtype=float)
        weights = np.asarray(weights, dtype=float)
        area = float(np.sum(weights * np.diff(edges)))
        if area <= 0:
            raise ValueError('La densidad espectral debe tener area positiva')
        if abs(area - 1.0) > 1e-12:
            weights = weights / area
        return cls(tuple(float(e) for e in edges), tuple(float(w) for w in weights))

    @classmethod
    def flat(cls, low_nm, high_nm):
        return cls.from_bins([low_nm, high_nm], [1.0])

    @property
    def support(self):
        return self.edges_nm[0], self.edges_nm[-1]

    def integral(self):
        return float(np.sum(np.asarray(self.densities) * np.diff(self.edges_nm)))

    def fraction_in(self, low_nm, high_nm):
        edges = np.asarray(self.edges_nm)
        overlap = np.clip(np.minimum(edges[1:], high_nm) - np.maximum(edges[:-1], low_nm), 0.0, None)
        return float(np.sum(overlap * np.asarray(self.densities)))


@dataclass(frozen=True)
class BackflashProfile(ClaseModelo):
    """
    Perfil temporal lineal por tramos sobre [0, duracion] (ns), normalizado.
    Nodos repetidos representan escalones (p. ej. un rectangulo retrasado).
    """
    knots_ns: tuple
    densities: tuple
    mean_photons_per_avalanche: float
    spectral_density: SpectralDensity

    @classmethod
    def from_shape(cls, knots_ns, weights, mean_photons_per_avalanche, spectral_density):
        knots = np.asarray(knots_ns, dtype=float)
        weights = np.asarray(weights, dtype=float)
        area = float(np.sum(0.5 * (weights[1:] + weights[:-1]) * np.diff(knots)))
        if area <= 0:
            raise ValueError('El perfil temporal debe tener area positiva')
        if abs(area - 1.0) > 1e-12:
            weights = weights / area
        return cls(tuple(float(k) for k in knots), tuple(float(w) for w in weights),
                   float(mean_photons_per_avalanche), spectral_density)

    @classmethod
    def rectangular(cls, duration_ns, mean_photons_per_avalanche=0.0, spectral_density=None, start_ns=0.0):
        knots, weights = [0.0, duration_ns], [1.0, 1.0]
        if start_ns > 0:
            knots, weights = [0.0, start_ns, start_ns, start_ns + duration_ns], [0.0, 0.0, 1.0, 1.0]
        return cls.from_shape(knots, weights, mean_photons_per_avalanche,
                              spectral_density or SpectralDensity.flat(1530.0, 1600.0))

    @classmethod
    def trapezoidal(cls, duration_ns, ramp_ns, mean_photons_per_avalanche=0.0, spectral_density=None):
        if not 0 < 2 * ramp_ns <= duration_ns:
            raise ValueError('Las rampas no caben en la duracion del perfil')
        knots = [0.0, ramp_ns, duration_ns - ramp_ns, duration_ns]
        return cls.from_shape(knots, [0.0, 1.0, 1.0, 0.0], mean_photons_per_avalanche,
                              spectral_density or SpectralDensity.flat(1530.0, 1600.0))

    @property
    def duration_ns(self):
        return self.knots_ns[-1]

    def _segments(self):
        knots = np.asarray(self.knots_ns)
        dens = np.asarray(self.densities)
        width = np.diff(knots)
        area = 0.5 * (dens[1:] + dens[:-1]) * width
        cumulative = np.concatenate(([0.0], np.cumsum(area)))
        with np.errstate(divide='ignore', invalid='ignore'):
            slope = np.where(width > 0, np.diff(dens) / np.where(width > 0, width, 1.0), 0.0)
        return knots, dens, cumulative, slope

    def density(self, t_ns):
        t = np.asarray(t_ns, dtype=float)
        value = np.interp(t, self.knots_ns, self.densities, left=0.0, right=0.0)
        return np.where((t < 0) | (t > self.duration_ns), 0.0, value)

    def integral(self):
        return float(self._segments()[2][-1])

    def cdf(self, t_ns):
        knots, dens, cumulative, slope = self._segments()
        t = np.clip(np.asarray(t_ns, dtype=float), 0.0, self.duration_ns)
        idx = np.clip(np.searchsorted(knots, t, side='right') - 1, 0, len(knots) - 2)
        x = t - knots[idx]
        return cumulative[idx] + dens[idx] * x + 0.5 * slope[idx] * x * x

    def sample(self, rng, size):
        """Muestreo por inversion de la CDF cuadratica por tramos."""
        knots, dens, cumulative, slope = self._segments()
        u = rng.random(size) * cumulative[-1]
        idx = np.clip(np.searchsorted(cumulative, u, side='right') - 1, 0, len(knots) - 2)
        a = u - cumulative[idx]
        v0 = dens[idx]
        root = np.sqrt(np.clip(v0 * v0 + 2.0 * slope[idx] * a, 0.0, None))
        denom = v0 + root
        with np.errstate(divide='ignore', invalid='ignore'):
            x = np.where(denom > 0, 2.0 * a / np.where(denom > 0, denom, 1.0), 0.0)
        return np.clip(knots[idx] + x, knots[idx], knots[idx + 1])

    def fraction_within(self, window_ns):
        return float(self.cdf(window_ns))

    def with_yield(self, mean_photons_per_avalanche):
        return self.replace(mean_photons_per_avalanche=float(mean_photons_per_avalanche))


def profile_density(profile, t):
    """Densidad del perfil (1/ns) en t (ns); 0 fuera del soporte."""
    return float(profile.density(t))


@dataclass(frozen=True)
class EfficiencyCurve(ClaseModelo):
    anchors: tuple
    domain_v: tuple

    def __call__(self, excess_bias_v):
        low, high = self.domain_v
        if not low <= excess_bias_v <= high:
            raise OutOfRangeError(
                'Sobretension {} V fuera del dominio [{}, {}] V'.format(excess_bias_v, low, high))
        biases = [a[0] for a in self.anchors]
        values = [a[1] for a in self.anchors]
        return float(np.interp(excess_bias_v, biases, values))


@dataclass(frozen=True)
class SurfaceReflectance(ClaseModelo):
    gated_on: float
    gated_off: float


@dataclass(frozen=True)
class SpadModel(ClaseModelo):
    gate_width_ns: float
    gate_delay_offset_ns: float
    excess_bias_v: float
    efficiency_curve: EfficiencyCurve
    dead_time_ns: float
    dark_count_rate_in_gate_hz: float
    avalanche_duration_ns: float
    backflash: BackflashProfile
    surface_reflectance: SurfaceReflectance
    yield_per_volt: Optional[float] = None
    yield_overrides: tuple = ()

    @property
    def efficiency(self):
        return efficiency_at(self, self.excess_bias_v)

    def yield_at(self, excess_bias_v):
        for bias, value in self.yield_overrides:
            if math.isclose(bias, excess_bias_v, abs_tol=1e-9):
                return float(value)
        if self.yield_per_volt is not None:
            return self.yield_per_volt * excess_bias_v
        return self.backflash.mean_photons_per_avalanche

    def backflash_at(self, excess_bias_v):
        return self.backflash.with_yield(self.yield_at(excess_bias_v))

    @property
    def arrival_in_gate(self):
        return 0.0 <= self.gate_delay_offset_ns < self.gate_width_ns


def efficiency_at(model, excess_bias):
    """Interpolacion lineal entre anclas; fuera del dominio declarado es error."""
    return model.efficiency_curve(excess_bias)


@dataclass(frozen=True)
class MeasDetectorModel(ClaseModelo):
    efficiency: float
    dark_count_rate_hz: float
    timing_jitter_fwhm_ps: float
    free_running: bool = True

    @property
    def jitter_sigma_ps(self):
        return self.timing_jitter_fwhm_ps * FWHM_TO_SIGMA


@dataclass(frozen=True)
class FilterConfig(ClaseModelo):
    bandwidth_nm: float
    center_nm: Optional[float] = None

    def passband(self, center_nm=None):
        center = self.center_nm if center_nm is None else center_nm
        return center - self.bandwidth_nm / 2.0, center + self.bandwidth_nm / 2.0


SWEEP_AXES = ('excess_bias', 'gate_delay_offset', 'gate_width', 'filter_center')


@dataclass(frozen=True)
class BenchConfig(ClaseModelo):
    name: str
    laser: LaserConfig
    attenuation: AttenuationChain
    optical_path: OpticalPath
    dut: SpadModel
    meas_detector: MeasDetectorModel
    filter: Optional[FilterConfig] = None

    @property
    def period_ps(self):
        return self.laser.period_ps

    def with_axis(self, axis, value):
        """Copia del banco con un parametro de barrido cambiado."""
        if axis == 'excess_bias':
            efficiency_at(self.dut, value)
            return self.replace(dut=self.dut.replace(excess_bias_v=float(value)))
        if axis == 'gate_delay_offset':
            return self.replace(dut=self.dut.replace(gate_delay_offset_ns=float(value)))
        if axis == 'gate_width':
            return self.replace(dut=self.dut.replace(gate_width_ns=float(value)))
        if axis == 'filter_center':
            bench_filter = self.filter or FilterConfig(bandwidth_nm=10.0)
            return self.replace(filter=bench_filter.replace(center_nm=float(value)))
        raise OutOfRangeError('Eje de barrido desconocido: {!r}'.format(axis))


@dataclass(frozen=True)
class LeakageReport(ClaseModelo):
    """
    Cota de fuga P_L = N_B / (N_P * eta_det * eta_ch).

    Los valores medidos se guardan aparte; `suppression` acumula los
    factores de contramedidas y se multiplica en orden fijo, de modo que
    aplicar contramedidas en cualquier orden da el mismo resultado.
    """
    measured_n_backflash: float
    measured_std_error: float
    n_dut_counts: int
    eta_det: float
    eta_ch: float
    measured_ci_low: float
    measured_ci_high: float
    ci_method: str = 'normal'
    suppression: tuple = field(default=())

    @property
    def factor(self):
        return math.prod(sorted(self.suppression))

    @property
    def n_backflash(self):
        return self.measured_n_backflash * self.factor

    @property
    def std_error(self):
        return self.measured_std_error * self.factor

    @property
    def p_leak(self):
        return self.n_backflash / (self.n_dut_counts * self.eta_det * self.eta_ch)

    @property
    def ci_low(self):
        return min(self.measured_ci_low * self.factor, self.p_leak)

    @property
    def ci_high(self):
        return max(self.measured_ci_high * self.factor, self.p_leak)

    def attenuated(self, *factors):
        return self.replace(suppression=tuple(self.suppression) + tuple(float(f) for f in factors))

    def summary(self):
        return {
            'n_backflash': self.n_backflash,
            'n_backflash_std_error': self.std_error,
            'n_dut_counts': self.n_dut_counts,
            'eta_det': self.eta_det,
            'eta_ch': self.eta_ch,
            'p_leak': self.p_leak,
            'ci_low': self.ci_low,
            'ci_high': self.ci_high,
            'ci_method': self.ci_method,
        }
