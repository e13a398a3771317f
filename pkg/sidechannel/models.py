from dataclasses import dataclass
from typing import Optional

import numpy as np

from bases.models import ClaseModelo, EmptyRegionError, OutOfRangeError, OverlappingPassbandsError

SCHEMA_COUNTERMEASURE = 'backflash-cm/1'


@dataclass(frozen=True)
class DiscriminationResult(ClaseModelo):
    """Ventaja de Eve al distinguir dos detectores por el perfil temporal."""
    guess_probability: float
    tv_distance: float
    leaked_bits_per_detection: float
    grid_ps: float = 10.0
    converged: bool = True


@dataclass(frozen=True)
class Passband(ClaseModelo):
    """Banda semiabierta [low, high); dos bandas contiguas no comparten el borde."""
    center_nm: float
    bandwidth_nm: float

    @property
    def low(self):
        return self.center_nm - self.bandwidth_nm / 2.0

    @property
    def high(self):
        return self.center_nm + self.bandwidth_nm / 2.0

    def contains(self, wavelength_nm):
        return self.low <= wavelength_nm < self.high


@dataclass(frozen=True)
class Countermeasure(ClaseModelo):
    isolation_db: float = 0.0
    filter_passbands: tuple = ()
    gate_width_override_ns: Optional[float] = None

    def __post_init__(self):
        if self.isolation_db < 0:
            raise OutOfRangeError('El aislamiento no puede ser negativo')
        bands = sorted(self.filter_passbands, key=lambda b: b.low)
        for band in bands:
            if band.bandwidth_nm <= 0:
                raise OutOfRangeError('Ancho de banda no positivo en {} nm'.format(band.center_nm))
        for first, second in zip(bands, bands[1:]):
            if second.low < first.high:
                raise OverlappingPassbandsError(
                    'Bandas solapadas: {} nm y {} nm'.format(first.center_nm, second.center_nm))
        if self.gate_width_override_ns is not None and self.gate_width_override_ns <= 0:
            raise OutOfRangeError('gate_width_override_ns debe ser positivo')


@dataclass(frozen=True)
class CountermeasureFactors(ClaseModelo):
    isolation: float = 1.0
    spectral: float = 1.0
    temporal: float = 1.0
    blocks_signal: bool = False

    def as_tuple(self):
        return self.isolation, self.spectral, self.temporal


@dataclass(frozen=True)
class RankedMatch(ClaseModelo):
    name: str
    distance: float
    shift_bins: int = 0
    tied: bool = False


@dataclass(frozen=True, eq=False)
class RegionShape(ClaseModelo):
    """Forma medida de una region: cuentas residuales recortadas a >= 0."""
    counts: np.ndarray
    bin_width: int

    @classmethod
    def from_residual(cls, residual, region):
        start, end = region
        i0 = int(start // residual.bin_width)
        i1 = int(-(-end // residual.bin_width))
        if i1 <= i0:
            raise EmptyRegionError('Region vacia: [{}, {})'.format(start, end))
        return cls(np.clip(residual.values[i0:i1], 0.0, None), residual.bin_width)

    @property
    def total(self):
        return float(np.sum(self.counts))

    def normalized(self):
        total = self.total
        if total <= 0:
            raise EmptyRegionError('La region no tiene cuentas positivas')
        return np.clip(np.asarray(self.counts, dtype=float), 0.0, None) / total
