from dataclasses import dataclass

import numpy as np

from bases.models import ClaseModelo, GeometryMismatchError


@dataclass(frozen=True, eq=False)
class CorrelationHistogram(ClaseModelo):
    """
    Cuentas plegadas por periodo. Bin k cubre [k*w, (k+1)*w) de retardo
    respecto a origin; el ultimo bin puede ser parcial si w no divide el
    periodo.
    """
    bin_width: int
    origin: int
    period: int
    counts: np.ndarray
    total_triggers: int = 0

    @property
    def n_bins(self):
        return int(self.counts.size)

    @property
    def total(self):
        return int(self.counts.sum())

    def delays(self):
        return np.arange(self.n_bins, dtype=np.int64) * self.bin_width

    def geometry(self):
        return self.bin_width, self.origin, self.period, self.n_bins

    def same_geometry(self, other):
        if self.geometry() != other.geometry():
            raise GeometryMismatchError(
                'Geometrias distintas: {} vs {}'.format(self.geometry(), other.geometry()))

    def __eq__(self, other):
        if not isinstance(other, CorrelationHistogram):
            return NotImplemented
        return (self.geometry() == other.geometry() and self.total_triggers == other.total_triggers
                and np.array_equal(self.counts, other.counts))


@dataclass(frozen=True, eq=False)
class ResidualHistogram(ClaseModelo):
    """Cuentas con puerta menos referencia escalada; puede ser negativo."""
    bin_width: int
    origin: int
    period: int
    values: np.ndarray
    variance: np.ndarray
    scale: float
    gated_triggers: int
    reference_triggers: int

    @property
    def n_bins(self):
        return int(self.values.size)

    @property
    def span(self):
        return self.n_bins * self.bin_width

    def delays(self):
        return np.arange(self.n_bins, dtype=np.int64) * self.bin_width


@dataclass(frozen=True)
class Peak(ClaseModelo):
    delay: float
    width: float
    counts: int


@dataclass(frozen=True)
class BackflashRegion(ClaseModelo):
    start: int
    end: int
    gross_counts: int
    background_estimate: float

    @property
    def excess(self):
        return self.gross_counts - self.background_estimate

    @property
    def duration(self):
        return self.end - self.start


@dataclass(frozen=True)
class FeatureSet(ClaseModelo):
    peaks: tuple = ()
    backflash_regions: tuple = ()
    baseline: float = 0.0

    def strongest_region(self):
        if not self.backflash_regions:
            return None
        return max(self.backflash_regions, key=lambda r: (r.excess, -r.start))


@dataclass(frozen=True, eq=False)
class AnalysisResult(ClaseModelo):
    report: object
    features: FeatureSet
    region: tuple
    region_source: str
    gated: CorrelationHistogram
    reference: CorrelationHistogram
    residual: ResidualHistogram
