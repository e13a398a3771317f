import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from bases.models import ClaseModelo, OutOfRangeError
from model.models import TAG_DTYPE, BenchConfig, Channel


class Provenance(enum.IntEnum):
    REFLECTION = 0
    BACKFLASH = 1
    DARK = 2


@dataclass(frozen=True)
class SimRun(ClaseModelo):
    config: BenchConfig
    seed: int
    pulse_count: Optional[int] = None
    duration_s: Optional[float] = None
    gates_enabled: bool = True
    filter_center_nm: Optional[float] = None
    emit_laser_sync: bool = False

    def __post_init__(self):
        if (self.pulse_count is None) == (self.duration_s is None):
            raise OutOfRangeError('Indique exactamente uno de pulse_count o duration_s')
        if self.pulse_count is not None and self.pulse_count < 0:
            raise OutOfRangeError('pulse_count negativo')
        if self.duration_s is not None and self.duration_s < 0:
            raise OutOfRangeError('duration_s negativa')

    @property
    def periods(self):
        if self.pulse_count is not None:
            return int(self.pulse_count)
        return int(round(self.duration_s * self.config.laser.repetition_rate_hz))


@dataclass(frozen=True, eq=False)
class SimOutput(ClaseModelo):
    """
    Resultado de una simulacion. Los timestamps son enteros en ps;
    provenance etiqueta cada tag OTDR (solo para pruebas y depuracion).
    """
    run: SimRun
    otdr_timestamps: np.ndarray
    provenance: np.ndarray
    dut_timestamps: np.ndarray
    dut_dark_count: int
    expected_backflash: float

    @property
    def dut_click_count(self):
        return int(self.dut_timestamps.size)

    @property
    def pulse_count(self):
        return self.run.periods

    @property
    def seed(self):
        return self.run.seed

    def otdr_tags(self):
        tags = np.empty(self.otdr_timestamps.size, dtype=TAG_DTYPE)
        tags['channel'] = Channel.OTDR
        tags['timestamp'] = self.otdr_timestamps
        return tags

    def count(self, label):
        return int(np.count_nonzero(self.provenance == label))

    def tag_array(self):
        """Todos los canales mezclados en orden temporal (estable por canal)."""
        parts = [(self.otdr_timestamps, Channel.OTDR), (self.dut_timestamps, Channel.DUT_SYNC)]
        if self.run.emit_laser_sync:
            period = self.run.config.period_ps
            parts.append((np.arange(self.pulse_count, dtype=np.int64) * period, Channel.LASER_SYNC))
        timestamps = np.concatenate([p[0] for p in parts]).astype(np.int64)
        channels = np.concatenate([np.full(p[0].size, p[1], dtype=np.uint8) for p in parts])
        order = np.lexsort((channels, timestamps))
        tags = np.empty(timestamps.size, dtype=TAG_DTYPE)
        tags['channel'] = channels[order]
        tags['timestamp'] = timestamps[order]
        return tags
