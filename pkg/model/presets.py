"""
Bancos de referencia.

DUT1: prototipo con perfil rectangular de 10 ns, puerta de 20 ns a 7 V.
DUT2: modulo comercial con perfil trapezoidal y puerta de 100 ns. Sus
rampas de 2 ns y la curva de eficiencia son valores de configuracion.

El rendimiento de backflash es un parametro de calibracion: con
0.014 fotones/V a 7 V la fuga verdadera del DUT1 es 0.098.
"""
import copy

from .forms import validate_bench
from .models import SCHEMA_BENCH

DUT1_BENCH = {
    'schema': SCHEMA_BENCH,
    'name': 'DUT1',
    'laser': {
        'wavelength_nm': 1550.0,
        'pulse_width_fwhm_ps': 300.0,
        'repetition_rate_hz': 50000.0,
        'mean_photon_number_at_dut': 0.1,
    },
    'attenuation': {
        'variable_attenuation_db': 40.0,
        'coupler_attenuation_db': 20.0,
    },
    'optical_path': {
        'reflection_points': [
            {'round_trip_delay_ps': 20000, 'reflectance': 0.005},
            {'round_trip_delay_ps': 120000, 'reflectance': 0.002},
            {'round_trip_delay_ps': 180000, 'reflectance': 0.001},
        ],
        'channel_transmission': 0.5,
        'dut_delay_ps': 100000,
    },
    'dut': {
        'gate_width_ns': 20.0,
        'gate_delay_offset_ns': 5.0,
        'excess_bias_v': 7.0,
        'efficiency_curve': {
            'anchors': [[3.0, 0.15], [4.5, 0.22], [7.0, 0.35]],
            'domain_v': [3.0, 7.0],
        },
        'dead_time_ns': 10000.0,
        'dark_count_rate_in_gate_hz': 1000.0,
        'avalanche_duration_ns': 10.0,
        'backflash': {
            'shape': {'kind': 'rectangular', 'duration_ns': 10.0},
            'spectrum': {'edges_nm': [1530.0, 1600.0], 'densities': [1.0]},
            'yield_per_volt': 0.014,
        },
        'surface_reflectance': {'gated_on': 0.0105, 'gated_off': 0.01},
    },
    'meas_detector': {
        'efficiency': 0.1,
        'dark_count_rate_hz': 5000.0,
        'timing_jitter_fwhm_ps': 130.0,
    },
    'filter': {'bandwidth_nm': 10.0},
}

DUT2_BENCH = {
    'schema': SCHEMA_BENCH,
    'name': 'DUT2',
    'laser': dict(DUT1_BENCH['laser']),
    'attenuation': dict(DUT1_BENCH['attenuation']),
    'optical_path': copy.deepcopy(DUT1_BENCH['optical_path']),
    'dut': {
        'gate_width_ns': 100.0,
        'gate_delay_offset_ns': 10.0,
        'excess_bias_v': 4.0,
        'efficiency_curve': {
            'anchors': [[2.0, 0.05], [4.0, 0.10], [6.0, 0.20]],
            'domain_v': [2.0, 6.0],
        },
        'dead_time_ns': 10000.0,
        'dark_count_rate_in_gate_hz': 1000.0,
        'avalanche_duration_ns': 10.0,
        'backflash': {
            'shape': {'kind': 'trapezoidal', 'duration_ns': 10.0, 'ramp_ns': 2.0},
            'spectrum': {'edges_nm': [1530.0, 1600.0], 'densities': [1.0]},
            'yield_per_volt': 0.015,
        },
        'surface_reflectance': {'gated_on': 0.0105, 'gated_off': 0.01},
    },
    'meas_detector': dict(DUT1_BENCH['meas_detector']),
    'filter': {'bandwidth_nm': 10.0},
}


def bench_document(name='DUT1', **overrides):
    """Copia profunda del documento con secciones sustituidas."""
    base = {'DUT1': DUT1_BENCH, 'DUT2': DUT2_BENCH}[name]
    document = copy.deepcopy(base)
    for section, values in overrides.items():
        if isinstance(values, dict) and isinstance(document.get(section), dict):
            document[section].update(values)
        else:
            document[section] = values
    return document


def dut1(**overrides):
    return validate_bench(bench_document('DUT1', **overrides))


def dut2(**overrides):
    return validate_bench(bench_document('DUT2', **overrides))
