import json
import logging
from pathlib import Path

from django import forms
from django.core.exceptions import ValidationError

from bases.models import check_schema, stable_hash
from .models import (
    SCHEMA_BENCH, AttenuationChain, BackflashProfile, BenchConfig, EfficiencyCurve, FilterConfig,
    LaserConfig, MeasDetectorModel, OpticalPath, ReflectionPoint, SpadModel, SpectralDensity,
    SurfaceReflectance, photons_per_pulse,
)

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-9


def positive(value):
    if value is not None and value <= 0:
        raise ValidationError('Debe ser mayor que cero.')


def probability(value):
    if value is not None and not 0.0 <= value <= 1.0:
        raise ValidationError('Debe estar en [0, 1].')


class SeccionForm(forms.Form):
    """Formulario de una seccion del documento; rechaza campos desconocidos."""

    def __init__(self, data, *args, **kwargs):
        self.raw = data if isinstance(data, dict) else {}
        super().__init__(self.raw, *args, **kwargs)
        if not isinstance(data, dict):
            self.add_error(None, 'La seccion debe ser un objeto JSON.')

    def clean(self):
        cleaned_data = super().clean()
        unknown = sorted(set(self.raw) - set(self.fields))
        for name in unknown:
            self.add_error(None, 'Campo desconocido: {}'.format(name))
        return cleaned_data


class LaserForm(SeccionForm):
    wavelength_nm = forms.FloatField(validators=[positive])
    pulse_width_fwhm_ps = forms.FloatField(validators=[positive])
    repetition_rate_hz = forms.FloatField(validators=[positive])
    mean_photon_number_at_dut = forms.FloatField(required=False, min_value=0.0)
    pulse_energy_fj = forms.FloatField(required=False, min_value=0.0)

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('mean_photon_number_at_dut') is None and cleaned_data.get('pulse_energy_fj') is None:
            self.add_error('mean_photon_number_at_dut', 'Indique mean_photon_number_at_dut o pulse_energy_fj.')
        return cleaned_data


class AttenuationForm(SeccionForm):
    variable_attenuation_db = forms.FloatField(min_value=0.0, max_value=60.0)
    coupler_attenuation_db = forms.FloatField(required=False, min_value=0.0)


class ReflectionPointForm(SeccionForm):
    round_trip_delay_ps = forms.IntegerField(min_value=1)
    reflectance = forms.FloatField(validators=[probability])


class OpticalPathForm(SeccionForm):
    reflection_points = forms.JSONField(required=False)
    channel_transmission = forms.FloatField(validators=[positive, probability])
    dut_delay_ps = forms.IntegerField(min_value=0)

    def clean_reflection_points(self):
        points = self.cleaned_data.get('reflection_points')
        if points is None:
            return []
        if not isinstance(points, list):
            raise ValidationError('Debe ser una lista.')
        return points


class EfficiencyCurveForm(SeccionForm):
    anchors = forms.JSONField()
    domain_v = forms.JSONField(required=False)

    def clean_anchors(self):
        anchors = self.cleaned_data['anchors']
        try:
            pairs = [(float(v), float(e)) for v, e in anchors]
        except (TypeError, ValueError):
            raise ValidationError('Las anclas deben ser pares [sobretension_v, eficiencia].')
        if not pairs:
            raise ValidationError('Se requiere al menos un ancla.')
        for _, efficiency in pairs:
            if not 0.0 <= efficiency <= 1.0:
                raise ValidationError('Eficiencia {} fuera de [0, 1].'.format(efficiency))
        for (v0, e0), (v1, e1) in zip(pairs, pairs[1:]):
            if v1 <= v0:
                raise ValidationError('Las sobretensiones deben ser estrictamente crecientes.')
            if e1 < e0:
                raise ValidationError('La eficiencia debe ser no decreciente con la sobretension.')
        return tuple(pairs)

    def clean_domain_v(self):
        domain = self.cleaned_data.get('domain_v')
        if domain is None:
            return None
        try:
            low, high = (float(v) for v in domain)
        except (TypeError, ValueError):
            raise ValidationError('El dominio debe ser [min_v, max_v].')
        if high < low:
            raise ValidationError('Dominio vacio.')
        return low, high


class BackflashForm(SeccionForm):
    shape = forms.JSONField()
    spectrum = forms.JSONField()
    yield_per_volt = forms.FloatField(required=False, min_value=0.0)
    yield_overrides = forms.JSONField(required=False)
    mean_photons_per_avalanche = forms.FloatField(required=False, min_value=0.0)

    def clean_spectrum(self):
        spectrum = self.cleaned_data['spectrum']
        try:
            edges = [float(e) for e in spectrum['edges_nm']]
            weights = [float(w) for w in spectrum['densities']]
        except (TypeError, KeyError, ValueError):
            raise ValidationError('El espectro requiere edges_nm y densities.')
        if len(edges) != len(weights) + 1 or len(weights) == 0:
            raise ValidationError('edges_nm debe tener un elemento mas que densities.')
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValidationError('edges_nm debe ser estrictamente creciente.')
        if any(w < 0 for w in weights):
            raise ValidationError('La densidad espectral no puede ser negativa.')
        try:
            return SpectralDensity.from_bins(edges, weights)
        except ValueError as exc:
            raise ValidationError(str(exc))

    def clean_shape(self):
        shape = self.cleaned_data['shape']
        if not isinstance(shape, dict):
            raise ValidationError('La forma debe ser un objeto.')
        kind = shape.get('kind', 'piecewise')
        try:
            if kind == 'rectangular':
                duration = float(shape['duration_ns'])
                knots, weights = [0.0, duration], [1.0, 1.0]
            elif kind == 'trapezoidal':
                duration, ramp = float(shape['duration_ns']), float(shape['ramp_ns'])
                if not 0 < 2 * ramp <= duration:
                    raise ValidationError('Las rampas no caben en duration_ns.')
                knots, weights = [0.0, ramp, duration - ramp, duration], [0.0, 1.0, 1.0, 0.0]
            elif kind == 'piecewise':
                knots = [float(k) for k in shape['knots_ns']]
                weights = [float(w) for w in shape['densities']]
            else:
                raise ValidationError('Forma desconocida: {}'.format(kind))
        except (TypeError, KeyError, ValueError):
            raise ValidationError('Parametros de forma incompletos para {}.'.format(kind))
        if len(knots) < 2 or len(knots) != len(weights):
            raise ValidationError('knots_ns y densities deben tener la misma longitud (>= 2).')
        if knots[0] != 0.0 or knots[-1] <= 0.0:
            raise ValidationError('El perfil debe empezar en 0 y tener duracion positiva.')
        if any(b < a for a, b in zip(knots, knots[1:])):
            raise ValidationError('knots_ns debe ser no decreciente.')
        if any(w < 0 for w in weights):
            raise ValidationError('La densidad temporal no puede ser negativa.')
        return knots, weights

    def clean_yield_overrides(self):
        overrides = self.cleaned_data.get('yield_overrides')
        if overrides is None:
            return ()
        try:
            pairs = tuple((float(v), float(y)) for v, y in overrides)
        except (TypeError, ValueError):
            raise ValidationError('yield_overrides debe ser una lista de [sobretension_v, rendimiento].')
        if any(y < 0 for _, y in pairs):
            raise ValidationError('El rendimiento no puede ser negativo.')
        return pairs

    def clean(self):
        cleaned_data = super().clean()
        if (cleaned_data.get('yield_per_volt') is None and not cleaned_data.get('yield_overrides')
                and cleaned_data.get('mean_photons_per_avalanche') is None):
            self.add_error('yield_per_volt', 'Indique yield_per_volt, yield_overrides o mean_photons_per_avalanche.')
        return cleaned_data


class SurfaceReflectanceForm(SeccionForm):
    gated_on = forms.FloatField(validators=[probability])
    gated_off = forms.FloatField(validators=[probability])


class SpadForm(SeccionForm):
    gate_width_ns = forms.FloatField(validators=[positive])
    gate_delay_offset_ns = forms.FloatField(min_value=0.0)
    excess_bias_v = forms.FloatField()
    efficiency_curve = forms.JSONField()
    dead_time_ns = forms.FloatField(min_value=0.0)
    dark_count_rate_in_gate_hz = forms.FloatField(min_value=0.0)
    avalanche_duration_ns = forms.FloatField(validators=[positive])
    backflash = forms.JSONField()
    surface_reflectance = forms.JSONField()


class MeasDetectorForm(SeccionForm):
    efficiency = forms.FloatField(validators=[probability])
    dark_count_rate_hz = forms.FloatField(min_value=0.0)
    timing_jitter_fwhm_ps = forms.FloatField(min_value=0.0)
    free_running = forms.BooleanField(required=False)

    def clean_free_running(self):
        if 'free_running' in self.raw and not self.raw['free_running']:
            raise ValidationError('El detector de medida siempre opera en modo libre.')
        return True


class FilterForm(SeccionForm):
    bandwidth_nm = forms.FloatField(validators=[positive])
    center_nm = forms.FloatField(required=False, validators=[positive])


class BenchForm(SeccionForm):
    schema = forms.CharField()
    name = forms.CharField(required=False)
    laser = forms.JSONField()
    attenuation = forms.JSONField()
    optical_path = forms.JSONField()
    dut = forms.JSONField()
    meas_detector = forms.JSONField()
    filter = forms.JSONField(required=False)

    def clean_schema(self):
        schema = self.cleaned_data['schema']
        if schema != SCHEMA_BENCH:
            raise ValidationError('Esquema no soportado: {} (se esperaba {}).'.format(schema, SCHEMA_BENCH))
        return schema


class _Errores:
    """Acumula errores de varios formularios con la ruta del campo."""

    def __init__(self):
        self.by_path = {}

    def form(self, form_class, data, path):
        form = form_class(data)
        if form.is_valid():
            return form.cleaned_data
        for name, messages in form.errors.items():
            if name == '__all__':
                key = path or '__all__'
            else:
                key = '{}.{}'.format(path, name) if path else name
            self.by_path.setdefault(key, []).extend(messages)
        return None

    def add(self, path, message):
        self.by_path.setdefault(path, []).append(message)


def bench_to_dict(config):
    """Documento JSON equivalente a un BenchConfig ya validado."""
    dut = config.dut
    data = {
        'schema': SCHEMA_BENCH,
        'name': config.name,
        'laser': config.laser.as_dict(),
        'attenuation': config.attenuation.as_dict(),
        'optical_path': {
            'reflection_points': [p.as_dict() for p in config.optical_path.reflection_points],
            'channel_transmission': config.optical_path.channel_transmission,
            'dut_delay_ps': config.optical_path.dut_delay_ps,
        },
        'dut': {
            'gate_width_ns': dut.gate_width_ns,
            'gate_delay_offset_ns': dut.gate_delay_offset_ns,
            'excess_bias_v': dut.excess_bias_v,
            'efficiency_curve': {
                'anchors': [list(a) for a in dut.efficiency_curve.anchors],
                'domain_v': list(dut.efficiency_curve.domain_v),
            },
            'dead_time_ns': dut.dead_time_ns,
            'dark_count_rate_in_gate_hz': dut.dark_count_rate_in_gate_hz,
            'avalanche_duration_ns': dut.avalanche_duration_ns,
            'backflash': {
                'shape': {
                    'kind': 'piecewise',
                    'knots_ns': list(dut.backflash.knots_ns),
                    'densities': list(dut.backflash.densities),
                },
                'spectrum': {
                    'edges_nm': list(dut.backflash.spectral_density.edges_nm),
                    'densities': list(dut.backflash.spectral_density.densities),
                },
                'mean_photons_per_avalanche': dut.backflash.mean_photons_per_avalanche,
                'yield_overrides': [list(o) for o in dut.yield_overrides],
            },
            'surface_reflectance': dut.surface_reflectance.as_dict(),
        },
        'meas_detector': config.meas_detector.as_dict(),
    }
    if dut.yield_per_volt is not None:
        data['dut']['backflash']['yield_per_volt'] = dut.yield_per_volt
    if config.filter is not None:
        data['filter'] = {k: v for k, v in config.filter.as_dict().items() if v is not None}
    return data


def config_hash(config):
    return stable_hash(bench_to_dict(config))


def validate_bench(config):
    """
    Valida un documento de banco (dict) o re-valida un BenchConfig.
    Devuelve el BenchConfig; si algo falla lanza un ValidationError con
    todos los errores indexados por ruta de campo.
    """
    data = bench_to_dict(config) if isinstance(config, BenchConfig) else config
    errores = _Errores()
    top = errores.form(BenchForm, data, '')
    if top is None:
        raise ValidationError(errores.by_path)

    laser = errores.form(LaserForm, top['laser'], 'laser')
    attenuation = errores.form(AttenuationForm, top['attenuation'], 'attenuation')
    path = errores.form(OpticalPathForm, top['optical_path'], 'optical_path')
    dut = errores.form(SpadForm, top['dut'], 'dut')
    meas = errores.form(MeasDetectorForm, top['meas_detector'], 'meas_detector')
    bench_filter = errores.form(FilterForm, top['filter'], 'filter') if top.get('filter') is not None else None

    points = []
    if path is not None:
        seen = set()
        for index, raw in enumerate(path['reflection_points']):
            where = 'optical_path.reflection_points[{}]'.format(index)
            point = errores.form(ReflectionPointForm, raw, where)
            if point is None:
                continue
            if point['round_trip_delay_ps'] in seen:
                errores.add(where + '.round_trip_delay_ps', 'Retardo repetido.')
            seen.add(point['round_trip_delay_ps'])
            points.append(ReflectionPoint(point['round_trip_delay_ps'], point['reflectance']))
        points.sort(key=lambda p: p.round_trip_delay_ps)

    curve = backflash = surface = None
    if dut is not None:
        curve = errores.form(EfficiencyCurveForm, dut['efficiency_curve'], 'dut.efficiency_curve')
        backflash = errores.form(BackflashForm, dut['backflash'], 'dut.backflash')
        surface = errores.form(SurfaceReflectanceForm, dut['surface_reflectance'], 'dut.surface_reflectance')

    if errores.by_path:
        raise ValidationError(errores.by_path)

    domain = curve['domain_v'] or (curve['anchors'][0][0], curve['anchors'][-1][0])
    efficiency_curve = EfficiencyCurve(curve['anchors'], domain)
    if not domain[0] <= dut['excess_bias_v'] <= domain[1]:
        errores.add('dut.excess_bias_v', 'Fuera del dominio de la curva de eficiencia {}.'.format(list(domain)))

    knots, weights = backflash['shape']
    area = sum(0.5 * (w0 + w1) * (k1 - k0) for k0, k1, w0, w1 in zip(knots, knots[1:], weights, weights[1:]))
    if area <= 0:
        errores.add('dut.backflash.shape', 'El perfil temporal debe tener area positiva.')
        raise ValidationError(errores.by_path)
    spad = SpadModel(
        gate_width_ns=dut['gate_width_ns'],
        gate_delay_offset_ns=dut['gate_delay_offset_ns'],
        excess_bias_v=dut['excess_bias_v'],
        efficiency_curve=efficiency_curve,
        dead_time_ns=dut['dead_time_ns'],
        dark_count_rate_in_gate_hz=dut['dark_count_rate_in_gate_hz'],
        avalanche_duration_ns=dut['avalanche_duration_ns'],
        backflash=BackflashProfile.from_shape(knots, weights, backflash['mean_photons_per_avalanche'] or 0.0,
                                              backflash['spectrum']),
        surface_reflectance=SurfaceReflectance(surface['gated_on'], surface['gated_off']),
        yield_per_volt=backflash['yield_per_volt'],
        yield_overrides=backflash['yield_overrides'],
    )
    spad = spad.replace(backflash=spad.backflash_at(spad.excess_bias_v))
    if abs(spad.backflash.integral() - 1.0) > NORMALIZATION_TOLERANCE:
        errores.add('dut.backflash.shape', 'El perfil temporal no integra a 1.')
    if abs(spad.backflash.spectral_density.integral() - 1.0) > NORMALIZATION_TOLERANCE:
        errores.add('dut.backflash.spectrum', 'La densidad espectral no integra a 1.')

    attenuation_chain = AttenuationChain(
        attenuation['variable_attenuation_db'],
        20.0 if attenuation['coupler_attenuation_db'] is None else attenuation['coupler_attenuation_db'],
    )
    mu = laser['mean_photon_number_at_dut']
    if mu is None:
        mu = photons_per_pulse(laser['pulse_energy_fj'], laser['wavelength_nm'], attenuation_chain.transmission)
    laser_config = LaserConfig(laser['wavelength_nm'], laser['pulse_width_fwhm_ps'],
                               laser['repetition_rate_hz'], mu)

    # La ventana de puerta y la emision de retorno deben caber en un periodo
    period_ps = laser_config.period_ps
    gate_open_ps = path['dut_delay_ps'] - spad.gate_delay_offset_ns * 1000.0
    if gate_open_ps < 0:
        errores.add('dut.gate_delay_offset_ns', 'La puerta abriria antes del disparo del laser.')
    if gate_open_ps + spad.gate_width_ns * 1000.0 > period_ps:
        errores.add('dut.gate_width_ns', 'La puerta excede el periodo del laser.')
    last_return = 2 * path['dut_delay_ps'] + max(spad.avalanche_duration_ns, spad.gate_width_ns) * 1000.0
    if last_return >= period_ps:
        errores.add('optical_path.dut_delay_ps', 'La emision de retorno excede el periodo del laser.')
    for index, point in enumerate(points):
        if point.round_trip_delay_ps >= period_ps:
            errores.add('optical_path.reflection_points[{}].round_trip_delay_ps'.format(index),
                        'Retardo mayor que el periodo del laser.')

    if errores.by_path:
        raise ValidationError(errores.by_path)

    return BenchConfig(
        name=top.get('name') or 'bench',
        laser=laser_config,
        attenuation=attenuation_chain,
        optical_path=OpticalPath(tuple(points), path['channel_transmission'], path['dut_delay_ps']),
        dut=spad,
        meas_detector=MeasDetectorModel(meas['efficiency'], meas['dark_count_rate_hz'],
                                        meas['timing_jitter_fwhm_ps'], True),
        filter=FilterConfig(bench_filter['bandwidth_nm'], bench_filter['center_nm']) if bench_filter else None,
    )


def load_bench(source):
    """Carga un banco desde una ruta JSON o un dict ya parseado."""
    if isinstance(source, (str, Path)):
        with open(source, encoding='utf-8') as fh:
            data = json.load(fh)
    else:
        data = source
    check_schema(data, SCHEMA_BENCH)
    config = validate_bench(data)
    logger.debug('Banco %s cargado (hash %s)', config.name, config_hash(config)[:12])
    return config
