import json
from pathlib import Path

from django import forms
from django.core.exceptions import ValidationError

from bases.models import OverlappingPassbandsError, check_schema
from model.forms import SeccionForm, _Errores, positive
from .models import SCHEMA_COUNTERMEASURE, Countermeasure, Passband


class PassbandForm(SeccionForm):
    center_nm = forms.FloatField(validators=[positive])
    bandwidth_nm = forms.FloatField(validators=[positive])


class CountermeasureForm(SeccionForm):
    schema = forms.CharField()
    isolation_db = forms.FloatField(required=False, min_value=0.0)
    filter_passbands = forms.JSONField(required=False)
    gate_width_override_ns = forms.FloatField(required=False, validators=[positive])

    def clean_schema(self):
        schema = self.cleaned_data['schema']
        if schema != SCHEMA_COUNTERMEASURE:
            raise ValidationError('Esquema no soportado: {} (se esperaba {}).'.format(schema, SCHEMA_COUNTERMEASURE))
        return schema

    def clean_filter_passbands(self):
        bands = self.cleaned_data.get('filter_passbands')
        if bands is None:
            return []
        if not isinstance(bands, list):
            raise ValidationError('Debe ser una lista.')
        return bands


def countermeasure_to_dict(cm):
    data = {
        'schema': SCHEMA_COUNTERMEASURE,
        'isolation_db': cm.isolation_db,
        'filter_passbands': [b.as_dict() for b in cm.filter_passbands],
    }
    if cm.gate_width_override_ns is not None:
        data['gate_width_override_ns'] = cm.gate_width_override_ns
    return data


def validate_countermeasure(data):
    errores = _Errores()
    top = errores.form(CountermeasureForm, data, '')
    if top is None:
        raise ValidationError(errores.by_path)
    bands = []
    for index, raw in enumerate(top['filter_passbands']):
        band = errores.form(PassbandForm, raw, 'filter_passbands[{}]'.format(index))
        if band is not None:
            bands.append(Passband(band['center_nm'], band['bandwidth_nm']))
    if errores.by_path:
        raise ValidationError(errores.by_path)
    try:
        return Countermeasure(
            isolation_db=top['isolation_db'] or 0.0,
            filter_passbands=tuple(bands),
            gate_width_override_ns=top['gate_width_override_ns'],
        )
    except OverlappingPassbandsError as exc:
        raise ValidationError({'filter_passbands': [str(exc)]})


def load_countermeasure(source):
    if isinstance(source, (str, Path)):
        with open(source, encoding='utf-8') as fh:
            data = json.load(fh)
    else:
        data = source
    check_schema(data, SCHEMA_COUNTERMEASURE)
    return validate_countermeasure(data)
