import dataclasses
import enum
import hashlib
import json

import numpy as np


class ClaseModelo:
    """
    Base comun de los tipos de dominio.
    Todas las subclases son dataclasses congeladas: se validan una vez y
    luego se comparten entre hilos sin copiarlas.
    """

    def as_dict(self):
        return _plain(dataclasses.asdict(self))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _plain(value):
    # Convierte tuplas, enums y escalares numpy a tipos JSON
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def canonical_json(data):
    return json.dumps(_plain(data), sort_keys=True, separators=(',', ':'))


def stable_hash(data):
    """sha256 del JSON canonico; identifica configuraciones en los artefactos."""
    return hashlib.sha256(canonical_json(data).encode('utf-8')).hexdigest()


# ==========================================
# Errores de dominio
# ==========================================

class OutOfRangeError(ValueError):
    pass


class GeometryMismatchError(ValueError):
    pass


class ZeroTriggersError(ValueError):
    pass


class EmptyRegionError(ValueError):
    pass


class SchemaVersionError(ValueError):
    def __init__(self, expected, found):
        super().__init__('Esquema no soportado: se esperaba {!r}, se encontro {!r}'.format(expected, found))
        self.expected = expected
        self.found = found


class OverlappingPassbandsError(ValueError):
    pass


class TagFileError(ValueError):
    """Error de lectura/escritura de time tags; offset en bytes si se conoce."""

    def __init__(self, message, offset=None, record=None):
        where = []
        if record is not None:
            where.append('registro {}'.format(record))
        if offset is not None:
            where.append('byte {}'.format(offset))
        if where:
            message = '{} ({})'.format(message, ', '.join(where))
        super().__init__(message)
        self.offset = offset
        self.record = record


def check_schema(data, expected):
    found = data.get('schema') if isinstance(data, dict) else None
    if found != expected:
        raise SchemaVersionError(expected, found)
    return data
