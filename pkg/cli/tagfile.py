"""
Formato binario de time tags.

Cabecera de 8 bytes: magic b'BFTT', version u16, channel_count u8,
reservado u8. Luego registros empaquetados (canal u8, timestamp u64)
little-endian. Los timestamps son no decrecientes dentro de cada canal.
"""
import logging
import os
import struct

import numpy as np

from bases.models import TagFileError
from model.models import TAG_DTYPE, Channel, TimeTag

logger = logging.getLogger(__name__)

MAGIC = b'BFTT'
VERSION = 1
HEADER = struct.Struct('<4sHBB')
RECORD_SIZE = TAG_DTYPE.itemsize
CHUNK_RECORDS = 1 << 20


class _MonotoneCheck:
    """Ultimo timestamp visto por canal, a traves de bloques."""

    def __init__(self, channel_count):
        self.channel_count = channel_count
        self.last = {}

    def __call__(self, chunk, first_record):
        channels = chunk['channel']
        bad = np.flatnonzero(channels >= self.channel_count)
        if bad.size:
            record = first_record + int(bad[0])
            raise TagFileError('Canal desconocido {}'.format(int(channels[bad[0]])),
                               offset=HEADER.size + record * RECORD_SIZE, record=record)
        for channel in np.unique(channels).tolist():
            index = np.flatnonzero(channels == channel)
            stamps = chunk['timestamp'][index]
            previous = self.last.get(channel)
            if previous is not None:
                stamps_with_prev = np.concatenate((np.array([previous], dtype=stamps.dtype), stamps))
            else:
                stamps_with_prev = stamps
            drops = np.flatnonzero(np.diff(stamps_with_prev.astype(np.int64)) < 0)
            if drops.size:
                position = int(drops[0]) + (0 if previous is not None else 1)
                record = first_record + int(index[position])
                tag = TimeTag.from_record(chunk[index[position]])
                raise TagFileError('Timestamp decreciente: {}'.format(tag),
                                   offset=HEADER.size + record * RECORD_SIZE, record=record)
            self.last[channel] = int(stamps[-1])


def read_header(fh):
    raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise TagFileError('Cabecera incompleta', offset=len(raw))
    magic, version, channel_count, _ = HEADER.unpack(raw)
    if magic != MAGIC:
        raise TagFileError('Magic invalido {!r}'.format(magic), offset=0)
    if version != VERSION:
        raise TagFileError('Version de formato no soportada: {}'.format(version), offset=4)
    if not 1 <= channel_count <= len(Channel):
        raise TagFileError('Numero de canales invalido: {}'.format(channel_count), offset=6)
    return version, channel_count


def read_tags(path, chunk_records=CHUNK_RECORDS):
    """Generador de bloques de registros (TAG_DTYPE); memoria acotada por chunk_records."""
    with open(path, 'rb') as fh:
        _, channel_count = read_header(fh)
        payload = os.fstat(fh.fileno()).st_size - HEADER.size
        complete, partial = divmod(payload, RECORD_SIZE)
        if partial:
            raise TagFileError('Registro truncado', offset=HEADER.size + complete * RECORD_SIZE, record=complete)
        check = _MonotoneCheck(channel_count)
        record = 0
        while record < complete:
            count = min(chunk_records, complete - record)
            chunk = np.fromfile(fh, dtype=TAG_DTYPE, count=count)
            if chunk.size != count:
                raise TagFileError('Lectura incompleta', offset=HEADER.size + (record + chunk.size) * RECORD_SIZE,
                                   record=record + chunk.size)
            check(chunk, record)
            record += count
            yield chunk
    logger.debug('Leidos %d registros de %s', complete, path)


def read_all_tags(path):
    chunks = list(read_tags(path))
    if not chunks:
        return np.empty(0, dtype=TAG_DTYPE)
    return np.concatenate(chunks)


def _as_chunks(tags):
    if isinstance(tags, np.ndarray):
        yield tags
        return
    for chunk in tags:
        yield chunk


def write_tags(path, tags, channel_count=len(Channel)):
    """Escribe un array o iterable de bloques; devuelve el numero de registros."""
    check = _MonotoneCheck(channel_count)
    written = 0
    try:
        with open(path, 'wb') as fh:
            fh.write(HEADER.pack(MAGIC, VERSION, channel_count, 0))
            for chunk in _as_chunks(tags):
                chunk = np.asarray(chunk)
                if chunk.dtype != TAG_DTYPE:
                    chunk = chunk.astype(TAG_DTYPE)
                check(chunk, written)
                fh.write(chunk.tobytes())
                written += chunk.size
    except TagFileError:
        os.remove(path)
        raise
    logger.info('Escritos %d registros en %s', written, path)
    return written


def provenance_path(path):
    return '{}.prov'.format(path)


def write_provenance(path, labels):
    np.asarray(labels, dtype=np.uint8).tofile(provenance_path(path))


def read_provenance(path):
    return np.fromfile(provenance_path(path), dtype=np.uint8)
