"""Sub-flujos aleatorios por contador: el resultado no depende de los hilos."""
import numpy as np

STREAM_LIGHT = 1
STREAM_BACKFLASH = 2
STREAM_FILTER = 3
STREAM_SWEEP = 4
STREAM_REFERENCE = 5


def substream(seed, *key):
    """Generador Philox identificado por (seed, key)."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(base_seed, index):
    sequence = np.random.SeedSequence(int(base_seed), spawn_key=(STREAM_SWEEP, int(index)))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def reference_seed(base_seed):
    """Semilla de la corrida de referencia (puertas apagadas) asociada a base_seed."""
    sequence = np.random.SeedSequence(int(base_seed), spawn_key=(STREAM_REFERENCE,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
