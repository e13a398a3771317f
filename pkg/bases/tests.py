from dataclasses import dataclass

import numpy as np
from django.test import SimpleTestCase

from .models import ClaseModelo, SchemaVersionError, TagFileError, check_schema, stable_hash
from .rng import derive_seed, reference_seed, substream


@dataclass(frozen=True)
class Punto(ClaseModelo):
    x: float
    etiquetas: tuple = ()


class ClaseModeloTest(SimpleTestCase):
    """
    Pruebas de la base comun de los tipos de dominio.
    """

    def test_as_dict_convierte_tuplas_y_numpy(self):
        """Verifica que as_dict devuelva tipos JSON"""
        punto = Punto(np.float64(1.5), (np.int64(2), 3))
        self.assertEqual(punto.as_dict(), {'x': 1.5, 'etiquetas': [2, 3]})
        self.assertIsInstance(punto.as_dict()['etiquetas'][0], int)

    def test_replace_no_modifica_el_original(self):
        punto = Punto(1.0)
        otro = punto.replace(x=2.0)
        self.assertEqual(punto.x, 1.0)
        self.assertEqual(otro.x, 2.0)


class HashEstableTest(SimpleTestCase):

    def test_hash_independiente_del_orden_de_claves(self):
        """Verifica que el hash use JSON canonico"""
        self.assertEqual(stable_hash({'a': 1, 'b': [1, 2]}), stable_hash({'b': (1, 2), 'a': 1}))

    def test_hash_cambia_con_el_contenido(self):
        self.assertNotEqual(stable_hash({'a': 1}), stable_hash({'a': 2}))


class ErroresTest(SimpleTestCase):

    def test_check_schema_rechaza_version_distinta(self):
        with self.assertRaises(SchemaVersionError) as ctx:
            check_schema({'schema': 'backflash-bench/2'}, 'backflash-bench/1')
        self.assertEqual(ctx.exception.found, 'backflash-bench/2')

    def test_check_schema_sin_campo(self):
        with self.assertRaises(SchemaVersionError):
            check_schema({}, 'backflash-bench/1')

    def test_tag_file_error_menciona_posicion(self):
        """Verifica que el mensaje incluya registro y byte"""
        exc = TagFileError('Registro truncado', offset=26, record=2)
        self.assertIn('byte 26', str(exc))
        self.assertIn('registro 2', str(exc))
        self.assertIsInstance(exc, ValueError)


class SubflujosTest(SimpleTestCase):
    """
    Los sub-flujos dependen solo de (semilla, clave).
    """

    def test_misma_clave_misma_secuencia(self):
        a = substream(42, 1, 7).random(5)
        b = substream(42, 1, 7).random(5)
        np.testing.assert_array_equal(a, b)

    def test_claves_distintas_secuencias_distintas(self):
        a = substream(42, 1, 7).random(5)
        b = substream(42, 1, 8).random(5)
        self.assertFalse(np.array_equal(a, b))

    def test_semillas_derivadas(self):
        """Verifica que las semillas de barrido y referencia sean distintas y reproducibles"""
        semillas = {derive_seed(0, i) for i in range(10)}
        self.assertEqual(len(semillas), 10)
        self.assertEqual(derive_seed(5, 3), derive_seed(5, 3))
        self.assertNotIn(reference_seed(0), semillas)
