"""
    Django settings for backflash project.

    El proyecto no sirve paginas web: Django aporta la configuracion,
    los comandos de manage.py y el runner de pruebas.

    For the full list of settings and their values, see
    https://docs.djangoproject.com/en/4.2/ref/settings/
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Cargar variables de entorno desde .env
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('SECRET_KEY', 'backflash-insecure-default-key')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'bases',
    'model',
    'photonsim',
    'tracelab',
    'sidechannel',
    'cli',
]

# Sin base de datos: las pruebas usan SimpleTestCase
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'es-ec'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# ==========================================
# Simulacion y analisis
# ==========================================

# Numero maximo de hilos de trabajo (por defecto, los nucleos de la maquina)
BACKFLASH_THREADS = int(os.getenv('BACKFLASH_THREADS', os.cpu_count() or 1))

# Periodos de laser por sub-flujo aleatorio. No depende de los hilos.
BACKFLASH_CHUNK_PERIODS = int(os.getenv('BACKFLASH_CHUNK_PERIODS', '65536'))

BACKFLASH_BIN_WIDTH_PS = int(os.getenv('BACKFLASH_BIN_WIDTH_PS', '100'))
BACKFLASH_PEAK_MAX_WIDTH_PS = int(os.getenv('BACKFLASH_PEAK_MAX_WIDTH_PS', '1000'))
BACKFLASH_REGION_PAD_PS = int(os.getenv('BACKFLASH_REGION_PAD_PS', '500'))

BACKFLASH_LOG_LEVEL = os.getenv('BACKFLASH_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(asctime)s [%(levelname)s] [%(name)s] %(message)s',
            'datefmt': '%Y-%m-%d %H:%M:%S',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        app: {
            'handlers': ['console'],
            'level': BACKFLASH_LOG_LEVEL,
            'propagate': False,
        }
        for app in INSTALLED_APPS
    },
}
