from django.apps import AppConfig


class TracelabConfig(AppConfig):
    name = 'tracelab'
    verbose_name = 'Analisis de trazas'
