from django.apps import AppConfig


class ModeloConfig(AppConfig):
    name = 'model'
    verbose_name = 'Modelo del banco'
