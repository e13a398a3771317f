from django.apps import AppConfig


class PhotonsimConfig(AppConfig):
    name = 'photonsim'
    verbose_name = 'Simulacion Monte Carlo'
