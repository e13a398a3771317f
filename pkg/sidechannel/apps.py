from django.apps import AppConfig


class SidechannelConfig(AppConfig):
    name = 'sidechannel'
    verbose_name = 'Canal lateral'
