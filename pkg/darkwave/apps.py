from django.apps import AppConfig


class DarkwaveAppConfig(AppConfig):
    name = 'darkwave'
    verbose_name = 'Darkwave Low-Light Enhancement'
