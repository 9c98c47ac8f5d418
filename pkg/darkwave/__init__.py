from .settings import DarkwaveSettings

settings = DarkwaveSettings()

default_app_config = 'darkwave.apps.DarkwaveAppConfig'
