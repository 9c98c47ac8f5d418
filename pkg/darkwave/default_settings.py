# used by the `darkwave` console script when no DJANGO_SETTINGS_MODULE is set;
# projects embedding the app configure DARKWAVE_* in their own settings instead

import os

SECRET_KEY = 'darkwave-command-line'
INSTALLED_APPS = [
    'rest_framework',
    'darkwave',
]
USE_TZ = True

DARKWAVE_DEVICE = os.environ.get('DARKWAVE_DEVICE', 'cpu')
DARKWAVE_INFER_WORKERS = int(os.environ.get('DARKWAVE_INFER_WORKERS', '1'))

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {'format': '%(asctime)s %(levelname)s %(name)s: %(message)s'},
    },
    'handlers': {
        'console': {'class': 'logging.StreamHandler', 'formatter': 'plain'},
    },
    'loggers': {
        'darkwave': {'handlers': ['console'], 'level': 'INFO'},
    },
}
