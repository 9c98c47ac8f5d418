from django.conf import settings
from django.core.checks import Error, register


# noinspection PyPep8Naming
class DarkwaveSettings(object):
    @property
    def DARKWAVE_HAS_CELERY(self):
        return getattr(settings, 'DARKWAVE_HAS_CELERY', False)

    @property
    def DARKWAVE_PARAM_BUDGET(self):
        return getattr(settings, 'DARKWAVE_PARAM_BUDGET', 300_000)

    @property
    def DARKWAVE_ATTENTION_TOKEN_CAP(self):
        return getattr(settings, 'DARKWAVE_ATTENTION_TOKEN_CAP', 1024)

    @property
    def DARKWAVE_INFER_WORKERS(self):
        return getattr(settings, 'DARKWAVE_INFER_WORKERS', 1)

    @property
    def DARKWAVE_DEVICE(self):
        return getattr(settings, 'DARKWAVE_DEVICE', 'cpu')

    # pass everything else through for convenience
    def __getattr__(self, item):
        return getattr(settings, item)


@register
def darkwave_settings_checks(app_configs, **kwargs):
    errors = []
    if type(DarkwaveSettings().DARKWAVE_HAS_CELERY) != bool:
        errors.append(Error('DARKWAVE_HAS_CELERY should be a bool', id='darkwave.E100'))
    budget = DarkwaveSettings().DARKWAVE_PARAM_BUDGET
    if type(budget) != int or budget <= 0:
        errors.append(
            Error('DARKWAVE_PARAM_BUDGET should be a positive integer', id='darkwave.E101')
        )
    cap = DarkwaveSettings().DARKWAVE_ATTENTION_TOKEN_CAP
    if type(cap) != int or cap <= 0:
        errors.append(
            Error(
                'DARKWAVE_ATTENTION_TOKEN_CAP should be a positive integer',
                id='darkwave.E102',
            )
        )
    workers = DarkwaveSettings().DARKWAVE_INFER_WORKERS
    if type(workers) != int or workers < 1:
        errors.append(
            Error('DARKWAVE_INFER_WORKERS should be an integer >= 1', id='darkwave.E103')
        )
    if type(DarkwaveSettings().DARKWAVE_DEVICE) != str:
        errors.append(Error('DARKWAVE_DEVICE should be a string', id='darkwave.E104'))
    return errors
