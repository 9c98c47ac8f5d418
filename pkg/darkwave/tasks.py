from celery import shared_task
from celery.utils.log import get_task_logger

from . import ablation, serializers

logger = get_task_logger(__name__)


@shared_task(bind=True, max_retries=0)
def run_ablation_row(self, run_config, row):
    base = serializers.parse_run_config(run_config)
    row = ablation.AblationRow.from_dict(row)
    logger.info(f'Running ablation row {row.name} as task {self.request.id}')
    return ablation.run_row(base, row)
