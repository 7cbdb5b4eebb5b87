import torch
from django.apps import AppConfig
from django.conf import settings


class SpeechConfig(AppConfig):
    name = 'speech'
    default_auto_field = 'django.db.models.AutoField'

    def ready(self):
        torch.set_num_threads(settings.TORCH_NUM_THREADS)
