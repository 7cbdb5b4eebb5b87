from .base import *

DEBUG = True

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'speech-file': {
            'format': '%(asctime)s (PID %(process)d) [%(levelname)s] %(name)s %(message)s'
        },
        'django-console': {
            'format': '\033[34;1m%(asctime)s \033[35;1m[%(levelname)s] \033[34;1m%(module)s\033[0m\n%(message)s'
        },
        'speech-console': {
            'format': '\033[36;1m%(asctime)s \033[35;1m[%(levelname)s] \033[36;1m%(name)s\033[0m %(message)s'
        },
    },
    'handlers': {
        'general': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': os.path.join(LOGS_DIR, 'general.log'),
            'formatter': 'speech-file',
        },
        'stage': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': os.path.join(LOGS_DIR, 'stage.log'),
            'formatter': 'speech-file',
        },
        'training': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': os.path.join(LOGS_DIR, 'training.log'),
            'formatter': 'speech-file',
        },
        'django-console': {
            'level': 'WARNING',
            'class': 'logging.StreamHandler',
            'formatter': 'django-console',
        },
        'speech-console': {
            'level': 'INFO',
            'class': 'logging.StreamHandler',
            'formatter': 'speech-console',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['django-console'],
            'level': 'WARNING',
            'propagate': True,
        },
        'speech': {
            'handlers': ['general', 'speech-console'],
            'level': 'INFO',
            'propagate': True,
        },
        'speech.stage': {
            'handlers': ['stage', 'speech-console'],
            'level': 'INFO',
            'propagate': False,
        },
        'speech.training': {
            'handlers': ['training'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}
