from speech.management.base import StageCommand


class Command(StageCommand):
    help = 'Extract mel, MFCC and f0 features'
    stages = ('features',)
