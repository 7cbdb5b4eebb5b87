from speech.management.base import StageCommand


class Command(StageCommand):
    help = 'Convert supporting speakers to the target voice and pool the training set'
    stages = ('convert', 'pool')
