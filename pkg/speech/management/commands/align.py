from speech.management.base import StageCommand


class Command(StageCommand):
    help = 'Train the monophone HMM and force-align every utterance'
    stages = ('align',)
