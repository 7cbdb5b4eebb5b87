from speech.management.base import StageCommand


class Command(StageCommand):
    help = 'Train the GE2E speaker encoder and embed every utterance'
    stages = ('spkemb',)
