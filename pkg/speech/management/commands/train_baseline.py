from speech.management.base import StageCommand


class Command(StageCommand):
    help = 'Train the neutral-only TTS baseline and synthesize the test sentences with it'
    stages = ('baseline',)
