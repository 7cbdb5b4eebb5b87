from speech.management.base import StageCommand


class Command(StageCommand):
    help = 'Train the voice conversion model'
    stages = ('vc',)
